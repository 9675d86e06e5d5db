"""Photon-counting Monte Carlo for the eraser circuits.

Each shot draws a Poisson photon number from the attenuated laser and routes
every photon independently to a detector (or to loss) with probability equal
to the detector's share of the source intensity. Detected photons carry the
frequency tag of the basis they came from and a beat phase, so the gated
heterodyne selection can be replayed on the records.

Shots are split over ``workers`` chunks. Chunk ``w`` of stream ``s`` uses a
Philox generator keyed by ``(seed, s, w)``, so a run is reproducible for a
fixed (seed, worker count) pair.
"""

from __future__ import annotations

import math
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .circuit import DEFAULT_DELTA_F, Circuit, SOURCE_POLARIZATIONS, evaluate
from .core_optics import FreqLabel
from .metrics import CorrelationCurve

TWO_PI = 2.0 * math.pi
RECORD_MAGIC = b"ERSM\x00\x01"
RECORD_DTYPE = np.dtype([
    ("shot", "<u4"),
    ("detector", "u1"),
    ("bunch", "u1"),
    ("beat_phase", "<f4"),
    ("tag", "u1"),
])
_MEM_DTYPE = np.dtype([
    ("shot", "<u4"),
    ("detector", "u1"),
    ("bunch", "u1"),
    ("beat_phase", "<f8"),
    ("tag", "u1"),
])


class HeterodyneError(ValueError):
    """Basis selection is impossible (no frequency offset between the bases)."""


class EmptyRecordsError(ValueError):
    pass


@dataclass(frozen=True)
class SourceConfig:
    mean_photon_number: float = 0.1
    shots: int = 1_000_000
    seed: int = 0
    delta_f: float = DEFAULT_DELTA_F
    coincidence_window: float = 1e-9
    detector_resolve_time: float = 1e-10
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.mean_photon_number < 1.0:
            raise ValueError("mean photon number must satisfy 0 < <n> < 1")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.delta_f < 0:
            raise ValueError("delta_f must be >= 0")
        if self.delta_f > 0 and not self.detector_resolve_time < 0.05 / (2.0 * self.delta_f):
            raise ValueError("detector resolve time must be < 0.05 / (2 delta_f) to freeze the beat")
        if self.coincidence_window <= 0 or self.detector_resolve_time <= 0:
            raise ValueError("time scales must be positive")


@dataclass(frozen=True)
class DetectionRecord:
    shot: int
    detector: str
    bunch_size: int
    beat_phase: float
    tag: FreqLabel


class EstimatorResult(NamedTuple):
    value: float
    std_error: float
    n_events: int


@dataclass(frozen=True)
class DetectorModel:
    """Per-detector routing data derived from one evaluated circuit."""

    names: Tuple[str, ...]
    probs: np.ndarray  # share of the source intensity reaching each detector
    h: np.ndarray  # H-origin amplitude, normalized to the source field
    v: np.ndarray
    h_tag: np.ndarray  # FreqLabel codes
    v_tag: np.ndarray
    source_intensity: float

    @classmethod
    def from_circuit(cls, circuit: Circuit) -> "DetectorModel":
        states = evaluate(circuit)
        src = circuit.e0 ** 2 * sum(
            abs(h) ** 2 + abs(v) ** 2 for h, v in (SOURCE_POLARIZATIONS[p] for p in circuit.sources.values())
        )
        names = tuple(states)
        h, v, ht, vt, probs = [], [], [], [], []
        scale = circuit.e0 / math.sqrt(src)
        for name in names:
            st = states[name]
            m = st[circuit.detectors[name]]
            if np.ndim(m.h.amp) or np.ndim(m.v.amp):
                raise ValueError("Monte Carlo needs a circuit evaluated at a single parameter point")
            h.append(complex(m.h.amp) * scale)
            v.append(complex(m.v.amp) * scale)
            ht.append(m.h.tag.label.value)
            vt.append(m.v.tag.label.value)
            probs.append(float(st.e0 ** 2 * m.power()) / src)
        return cls(names, np.array(probs), np.array(h), np.array(v), np.array(ht), np.array(vt), src)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown detector {name!r}") from None

    def split(self, i: int) -> bool:
        """True when the detector sees two distinguishable frequency tags."""
        return self.h_tag[i] != self.v_tag[i]


@dataclass(frozen=True)
class PhotonStream:
    records: np.ndarray  # _MEM_DTYPE, sorted by shot
    detectors: Tuple[str, ...]
    bunch_sizes: np.ndarray  # emitted photon number per shot
    mean_photon_number: float
    min_bunch: int
    # P(n >= min_bunch) for shot streams; None for coincidence-gated streams
    selection_probability: Optional[float]
    source_intensity: float
    delta_f: float
    # P(one photon at each pair detector) for coincidence-gated streams
    pair_probability: Optional[float] = None

    @property
    def shots(self) -> int:
        return len(self.bunch_sizes)

    def __len__(self):
        return len(self.records)

    def __iter__(self) -> Iterator[DetectionRecord]:
        for r in self.records:
            yield DetectionRecord(int(r["shot"]), self.detectors[r["detector"]], int(r["bunch"]),
                                  float(r["beat_phase"]), FreqLabel(int(r["tag"])))

    def counts_per_shot(self, detector: str) -> np.ndarray:
        i = self.detectors.index(detector)
        shots = self.records["shot"][self.records["detector"] == i]
        return np.bincount(shots, minlength=self.shots)


# --- source statistics -------------------------------------------------------

def poisson_tail(mean: float, k: int) -> float:
    """P(n >= k) for n ~ Poisson(mean), summed directly to keep precision."""
    if k <= 0:
        return 1.0
    total, n = 0.0, k
    term = math.exp(k * math.log(mean) - mean - math.lgamma(k + 1))
    while term > 1e-300 and (total == 0.0 or term > total * 1e-18):
        total += term
        n += 1
        term *= mean / n
    return total


def sample_bunches(rng: np.random.Generator, mean: float, size: int, min_bunch: int = 0) -> np.ndarray:
    """Poisson photon numbers, conditioned on n >= min_bunch."""
    if min_bunch <= 0:
        return rng.poisson(mean, size)
    pmf = []
    n = min_bunch
    term = math.exp(n * math.log(mean) - mean - math.lgamma(n + 1))
    while term > 1e-18 * (pmf[0] if pmf else term):
        pmf.append(term)
        n += 1
        term *= mean / n
    cdf = np.cumsum(pmf)
    cdf /= cdf[-1]
    return min_bunch + np.searchsorted(cdf, rng.random(size), side="right")


def worker_rng(seed: int, stream: int, worker: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream, worker])))


def _modulated_phases(rng: np.random.Generator, k: float, c: complex, size: int) -> np.ndarray:
    """Draw from density proportional to k + 2 Re(c e^{i beta}) on [0, 2pi)."""
    out = np.empty(size)
    amp = 2.0 * abs(c)
    filled = 0
    while filled < size:
        need = size - filled
        beta = rng.uniform(0.0, TWO_PI, 2 * need + 16)
        accept = rng.random(beta.size) * (k + amp) < k + 2.0 * (c * np.exp(1j * beta)).real
        beta = beta[accept][:need]
        out[filled:filled + beta.size] = beta
        filled += beta.size
    return out


def _pair_modulation(model: DetectorModel, a: int, b: int) -> Tuple[float, complex]:
    k = abs(model.h[a] * model.v[b]) ** 2 + abs(model.v[a] * model.h[b]) ** 2
    c = model.h[a] * model.v[b] * np.conj(model.v[a] * model.h[b])
    return float(k), complex(c)


def _tags(rng, model: DetectorModel, det: np.ndarray) -> np.ndarray:
    tag = model.h_tag[det].astype(np.uint8)
    split = model.h_tag[det] != model.v_tag[det]
    if np.any(split):
        ph = np.abs(model.h) ** 2
        pv = np.abs(model.v) ** 2
        tot = ph + pv
        p_h = np.divide(ph, tot, out=np.zeros_like(ph), where=tot > 0)
        is_v = rng.random(det.size) >= p_h[det]
        tag = np.where(split & is_v, model.v_tag[det], tag).astype(np.uint8)
    return tag


def _phases(rng, model: DetectorModel, shot: np.ndarray, det: np.ndarray, tag: np.ndarray,
            shot_phase: np.ndarray, pair: Optional[Tuple[int, int]]) -> np.ndarray:
    """Beat phase 2pi*2df*t mod 2pi of each detection.

    Photons at the second pair detector sit at the shot phase. A photon at
    the first pair detector whose tag differs from that reference photon is
    offset by the two-pathway interference density; all others are uniform.
    """
    phase = rng.uniform(0.0, TWO_PI, det.size)
    if pair is None:
        return phase
    a, b = pair
    at_b = det == b
    phase[at_b] = shot_phase[shot[at_b]]
    ref_tag = np.full(shot_phase.size, 255, dtype=np.int16)
    b_shots, first = np.unique(shot[at_b], return_index=True)
    ref_tag[b_shots] = tag[at_b][first]
    at_a = det == a
    cross = at_a & (ref_tag[shot] != 255) & (ref_tag[shot] != tag)
    same = at_a & (ref_tag[shot] != 255) & ~cross
    k, c = _pair_modulation(model, a, b)
    n_cross = int(np.count_nonzero(cross))
    if n_cross and k > 0:
        phase[cross] = shot_phase[shot[cross]] + _modulated_phases(rng, k, c, n_cross)
    phase[same] = shot_phase[shot[same]] + phase[same]
    return np.mod(phase, TWO_PI)


def _chunk_sizes(total: int, workers: int) -> List[int]:
    base, extra = divmod(total, workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]


def _default_pair(model: DetectorModel, beat_pair) -> Optional[Tuple[int, int]]:
    if beat_pair is None:
        return None
    try:
        a, b = model.index(beat_pair[0]), model.index(beat_pair[1])
    except KeyError:
        return None
    return (a, b) if model.split(a) and model.split(b) else None


def sample_photon_stream(cfg: SourceConfig, circuit: Circuit, *, min_bunch: int = 0, stream: int = 0,
                         beat_pair: Optional[Tuple[str, str]] = ("D1", "D2"),
                         model: Optional[DetectorModel] = None) -> PhotonStream:
    """Simulate ``cfg.shots`` laser shots (only those with n >= ``min_bunch``).

    With ``min_bunch > 0`` the shots are the post-selected bunches; estimators
    reweight by ``selection_probability`` so rates stay per emitted shot.
    """
    model = model or DetectorModel.from_circuit(circuit)
    pair = _default_pair(model, beat_pair)
    probs = np.append(model.probs, max(0.0, 1.0 - float(model.probs.sum())))
    probs /= probs.sum()
    n_det = len(model.names)

    chunks, bunches = [], []
    offset = 0
    for w, size in enumerate(_chunk_sizes(cfg.shots, cfg.workers)):
        rng = worker_rng(cfg.seed, stream, w)
        n = sample_bunches(rng, cfg.mean_photon_number, size, min_bunch)
        shot_phase = rng.uniform(0.0, TWO_PI, size)
        shot = np.repeat(np.arange(size, dtype=np.int64), n)
        det = rng.choice(n_det + 1, size=shot.size, p=probs)
        hit = det < n_det
        shot, det = shot[hit], det[hit]
        tag = _tags(rng, model, det)
        phase = _phases(rng, model, shot, det, tag, shot_phase, pair)
        if cfg.delta_f == 0:
            phase[:] = 0.0
        rec = np.empty(shot.size, dtype=_MEM_DTYPE)
        rec["shot"] = shot + offset
        rec["detector"] = det
        rec["bunch"] = np.minimum(n[shot], 255)
        rec["beat_phase"] = phase
        rec["tag"] = tag
        chunks.append(rec)
        bunches.append(n)
        offset += size

    return PhotonStream(
        records=np.concatenate(chunks),
        detectors=model.names,
        bunch_sizes=np.concatenate(bunches),
        mean_photon_number=cfg.mean_photon_number,
        min_bunch=max(min_bunch, 0),
        selection_probability=poisson_tail(cfg.mean_photon_number, min_bunch),
        source_intensity=model.source_intensity,
        delta_f=cfg.delta_f,
    )


def sample_coincidences(cfg: SourceConfig, circuit: Circuit, pair: Tuple[str, str], events: int,
                        stream: int = 0) -> PhotonStream:
    """Gated coincidence events: each shot is one photon at each pair detector.

    This is the output of the coincidence counter. The absolute pair rate is
    carried as ``pair_probability`` so heterodyne rates stay normalized.
    """
    model = DetectorModel.from_circuit(circuit)
    a, b = model.index(pair[0]), model.index(pair[1])
    pair_ix = (a, b) if model.split(a) and model.split(b) else None
    chunks, bunches = [], []
    offset = 0
    for w, size in enumerate(_chunk_sizes(events, cfg.workers)):
        rng = worker_rng(cfg.seed, stream, w)
        # pair-weighted bunch size: n(n-1) P(n) is Poisson shifted by two
        n = 2 + rng.poisson(cfg.mean_photon_number, size)
        shot_phase = rng.uniform(0.0, TWO_PI, size)
        shot = np.repeat(np.arange(size, dtype=np.int64), 2)
        det = np.tile(np.array([a, b]), size)
        tag = _tags(rng, model, det)
        phase = _phases(rng, model, shot, det, tag, shot_phase, pair_ix)
        rec = np.empty(shot.size, dtype=_MEM_DTYPE)
        rec["shot"] = shot + offset
        rec["detector"] = det
        rec["bunch"] = np.minimum(n[shot], 255)
        rec["beat_phase"] = phase
        rec["tag"] = tag
        chunks.append(rec)
        bunches.append(n)
        offset += size
    return PhotonStream(np.concatenate(chunks), model.names, np.concatenate(bunches),
                        cfg.mean_photon_number, 2, None, model.source_intensity, cfg.delta_f,
                        float(model.probs[a] * model.probs[b]))


# --- estimators ----------------------------------------------------------------

def _mean_result(per_shot: np.ndarray, scale: float, n_events: int) -> EstimatorResult:
    n = per_shot.size
    mean = float(per_shot.mean())
    std = float(per_shot.std(ddof=1)) if n > 1 else 0.0
    return EstimatorResult(scale * mean, abs(scale) * std / math.sqrt(n), n_events)


def _rate_scale(stream: PhotonStream, order: int) -> float:
    if stream.selection_probability is None:
        raise ValueError("coincidence-gated streams carry no absolute rate")
    if stream.min_bunch > order:
        raise ValueError(f"stream post-selected n >= {stream.min_bunch} cannot estimate order {order}")
    mu = stream.mean_photon_number
    return stream.selection_probability * stream.source_intensity ** order / mu ** order


def singles_rate(stream: PhotonStream, detector: str) -> EstimatorResult:
    """Mean intensity at ``detector`` (source-intensity units)."""
    if len(stream) == 0:
        raise EmptyRecordsError("no detection records")
    k = stream.counts_per_shot(detector)
    return _mean_result(k, _rate_scale(stream, 1), int(np.count_nonzero(k)))


def product_rate(stream: PhotonStream, detectors: Sequence[str], order: int) -> EstimatorResult:
    """N-fold coincidence rate with the N-photon normalization N^N."""
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    if len(detectors) != order or len(set(detectors)) != order:
        raise ValueError(f"need {order} distinct detectors")
    if len(stream) == 0:
        raise EmptyRecordsError("no detection records")
    prod = np.ones(stream.shots)
    for d in detectors:
        prod *= stream.counts_per_shot(d)
    return _mean_result(prod, float(order ** order) * _rate_scale(stream, order), int(np.count_nonzero(prod)))


class PairTable(NamedTuple):
    shot: np.ndarray
    cross: np.ndarray  # tags differ
    ref_cross: np.ndarray  # first tag differs from the shot's reference photon
    relative_phase: np.ndarray  # beat phase of first minus second detector


def coincidence_pairs(stream: PhotonStream, pair: Tuple[str, str]) -> PairTable:
    """All (first, second) detection pairs that share a shot."""
    ia, ib = stream.detectors.index(pair[0]), stream.detectors.index(pair[1])
    rec = stream.records
    ra = rec[rec["detector"] == ia]
    rb = rec[rec["detector"] == ib]
    nb = np.bincount(rb["shot"], minlength=stream.shots)
    b_start = np.concatenate(([0], np.cumsum(nb)[:-1]))
    m = nb[ra["shot"]]
    a_idx = np.repeat(np.arange(ra.size), m)
    within = np.arange(a_idx.size) - np.repeat(np.cumsum(m) - m, m)
    b_idx = np.repeat(b_start[ra["shot"]], m) + within
    pa, pb = ra[a_idx], rb[b_idx]
    ref_tag = rb["tag"][b_start[pa["shot"]]]
    rel = np.mod(pa["beat_phase"] - pb["beat_phase"], TWO_PI)
    return PairTable(pa["shot"].astype(np.int64), pa["tag"] != pb["tag"], pa["tag"] != ref_tag, rel)


def _check_heterodyne(stream: PhotonStream, pair: Tuple[str, str]):
    if stream.delta_f <= 0:
        raise HeterodyneError("delta_f = 0: no beat, product bases cannot be selected")
    tags = stream.records["tag"][np.isin(stream.records["detector"],
                                         [stream.detectors.index(d) for d in pair])]
    if tags.size and np.all(tags == FreqLabel.UNSHIFTED.value):
        raise HeterodyneError("records carry no frequency tags (AOM pair off)")


def estimate_heterodyne(stream: PhotonStream, pair: Tuple[str, str] = ("D1", "D2"),
                        theta: Optional[float] = None, psi: Optional[float] = None) -> EstimatorResult:
    """Gated cross-basis coincidence rate after the DC-cut.

    Same-tag pairs are rejected. Each surviving pair is demodulated at the
    beat: its weight ``1 + 2 cos(beta)`` projects the relative-phase
    distribution onto its DC and first-harmonic terms evaluated at zero delay.
    The tag comparison is made against the first photon at the second
    detector, which is the demodulation reference of the gate.
    ``theta``/``psi`` are informational.
    """
    _check_heterodyne(stream, pair)
    if len(stream) == 0:
        raise EmptyRecordsError("no detection records")
    pairs = coincidence_pairs(stream, pair)
    w = np.where(pairs.ref_cross, 1.0 + 2.0 * np.cos(pairs.relative_phase), 0.0)
    per_shot = np.bincount(pairs.shot, weights=w, minlength=stream.shots)
    if stream.selection_probability is None and stream.pair_probability is not None:
        scale = stream.pair_probability * stream.source_intensity ** 2
    else:
        scale = _rate_scale(stream, 2)
    return _mean_result(per_shot, 4.0 * scale, int(np.count_nonzero(pairs.cross)))


def dc_cut_fraction(stream: PhotonStream, pair: Tuple[str, str] = ("D1", "D2")) -> EstimatorResult:
    """Fraction of coincidences removed by the same-tag (DC) filter."""
    _check_heterodyne(stream, pair)
    pairs = coincidence_pairs(stream, pair)
    n = pairs.cross.size
    if n == 0:
        raise EmptyRecordsError("no coincidences")
    f = 1.0 - float(np.count_nonzero(pairs.cross)) / n
    return EstimatorResult(f, math.sqrt(f * (1 - f) / n), n)


def bunch_ratio(stream: PhotonStream, n: int = 1) -> EstimatorResult:
    """Empirical P(n+1)/P(n) of the emitted photon number."""
    if stream.min_bunch > n:
        raise ValueError("stream was post-selected above n")
    c_n = int(np.count_nonzero(stream.bunch_sizes == n))
    c_n1 = int(np.count_nonzero(stream.bunch_sizes == n + 1))
    if c_n == 0:
        raise EmptyRecordsError(f"no shots with {n} photons")
    r = c_n1 / c_n
    se = r * math.sqrt(1.0 / c_n + (1.0 / c_n1 if c_n1 else 1.0))
    return EstimatorResult(r, se, c_n + c_n1)


# --- curves --------------------------------------------------------------------

def thread_count() -> int:
    env = os.environ.get("ERASER_SIM_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cap))
        except ValueError:
            pass
    return cap


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Order-preserving map over a thread pool capped by ERASER_SIM_THREADS."""
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(fn, items))


def _curve(results: Sequence[EstimatorResult], phi_grid, meta) -> CorrelationCurve:
    return CorrelationCurve(np.asarray(phi_grid, float), [r.value for r in results],
                            [r.std_error for r in results], meta)


def estimate_first_order(streams: Sequence[PhotonStream], detector: str, phi_grid) -> CorrelationCurve:
    if len(streams) != len(phi_grid):
        raise ValueError("one stream per grid point")
    results = [singles_rate(s, detector) for s in streams]
    return _curve(results, phi_grid, {"order": 1, "detectors": (detector,)})


def estimate_product(streams: Sequence[PhotonStream], detectors: Sequence[str], order: int, phi_grid) -> CorrelationCurve:
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    if len(streams) != len(phi_grid):
        raise ValueError("one stream per grid point")
    results = [product_rate(s, detectors, order) for s in streams]
    return _curve(results, phi_grid, {"order": order, "detectors": tuple(detectors)})


def simulate_points(cfg: SourceConfig, circuits: Sequence[Circuit], min_bunch: int = 0,
                    estimator: Callable[[PhotonStream], EstimatorResult] = None) -> List:
    """Sample one stream per circuit (stream index = position) and reduce it.

    Streams are discarded after ``estimator`` runs so large scans stay
    memory-bounded; without an estimator the streams are returned.
    """
    def one(item):
        i, c = item
        s = sample_photon_stream(cfg, c, min_bunch=min_bunch, stream=i)
        return estimator(s) if estimator else s

    return parallel_map(one, list(enumerate(circuits)))


# --- binary record dump ------------------------------------------------------------

def write_records(path, stream: PhotonStream) -> None:
    """Little-endian dump: magic, u32 count, u8 detector count, names, records.

    Each name is a u8 length followed by UTF-8 bytes. Records are packed
    ``u32 shot, u8 detector, u8 bunch, f32 beat_phase, u8 tag``.
    """
    out = np.empty(len(stream.records), dtype=RECORD_DTYPE)
    for name in RECORD_DTYPE.names:
        out[name] = stream.records[name]
    with open(path, "wb") as fh:
        fh.write(RECORD_MAGIC)
        fh.write(struct.pack("<IB", out.size, len(stream.detectors)))
        for name in stream.detectors:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<B", len(raw)) + raw)
        fh.write(out.tobytes())


def read_records(path) -> Tuple[Tuple[str, ...], np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(len(RECORD_MAGIC)) != RECORD_MAGIC:
            raise ValueError("not an eraser record file")
        count, ndet = struct.unpack("<IB", fh.read(5))
        names = []
        for _ in range(ndet):
            (ln,) = struct.unpack("<B", fh.read(1))
            names.append(fh.read(ln).decode("utf-8"))
        data = np.frombuffer(fh.read(count * RECORD_DTYPE.itemsize), dtype=RECORD_DTYPE)
    if data.size != count:
        raise ValueError("truncated record file")
    return tuple(names), data
