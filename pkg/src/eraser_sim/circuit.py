"""Feed-forward optical circuits: topology checks, the canonical layout, evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .core_optics import FieldState, ModeField, PolComponent, inner_product_cross
from .elements import Element, Kind

DEFAULT_DELTA_F = 80e6  # Hz, typical AOM drive
BUILTIN_FIG1 = "builtin:fig1"
DETECTOR_IDS = ("D1", "D2", "D3", "D4", "D3'", "D4'")

SOURCE_POLARIZATIONS = {"V": (0j, 1 + 0j), "H": (1 + 0j, 0j)}


@dataclass(frozen=True)
class Diagnostic:
    line: Optional[int]
    column: Optional[int]
    message: str

    def __str__(self):
        if self.line is None:
            return self.message
        return f"line {self.line}, col {self.column}: {self.message}"


class CircuitError(ValueError):
    def __init__(self, diagnostics: Sequence[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


class DetectorInfo(NamedTuple):
    mode: str
    polarizer_angle: Optional[float]
    has_qwp: bool


class ModeTracker:
    """Tracks live/consumed/detected modes while walking a circuit in order.

    Each check returns an error message or None; shared by the parser and
    by :class:`Circuit` validation so both report the same problems.
    """

    def __init__(self):
        self.live: set = set()
        self.consumed: set = set()
        self.detected: Dict[str, str] = {}
        self.ids: set = set()

    def use(self, mode: str) -> Optional[str]:
        if mode in self.live:
            return None
        if mode in self.detected:
            return f"mode {mode!r} already ends at detector {self.detected[mode]}"
        if mode in self.consumed:
            return f"mode {mode!r} was already consumed"
        return f"dangling mode {mode!r} (not produced by any source or element)"

    def create(self, mode: str, freed: Sequence[str] = ()) -> Optional[str]:
        if mode in self.live and mode not in freed:
            return f"mode {mode!r} already exists"
        if mode in self.detected:
            return f"mode {mode!r} already ends at detector {self.detected[mode]}"
        return None

    def consume(self, modes):
        for m in modes:
            self.live.discard(m)
            self.consumed.add(m)

    def produce(self, modes):
        for m in modes:
            self.consumed.discard(m)
            self.live.add(m)

    def detect(self, mode: str, det_id: str) -> Optional[str]:
        if det_id in self.ids:
            return f"duplicate detector id {det_id!r}"
        err = self.use(mode)
        if err:
            return err
        self.ids.add(det_id)
        self.live.discard(mode)
        self.detected[mode] = det_id
        return None


def element_errors(tracker: ModeTracker, el: Element) -> List[str]:
    """Check one element against the tracker and advance it."""
    errors = []
    if el.kind in (Kind.BS, Kind.PBS):
        ins = [m for m in el.inputs if m is not None]
        if not ins:
            errors.append("beam splitter needs at least one non-vacuum input")
        if len(set(el.outputs)) != len(el.outputs):
            errors.append("output modes must be distinct")
        errors += [e for e in map(tracker.use, ins) if e]
        errors += [e for e in (tracker.create(o, freed=ins) for o in el.outputs) if e]
        if not errors:
            tracker.consume(ins)
            tracker.produce(el.outputs)
        return errors
    if el.kind is Kind.AOM and el.inputs[0] == el.inputs[1]:
        errors.append("aompair needs two different modes")
    errors += [e for e in map(tracker.use, el.inputs) if e]
    return errors


@dataclass(frozen=True)
class Circuit:
    elements: Tuple[Element, ...]
    sources: Mapping[str, str]  # mode -> "V" | "H"
    detectors: Mapping[str, str]  # detector id -> mode, in declaration order
    e0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        errors = self._topology_errors()
        if errors:
            raise CircuitError([Diagnostic(None, None, e) for e in errors])

    def _topology_errors(self) -> List[str]:
        t = ModeTracker()
        errors = []
        for mode, pol in self.sources.items():
            if pol not in SOURCE_POLARIZATIONS:
                errors.append(f"source {mode!r}: polarization must be V or H")
            t.produce([mode])
        for i, el in enumerate(self.elements):
            errors += [f"element {i} ({el.kind.value}): {e}" for e in element_errors(t, el)]
        for det_id, mode in self.detectors.items():
            err = t.detect(mode, det_id)
            if err:
                errors.append(f"detector {det_id}: {err}")
        return errors

    def detector_info(self, det_id: str) -> DetectorInfo:
        mode = self.detectors[det_id]
        angle = None
        has_qwp = False
        lineage = {mode}
        for el in reversed(self.elements):
            if not lineage.intersection(el.outputs):
                continue
            if el.kind is Kind.POLARIZER and angle is None and mode in el.outputs:
                angle = el.param
            if el.kind is Kind.QWP:
                has_qwp = True
            if el.kind in (Kind.BS, Kind.PBS):
                lineage.update(m for m in el.inputs if m is not None)
        return DetectorInfo(mode, angle, has_qwp)

    def structurally_equal(self, other: "Circuit", tol: float = 1e-12) -> bool:
        if (dict(self.sources), dict(self.detectors)) != (dict(other.sources), dict(other.detectors)):
            return False
        if list(self.detectors) != list(other.detectors) or len(self.elements) != len(other.elements):
            return False
        if not math.isclose(self.e0, other.e0, rel_tol=tol):
            return False
        for a, b in zip(self.elements, other.elements):
            if (a.kind, a.inputs, a.outputs, a.conjugate) != (b.kind, b.inputs, b.outputs, b.conjugate):
                return False
            if a.param is None or b.param is None:
                if a.param is not b.param:
                    return False
            elif a.kind is Kind.AOM:
                if not math.isclose(a.param, b.param, rel_tol=tol):
                    return False
            else:
                d = abs(a.param - b.param)
                if a.kind in (Kind.HWP, Kind.QWP, Kind.PZT, Kind.POLARIZER):
                    d = min(d, 2 * math.pi - d)
                if d > tol:
                    return False
        return True


@dataclass(frozen=True)
class Propagation:
    state: FieldState
    absorbed: object  # intensity removed by polarizers and ND filters


def initial_state(circuit: Circuit) -> FieldState:
    modes = {}
    for mode, pol in circuit.sources.items():
        h, v = SOURCE_POLARIZATIONS[pol]
        modes[mode] = ModeField(PolComponent(h), PolComponent(v))
    return FieldState(modes, circuit.e0)


def propagate(circuit: Circuit) -> Propagation:
    state = initial_state(circuit)
    absorbed = 0.0
    for el in circuit.elements:
        if el.kind in (Kind.POLARIZER, Kind.ND):
            before = state.e0 ** 2 * state[el.inputs[0]].power()
            state = el.apply(state)
            absorbed = absorbed + before - state.e0 ** 2 * state[el.inputs[0]].power()
        else:
            state = el.apply(state)
    return Propagation(state, absorbed)


def evaluate(circuit: Circuit) -> Dict[str, FieldState]:
    """Detector id -> single-mode FieldState at that detector."""
    state = propagate(circuit).state
    return {det_id: state.only(mode) for det_id, mode in circuit.detectors.items()}


def detector_intensities(circuit: Circuit) -> Dict[str, object]:
    state = propagate(circuit).state
    return {d: state.e0 ** 2 * state[m].power() for d, m in circuit.detectors.items()}


def heterodyne_rate(circuit: Circuit, pair: Tuple[str, str] = ("D1", "D2")):
    """Cross-basis two-photon rate kept by the DC-cut, with the pair normalization.

    Only the H x V and V x H product pathways survive; their amplitudes add
    coherently because the gated detector resolves the beat.
    """
    states = evaluate(circuit)
    amp = inner_product_cross(states[pair[0]], states[pair[1]])
    return 4.0 * circuit.e0 ** 4 * np.abs(amp) ** 2


def with_phase_offset(circuit: Circuit, phi) -> Circuit:
    """Copy of ``circuit`` with ``phi`` added to every PZT (``phi`` may be an array)."""
    els = [
        Element(el.kind, el.inputs, el.outputs, el.param + np.asarray(phi) if np.ndim(phi) else el.param + phi)
        if el.kind is Kind.PZT else el
        for el in circuit.elements
    ]
    return Circuit(els, circuit.sources, circuit.detectors, circuit.e0)


def _single(kind: Kind, mode: str, param=None) -> Element:
    return Element(kind, (mode,), (mode,), param)


def build_fig1(
    phi=0.0,
    xi=0.0,
    theta=math.pi / 4,
    psi=math.pi / 4,
    eta=math.pi / 4,
    zeta=math.pi / 4,
    aom_on: bool = False,
    block_b_prime: bool = True,
    *,
    qwp: bool = True,
    i0: float = 1.0,
    delta_f: float = DEFAULT_DELTA_F,
    aom_conjugate: bool = False,
) -> Circuit:
    """The canonical layout: source, NMZI and the detection blocks A, B, B'.

    Vertically polarized laser -> ND -> HWP(22.5 deg) -> PBS -> arms (AOM pair,
    PZT(phi) on the V arm) -> BS. Output B is split between block A
    (QWP(xi) -> BS -> D1, D2) and block B (BS -> D3, D4); output A feeds block
    B' (D3', D4') through a further BS whose second port is left open.

    Polarizer angles are lab-frame angles. Detectors seen through the mirror
    image of a reflected port (D2, D4, D3') get the mirrored angle in the
    beam frame, which is where the elements act.

    ``phi`` may be a numpy array; every amplitude then carries the whole grid.
    """
    e = [
        _single(Kind.ND, "L", 1.0),
        _single(Kind.HWP, "L", math.radians(22.5)),
        Element(Kind.PBS, ("L",), ("armH", "armV")),
    ]
    if aom_on:
        e.append(Element(Kind.AOM, ("armH", "armV"), ("armH", "armV"), delta_f, aom_conjugate))
    e += [
        _single(Kind.PZT, "armV", phi),
        Element(Kind.BS, ("armH", "armV"), ("B", "A")),
        Element(Kind.BS, ("B", None), ("blockA", "blockB")),
    ]
    if qwp:
        e.append(_single(Kind.QWP, "blockA", xi))
    e += [
        Element(Kind.BS, ("blockA", None), ("d1", "d2")),
        _single(Kind.POLARIZER, "d1", theta),
        _single(Kind.POLARIZER, "d2", -psi),
        Element(Kind.BS, ("blockB", None), ("d3", "d4")),
        _single(Kind.POLARIZER, "d3", eta),
        _single(Kind.POLARIZER, "d4", -zeta),
    ]
    detectors = {"D1": "d1", "D2": "d2", "D3": "d3", "D4": "d4"}
    if block_b_prime:
        e += [
            Element(Kind.BS, ("A", None), ("blockBp", "openA")),
            Element(Kind.BS, ("blockBp", None), ("d3p", "d4p")),
            _single(Kind.POLARIZER, "d3p", -eta),
            _single(Kind.POLARIZER, "d4p", zeta),
        ]
        detectors.update({"D3'": "d3p", "D4'": "d4p"})
    return Circuit(tuple(e), {"L": "V"}, detectors, math.sqrt(i0))
