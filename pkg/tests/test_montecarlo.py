import math

import numpy as np
import pytest

from eraser_sim import analytic as an
from eraser_sim import montecarlo as mc
from eraser_sim.circuit import build_fig1, detector_intensities
from eraser_sim.metrics import count_fringes, visibility
from eraser_sim.core_optics import FreqLabel

Q = math.pi / 4


def cfg(shots=10 ** 5, seed=0, mu=0.1, **kw):
    return mc.SourceConfig(mu, shots, seed, **kw)


def within(r, truth, k=3.0):
    return abs(r.value - truth) <= k * r.std_error + 1e-12


def test_source_config_validation():
    for mu in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError, match="mean photon number"):
            cfg(mu=mu)
    with pytest.raises(ValueError, match="resolve time"):
        cfg(detector_resolve_time=1e-9)
    with pytest.raises(ValueError):
        cfg(shots=0)
    assert cfg(delta_f=0.0).delta_f == 0.0


def test_poisson_tail_matches_direct_sum():
    mu = 0.1
    direct = 1 - sum(math.exp(-mu) * mu ** k / math.factorial(k) for k in range(2))
    assert mc.poisson_tail(mu, 2) == pytest.approx(direct, rel=1e-9)
    assert mc.poisson_tail(mu, 0) == 1.0
    assert mc.poisson_tail(mu, 4) == pytest.approx(math.exp(-mu) * mu ** 4 / 24 * (1 + mu / 5 + mu ** 2 / 30), rel=1e-4)


def test_truncated_bunches_respect_minimum():
    rng = mc.worker_rng(1, 0, 0)
    n = mc.sample_bunches(rng, 0.1, 10 ** 5, 4)
    assert n.min() == 4
    # P(5)/P(4) = mu/5 in the conditioned distribution too
    assert np.mean(n == 5) / np.mean(n == 4) == pytest.approx(0.02, rel=0.15)


def test_determinism_for_seed_and_worker_count():
    c = build_fig1(0.4, aom_on=True)
    a = mc.sample_photon_stream(cfg(seed=5, workers=3), c)
    b = mc.sample_photon_stream(cfg(seed=5, workers=3), c)
    assert np.array_equal(a.records, b.records) and np.array_equal(a.bunch_sizes, b.bunch_sizes)
    other = mc.sample_photon_stream(cfg(seed=6, workers=3), c)
    assert not np.array_equal(a.records, other.records)
    split = mc.sample_photon_stream(cfg(seed=5, workers=2), c)
    assert split.shots == a.shots


def test_record_invariants():
    s = mc.sample_photon_stream(cfg(mu=0.5), build_fig1(1.0, aom_on=True))
    r = s.records
    assert r["bunch"].min() >= 1
    assert np.all((r["beat_phase"] >= 0) & (r["beat_phase"] < 2 * math.pi))
    assert np.all(np.diff(r["shot"].astype(np.int64)) >= 0)
    assert np.all(r["bunch"] == np.minimum(s.bunch_sizes[r["shot"]], 255))
    first = next(iter(s))
    assert first.detector in s.detectors and isinstance(first.tag, FreqLabel)


def test_tiny_mean_gives_single_photon_bunches():
    s = mc.sample_photon_stream(cfg(shots=10 ** 6, mu=1e-5), build_fig1(0.0))
    assert len(s) > 0 and np.all(s.records["bunch"] == 1)


def test_detector_marginals_match_intensities():
    c = build_fig1(0.9, 0.2, 0.3, 1.0, 0.5, 1.4)
    truth = detector_intensities(c)
    s = mc.sample_photon_stream(cfg(shots=10 ** 6, seed=11), c)
    for d, t in truth.items():
        assert within(mc.singles_rate(s, d), t), d


def test_bunch_ratios_follow_poisson():
    s = mc.sample_photon_stream(cfg(shots=10 ** 6, mu=0.5, seed=2), build_fig1(0.0))
    for n in (1, 2):
        r = mc.bunch_ratio(s, n)
        assert within(r, 0.5 / (n + 1)), n


@pytest.mark.slow
def test_unbiased_singles_over_independent_seeds():
    points = [build_fig1(0.0), build_fig1(math.pi / 3), build_fig1(2.0, theta=0.3)]
    truths = [detector_intensities(c)["D1"] for c in points]
    hits = total = 0
    for c, t in zip(points, truths):
        model = mc.DetectorModel.from_circuit(c)
        for seed in range(100):
            s = mc.sample_photon_stream(cfg(shots=10 ** 6, seed=1000 + seed), c, model=model, beat_pair=None)
            hits += within(mc.singles_rate(s, "D1"), t)
            total += 1
    assert hits / total >= 0.99


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["c2", "c4", "heterodyne"])
def test_unbiased_products_over_independent_seeds(kind):
    # shots are drawn from the bunch-size-truncated source and reweighted
    if kind == "c2":
        points = [0.0, math.pi / 3, 2.5]
        make = lambda p: build_fig1(p)
        truth = an.c2_closed_form
        est = lambda s: mc.product_rate(s, ["D1", "D2"], 2)
        order = 2
    elif kind == "c4":
        points = [Q, math.pi / 3, 2.5]
        make = lambda p: build_fig1(p)
        truth = an.c4_closed_form
        est = lambda s: mc.product_rate(s, ["D1", "D2", "D3", "D4"], 4)
        order = 4
    else:
        points = [-Q, 0.3, 1.2]
        make = lambda t: build_fig1(0.4, theta=t, psi=Q, aom_on=True)
        truth = lambda t: an.heterodyne_coincidence(an.EraserParams(theta=t, psi=Q))
        est = mc.estimate_heterodyne
        order = 2
    hits = total = 0
    for p in points:
        c, t = make(p), truth(p)
        model = mc.DetectorModel.from_circuit(c)
        for seed in range(100):
            s = mc.sample_photon_stream(cfg(shots=10 ** 6, seed=seed), c, min_bunch=order, model=model)
            hits += within(est(s), t)
            total += 1
    assert hits / total >= 0.99


def test_standard_error_scales_as_inverse_sqrt_shots():
    c = build_fig1(0.7)
    se = [mc.singles_rate(mc.sample_photon_stream(cfg(shots=n, seed=4), c), "D1").std_error for n in (10 ** 4, 10 ** 5, 10 ** 6)]
    for a, b in zip(se, se[1:]):
        assert a / b == pytest.approx(math.sqrt(10), rel=0.2)


def test_first_order_curve_visibility_and_flat_case():
    grid = np.linspace(0, 2 * math.pi, 64, endpoint=False)
    streams = mc.simulate_points(cfg(shots=10 ** 6, seed=8), [build_fig1(p, qwp=False) for p in grid])
    c = mc.estimate_first_order(streams, "D1", grid)
    assert visibility(c) == pytest.approx(1.0, abs=0.01)
    assert count_fringes(c) == 1
    truth = an.intensity_first_order(an.EraserParams(grid), "D1")
    assert np.mean(np.abs(c.values - truth) <= 3 * c.std_errors) >= 0.95
    flat_streams = mc.simulate_points(cfg(shots=10 ** 5, seed=9), [build_fig1(p, theta=0.0, qwp=False) for p in grid[:16]])
    flat = mc.estimate_first_order(flat_streams, "D1", grid[:16])
    assert np.all(np.abs(flat.values - 1 / 16) <= 4 * flat.std_errors)


def test_product_curves_fringe_counts():
    grid = np.linspace(0, 2 * math.pi, 64, endpoint=False)
    plain = [build_fig1(p) for p in grid]
    c2 = mc.estimate_product(mc.simulate_points(cfg(shots=2 * 10 ** 5, seed=3), plain, 2), ["D1", "D2"], 2, grid)
    assert count_fringes(c2) == 2
    c4 = mc.estimate_product(mc.simulate_points(cfg(shots=10 ** 6, seed=3), plain, 4), ["D1", "D2", "D3", "D4"], 4, grid)
    assert count_fringes(c4) == 4
    # without the QWP, same-sign fringes keep period 2pi while D3 x D4 = sin^2 is halved
    no_qwp = mc.simulate_points(cfg(shots=2 * 10 ** 5, seed=3), [build_fig1(p, qwp=False) for p in grid], 2)
    assert count_fringes(mc.estimate_product(no_qwp, ["D1", "D3"], 2, grid)) == 1
    c34 = mc.estimate_product(no_qwp, ["D3", "D4"], 2, grid)
    assert count_fringes(c34) == 2
    assert np.mean(np.abs(c34.values - np.sin(grid) ** 2 / 64) <= 3 * c34.std_errors) >= 0.95


def test_product_argument_checks():
    s = mc.sample_photon_stream(cfg(shots=1000), build_fig1(0.0), min_bunch=2)
    with pytest.raises(ValueError):
        mc.product_rate(s, ["D1", "D2", "D3"], 3)
    with pytest.raises(ValueError):
        mc.product_rate(s, ["D1", "D1"], 2)
    with pytest.raises(ValueError):
        mc.estimate_product([s], ["D1", "D2"], 3, [0.0])
    with pytest.raises(ValueError, match="post-selected"):
        mc.singles_rate(s, "D1")


def test_empty_record_set_is_an_error():
    s = mc.sample_photon_stream(cfg(shots=1, mu=1e-9), build_fig1(0.0))
    assert len(s) == 0
    with pytest.raises(mc.EmptyRecordsError):
        mc.singles_rate(s, "D1")
    with pytest.raises(mc.EmptyRecordsError):
        mc.estimate_first_order([s, s], "D1", [0.0, 1.0])


def test_heterodyne_examples():
    big = cfg(shots=10 ** 6, seed=21)
    top = mc.estimate_heterodyne(mc.sample_photon_stream(big, build_fig1(0.3, theta=Q, psi=-Q, aom_on=True)))
    assert within(top, 1 / 64)
    zero = mc.estimate_heterodyne(mc.sample_photon_stream(big, build_fig1(0.3, theta=Q, psi=Q, aom_on=True)))
    assert within(zero, 0.0)
    gated = mc.sample_coincidences(big, build_fig1(0.3, theta=Q, psi=-Q, aom_on=True), ("D1", "D2"), 10 ** 5)
    assert within(mc.estimate_heterodyne(gated), 1 / 64)


def test_heterodyne_needs_beat_and_tags():
    with pytest.raises(mc.HeterodyneError, match="delta_f"):
        mc.estimate_heterodyne(mc.sample_photon_stream(cfg(shots=1000, delta_f=0.0), build_fig1(0.0, aom_on=True, delta_f=0.0)))
    with pytest.raises(mc.HeterodyneError, match="tags"):
        mc.estimate_heterodyne(mc.sample_photon_stream(cfg(shots=10 ** 4), build_fig1(0.0)))


def test_dc_cut_discards_half_at_equal_angles():
    s = mc.sample_coincidences(cfg(seed=4), build_fig1(0.0, theta=Q, psi=Q, aom_on=True), ("D1", "D2"), 10 ** 5)
    f = mc.dc_cut_fraction(s)
    assert abs(f.value - 0.5) < 0.01 and f.n_events == 10 ** 5


def test_binary_dump_round_trip(tmp_path):
    s = mc.sample_photon_stream(cfg(shots=2 * 10 ** 4, mu=0.5), build_fig1(0.2, aom_on=True))
    path = tmp_path / "records.bin"
    mc.write_records(path, s)
    raw = path.read_bytes()
    assert raw[:6] == b"ERSM\x00\x01"
    names, data = mc.read_records(path)
    assert names == s.detectors and len(data) == len(s)
    header = 6 + 5 + sum(1 + len(n.encode()) for n in names)
    assert len(raw) == header + 11 * len(s)
    for f in ("shot", "detector", "bunch", "tag"):
        assert np.array_equal(data[f], s.records[f])
    assert np.allclose(data["beat_phase"], s.records["beat_phase"], atol=1e-6)
    (tmp_path / "bad.bin").write_bytes(b"nope")
    with pytest.raises(ValueError):
        mc.read_records(tmp_path / "bad.bin")


def test_thread_cap_from_environment(monkeypatch):
    monkeypatch.setenv("ERASER_SIM_THREADS", "1")
    assert mc.thread_count() == 1
    monkeypatch.setenv("ERASER_SIM_THREADS", "junk")
    assert mc.thread_count() >= 1
    monkeypatch.setenv("ERASER_SIM_THREADS", "4")
    assert mc.parallel_map(lambda x: x * x, list(range(10))) == [x * x for x in range(10)]
