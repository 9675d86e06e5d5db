"""eraser-sim command line.

Angles on the command line are degrees; every output column is radians.
Exit codes: 0 success, 1 validation or physics failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import analytic as an
from . import montecarlo as mc
from .circuit import CircuitError, build_fig1, detector_intensities, with_phase_offset
from .metrics import CorrelationCurve, FlatCurveError, chsh, chsh_settings, count_fringes, phase_resolution, visibility
from .netlist import load_circuit

SCAN_VARS = ("phi", "xi", "theta", "psi", "delta")
RESOLUTION_LABEL = {1: "2pi", 2: "pi", 4: "pi/2"}


class UsageError(Exception):
    pass


# --- output ----------------------------------------------------------------------

def _fmt(x) -> str:
    return f"{float(x):.9g}"


def write_table(args, columns: Sequence[str], rows: Sequence[Sequence[float]], comment: str,
                summary: Sequence[str] = ()) -> None:
    """CSV (comment line, header row, one row per grid point) or JSON."""
    if args.format == "json":
        text = json.dumps({
            "comment": comment,
            "columns": list(columns),
            "rows": [[float(x) for x in r] for r in rows],
            "summary": list(summary),
        }, indent=1) + "\n"
    else:
        lines = [f"# {comment}", ",".join(columns)]
        lines += [",".join(_fmt(x) for x in r) for r in rows]
        text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _report(lines: Sequence[str]) -> None:
    for line in lines:
        print(line, file=sys.stderr)


# --- grids and parameters -----------------------------------------------------------

def _grid(args, default_steps: int) -> np.ndarray:
    lo = 0.0 if args.range_from is None else args.range_from
    hi = 360.0 if args.range_to is None else args.range_to
    steps = args.steps or (args.phi_steps if args.scan == "phi" and args.phi_steps else default_steps)
    if steps < 2:
        raise UsageError("steps must be >= 2")
    if not lo < hi:
        raise UsageError("--from must be smaller than --to")
    return np.radians(np.linspace(lo, hi, steps))


def _angles(args) -> Dict[str, float]:
    return {k: math.radians(getattr(args, k)) for k in ("phi", "xi", "theta", "psi", "eta", "zeta")}


def _scanned(args, grid) -> Dict[str, object]:
    """Parameter values with the scan variable replaced by ``grid``."""
    p = _angles(args)
    if args.scan == "delta":
        p["theta"] = p["psi"] + grid
    else:
        p[args.scan] = grid
    return p


def _comment(cmd: str, args, extra: str = "") -> str:
    fixed = " ".join(f"{k}={getattr(args, k):g}" for k in ("phi", "xi", "theta", "psi", "eta", "zeta") if k != args.scan)
    tail = f"; {extra}" if extra else ""
    return (f"eraser-sim {cmd}: CLI angles in degrees, columns in radians; scan={args.scan} "
            f"{fixed} i0={args.i0:g}{tail}")


# --- subcommands --------------------------------------------------------------------

def cmd_fringe(args) -> int:
    grid = _grid(args, 361)
    p = _scanned(args, grid)
    zero_xi = dict(p, xi=0.0)
    par = an.EraserParams(i0=args.i0, **zero_xi)
    cols = {
        "I1": an.intensity_first_order(par, "D1"),
        "I2": an.intensity_first_order(par, "D2"),
        "I1Q": an.intensity_first_order(par, "D1Q"),
        "I2Q": an.intensity_first_order(par, "D2Q"),
    }
    if args.scan == "xi" or args.xi != 0:
        par_xi = an.EraserParams(i0=args.i0, **p)
        cols["I1Qxi"] = an.intensity_first_order(par_xi, "D1Qξ")
        cols["I2Qxi"] = an.intensity_first_order(par_xi, "D2Qξ")
    names = [f"{args.scan}_rad", *cols]
    data = [grid] + [np.broadcast_to(c, grid.shape) for c in cols.values()]
    write_table(args, names, np.column_stack(data), _comment("fringe", args))
    return 0


def cmd_pbw(args) -> int:
    if args.scan != "phi":
        raise UsageError("pbw scans phi only")
    grid = _grid(args, 361)
    par = an.EraserParams(i0=args.i0, **_scanned(args, grid))
    n1 = an.intensity_first_order(par, "D1Qξ")
    c2 = an.product_second_order(par)
    c4 = an.product_fourth_order(par)
    summary = []
    status = 0
    try:
        curves = {n: CorrelationCurve(grid, v) for n, v in ((1, n1), (2, c2), (4, c4))}
        for n, c in curves.items():
            summary.append(f"N={n}: fringes {count_fringes(c)}")
        for n, res in phase_resolution(curves).items():
            summary.append(f"N={n} -> {RESOLUTION_LABEL[n]} ({res:.6f} rad)")
    except (ValueError, AssertionError) as exc:
        summary.append(f"resolution unavailable: {exc}")
        status = 1
    write_table(args, ["phi_rad", "I1Qxi", "C2", "C4"], np.column_stack([grid, n1, c2, c4]),
                _comment("pbw", args), summary)
    _report(summary)
    return status


def _bell_rates(i0: float) -> dict:
    a, a2, b, b2 = 0.0, math.pi / 4, math.pi / 8, 3 * math.pi / 8
    return {(x, y): an.heterodyne_coincidence(an.EraserParams(theta=x, psi=y, i0=i0))
            for x, y in chsh_settings(a, a2, b, b2)}


def cmd_bell(args) -> int:
    if args.direct:
        if args.scan != "phi":
            raise UsageError("--direct scans phi")
        grid = _grid(args, 361)
        par = an.EraserParams(i0=args.i0, **_scanned(args, grid))
        direct = an.direct_product(par)
        try:
            summary = [f"direct product (no basis selection): phi-dependent, visibility {visibility(CorrelationCurve(grid, direct)):.6f}"]
        except FlatCurveError:
            summary = ["direct product (no basis selection): flat"]
        write_table(args, ["phi_rad", "direct"], np.column_stack([grid, direct]), _comment("bell --direct", args), summary)
        _report(summary)
        return 0

    scan = "theta" if args.scan == "phi" else args.scan
    if scan not in ("theta", "delta"):
        raise UsageError("bell scans theta or delta")
    args.scan = scan
    grid = _grid(args, 361)
    try:
        psis = [float(x) for x in args.psi_list.split(",")]
    except ValueError:
        raise UsageError(f"bad --psi-list {args.psi_list!r}") from None
    p = _angles(args)
    cols = [grid]
    names = [f"{scan}_rad"]
    for psi_deg in psis:
        psi = math.radians(psi_deg)
        theta = grid if scan == "theta" else psi + grid
        cols.append(an.heterodyne_coincidence(an.EraserParams(phi=p["phi"], theta=theta, psi=psi, i0=args.i0)))
        names.append(f"R_psi{psi_deg:g}")
    s, _ = chsh(_bell_rates(args.i0))
    summary = [f"S = {s:.6f}"]
    write_table(args, names, np.column_stack(cols), _comment("bell", args, "R(theta, psi) traces"), summary)
    _report(summary)
    return 0


ESTIMATORS = ("singles", "c2", "c4", "heterodyne")
_ORDER = {"singles": 0, "c2": 2, "c4": 4, "heterodyne": 0}
_SINGLES_ANALYTIC = {"D1": "D1Qξ", "D2": "D2Qξ"}


def _point_params(p: Dict[str, object], i: int) -> Dict[str, float]:
    return {k: float(v[i]) if np.ndim(v) else float(v) for k, v in p.items()}


def cmd_simulate(args) -> int:
    if args.shots < 1:
        raise UsageError("--shots must be >= 1")
    try:
        cfg = mc.SourceConfig(args.mu, args.shots, args.seed, args.delta_f, workers=args.workers)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    grid = _grid(args, 25)
    p = _scanned(args, grid)
    est = args.estimator
    points = [_point_params(p, i) for i in range(len(grid))]
    circuits = [build_fig1(**q, aom_on=est == "heterodyne", i0=args.i0, delta_f=args.delta_f) for q in points]

    if est == "singles":
        det = args.detector
        truth = [an.intensity_first_order(an.EraserParams(i0=args.i0, **q), _SINGLES_ANALYTIC.get(det, det)) for q in points]
        fn = lambda s: mc.singles_rate(s, det)
    elif est == "c2":
        truth = [an.product_second_order(an.EraserParams(i0=args.i0, **q)) for q in points]
        fn = lambda s: mc.product_rate(s, ["D1", "D2"], 2)
    elif est == "c4":
        truth = [an.product_fourth_order(an.EraserParams(i0=args.i0, **q)) for q in points]
        fn = lambda s: mc.product_rate(s, ["D1", "D2", "D3", "D4"], 4)
    else:
        truth = [an.heterodyne_coincidence(an.EraserParams(i0=args.i0, **q)) for q in points]
        fn = lambda s: mc.estimate_heterodyne(s, ("D1", "D2"))

    def safe(s):
        try:
            return fn(s)
        except mc.EmptyRecordsError:
            return mc.EstimatorResult(math.nan, math.nan, 0)

    try:
        results = mc.simulate_points(cfg, circuits, min_bunch=_ORDER[est], estimator=safe)
    except mc.HeterodyneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    rows, ok = [], 0
    scale = max(abs(float(t)) for t in truth)
    for x, r, t in zip(grid, results, truth):
        dev = abs(r.value - t)
        passed = math.isfinite(r.value) and dev <= 3 * r.std_error + 1e-12 * scale
        ok += passed
        rows.append([x, r.value, r.std_error, t, r.n_events, float(passed)])
    frac = ok / len(rows)
    verdict = "PASS" if frac >= 0.95 else "FAIL"
    summary = [f"{est} <n>={args.mu:g} shots={args.shots} seed={args.seed}: {ok}/{len(rows)} points within 3 sigma",
               f"{verdict} ({100 * frac:.1f}% >= 95% required)"]
    write_table(args, [f"{args.scan}_rad", "estimate", "std_error", "analytic", "n_events", "within_3sigma"], rows,
                _comment("simulate", args, f"estimator={est}"), summary)
    _report(summary)
    return 0 if verdict == "PASS" else 1


def cmd_circuit(args) -> int:
    try:
        circuit = load_circuit(args.path)
    except OSError as exc:
        raise UsageError(f"cannot read {args.path}: {exc.strerror}") from None
    except CircuitError as exc:
        for d in exc.diagnostics:
            print(f"{args.path}: {d}", file=sys.stderr)
        return 1
    print(f"OK, {len(circuit.detectors)} detectors")
    if args.out or args.table:
        grid = _grid(args, 361)
        rates = detector_intensities(with_phase_offset(circuit, grid))
        names = ["phi_rad", *rates]
        cols = [grid] + [np.broadcast_to(v, grid.shape) for v in rates.values()]
        write_table(args, names, np.column_stack(cols), f"eraser-sim circuit {args.path}: phase offset added to every PZT, radians")
    return 0


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("angles (degrees) and output")
    for name, default in (("phi", 0.0), ("xi", 0.0), ("theta", 45.0), ("psi", 45.0), ("eta", 45.0), ("zeta", 45.0)):
        g.add_argument(f"--{name}", type=float, default=default, help=f"{name} in degrees (default {default:g})")
    g.add_argument("--i0", type=float, default=1.0, help="source intensity")
    g.add_argument("--scan", choices=SCAN_VARS, default="phi", help="variable to scan (delta = theta - psi)")
    g.add_argument("--from", dest="range_from", type=float, help="scan start, degrees (default 0)")
    g.add_argument("--to", dest="range_to", type=float, help="scan stop, degrees (default 360)")
    g.add_argument("--steps", type=int, help="grid points")
    g.add_argument("--phi-steps", type=int, help="grid points for a phi scan")
    g.add_argument("--shots", type=int, default=1_000_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", help="output file (default stdout)")
    g.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = argparse.ArgumentParser(prog="eraser-sim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("fringe", parents=[common], help="first-order fringes with and without the QWP").set_defaults(func=cmd_fringe)
    sub.add_parser("pbw", parents=[common], help="C2/C4 intensity products and fringe counts").set_defaults(func=cmd_pbw)

    bell = sub.add_parser("bell", parents=[common], help="heterodyne R(theta, psi) and CHSH S")
    bell.add_argument("--psi-list", default="-45,0,45,90,135", help="comma-separated psi values, degrees")
    bell.add_argument("--direct", action="store_true", help="unselected direct product vs phi instead")
    bell.set_defaults(func=cmd_bell)

    sim = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimate vs closed form")
    sim.add_argument("--estimator", choices=ESTIMATORS, default="singles")
    sim.add_argument("--detector", default="D1", help="detector for singles")
    sim.add_argument("--mu", type=float, default=0.1, help="mean photon number per shot")
    sim.add_argument("--delta-f", type=float, default=mc.DEFAULT_DELTA_F, help="AOM offset, Hz")
    sim.add_argument("--workers", type=int, default=1, help="shot-generation RNG streams per point")
    sim.set_defaults(func=cmd_simulate)

    circ = sub.add_parser("circuit", parents=[common], help="validate a circuit file (or builtin:fig1)")
    circ.add_argument("path")
    circ.add_argument("--table", action="store_true", help="print detector intensities vs phase offset")
    circ.set_defaults(func=cmd_circuit)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except KeyError as exc:
        parser.error(str(exc.args[0]) if exc.args else "unknown key")
    return 2


if __name__ == "__main__":
    sys.exit(main())
