"""Line-oriented circuit description files.

::

    # comment
    source <mode> [Vpol|Hpol]
    nd <mode> <transmission 0..1>
    hwp|qwp|pzt|pol <mode> <deg>
    mirror <mode>
    pbs <in> <outH> <outV>
    bs <in1|-> <in2|-> <out1> <out2>
    aompair <modeH> <modeV> <delta_f_Hz> [conjugate]
    det <mode> <id>

Angles are degrees in the file and radians in memory.
"""

from __future__ import annotations

import math
import re
from typing import List, Optional, Tuple

import numpy as np

from .circuit import BUILTIN_FIG1, Circuit, CircuitError, Diagnostic, ModeTracker, build_fig1, element_errors
from .elements import Element, Kind

ANGLE_KEYWORDS = {"hwp": Kind.HWP, "qwp": Kind.QWP, "pzt": Kind.PZT, "pol": Kind.POLARIZER}
KEYWORDS = {"source", "nd", "mirror", "pbs", "bs", "aompair", "det", *ANGLE_KEYWORDS}
_MODE_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_'.]*$")


def _tokens(line: str) -> List[Tuple[str, int]]:
    return [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", line)]


def _number(tok: str) -> Optional[float]:
    try:
        x = float(tok)
    except ValueError:
        return None
    return x if math.isfinite(x) else None


def parse_circuit(text: str) -> Circuit:
    """Parse a circuit file. Raises :class:`CircuitError` carrying every diagnostic."""
    diags: List[Diagnostic] = []
    elements: List[Element] = []
    sources = {}
    detectors = {}
    tracker = ModeTracker()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        toks = _tokens(raw.split("#", 1)[0])
        if not toks:
            continue
        (kw, kcol), args = toks[0], toks[1:]

        def err(msg, col=kcol):
            diags.append(Diagnostic(lineno, col, msg))

        kw = kw.lower()
        if kw not in KEYWORDS:
            err(f"unknown element keyword {toks[0][0]!r}")
            continue

        if kw != "bs" and args and not _MODE_RE.match(args[0][0]):
            err(f"invalid mode name {args[0][0]!r}", args[0][1])
            continue

        if kw == "source":
            if len(args) not in (1, 2):
                err("source expects: source <mode> [Vpol|Hpol]")
                continue
            pol = args[1][0].lower() if len(args) == 2 else "vpol"
            if pol not in ("vpol", "hpol"):
                err(f"expected Vpol or Hpol, got {args[1][0]!r}", args[1][1])
                continue
            mode = args[0][0]
            msg = tracker.create(mode) or (f"mode {mode!r} was already consumed" if mode in tracker.consumed else None)
            if msg:
                err(msg, args[0][1])
                continue
            tracker.produce([mode])
            sources[mode] = pol[0].upper()
            continue

        if kw == "det":
            if len(args) != 2:
                err("det expects: det <mode> <id>")
                continue
            msg = tracker.detect(args[0][0], args[1][0])
            if msg:
                err(msg, args[1][1] if "duplicate" in msg else args[0][1])
                continue
            detectors[args[1][0]] = args[0][0]
            continue

        el = _element(kw, args, kcol, err)
        if el is None:
            continue
        for msg in element_errors(tracker, el):
            err(msg)
        elements.append(el)

    if diags:
        raise CircuitError(diags)
    return Circuit(tuple(elements), sources, detectors)


def _element(kw, args, kcol, err) -> Optional[Element]:
    if kw in ANGLE_KEYWORDS:
        if len(args) < 2:
            err(f"{kw}: expected angle (degrees) after mode")
            return None
        if len(args) > 2:
            err(f"{kw}: too many arguments", args[2][1])
            return None
        deg = _number(args[1][0])
        if deg is None:
            err(f"{kw}: expected angle, got {args[1][0]!r}", args[1][1])
            return None
        mode = args[0][0]
        return Element(ANGLE_KEYWORDS[kw], (mode,), (mode,), math.radians(deg))

    if kw == "mirror":
        if len(args) != 1:
            err("mirror expects: mirror <mode>")
            return None
        return Element(Kind.MIRROR, (args[0][0],), (args[0][0],))

    if kw == "nd":
        if len(args) != 2:
            err("nd expects: nd <mode> <transmission>")
            return None
        t = _number(args[1][0])
        if t is None or not 0.0 < t <= 1.0:
            err(f"nd: transmission must be a number in (0, 1], got {args[1][0]!r}", args[1][1])
            return None
        return Element(Kind.ND, (args[0][0],), (args[0][0],), t)

    if kw == "pbs":
        if len(args) != 3:
            err("pbs expects: pbs <in> <outH> <outV>")
            return None
        return Element(Kind.PBS, (args[0][0],), (args[1][0], args[2][0]))

    if kw == "bs":
        if len(args) != 4:
            err("bs expects: bs <in1|-> <in2|-> <out1> <out2>")
            return None
        for t, c in args:
            if not (_MODE_RE.match(t) or t == "-"):
                err(f"invalid mode name {t!r}", c)
                return None
        if "-" in (args[2][0], args[3][0]):
            err("bs outputs cannot be vacuum", args[2][1])
            return None
        ins = tuple(None if t == "-" else t for t, _ in args[:2])
        return Element(Kind.BS, ins, (args[2][0], args[3][0]))

    # aompair
    if len(args) not in (3, 4):
        err("aompair expects: aompair <modeH> <modeV> <delta_f_Hz> [conjugate]")
        return None
    df = _number(args[2][0])
    if df is None or df < 0:
        err(f"aompair: expected non-negative frequency offset in Hz, got {args[2][0]!r}", args[2][1])
        return None
    conj = False
    if len(args) == 4:
        if args[3][0].lower() != "conjugate":
            err(f"aompair: unexpected token {args[3][0]!r}", args[3][1])
            return None
        conj = True
    modes = (args[0][0], args[1][0])
    return Element(Kind.AOM, modes, modes, df, conj)


def _fmt(x: float) -> str:
    return repr(float(x))


def render(circuit: Circuit) -> str:
    lines = []
    for mode, pol in circuit.sources.items():
        lines.append(f"source {mode} {pol}pol")
    kw_of = {k: kw for kw, k in ANGLE_KEYWORDS.items()}
    for el in circuit.elements:
        if el.kind in kw_of:
            if np.ndim(el.param):
                raise ValueError("cannot render an element whose parameter is an array")
            lines.append(f"{kw_of[el.kind]} {el.inputs[0]} {_fmt(math.degrees(el.param))}")
        elif el.kind is Kind.ND:
            lines.append(f"nd {el.inputs[0]} {_fmt(el.param)}")
        elif el.kind is Kind.MIRROR:
            lines.append(f"mirror {el.inputs[0]}")
        elif el.kind is Kind.PBS:
            lines.append(f"pbs {el.inputs[0]} {el.outputs[0]} {el.outputs[1]}")
        elif el.kind is Kind.BS:
            ins = " ".join("-" if m is None else m for m in el.inputs)
            lines.append(f"bs {ins} {el.outputs[0]} {el.outputs[1]}")
        elif el.kind is Kind.AOM:
            tail = " conjugate" if el.conjugate else ""
            lines.append(f"aompair {el.inputs[0]} {el.inputs[1]} {_fmt(el.param)}{tail}")
    for det_id, mode in circuit.detectors.items():
        lines.append(f"det {mode} {det_id}")
    return "\n".join(lines) + "\n"


def load_circuit(path: str) -> Circuit:
    """``builtin:fig1`` or a path to a circuit file."""
    if path == BUILTIN_FIG1:
        return build_fig1()
    with open(path, encoding="utf-8") as fh:
        return parse_circuit(fh.read())
