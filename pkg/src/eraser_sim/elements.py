"""Transfer actions of the optical components.

Conventions (chosen so the canonical circuit reproduces the closed forms):

* BS: ``out1 = (in1 + i in2)/sqrt2``, ``out2 = (i in1 + in2)/sqrt2`` per component.
* PBS: H transmitted unchanged, V reflected with a ``-i`` phase.
* QWP(xi): ``h -> h e^{-2i xi}``, ``v -> i v e^{2i xi}`` (slow axis horizontal).
* HWP(a): ``(h, v) -> (h cos2a + v sin2a, h sin2a - v cos2a)``.
* Polarizer(alpha): projects onto ``(cos alpha, sin alpha)`` keeping the
  H- and V-origin contributions separate (see :mod:`core_optics`).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core_optics import (
    VACUUM,
    FieldState,
    FreqLabel,
    FrequencyTag,
    ModeField,
    PolComponent,
    add_phase,
    phase_factor,
)

TWO_PI = 2.0 * math.pi
SQRT_HALF = math.sqrt(0.5)


class Kind(enum.Enum):
    PBS = "pbs"
    BS = "bs"
    MIRROR = "mirror"
    HWP = "hwp"
    QWP = "qwp"
    PZT = "pzt"
    AOM = "aompair"
    POLARIZER = "pol"
    ND = "nd"


ANGLE_KINDS = {Kind.HWP, Kind.QWP, Kind.PZT, Kind.POLARIZER}
TWO_OUTPUT_KINDS = {Kind.PBS, Kind.BS}


@dataclass(frozen=True)
class Element:
    """One component. Single-mode kinds act in place (inputs == outputs).

    ``param`` is an angle in radians for waveplates/PZT/polarizer, the
    intensity transmission for ND and the frequency offset in Hz for the AOM
    pair. ``inputs`` may contain None for a vacuum BS port.
    """

    kind: Kind
    inputs: Tuple[Optional[str], ...]
    outputs: Tuple[str, ...]
    param: object = None
    conjugate: bool = False

    def __post_init__(self):
        if self.kind in TWO_OUTPUT_KINDS and len(self.outputs) != 2:
            raise ValueError(f"{self.kind.value} needs exactly 2 output modes")
        if self.kind in ANGLE_KINDS:
            object.__setattr__(self, "param", np.mod(self.param, TWO_PI) if np.ndim(self.param) else float(self.param) % TWO_PI)
        if self.kind is Kind.ND and not 0.0 < self.param <= 1.0:
            raise ValueError("ND transmission must lie in (0, 1]")
        if self.kind is Kind.AOM and self.param < 0:
            raise ValueError("AOM frequency offset must be >= 0")

    def apply(self, state: FieldState) -> FieldState:
        k = self.kind
        if k is Kind.BS:
            return apply_bs(state, *self.inputs, *self.outputs)
        if k is Kind.PBS:
            return apply_pbs(state, self.inputs[0], *self.outputs)
        if k is Kind.AOM:
            return apply_aom_pair(state, *self.inputs, delta_f=self.param, conjugate=self.conjugate)
        mode = self.inputs[0]
        if k is Kind.HWP:
            return apply_hwp(state, mode, self.param)
        if k is Kind.QWP:
            return apply_qwp(state, mode, self.param)
        if k is Kind.PZT:
            return add_phase(state, mode, self.param)
        if k is Kind.POLARIZER:
            return apply_polarizer(state, mode, self.param)
        if k is Kind.ND:
            return apply_nd(state, mode, self.param)
        return state  # mirror: global phase only


def _combine(a: PolComponent, b: PolComponent, fa, fb) -> PolComponent:
    if b.is_vacuum() or a.tag == b.tag:
        tag = a.tag
    elif a.is_vacuum():
        tag = b.tag
    else:
        raise ValueError("cannot superpose components with different frequency tags in one basis slot")
    return PolComponent(a.amp * fa + b.amp * fb, tag)


def _is_vacuum(m: ModeField) -> bool:
    return m.h.is_vacuum() and m.v.is_vacuum()


def _common_frame(a: ModeField, b: ModeField) -> Tuple[ModeField, ModeField, Optional[float]]:
    if _is_vacuum(b):
        return a, b, a.axis
    if _is_vacuum(a):
        return a, b, b.axis
    if a.axis == b.axis:
        return a, b, a.axis
    return a.unprojected(), b.unprojected(), None


def apply_bs(state: FieldState, in1: Optional[str], in2: Optional[str], out1: str, out2: str) -> FieldState:
    consumed = {m for m in (in1, in2) if m is not None}
    for out in (out1, out2):
        if out in state and out not in consumed:
            raise ValueError(f"BS output {out!r} collides with an existing mode")
    a = state[in1] if in1 is not None else VACUUM
    b = state[in2] if in2 is not None else VACUUM
    a, b, axis = _common_frame(a, b)
    i = 1j * SQRT_HALF
    m1 = ModeField(_combine(a.h, b.h, SQRT_HALF, i), _combine(a.v, b.v, SQRT_HALF, i), axis)
    m2 = ModeField(_combine(b.h, a.h, SQRT_HALF, i), _combine(b.v, a.v, SQRT_HALF, i), axis)
    return state.with_modes({out1: m1, out2: m2}, drop=consumed)


def apply_pbs(state: FieldState, mode: str, out_h: str, out_v: str) -> FieldState:
    for out in (out_h, out_v):
        if out in state and out != mode:
            raise ValueError(f"PBS output {out!r} collides with an existing mode")
    m = state[mode].unprojected()
    transmitted = ModeField(m.h, PolComponent(0j * m.v.amp, m.v.tag))
    reflected = ModeField(PolComponent(0j * m.h.amp, m.h.tag), m.v.scaled(-1j))
    return state.with_modes({out_h: transmitted, out_v: reflected}, drop={mode})


def apply_qwp(state: FieldState, mode: str, xi) -> FieldState:
    m = state[mode].unprojected()
    out = ModeField(m.h.scaled(phase_factor(-2.0 * xi)), m.v.scaled(1j * phase_factor(2.0 * xi)))
    return state.with_modes({mode: out})


def apply_hwp(state: FieldState, mode: str, angle) -> FieldState:
    m = state[mode].unprojected()
    c, s = np.cos(2.0 * angle), np.sin(2.0 * angle)
    h = _combine(m.h, m.v, c, s)
    v = _combine(m.h, m.v, s, -c)
    return state.with_modes({mode: ModeField(h, v)})


def apply_polarizer(state: FieldState, mode: str, alpha) -> FieldState:
    m = state[mode]
    if m.axis is None:
        out = ModeField(m.h.scaled(np.cos(alpha)), m.v.scaled(np.sin(alpha)), float(alpha))
    else:
        out = m.scaled(np.cos(alpha - m.axis))
        out = ModeField(out.h, out.v, float(alpha))
    return state.with_modes({mode: out})


def apply_nd(state: FieldState, mode: str, transmission: float) -> FieldState:
    return state.with_modes({mode: state[mode].scaled(math.sqrt(transmission))})


def _retag(m: ModeField, label: FreqLabel, delta_f: float) -> ModeField:
    def one(c: PolComponent) -> PolComponent:
        return PolComponent(c.amp, FrequencyTag(label, c.tag.f0, delta_f))

    return ModeField(one(m.h), one(m.v), m.axis)


def apply_aom_pair(state: FieldState, mode_h: str, mode_v: str, delta_f: float = 0.0, conjugate: bool = False) -> FieldState:
    """Shift the H arm to f0 - delta_f and the V arm to f0 + delta_f (swapped if ``conjugate``)."""
    lo, hi = FreqLabel.F_MINUS, FreqLabel.F_PLUS
    if conjugate:
        lo, hi = hi, lo
    return state.with_modes({
        mode_h: _retag(state[mode_h], lo, delta_f),
        mode_v: _retag(state[mode_v], hi, delta_f),
    })
