"""Polarization-field algebra: tagged amplitudes, per-mode states, intensities.

A mode holds two components ``h`` and ``v``. Before any polarizer they are the
ordinary Jones components. After a polarizer with axis ``alpha`` the mode is
*projected*: the physical field points along ``alpha`` and ``h``/``v`` keep the
contributions that originated in the horizontal and vertical bases, each with
its own frequency tag. Components with different tags never interfere in a
time-averaged intensity.

Amplitudes are Python complex numbers or numpy complex arrays; arrays broadcast,
so a whole phase grid can be carried through a circuit in one pass.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Union

import numpy as np

Amp = Union[complex, np.ndarray]

# 632.8 nm HeNe carrier; only used to label tags.
DEFAULT_F0 = 299_792_458.0 / 632.8e-9


class FreqLabel(enum.Enum):
    UNSHIFTED = 0
    F_MINUS = 1
    F_PLUS = 2


@dataclass(frozen=True)
class FrequencyTag:
    label: FreqLabel = FreqLabel.UNSHIFTED
    f0: float = DEFAULT_F0
    delta_f: float = 0.0

    def __post_init__(self):
        if self.delta_f < 0:
            raise ValueError("delta_f must be >= 0")

    @property
    def frequency(self) -> float:
        if self.label is FreqLabel.F_MINUS:
            return self.f0 - self.delta_f
        if self.label is FreqLabel.F_PLUS:
            return self.f0 + self.delta_f
        return self.f0


UNSHIFTED = FrequencyTag()


@dataclass(frozen=True)
class PolComponent:
    amp: Amp = 0j
    tag: FrequencyTag = UNSHIFTED

    def scaled(self, factor) -> "PolComponent":
        return PolComponent(self.amp * factor, self.tag)

    def is_vacuum(self) -> bool:
        return bool(np.all(np.asarray(self.amp) == 0))


@dataclass(frozen=True)
class ModeField:
    """One spatial mode. ``axis`` is None for an unprojected Jones pair."""

    h: PolComponent = field(default_factory=PolComponent)
    v: PolComponent = field(default_factory=PolComponent)
    axis: Optional[float] = None

    @property
    def coherent(self) -> bool:
        return self.h.tag == self.v.tag

    def power(self):
        """Time-averaged |field|^2 (without the e0 scale)."""
        if self.axis is not None and self.coherent:
            return np.abs(self.h.amp + self.v.amp) ** 2
        return np.abs(self.h.amp) ** 2 + np.abs(self.v.amp) ** 2

    def jones(self) -> tuple:
        """Physical (Ex, Ey) of a single-frequency mode."""
        if self.axis is None:
            return self.h.amp, self.v.amp
        if not self.coherent:
            raise ValueError("projected mode carries two frequencies; no single Jones vector")
        a = self.h.amp + self.v.amp
        return a * math.cos(self.axis), a * math.sin(self.axis)

    def unprojected(self) -> "ModeField":
        if self.axis is None:
            return self
        h, v = self.jones()
        return ModeField(PolComponent(h, self.h.tag), PolComponent(v, self.h.tag))

    def scaled(self, factor) -> "ModeField":
        return ModeField(self.h.scaled(factor), self.v.scaled(factor), self.axis)


VACUUM = ModeField()


@dataclass(frozen=True)
class FieldState:
    modes: Mapping[str, ModeField]
    e0: float = 1.0

    def __getitem__(self, mode: str) -> ModeField:
        try:
            return self.modes[mode]
        except KeyError:
            raise KeyError(f"unknown mode {mode!r}") from None

    def __contains__(self, mode: str) -> bool:
        return mode in self.modes

    def with_modes(self, updates: Mapping[str, ModeField], drop=()) -> "FieldState":
        modes = {k: m for k, m in self.modes.items() if k not in drop}
        modes.update(updates)
        return replace(self, modes=modes)

    def total_intensity(self):
        return sum((intensity(self, m) for m in self.modes), 0.0)

    def only(self, mode: str) -> "FieldState":
        return FieldState({mode: self[mode]}, self.e0)


def jones_state(mode: str, h: Amp, v: Amp, e0: float = 1.0) -> FieldState:
    return FieldState({mode: ModeField(PolComponent(h), PolComponent(v))}, e0)


def intensity(state: FieldState, mode: str):
    return state.e0 ** 2 * state[mode].power()


def add_phase(state: FieldState, mode: str, phi) -> FieldState:
    return state.with_modes({mode: state[mode].scaled(phase_factor(phi))})


def phase_factor(phi):
    """e^{i phi}; a plain complex for scalar phi."""
    if np.ndim(phi):
        return np.exp(1j * np.asarray(phi, dtype=float))
    return complex(math.cos(phi), math.sin(phi))


def _single_mode(state: FieldState) -> ModeField:
    if len(state.modes) != 1:
        raise ValueError("expected a state reduced to one detector mode")
    return next(iter(state.modes.values()))


def inner_product_cross(s1: FieldState, s2: FieldState) -> Amp:
    """h1*v2 + v1*h2: the two orthogonal-polarization product pathways.

    Amplitudes are taken without the e0 scale.
    """
    m1, m2 = _single_mode(s1), _single_mode(s2)
    return m1.h.amp * m2.v.amp + m1.v.amp * m2.h.amp
