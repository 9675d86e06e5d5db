"""Closed-form intensities and intensity products for the eraser layout.

These are written independently of the circuit evaluator and serve as its
reference. Intensities are in units of ``i0``; all functions broadcast over
numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

QUARTER = math.pi / 4


@dataclass(frozen=True)
class EraserParams:
    phi: object = 0.0
    xi: float = 0.0
    theta: float = QUARTER
    psi: float = QUARTER
    eta: float = QUARTER
    zeta: float = QUARTER
    i0: float = 1.0

    def __post_init__(self):
        if not self.i0 > 0:
            raise ValueError("i0 must be positive")
        for name in ("xi", "theta", "psi", "eta", "zeta"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} must be finite")


_ALIASES = {"D1Qxi": "D1Qξ", "D2Qxi": "D2Qξ", "D3p": "D3'", "D4p": "D4'"}


def intensity_first_order(p: EraserParams, detector: str):
    """Mean singles intensity at ``detector``.

    ``D1..D4, D3', D4'`` are the plain erasers, ``D1Q, D2Q`` the QWP erasers at
    xi = 0 and ``D1Qξ, D2Qξ`` (or ``D1Qxi``) the QWP erasers at angle ``p.xi``.
    """
    d = _ALIASES.get(detector, detector)
    base = p.i0 / 16.0
    phi = p.phi
    if d == "D1":
        return base * (1 - np.sin(2 * p.theta) * np.cos(phi))
    if d == "D2":
        return base * (1 + np.sin(2 * p.psi) * np.cos(phi))
    if d in ("D3", "D3'"):
        return base * (1 - np.sin(2 * p.eta) * np.cos(phi))
    if d in ("D4", "D4'"):
        return base * (1 + np.sin(2 * p.zeta) * np.cos(phi))
    if d == "D1Q":
        return base * (1 + np.sin(2 * p.theta) * np.sin(phi))
    if d == "D2Q":
        return base * (1 - np.sin(2 * p.psi) * np.sin(phi))
    if d == "D1Qξ":
        return base * (1 + np.sin(2 * p.theta) * np.sin(phi + 4 * p.xi))
    if d == "D2Qξ":
        return base * (1 - np.sin(2 * p.psi) * np.sin(phi + 4 * p.xi))
    raise KeyError(f"unknown detector {detector!r}")


def photon_normalization(order: int) -> float:
    """Per-intensity factor for an N-photon product: field scaled by sqrt(N)."""
    return float(order)


def product_second_order(p: EraserParams):
    """Direct D1Qξ x D2Qξ product with the two-photon normalization.

    Equals ``(i0^2/64) cos^2(phi)`` at xi = 0, theta = psi = pi/4; other angles
    are the plain product and carry no extra claim.
    """
    n = photon_normalization(2)
    return n * intensity_first_order(p, "D1Qξ") * n * intensity_first_order(p, "D2Qξ")


def product_fourth_order(p: EraserParams):
    """D1Qξ x D2Qξ x D3 x D4 with the four-photon normalization."""
    n = photon_normalization(4)
    out = n ** 4
    for d in ("D1Qξ", "D2Qξ", "D3", "D4"):
        out = out * intensity_first_order(p, d)
    return out


def c2_closed_form(phi, i0: float = 1.0):
    return i0 ** 2 / 64.0 * np.cos(phi) ** 2


def c4_closed_form(phi, i0: float = 1.0):
    return i0 ** 4 / 256.0 * np.sin(phi) ** 2 * np.cos(phi) ** 2


def heterodyne_coincidence(p: EraserParams):
    """Cross-basis (H x V) coincidence after DC-cut selection; independent of phi."""
    value = p.i0 ** 2 / 64.0 * np.sin(p.theta - p.psi) ** 2
    return value + 0.0 * np.asarray(p.phi, dtype=float) if np.ndim(p.phi) else value


def direct_product(p: EraserParams):
    """Unselected product of the two QWP erasers: phi-dependent classical curve."""
    return product_second_order(p)


def same_basis_product(p: EraserParams):
    """HH + VV part of the two-photon product that the DC-cut filter removes."""
    c = p.i0 ** 2 / 64.0
    return c * (np.cos(p.theta) ** 2 * np.cos(p.psi) ** 2 + np.sin(p.theta) ** 2 * np.sin(p.psi) ** 2)
