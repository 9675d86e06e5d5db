import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eraser_sim import analytic as an

angle = st.floats(-7, 7, allow_nan=False)
PHI = np.linspace(0, 2 * math.pi, 361)
Q = math.pi / 4


def I(detector, **kw):
    return an.intensity_first_order(an.EraserParams(**kw), detector)


def test_first_order_examples():
    assert I("D1", phi=math.pi, theta=Q) == pytest.approx(1 / 8)
    assert I("D1Q", phi=math.pi / 2, theta=Q) == pytest.approx(1 / 8)
    assert I("D1", phi=0.3, theta=Q, i0=4.0) == pytest.approx(4 * (1 - math.cos(0.3)) / 16)


@given(angle, angle)
def test_xi_zero_forms_equal_plain_qwp_forms(phi, theta):
    assert I("D1Qξ", phi=phi, theta=theta, xi=0.0) == pytest.approx(I("D1Q", phi=phi, theta=theta), abs=1e-15)
    assert I("D2Qxi", phi=phi, psi=theta, xi=0.0) == pytest.approx(I("D2Q", phi=phi, psi=theta), abs=1e-15)


@given(angle, angle, angle)
def test_complementary_pair_sums_to_eighth(phi, theta, xi):
    total = I("D1Qξ", phi=phi, theta=theta, psi=theta, xi=xi) + I("D2Qξ", phi=phi, theta=theta, psi=theta, xi=xi)
    assert total == pytest.approx(1 / 8, abs=1e-15)


def test_fringe_inversion_between_d1_and_d2():
    d1 = I("D1", phi=PHI)
    d2 = I("D2", phi=PHI)
    assert np.allclose(d1 + d2, 1 / 8)
    assert np.allclose(I("D1", phi=PHI + math.pi), d2)


def test_qwp_fringe_leads_by_quarter_period():
    # I1Q(phi) = I1(phi + pi/2): the QWP fringe is the plain fringe advanced by pi/2
    assert np.allclose(I("D1Q", phi=PHI), I("D1", phi=PHI + math.pi / 2), atol=1e-15)
    assert np.allclose(I("D2Q", phi=PHI), I("D2", phi=PHI + math.pi / 2), atol=1e-15)


@given(angle, angle, angle)
def test_xi_shift_covariance(phi, xi, theta):
    assert I("D1Qξ", phi=phi, xi=xi, theta=theta) == pytest.approx(I("D1Q", phi=phi + 4 * xi, theta=theta), abs=1e-14)


def test_block_b_aliases():
    p = an.EraserParams(0.7, eta=0.2, zeta=1.1)
    assert an.intensity_first_order(p, "D3'") == an.intensity_first_order(p, "D3p") == an.intensity_first_order(p, "D3")
    assert an.intensity_first_order(p, "D4'") == an.intensity_first_order(p, "D4")


def test_errors():
    with pytest.raises(KeyError):
        I("D9")
    with pytest.raises(ValueError):
        an.EraserParams(i0=0.0)
    with pytest.raises(ValueError):
        an.EraserParams(theta=math.inf)


def test_second_order_examples():
    assert an.product_second_order(an.EraserParams(0.0, i0=2.0)) == pytest.approx(4 / 64, rel=1e-12)
    assert an.product_second_order(an.EraserParams(math.pi / 2)) == pytest.approx(0.0, abs=1e-18)
    general = an.product_second_order(an.EraserParams(PHI, 0.0, Q, Q))
    assert np.max(np.abs(general - an.c2_closed_form(PHI))) < 1e-15


def test_fourth_order_examples():
    assert an.product_fourth_order(an.EraserParams(Q, i0=3.0)) == pytest.approx(81 / 1024, rel=1e-12)
    assert an.product_fourth_order(an.EraserParams(0.0)) == pytest.approx(0.0, abs=1e-18)
    p = an.EraserParams(PHI)
    by_factors = 64 * an.product_second_order(p) * I("D3", phi=PHI) * I("D4", phi=PHI)
    assert np.allclose(an.product_fourth_order(p), by_factors, atol=1e-18)
    assert np.allclose(an.product_fourth_order(p), an.c4_closed_form(PHI), atol=1e-18)


def test_photon_normalization():
    assert [an.photon_normalization(n) for n in (1, 2, 4)] == [1.0, 2.0, 4.0]


@given(angle, angle)
def test_heterodyne_closed_form(theta, psi):
    r = an.heterodyne_coincidence(an.EraserParams(0.0, theta=theta, psi=psi))
    assert r == pytest.approx(math.sin(theta - psi) ** 2 / 64, abs=1e-15)


def test_heterodyne_examples_and_phi_independence():
    assert an.heterodyne_coincidence(an.EraserParams(theta=Q, psi=-Q)) == pytest.approx(1 / 64)
    assert an.heterodyne_coincidence(an.EraserParams(theta=0.4, psi=0.4)) == 0
    r = an.heterodyne_coincidence(an.EraserParams(PHI, theta=0.3, psi=1.0))
    assert r.shape == PHI.shape and np.ptp(r) == 0


def test_same_basis_part_completes_the_direct_product():
    # HH + VV weight plus the cross weight gives the full unfiltered product
    p = an.EraserParams(theta=0.3, psi=1.2)
    cross = math.cos(0.3) ** 2 * math.sin(1.2) ** 2 + math.sin(0.3) ** 2 * math.cos(1.2) ** 2
    assert an.same_basis_product(p) + cross / 64 == pytest.approx(1 / 64)
