import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from objpert import accounting as A, dp_core as D, plrv as PL
from objpert.accounting import MechanismParams
from objpert.errors import DomainError

SETTING = MechanismParams(sigma=8.0, lam=10.0, beta=1.0, grad_bound=1.0)


def test_zero_sensitivity_is_point_mass():
    g = PL.build_objpert_plrv(MechanismParams(5.0, 20.0, 1.0, 0.0))
    assert g.masses.size == 1 and g.tail_mass == 0
    assert g.origin == pytest.approx(-math.log(1 - 1 / 20))


def test_mass_conservation_and_mean():
    g = PL.build_objpert_plrv(SETTING)
    assert g.total_mass == pytest.approx(1.0, abs=1e-12)
    assert np.all(g.masses >= 0)
    s = 1 / 8
    exact = A.leading_term(SETTING) + 0.5 * s**2 + s * math.sqrt(2 / math.pi)
    # right-endpoint rounding raises the mean by at most one cell
    assert exact <= g.mean() <= exact + g.spacing


def test_gaussian_grid():
    g = PL.build_gaussian_plrv(1.0, 2.0, 1e-3)
    assert g.total_mass == pytest.approx(1.0, abs=1e-12)
    assert g.mean() == pytest.approx(1 / 8, abs=2e-3)
    eps = np.linspace(-0.5, 3, 36)
    diff = PL.delta_from_plrv(g, eps) - D.gaussian_hs_delta(1.0, 2.0, eps)
    assert np.all(diff >= -1e-12)
    assert np.all(diff <= PL.tolerance(g) + 1e-12)
    z = PL.build_gaussian_plrv(0.0, 1.0, 1e-3)
    assert z.masses.size == 1 and z.origin == 0.0


def test_self_compose_gaussian_is_sqrt2_sensitivity():
    g = PL.build_gaussian_plrv(1.0, 2.0, 1e-3)
    two = PL.self_compose(g, 2)
    eps = np.linspace(0, 3, 31)
    diff = PL.delta_from_plrv(two, eps) - D.gaussian_hs_delta(math.sqrt(2), 2.0, eps)
    assert np.all(diff >= -1e-12)
    assert np.all(diff <= 2 * PL.tolerance(g))


def test_compose_identity_and_errors():
    g = PL.build_objpert_plrv(SETTING)
    same = PL.compose_plrv([g, PL.point_mass(0.0, g.spacing)])
    assert same.origin == g.origin
    np.testing.assert_allclose(same.masses, g.masses, rtol=0, atol=0)
    with pytest.raises(DomainError):
        PL.compose_plrv([g, PL.point_mass(0.0, 2 * g.spacing)])
    with pytest.raises(DomainError):
        PL.compose_plrv([])
    with pytest.raises(DomainError):
        PL.self_compose(g, 0)


def test_means_add():
    g = PL.build_objpert_plrv(SETTING)
    for k in (2, 3, 5):
        gk = PL.self_compose(g, k)
        assert gk.mean() == pytest.approx(k * g.mean(), abs=1e-9 * k)


def test_fft_and_direct_agree():
    g = PL.build_objpert_plrv(SETTING)
    a = PL.self_compose(g, 4, "direct")
    b = PL.self_compose(g, 4, "fft")
    assert np.max(np.abs(a.masses - b.masses)) < 1e-13
    eps = np.linspace(0, 4, 41)
    assert np.max(np.abs(PL.delta_from_plrv(a, eps) - PL.delta_from_plrv(b, eps))) < 1e-12


def test_point_mass_delta():
    g = PL.point_mass(0.7, 1e-3)
    for e in (-1.0, 0.0, 0.5, 0.7, 2.0):
        assert PL.delta_from_plrv(g, e) == pytest.approx(max(0.0, 1 - math.exp(e - 0.7)))


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 20.0), st.floats(1.5, 50.0), st.floats(0.1, 2.0))
def test_delta_nonincreasing_and_k1_consistency(sigma, lam, L):
    p = MechanismParams(sigma, lam, 1.0, L)
    g = PL.build_objpert_plrv(p, spacing=1e-3)
    eps = np.linspace(0, 4, 41)
    d = PL.delta_from_plrv(g, eps)
    assert np.all(np.diff(d) <= 1e-15)
    gap = d - A.objpert_hs_delta(p, eps)
    assert np.all(gap >= -1e-12)
    assert np.all(gap <= PL.tolerance(g) + 1e-9)


def test_refinement_is_conservative():
    eps = np.linspace(0, 4, 41)
    coarse = PL.build_objpert_plrv(SETTING, spacing=2e-3, right_edge=A.leading_term(SETTING) + 1.0)
    fine = PL.build_objpert_plrv(SETTING, spacing=1e-3, right_edge=A.leading_term(SETTING) + 2.0)
    dc, df = PL.delta_from_plrv(coarse, eps), PL.delta_from_plrv(fine, eps)
    assert np.all(df >= dc - PL.tolerance(coarse))
    assert np.all(df <= dc + 1e-15)


def test_amp_plrv_adds_output_term():
    p = MechanismParams(5.0, 20.0, 1.0, 1.0, tau=0.01, sigma_out=0.01)
    base = PL.delta_from_plrv(PL.build_objpert_plrv(p), 1.0)
    amp = PL.delta_from_plrv(PL.build_amp_plrv(p), 1.0)
    assert amp > base
    with pytest.raises(DomainError):
        PL.build_amp_plrv(MechanismParams(5.0, 20.0, 1.0, 1.0, tau=0.01))


def test_grid_validation():
    with pytest.raises(DomainError):
        PL.PlrvGrid(0.0, 0.0, np.ones(1))
    with pytest.raises(DomainError):
        PL.build_objpert_plrv(SETTING, right_edge=0.0)
    with pytest.raises(DomainError):
        PL.build_gaussian_plrv(1.0, 0.0, 1e-3)
