import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermotled.materials import (
    ExpansionSpec,
    HyperelasticParams,
    MaterialError,
    PronySeries,
    PropertyTable,
    interp_property,
    pk2_stress,
    prony_update,
    relaxation_function,
    strain_energy,
    thermal_deformation_gradient,
    total_pk2_stress,
)

from conftest import KAPPA, MU, random_spd


def fd_pk2(psi, C, h=1e-6):
    """``2 dPsi/dC`` by symmetric central differences on one tensor."""
    S = np.zeros((3, 3))
    for i in range(3):
        for j in range(i, 3):
            E = np.zeros((3, 3))
            E[i, j] = E[j, i] = h
            d = (psi(C + E) - psi(C - E)) / (2 * h)
            S[i, j] = S[j, i] = 2 * d if i == j else d
    return S


def pk2_fd_error(params, fiber, n=100, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for C in random_spd(rng, n):
        S = pk2_stress(C, params, fiber)
        S_fd = fd_pk2(lambda c: float(strain_energy(c, params, fiber, check=False)), C)
        worst = max(worst, np.abs(S - S_fd).max() / np.abs(S_fd).max())
    return worst


def test_pk2_matches_energy_derivative_isotropic(iso_params):
    assert pk2_fd_error(iso_params, None) < 1e-4


def test_pk2_matches_energy_derivative_fiber(ti_params):
    fiber = np.array([1.0, 2.0, 2.0]) / 3.0
    assert pk2_fd_error(ti_params, fiber) < 1e-4


def test_pure_dilation_energy(iso_params):
    C = 1.21 * np.eye(3)
    assert strain_energy(C, iso_params) == pytest.approx(1065.176364542, rel=1e-9)
    J = 1.331
    np.testing.assert_allclose(pk2_stress(C, iso_params), KAPPA * J * (J - 1) * np.linalg.inv(C), rtol=1e-10)


def test_fiber_stretch_at_unit_jacobian(ti_params):
    lam = 1.2
    F = np.diag([lam, 1 / math.sqrt(lam), 1 / math.sqrt(lam)])
    C = F.T @ F
    a = np.array([1.0, 0.0, 0.0])
    # invariants by brute force
    I1 = np.trace(C)
    I4 = a @ C @ a
    expected = MU / 2 * (I1 - 3) + ti_params.eta_a / 2 * (I4 - 1) ** 2
    assert strain_energy(C, ti_params, a) == pytest.approx(expected, rel=1e-12)
    assert ti_params.eta_a / 2 * (I4 - 1) ** 2 == pytest.approx(MU * (1.44 - 1) ** 2, rel=1e-12)


def test_identity_is_stress_free(iso_params, ti_params):
    np.testing.assert_allclose(pk2_stress(np.eye(3), iso_params), 0.0, atol=1e-12)
    np.testing.assert_allclose(pk2_stress(np.eye(3), ti_params, (0, 0, 1.0)), 0.0, atol=1e-12)


def test_invalid_inputs(iso_params, ti_params):
    with pytest.raises(MaterialError):
        HyperelasticParams(-1.0, 1.0)
    with pytest.raises(MaterialError, match="positive definite"):
        pk2_stress(np.diag([1.0, 1.0, -1.0]), iso_params)
    with pytest.raises(MaterialError, match="fiber"):
        pk2_stress(np.eye(3), ti_params)
    with pytest.raises(MaterialError):
        PronySeries(((0.6, 1.0), (0.5, 2.0)))


def test_thermal_expansion_pullback_is_compressive(iso_params):
    """Heating a constrained element gives compression equal to the energy derivative."""
    Fth = 1.01 * np.eye(3)
    S = total_pk2_stress(np.eye(3), Fth, iso_params)
    assert np.all(np.diag(S) < 0)
    # Psi_total(C) = det(Fth) * Psi(Fth^-T C Fth^-1)
    inv = np.linalg.inv(Fth)

    def psi(C):
        return np.linalg.det(Fth) * float(strain_energy(inv.T @ C @ inv, iso_params, check=False))

    np.testing.assert_allclose(S, fd_pk2(psi, np.eye(3)), rtol=1e-6, atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 80.0), st.floats(-1e-3, 1e-3))
def test_free_thermal_state_is_stress_free(dT, alpha):
    spec = ExpansionSpec("isotropic", (alpha,))
    Fth = thermal_deformation_gradient(37.0 + dT, spec)
    S = total_pk2_stress(Fth, Fth, HyperelasticParams(MU, KAPPA))
    assert np.abs(S).max() < 1e-9 * MU


def test_transversely_isotropic_expansion():
    spec = ExpansionSpec("transversely_isotropic", (0.0, 2e-4))
    Fth = thermal_deformation_gradient(87.0, spec, ((0.0, 0.0, 1.0), None))
    np.testing.assert_allclose(Fth, np.diag([1.0, 1.0, 1.01]), atol=1e-15)
    with pytest.raises(MaterialError, match="axes"):
        thermal_deformation_gradient(87.0, spec)


def test_orthotropic_requires_orthogonal_axes():
    spec = ExpansionSpec("orthotropic", (1e-4, 2e-4, 3e-4))
    with pytest.raises(MaterialError, match="orthogonal"):
        thermal_deformation_gradient(40.0, spec, ((1, 0, 0), (np.sqrt(0.5), np.sqrt(0.5), 0)))
    Fth = thermal_deformation_gradient(47.0, spec, ((1, 0, 0), (0, 1, 0)))
    np.testing.assert_allclose(np.diag(Fth), [1.002, 1.003, 1.001], atol=1e-15)


def test_prony_single_step_and_fixed_point():
    prony = PronySeries(((0.5, 0.58),))
    S = np.diag([1.0, 2.0, 3.0])
    S_t, hist = prony_update(S, np.zeros((1, 3, 3)), 0.58, prony)
    np.testing.assert_allclose(hist[0], 0.25 * S, atol=1e-15)
    np.testing.assert_allclose(S_t, 0.75 * S, atol=1e-15)
    for _ in range(2000):
        S_t, hist = prony_update(S, hist, 0.01, prony)
    np.testing.assert_allclose(S_t, 0.5 * S, rtol=1e-10)


def test_relaxation_function_values():
    prony = PronySeries(((0.5, 0.58),))
    assert relaxation_function(0.0, prony) == pytest.approx(1.0)
    assert relaxation_function(0.58, prony) == pytest.approx(0.683939720585721, rel=1e-12)
    assert relaxation_function(5 * 0.58, prony) == pytest.approx(0.503368973499543, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0.01, 0.3), st.floats(0.01, 10.0)), min_size=1, max_size=3))
def test_relaxation_function_monotone(terms):
    prony = PronySeries(tuple(terms))
    t = np.linspace(0, 50, 200)
    phi = relaxation_function(t, prony)
    assert phi[0] == pytest.approx(1.0)
    assert np.all(np.diff(phi) <= 1e-15)
    assert phi[-1] >= prony.phi_inf - 1e-12


def test_property_table_interpolation():
    table = PropertyTable((37.0, 90.0), (3600.0, 4300.0))
    assert interp_property(table, 63.5) == pytest.approx(3950.0)
    assert interp_property(table, 120.0) == pytest.approx(4300.0)
    assert interp_property(table, 0.0) == pytest.approx(3600.0)
    with pytest.raises(MaterialError):
        PropertyTable((37.0, 30.0), (1.0, 2.0))
    with pytest.raises(MaterialError):
        PropertyTable((37.0,), (-1.0,))


def test_tensor_table_symmetric():
    k = np.diag([0.5, 0.6, 0.7])
    table = PropertyTable((37.0, 90.0), np.stack([k, 2 * k]))
    np.testing.assert_allclose(interp_property(table, 63.5), 1.5 * k)
    bad = k.copy()
    bad[0, 1] = 0.1
    with pytest.raises(MaterialError, match="symmetric"):
        PropertyTable((37.0,), bad[None])
