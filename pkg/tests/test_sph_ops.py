import numpy as np
import pytest

from sphsoil.particles import build_neighbors
from sphsoil.sph_ops import GradientForm, pair_gradients, sph_gradient, spin_rate, strain_rate, velocity_gradient

from conftest import lattice


def test_corrected_difference_gradient_is_exact_for_linear_fields():
    p = lattice(50, 20)
    t = build_neighbors(p, 0.24)
    f = 1.5 + 3.0 * p.x[:, 0] - 7.0 * p.x[:, 1]
    g = sph_gradient(f, p, t, GradientForm.DIFFERENCE, corrected=True)
    np.testing.assert_allclose(g, np.broadcast_to([3.0, -7.0], g.shape), rtol=1e-10)


def test_uncorrected_gradient_is_wrong_at_edges():
    p = lattice(20, 20)
    t = build_neighbors(p, 0.24)
    f = 2.0 * p.x[:, 0]
    g = sph_gradient(f, p, t, GradientForm.DIFFERENCE, corrected=False)
    assert np.max(np.abs(g[:, 0] - 2.0)) > 0.1


def test_forms_agree_in_the_interior_for_uniform_density():
    p = lattice(30, 30)
    t = build_neighbors(p, 0.24)
    f = 4.0 - 2.0 * p.x[:, 1]
    interior = np.all((p.x > 0.6) & (p.x < 5.4), axis=1)
    ref = sph_gradient(f, p, t, GradientForm.DIFFERENCE)[interior]
    for form in GradientForm:
        g = sph_gradient(f, p, t, form)[interior]
        np.testing.assert_allclose(g, ref, atol=1e-9 * np.abs(f).max())


def test_symmetric_rho2_matches_formula():
    p = lattice(6, 6)
    p.rho *= 1.0 + 0.01 * np.arange(len(p))
    t = build_neighbors(p, 0.24)
    grad = pair_gradients(p, t)
    f = np.sin(p.x[:, 0])
    g = sph_gradient(f, p, t, GradientForm.SYMMETRIC_RHO2, grad=grad)
    a = 7
    ref = np.zeros(2)
    for q in np.flatnonzero(t.i == a):
        b = t.j[q]
        ref += p.rho[a] * p.m[b] * (f[a] / p.rho[a] ** 2 + f[b] / p.rho[b] ** 2) * grad[q]
    np.testing.assert_allclose(g[a], ref, rtol=1e-12)


def test_strain_and_spin_of_linear_velocity_fields():
    p = lattice(15, 15)
    t = build_neighbors(p, 0.24)
    A = np.array([[0.3, -0.1], [0.5, 0.2]])
    p.v[:] = p.x @ A.T
    lg = velocity_gradient(p, t, pair_gradients(p, t))
    np.testing.assert_allclose(lg, np.broadcast_to(A, lg.shape), rtol=1e-10, atol=1e-12)
    eps = strain_rate(p, t)
    spin = spin_rate(p, t)
    np.testing.assert_allclose(eps[0], 0.5 * (A + A.T), atol=1e-12)
    np.testing.assert_allclose(spin[0], 0.5 * (A - A.T), atol=1e-12)


def test_rigid_rotation_has_zero_strain_rate():
    p = lattice(10, 10)
    t = build_neighbors(p, 0.24)
    w = 0.7
    p.v[:] = w * np.stack([-p.x[:, 1], p.x[:, 0]], axis=1)
    eps = strain_rate(p, t)
    assert np.max(np.abs(eps)) < 1e-12
    np.testing.assert_allclose(spin_rate(p, t)[:, 1, 0], w, rtol=1e-10)


def test_unknown_form_rejected():
    p = lattice(3, 3)
    t = build_neighbors(p, 0.24)
    with pytest.raises(ValueError):
        sph_gradient(np.zeros(len(p)), p, t, "upwind")
