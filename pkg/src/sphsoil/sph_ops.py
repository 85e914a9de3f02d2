"""SPH gradient approximations and velocity-gradient kinematics."""

from __future__ import annotations

import enum

import numpy as np

from sphsoil.kernel import correction_matrices


class GradientForm(str, enum.Enum):
    BASIC = "basic"
    DIFFERENCE = "difference"
    SYMMETRIC_RHO2 = "symmetric_rho2"
    SYMMETRIC_RHOAB = "symmetric_rhoab"


def correction_for(particles, table):
    """Correction matrices and degenerate mask for every particle in ``table``."""
    return correction_matrices(table.n, table.i, table.r_ab, table.grad, particles.volume[table.j])


def apply_correction(table, L):
    """Corrected per-pair gradients ``L_a gradW_ab``."""
    return np.einsum("pkl,pl->pk", L[table.i], table.grad)


def pair_gradients(particles, table, corrected=True):
    if not corrected:
        return table.grad
    L, _ = correction_for(particles, table)
    return apply_correction(table, L)


def _sum_vec(n, i, weights, grad):
    return np.stack(
        [np.bincount(i, weights=weights * grad[:, k], minlength=n) for k in range(2)], axis=1
    )


def sph_gradient(values, particles, table, form=GradientForm.DIFFERENCE, corrected=True, grad=None):
    """Gradient of a scalar particle field at every particle.

    ``grad`` may carry precomputed per-pair gradients; otherwise they are
    built from ``table`` and corrected when ``corrected`` is set.
    """
    form = GradientForm(form)
    if grad is None:
        grad = pair_gradients(particles, table, corrected)
    a = np.asarray(values, dtype=float)
    i, j = table.i, table.j
    m, rho = particles.m, particles.rho
    if form is GradientForm.BASIC:
        w = m[j] / rho[j] * a[j]
    elif form is GradientForm.DIFFERENCE:
        w = m[j] / rho[j] * (a[j] - a[i])
    elif form is GradientForm.SYMMETRIC_RHO2:
        w = rho[i] * m[j] * (a[i] / rho[i] ** 2 + a[j] / rho[j] ** 2)
    else:
        w = m[j] * (a[i] + a[j]) / rho[j]
    return _sum_vec(table.n, i, w, grad)


def velocity_gradient(particles, table, grad):
    """``L_a[alpha, beta] = sum_b V_b (v_b - v_a)[alpha] gradW_ab[beta]``."""
    i, j = table.i, table.j
    vol = particles.volume[j]
    dv = particles.v[j] - particles.v[i]
    out = np.empty((table.n, 2, 2))
    for p in range(2):
        for q in range(2):
            out[:, p, q] = np.bincount(i, weights=vol * dv[:, p] * grad[:, q], minlength=table.n)
    return out


def strain_rate(particles, table, grad=None, vel_grad=None):
    """Symmetric strain-rate tensor per particle (1/s). Out-of-plane rate is zero."""
    if vel_grad is None:
        vel_grad = velocity_gradient(particles, table, pair_gradients(particles, table) if grad is None else grad)
    return 0.5 * (vel_grad + np.swapaxes(vel_grad, 1, 2))


def spin_rate(particles, table, grad=None, vel_grad=None):
    """Antisymmetric spin-rate tensor per particle (1/s)."""
    if vel_grad is None:
        vel_grad = velocity_gradient(particles, table, pair_gradients(particles, table) if grad is None else grad)
    return 0.5 * (vel_grad - np.swapaxes(vel_grad, 1, 2))
