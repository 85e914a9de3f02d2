"""Acceleration assembly for the soil momentum equation.

The effective-stress divergence and the pore-water pressure gradient are
discretised separately. The pore-water term has two variants:

* ``conventional``: ``sum_b m_b/(rho_a rho_b) (p_b + p_a) gradW_ab``. On a
  truncated (free-surface) neighbourhood the ``2 p_a sum gradW`` part does not
  vanish and pushes surface particles out of a submerged body.
* ``corrected``: ``sum_b m_b/(rho_a rho_b) (p_b - p_a) gradW_ab``, which is
  zero term by term for a uniform pressure field.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from sphsoil.constitutive import GRAVITY, MaterialParams, sound_speed
from sphsoil.errors import InvalidArgumentError, SimulationDivergedError
from sphsoil.kernel import CubicSplineKernel
from sphsoil.particles import Kind

log = logging.getLogger(__name__)

#: Range of the damping coefficient found effective for initial-stress generation.
XI_RECOMMENDED = (0.001, 0.005)
XI_MAX = 0.01


class StressForm(str, enum.Enum):
    RHO2 = "rho2"
    RHOAB = "rhoab"


class PoreWaterForm(str, enum.Enum):
    CONVENTIONAL = "conventional"
    CORRECTED = "corrected"


@dataclass(frozen=True)
class FormulationSwitch:
    stress_form: StressForm = StressForm.RHOAB
    pwater_form: PoreWaterForm = PoreWaterForm.CORRECTED
    kernel_correction: bool = True
    damping_on: bool = True

    def __post_init__(self):
        object.__setattr__(self, "stress_form", StressForm(self.stress_form))
        object.__setattr__(self, "pwater_form", PoreWaterForm(self.pwater_form))


@dataclass(frozen=True)
class StabilizationParams:
    """Artificial viscosity and artificial stress coefficients.

    ``spacing`` is the initial particle spacing, the reference distance of
    the artificial-stress weighting ``(W_ab / W(spacing))**n_as``.
    """

    alpha_visc: float = 0.1
    beta_visc: float = 0.1
    viscosity: bool = True
    eps_as: float = 0.3
    n_as: float = 2.55
    artificial_stress: bool = False
    spacing: float | None = None

    def __post_init__(self):
        for name in ("alpha_visc", "beta_visc", "eps_as", "n_as"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")

    def to_dict(self):
        d = asdict(self)
        d.pop("spacing")
        return d


@dataclass(frozen=True)
class DampingParams:
    xi: float = 0.002
    active_phase: bool = True

    def __post_init__(self):
        if not (0.0 <= self.xi <= XI_MAX):
            raise InvalidArgumentError(f"damping coefficient must lie in [0, {XI_MAX}], got {self.xi}")
        lo, hi = XI_RECOMMENDED
        if self.xi != 0.0 and not (lo <= self.xi <= hi):
            warnings.warn(f"xi={self.xi} is outside recommended range {lo}-{hi}", stacklevel=3)


def _pair_sum(n, i, weights, grad):
    return np.stack(
        [np.bincount(i, weights=weights * grad[:, k], minlength=n) for k in range(2)], axis=1
    )


def _pair_tensor_sum(n, i, tensors, grad):
    contrib = np.einsum("pkl,pl->pk", tensors, grad)
    return np.stack([np.bincount(i, weights=contrib[:, k], minlength=n) for k in range(2)], axis=1)


def stress_pair_terms(particles, table, stress_form=StressForm.RHOAB):
    """Per-pair ``(sigma_a + sigma_b)/(rho_a rho_b)`` or ``sigma_a/rho_a^2 + sigma_b/rho_b^2``."""
    i, j = table.i, table.j
    s, rho = particles.sigma, particles.rho
    if StressForm(stress_form) is StressForm.RHOAB:
        return (s[i] + s[j]) / (rho[i] * rho[j])[:, None, None]
    return s[i] / (rho[i] ** 2)[:, None, None] + s[j] / (rho[j] ** 2)[:, None, None]


def accel_effective_stress(particles, table, grad, stress_form=StressForm.RHOAB, stabilization=None):
    """Effective-stress divergence ``sum_b m_b (S_ab + C_ab) . gradW_ab``.

    ``stabilization`` is the optional per-pair tensor ``C_ab``.
    """
    terms = stress_pair_terms(particles, table, stress_form)
    if stabilization is not None:
        terms = terms + stabilization
    terms = terms * particles.m[table.j][:, None, None]
    return _pair_tensor_sum(table.n, table.i, terms, grad)


def accel_porewater_conventional(particles, table, grad):
    i, j = table.i, table.j
    rho, p = particles.rho, particles.pw
    w = particles.m[j] / (rho[i] * rho[j]) * (p[j] + p[i])
    return _pair_sum(table.n, i, w, grad)


def accel_porewater_corrected(particles, table, grad):
    i, j = table.i, table.j
    rho, p = particles.rho, particles.pw
    w = particles.m[j] / (rho[i] * rho[j]) * (p[j] - p[i])
    return _pair_sum(table.n, i, w, grad)


def artificial_viscosity(particles, table, material: MaterialParams, h, alpha, beta):
    """Monaghan viscosity ``Pi_ab`` per pair; zero for separating pairs."""
    i, j = table.i, table.j
    v_ab = particles.v[i] - particles.v[j]
    vr = np.einsum("pk,pk->p", v_ab, table.r_ab)
    mu = h * vr / (table.dist**2 + 0.01 * h * h)
    c = sound_speed(material.G, particles.rho)
    c_bar = 0.5 * (c[i] + c[j])
    rho_bar = 0.5 * (particles.rho[i] + particles.rho[j])
    pi = (-alpha * c_bar * mu + beta * mu * mu) / rho_bar
    return np.where(vr < 0.0, pi, 0.0)


def artificial_stress_tensors(particles, eps):
    """Per-particle ``R_a``: ``-eps sigma_i / rho^2`` on tensile principal directions."""
    vals, vecs = np.linalg.eigh(particles.sigma)
    r = np.where(vals > 0.0, -eps * vals / (particles.rho**2)[:, None], 0.0)
    return np.einsum("nik,nk,njk->nij", vecs, r, vecs)


def stabilization_term(particles, table, material, kernel: CubicSplineKernel, params: StabilizationParams):
    """Per-pair tensor ``C_ab = -Pi_ab I + f_ab^n (R_a + R_b)``; ``None`` when all parts are off."""
    out = None
    if params.viscosity and (params.alpha_visc > 0 or params.beta_visc > 0):
        pi = artificial_viscosity(particles, table, material, kernel.h, params.alpha_visc, params.beta_visc)
        out = -pi[:, None, None] * np.eye(2)
    if params.artificial_stress and params.eps_as > 0:
        if params.spacing is None:
            raise InvalidArgumentError("artificial stress needs the particle spacing")
        r = artificial_stress_tensors(particles, params.eps_as)
        f = (table.w / kernel.w(params.spacing)) ** params.n_as
        term = f[:, None, None] * (r[table.i] + r[table.j])
        out = term if out is None else out + term
    return out


def damping_force(v, xi, dt):
    """Damping acceleration ``-(xi/dt) v``."""
    if dt <= 0:
        raise InvalidArgumentError("dt must be > 0")
    return -(xi / dt) * np.asarray(v, dtype=float)


def total_acceleration(
    particles,
    table,
    grad,
    material: MaterialParams,
    kernel: CubicSplineKernel,
    switches: FormulationSwitch = FormulationSwitch(),
    stabilization: StabilizationParams | None = None,
    damping: DampingParams | None = None,
    dt: float | None = None,
    gravity=(0.0, -GRAVITY),
    step=None,
):
    """Acceleration of every soil particle; boundary particles get zero.

    Damping is applied when ``switches.damping_on`` and ``damping`` is
    active, using the current ``dt``.
    """
    c_ab = None
    if stabilization is not None:
        c_ab = stabilization_term(particles, table, material, kernel, stabilization)
    acc = accel_effective_stress(particles, table, grad, switches.stress_form, c_ab)
    if switches.pwater_form is PoreWaterForm.CORRECTED:
        acc += accel_porewater_corrected(particles, table, grad)
    else:
        acc += accel_porewater_conventional(particles, table, grad)
    acc += np.asarray(gravity, dtype=float)
    if switches.damping_on and damping is not None and damping.active_phase and damping.xi > 0:
        acc += damping_force(particles.v, damping.xi, dt)
    acc[particles.kind != Kind.SOIL] = 0.0
    bad = ~np.isfinite(acc).all(axis=1)
    if bad.any():
        raise SimulationDivergedError(
            "non-finite acceleration", step=step, particle=int(np.flatnonzero(bad)[0]), field="acceleration"
        )
    return acc
