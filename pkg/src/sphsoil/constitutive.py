"""Linear-elastic plane-strain stress update with the Jaumann rate."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from sphsoil.errors import InvalidArgumentError

GRAVITY = 9.81


@dataclass(frozen=True)
class MaterialParams:
    """Elastic soil parameters.

    Unit weights are in N/m^3, moduli in Pa. ``phi`` is the friction angle
    in degrees and is only used for K0 initialisation.
    """

    E: float
    nu: float
    gamma_sat: float = 20e3
    gamma_unsat: float = 18.6e3
    gamma_w: float = 9.81e3
    phi: float = 30.0

    def __post_init__(self):
        if not (math.isfinite(self.E) and self.E > 0):
            raise InvalidArgumentError(f"Young's modulus must be > 0, got {self.E}")
        if not (-1.0 < self.nu < 0.5):
            raise InvalidArgumentError(f"Poisson ratio singular or out of range: {self.nu}")
        for name in ("gamma_sat", "gamma_unsat", "gamma_w"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"{name} must be >= 0")

    @property
    def G(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def K(self) -> float:
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))

    @property
    def gamma_buoyant(self) -> float:
        return self.gamma_sat - self.gamma_w

    @property
    def rho_sat(self) -> float:
        return self.gamma_sat / GRAVITY

    @property
    def rho_unsat(self) -> float:
        return self.gamma_unsat / GRAVITY

    @property
    def k0(self) -> float:
        """Jaky's at-rest earth pressure coefficient ``1 - sin(phi)``."""
        return 1.0 - math.sin(math.radians(self.phi))

    def to_dict(self):
        return asdict(self)


def stress_rate(sigma, sigma_zz, eps_dot, omega_dot, material: MaterialParams):
    """Jaumann effective-stress rate for plane strain.

    ``sigma`` (n, 2, 2) and ``sigma_zz`` (n,) are the current effective
    stresses; ``eps_dot`` and ``omega_dot`` the in-plane strain and spin
    rates. Returns ``(dsigma, dsigma_zz)``. The out-of-plane strain rate is
    zero, so the volumetric term only sees the in-plane trace while
    ``sigma_zz`` still picks up the deviatoric and bulk contributions.
    """
    sigma = np.asarray(sigma, dtype=float)
    eps_dot = np.asarray(eps_dot, dtype=float)
    omega_dot = np.asarray(omega_dot, dtype=float)
    G, K = material.G, material.K
    tr = eps_dot[..., 0, 0] + eps_dot[..., 1, 1]
    eye = np.eye(2)
    vol = (K - 2.0 * G / 3.0) * tr
    elastic = 2.0 * G * eps_dot + vol[..., None, None] * eye
    # sigma . omega^T + omega . sigma, i.e. omega.sigma - sigma.omega for antisymmetric omega
    spin = np.empty(np.broadcast_shapes(sigma.shape, omega_dot.shape))
    s, o = sigma, omega_dot
    for a in range(2):
        for b in range(2):
            spin[..., a, b] = (
                s[..., a, 0] * o[..., b, 0] + s[..., a, 1] * o[..., b, 1]
                + o[..., a, 0] * s[..., 0, b] + o[..., a, 1] * s[..., 1, b]
            )
    dzz = vol * np.ones_like(np.asarray(sigma_zz, dtype=float))
    return elastic + spin, dzz


def stress_increment(sigma, sigma_zz, eps_dot, omega_dot, dt, material: MaterialParams):
    """Advance the effective stress one step of length ``dt``.

    Integrates the same Jaumann rate as :func:`stress_rate`, but the spin
    part is applied as an exact rotation ``Q sigma Q^T`` with ``Q`` the
    Cayley transform of ``dt * omega`` (the Hughes-Winget update). Rigid
    rotation therefore leaves every stress invariant unchanged to round-off,
    which a forward-Euler spin term does not. Returns ``(sigma, sigma_zz)``.
    """
    sigma = np.asarray(sigma, dtype=float)
    omega_dot = np.asarray(omega_dot, dtype=float)
    elastic, dzz = stress_rate(sigma, sigma_zz, eps_dot, np.zeros_like(omega_dot), material)
    a = 0.25 * dt * (omega_dot[..., 0, 1] - omega_dot[..., 1, 0])
    den = 1.0 + a * a
    c = (1.0 - a * a) / den
    s = 2.0 * a / den
    q = np.empty(a.shape + (2, 2))
    q[..., 0, 0] = c
    q[..., 0, 1] = s
    q[..., 1, 0] = -s
    q[..., 1, 1] = c
    rotated = q @ sigma @ np.swapaxes(q, -1, -2)
    return rotated + dt * elastic, np.asarray(sigma_zz, dtype=float) + dt * dzz


def strain_rate_from_stress_rate(dsigma, dsigma_zz, material: MaterialParams):
    """Inverse elastic law (compliance form) on the full 3x3 diagonal set.

    Deviatoric part over ``2G`` plus ``(1 - 2 nu)/(3E)`` times the stress-rate
    trace on the diagonal. Returns ``(eps_dot_inplane, eps_dot_zz)``.
    """
    dsigma = np.asarray(dsigma, dtype=float)
    tr = dsigma[..., 0, 0] + dsigma[..., 1, 1] + dsigma_zz
    mean = tr / 3.0
    G, E, nu = material.G, material.E, material.nu
    vol = (1.0 - 2.0 * nu) / (3.0 * E) * tr
    dev = dsigma - mean[..., None, None] * np.eye(2)
    eps = dev / (2.0 * G) + vol[..., None, None] * np.eye(2)
    eps_zz = (dsigma_zz - mean) / (2.0 * G) + vol
    return eps, eps_zz


def sound_speed(G, rho):
    """Shear-wave speed ``sqrt(G / rho)`` used for artificial viscosity and the CFL bound."""
    return np.sqrt(np.asarray(G, dtype=float) / np.asarray(rho, dtype=float))
