"""Cubic-spline smoothing kernel and kernel-gradient correction.

The kernel is the 2D cubic B-spline with support radius ``2h``::

    W(q) = alpha * (1 - 1.5 q^2 + 0.75 q^3)   0 <= q < 1
           alpha * 0.25 (2 - q)^3             1 <= q < 2
           0                                  q >= 2

with ``q = r/h`` and ``alpha = 10 / (7 pi h^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sphsoil.errors import DegenerateNeighborhoodError, InvalidArgumentError

SUPPORT = 2.0
#: Moment matrices with a larger 2-norm condition number are treated as singular.
MAX_CONDITION = 1e8
MIN_NEIGHBORS = 3


def _check_h(h):
    if not (isinstance(h, (int, float, np.floating)) and math.isfinite(h) and h > 0):
        raise InvalidArgumentError(f"smoothing length must be finite and > 0, got {h!r}")


@dataclass(frozen=True)
class CubicSplineKernel:
    h: float

    def __post_init__(self):
        _check_h(self.h)

    @property
    def alpha(self) -> float:
        return 10.0 / (7.0 * math.pi * self.h * self.h)

    @property
    def radius(self) -> float:
        return SUPPORT * self.h

    def w(self, r):
        """Kernel value for separation distance(s) ``r``."""
        q = np.asarray(r, dtype=float) / self.h
        inner = 1.0 - 1.5 * q * q + 0.75 * q**3
        outer = 0.25 * (2.0 - q) ** 3
        return self.alpha * np.where(q < 1.0, inner, np.where(q < SUPPORT, outer, 0.0))

    def dw_dr(self, r):
        q = np.asarray(r, dtype=float) / self.h
        inner = -3.0 * q + 2.25 * q * q
        outer = -0.75 * (2.0 - q) ** 2
        return self.alpha / self.h * np.where(q < 1.0, inner, np.where(q < SUPPORT, outer, 0.0))

    def grad(self, r_ab, dist=None):
        """Gradient with respect to ``x_a`` of ``W(|r_ab|)``, ``r_ab = x_a - x_b``.

        Accepts a single vector of shape (2,) or a batch of shape (n, 2).
        Coincident points get the zero vector.
        """
        r_ab = np.asarray(r_ab, dtype=float)
        if dist is None:
            dist = np.linalg.norm(r_ab, axis=-1)
        dist = np.asarray(dist, dtype=float)
        safe = np.where(dist > 0.0, dist, 1.0)
        factor = np.where(dist > 0.0, self.dw_dr(dist) / safe, 0.0)
        return r_ab * factor[..., None]


def eval_w(r, h):
    """Cubic-spline kernel value W(r, h) in 1/m^2."""
    if np.any(np.asarray(r) < 0):
        raise InvalidArgumentError("separation distance must be >= 0")
    out = CubicSplineKernel(float(h)).w(r)
    return float(out) if np.ndim(out) == 0 else out


def eval_grad_w(r_ab, h):
    """Kernel gradient for the separation vector ``r_ab = x_a - x_b``."""
    return CubicSplineKernel(float(h)).grad(r_ab)


def _invert_2x2(m):
    """Batched inverse of (n, 2, 2) matrices plus their 2-norm condition numbers."""
    a, b, c, d = m[:, 0, 0], m[:, 0, 1], m[:, 1, 0], m[:, 1, 1]
    det = a * d - b * c
    fro2 = a * a + b * b + c * c + d * d
    # sigma_max^2 and sigma_min^2 from the trace/determinant of M^T M
    disc = np.sqrt(np.maximum(fro2 * fro2 - 4.0 * det * det, 0.0))
    smax2 = 0.5 * (fro2 + disc)
    smin2 = np.maximum(0.5 * (fro2 - disc), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.sqrt(smax2 / smin2)
        inv = np.empty_like(m)
        inv[:, 0, 0] = d / det
        inv[:, 0, 1] = -b / det
        inv[:, 1, 0] = -c / det
        inv[:, 1, 1] = a / det
    cond = np.where(np.isfinite(cond), cond, np.inf)
    return inv, cond


def moment_matrices(n, pair_i, r_ab, grad, vol_j):
    """Per-particle sum of ``V_b grad W_ab (x) (x_b - x_a)`` over directed pairs."""
    m = np.zeros((n, 2, 2))
    x_ba = -r_ab
    for p in range(2):
        for q in range(2):
            m[:, p, q] = np.bincount(pair_i, weights=vol_j * grad[:, p] * x_ba[:, q], minlength=n)
    return m


def correction_matrices(n, pair_i, r_ab, grad, vol_j, max_condition=MAX_CONDITION):
    """Correction matrices for all particles from directed pair data.

    Returns ``(L, degenerate)``. Degenerate particles (fewer than three
    neighbours or condition number above ``max_condition``) receive the
    identity.
    """
    m = moment_matrices(n, pair_i, r_ab, grad, vol_j)
    inv, cond = _invert_2x2(m)
    counts = np.bincount(pair_i, weights=np.any(grad != 0.0, axis=1), minlength=n)
    degenerate = (cond > max_condition) | (counts < MIN_NEIGHBORS)
    inv[degenerate] = np.eye(2)
    return inv, degenerate


def correction_matrix(x_a, x_b, vol_b, kernel, max_condition=MAX_CONDITION):
    """Correction matrix for a single particle.

    ``x_b`` holds neighbour positions (the particle itself may be included;
    it contributes nothing). Raises :class:`DegenerateNeighborhoodError` when
    the moment matrix cannot be safely inverted.
    """
    x_b = np.atleast_2d(np.asarray(x_b, dtype=float))
    vol_b = np.broadcast_to(np.asarray(vol_b, dtype=float), (len(x_b),))
    r_ab = np.asarray(x_a, dtype=float)[None, :] - x_b
    dist = np.linalg.norm(r_ab, axis=1)
    inside = (dist > 0.0) & (dist < kernel.radius)
    if inside.sum() < MIN_NEIGHBORS:
        raise DegenerateNeighborhoodError(
            f"only {int(inside.sum())} neighbours inside the support", condition=np.inf
        )
    grad = kernel.grad(r_ab[inside], dist[inside])
    m = moment_matrices(1, np.zeros(inside.sum(), dtype=np.intp), r_ab[inside], grad, vol_b[inside])
    inv, cond = _invert_2x2(m)
    if cond[0] > max_condition:
        raise DegenerateNeighborhoodError(
            f"moment matrix condition number {cond[0]:.3g} exceeds {max_condition:.3g}",
            condition=float(cond[0]),
        )
    return inv[0]
