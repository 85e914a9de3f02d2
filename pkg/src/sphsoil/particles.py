"""Particle state arrays and fixed-radius neighbour search on a uniform grid."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields

import numpy as np

from sphsoil.errors import SimulationDivergedError
from sphsoil.kernel import SUPPORT, CubicSplineKernel

#: Added to the search radius so pairs sitting exactly at 2h do not flicker.
RADIUS_SLACK = 1e-9


class Kind(enum.IntEnum):
    SOIL = 0
    GHOST = 1
    VIRTUAL = 2


@dataclass
class Particles:
    """Structure-of-arrays particle store.

    Stress and pore pressure are negative in compression. ``sigma`` is the
    in-plane effective stress (n, 2, 2); ``sigma_zz`` its out-of-plane
    plane-strain component. Masses are per unit thickness.
    """

    x: np.ndarray
    v: np.ndarray
    rho: np.ndarray
    rho0: np.ndarray
    m: np.ndarray
    sigma: np.ndarray
    sigma_zz: np.ndarray
    pw: np.ndarray
    kind: np.ndarray
    material_id: np.ndarray = None

    def __post_init__(self):
        n = len(self.x)
        if self.material_id is None:
            self.material_id = np.zeros(n, dtype=np.int32)

    @classmethod
    def empty(cls, n=0):
        return cls(
            x=np.zeros((n, 2)),
            v=np.zeros((n, 2)),
            rho=np.ones(n),
            rho0=np.ones(n),
            m=np.ones(n),
            sigma=np.zeros((n, 2, 2)),
            sigma_zz=np.zeros(n),
            pw=np.zeros(n),
            kind=np.full(n, Kind.SOIL, dtype=np.int8),
        )

    @classmethod
    def from_positions(cls, x, rho, spacing, kind=Kind.SOIL):
        """Lattice particles at rest with mass ``rho * spacing**2``."""
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        n = len(x)
        rho = np.broadcast_to(np.asarray(rho, dtype=float), (n,)).copy()
        return cls(
            x=x.copy(),
            v=np.zeros((n, 2)),
            rho=rho,
            rho0=rho.copy(),
            m=rho * spacing * spacing,
            sigma=np.zeros((n, 2, 2)),
            sigma_zz=np.zeros(n),
            pw=np.zeros(n),
            kind=np.full(n, kind, dtype=np.int8),
        )

    def __len__(self):
        return len(self.x)

    @property
    def volume(self):
        return self.m / self.rho

    @property
    def soil(self):
        return self.kind == Kind.SOIL

    def total_sigma(self):
        """Total in-plane stress, effective stress plus pore pressure on the diagonal."""
        return self.sigma + self.pw[:, None, None] * np.eye(2)

    def take(self, index):
        return Particles(**{f.name: getattr(self, f.name)[index] for f in fields(self)})

    def copy(self):
        return Particles(**{f.name: getattr(self, f.name).copy() for f in fields(self)})

    @staticmethod
    def concat(*parts):
        parts = [p for p in parts if p is not None]
        return Particles(
            **{f.name: np.concatenate([getattr(p, f.name) for p in parts]) for f in fields(Particles)}
        )


@dataclass
class NeighborTable:
    """Directed pair list with cached geometry.

    Every unordered neighbour pair appears twice, as (a, b) and (b, a).
    Pairs are sorted by ``(i, j)``. ``r_ab = x_i - x_j`` and ``grad`` is the
    raw kernel gradient with respect to ``x_i``.
    """

    i: np.ndarray
    j: np.ndarray
    n: int
    r_ab: np.ndarray = field(repr=False, default=None)
    dist: np.ndarray = field(repr=False, default=None)
    w: np.ndarray = field(repr=False, default=None)
    grad: np.ndarray = field(repr=False, default=None)
    skin: float = 0.0
    x_built: np.ndarray = field(repr=False, default=None)

    def update_geometry(self, x, kernel: CubicSplineKernel):
        self.r_ab = x[self.i] - x[self.j]
        self.dist = np.sqrt(np.einsum("pk,pk->p", self.r_ab, self.r_ab))
        self.w = kernel.w(self.dist)
        self.grad = kernel.grad(self.r_ab, self.dist)
        return self

    def needs_rebuild(self, x):
        if self.x_built is None or len(x) != len(self.x_built):
            return True
        if self.skin <= 0.0:
            return True
        disp = x - self.x_built
        return float(np.sqrt(np.max(np.einsum("pk,pk->p", disp, disp), initial=0.0))) > 0.5 * self.skin

    def neighbors_of(self, a):
        lo, hi = np.searchsorted(self.i, [a, a + 1])
        return self.j[lo:hi]

    def pair_set(self):
        return set(zip(self.i.tolist(), self.j.tolist()))

    def counts(self):
        return np.bincount(self.i, minlength=self.n)


def grid_pairs(x, radius, cell_size):
    """All ordered pairs (i, j), i != j, with ``|x_i - x_j| <= radius``.

    Particles are hashed into square cells of side ``cell_size`` and only
    the 3x3 block of cells around each particle is scanned.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if cell_size < radius:
        raise ValueError("cell_size must be at least the search radius")
    if n < 2:
        return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp)
    lo = x.min(axis=0)
    cell = np.floor((x - lo) / cell_size).astype(np.int64)
    ny = int(cell[:, 1].max()) + 3
    key = (cell[:, 0] + 1) * ny + (cell[:, 1] + 1)
    order = np.argsort(key, kind="stable")
    skey = key[order]

    ii, jj = [], []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            nkey = key + dx * ny + dy
            start = np.searchsorted(skey, nkey, side="left")
            stop = np.searchsorted(skey, nkey, side="right")
            cnt = stop - start
            total = int(cnt.sum())
            if total == 0:
                continue
            src = np.repeat(np.arange(n), cnt)
            offs = np.arange(total) - np.repeat(np.cumsum(cnt) - cnt, cnt)
            dst = order[np.repeat(start, cnt) + offs]
            ii.append(src)
            jj.append(dst)
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    d = x[i] - x[j]
    keep = (i != j) & (np.einsum("pk,pk->p", d, d) <= radius * radius)
    i, j = i[keep], j[keep]
    srt = np.lexsort((j, i))
    return i[srt], j[srt]


def build_neighbors(particles, h, cell_size=None, skin=0.0, kernel=None):
    """Neighbour table at radius ``2h`` (+ ``skin``) using a uniform cell grid.

    ``particles`` may be a :class:`Particles` or an (n, 2) position array.
    """
    x = particles.x if isinstance(particles, Particles) else np.asarray(particles, dtype=float)
    radius = SUPPORT * h + RADIUS_SLACK + skin
    if cell_size is None:
        cell_size = radius
    i, j = grid_pairs(x, radius, max(cell_size, radius))
    table = NeighborTable(i=i, j=j, n=len(x), skin=skin, x_built=x.copy())
    return table.update_geometry(x, kernel or CubicSplineKernel(h))


def density_rate(particles, table, grad):
    """Continuity equation ``drho_a/dt = sum_b m_b (v_a - v_b) . gradW_ab``.

    ``grad`` is the (usually corrected) per-pair kernel gradient.
    """
    i, j = table.i, table.j
    v_ab = particles.v[i] - particles.v[j]
    terms = particles.m[j] * np.einsum("pk,pk->p", v_ab, grad)
    return np.bincount(i, weights=terms, minlength=len(particles))


def continuity_update(particles, table, grad, dt):
    """Density after one explicit continuity step. Raises on non-positive density."""
    rho = particles.rho + dt * density_rate(particles, table, grad)
    bad = np.flatnonzero(~(rho > 0.0))
    if bad.size:
        raise SimulationDivergedError("density became non-positive", particle=int(bad[0]), field="rho")
    return rho


__all__ = [
    "Kind",
    "NeighborTable",
    "Particles",
    "build_neighbors",
    "continuity_update",
    "density_rate",
    "grid_pairs",
]
