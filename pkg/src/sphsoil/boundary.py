"""Free-roller ghost particles and full-fixity virtual particles.

Both boundary types are defined on the edges of an axis-aligned box.
Ghosts are mirror images of soil particles near a roller edge; virtual
particles are fixed lattice rows behind a fixed edge whose stress is
extrapolated each step from the nearest soil particle.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from sphsoil.errors import InvalidArgumentError
from sphsoil.particles import Kind, Particles

SIDES = ("left", "right", "bottom", "top")


class EdgeCondition(str, enum.Enum):
    FREE = "free"
    FREE_ROLLER = "free_roller"
    FULL_FIXITY = "full_fixity"


@dataclass(frozen=True)
class BoundarySpec:
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    left: EdgeCondition = EdgeCondition.FREE_ROLLER
    right: EdgeCondition = EdgeCondition.FREE_ROLLER
    bottom: EdgeCondition = EdgeCondition.FULL_FIXITY
    top: EdgeCondition = EdgeCondition.FREE
    band: float = 0.48

    def __post_init__(self):
        for side in SIDES:
            object.__setattr__(self, side, EdgeCondition(getattr(self, side)))
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise InvalidArgumentError("boundary box is degenerate")
        if self.band <= 0:
            raise InvalidArgumentError("band width must be > 0")

    def condition(self, side):
        return getattr(self, side)

    def wall(self, side):
        return {"left": self.xmin, "right": self.xmax, "bottom": self.ymin, "top": self.ymax}[side]

    def check_band(self, h):
        if self.band < 2.0 * h - 1e-12:
            raise InvalidArgumentError(f"boundary band {self.band} is narrower than the kernel support {2 * h}")


@dataclass
class GhostMap:
    """Which soil particle each ghost mirrors and across which walls."""

    source: np.ndarray
    wall_x: np.ndarray  # nan where x is not mirrored
    wall_y: np.ndarray

    def __len__(self):
        return len(self.source)


def _roller_mirrors(spec):
    axes = {"left": 0, "right": 0, "bottom": 1, "top": 1}
    return [(s, axes[s], spec.wall(s)) for s in SIDES if spec.condition(s) is EdgeCondition.FREE_ROLLER]


def ghost_map(x_soil, spec: BoundarySpec, width=None):
    """Mirror assignments for soil particles within ``width`` of roller edges.

    Particles near two perpendicular roller edges also get a corner ghost
    mirrored across both.
    """
    width = spec.band if width is None else width
    x_soil = np.asarray(x_soil, dtype=float)
    mirrors = _roller_mirrors(spec)
    xs = [(s, w) for s, ax, w in mirrors if ax == 0]
    ys = [(s, w) for s, ax, w in mirrors if ax == 1]
    src, wx, wy = [], [], []
    near_x = [np.abs(x_soil[:, 0] - w) < width for _, w in xs]
    near_y = [np.abs(x_soil[:, 1] - w) < width for _, w in ys]
    for (_, w), mask in zip(xs, near_x):
        idx = np.flatnonzero(mask)
        src.append(idx)
        wx.append(np.full(len(idx), w))
        wy.append(np.full(len(idx), np.nan))
    for (_, w), mask in zip(ys, near_y):
        idx = np.flatnonzero(mask)
        src.append(idx)
        wx.append(np.full(len(idx), np.nan))
        wy.append(np.full(len(idx), w))
    for (_, wxv), mx in zip(xs, near_x):
        for (_, wyv), my in zip(ys, near_y):
            idx = np.flatnonzero(mx & my)
            src.append(idx)
            wx.append(np.full(len(idx), wxv))
            wy.append(np.full(len(idx), wyv))
    if not src:
        empty = np.zeros(0)
        return GhostMap(np.zeros(0, dtype=np.intp), empty, empty)
    return GhostMap(np.concatenate(src).astype(np.intp), np.concatenate(wx), np.concatenate(wy))


def mirror_state(soil: Particles, gmap: GhostMap, out: Particles | None = None):
    """Fill (or create) the ghost particle set from the current soil state.

    Positions are reflected, the normal velocity component negated and the
    tangential one copied. Shear stress flips sign for a single reflection.
    Density, mass and pore pressure are copied.
    """
    src = gmap.source
    fx = ~np.isnan(gmap.wall_x)
    fy = ~np.isnan(gmap.wall_y)
    if out is None:
        out = soil.take(src)
        out.kind[:] = Kind.GHOST
    else:
        for name in ("x", "v", "rho", "rho0", "m", "sigma", "sigma_zz", "pw"):
            getattr(out, name)[:] = getattr(soil, name)[src]
    out.x[fx, 0] = 2.0 * gmap.wall_x[fx] - out.x[fx, 0]
    out.x[fy, 1] = 2.0 * gmap.wall_y[fy] - out.x[fy, 1]
    out.v[fx, 0] *= -1.0
    out.v[fy, 1] *= -1.0
    flip = fx ^ fy
    out.sigma[flip, 0, 1] *= -1.0
    out.sigma[flip, 1, 0] *= -1.0
    return out


def generate_ghosts(soil: Particles, spec: BoundarySpec, width=None):
    """Ghost particle set mirroring ``soil`` across all free-roller edges."""
    gmap = ghost_map(soil.x, spec, width)
    return mirror_state(soil, gmap), gmap


def fixed_boundary_positions(spec: BoundarySpec, spacing, y_offset=0.0):
    """Lattice points in the band behind every full-fixity edge.

    Rows are aligned with a soil lattice whose first particle centre sits
    half a spacing inside the box, shifted vertically by ``y_offset``. Rows
    behind the bottom/top edges extend laterally through the corners.
    """
    if spacing <= 0:
        raise InvalidArgumentError("spacing must be > 0")
    nrow = int(math.ceil(spec.band / spacing - 1e-9))
    nx = int(round((spec.xmax - spec.xmin) / spacing))
    ny = int(round((spec.ymax - spec.ymin) / spacing))
    xs_in = spec.xmin + (np.arange(nx) + 0.5) * spacing
    ys_in = spec.ymin + (np.arange(ny) + 0.5) * spacing + y_offset
    outer = (np.arange(nrow) + 0.5) * spacing
    xs_full = np.concatenate([spec.xmin - outer[::-1], xs_in, spec.xmax + outer])
    pts = []
    if spec.bottom is EdgeCondition.FULL_FIXITY:
        pts.append(np.array(np.meshgrid(xs_full, spec.ymin - outer + y_offset)).reshape(2, -1).T)
    if spec.top is EdgeCondition.FULL_FIXITY:
        pts.append(np.array(np.meshgrid(xs_full, spec.ymax + outer + y_offset)).reshape(2, -1).T)
    if spec.left is EdgeCondition.FULL_FIXITY:
        pts.append(np.array(np.meshgrid(spec.xmin - outer, ys_in)).reshape(2, -1).T)
    if spec.right is EdgeCondition.FULL_FIXITY:
        pts.append(np.array(np.meshgrid(spec.xmax + outer, ys_in)).reshape(2, -1).T)
    if not pts:
        return np.zeros((0, 2))
    return np.concatenate(pts)


def generate_fixed_boundary(spec: BoundarySpec, spacing, rho=1.0, y_offset=0.0):
    """Virtual particles at rest behind the full-fixity edges."""
    x = fixed_boundary_positions(spec, spacing, y_offset)
    return Particles.from_positions(x, rho, spacing, kind=Kind.VIRTUAL)


@dataclass
class VirtualLink:
    """Nearest soil particle for each virtual particle."""

    nearest: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))

    @classmethod
    def build(cls, x_virtual, x_soil):
        if len(x_virtual) == 0 or len(x_soil) == 0:
            return cls(np.zeros(len(x_virtual), dtype=np.intp))
        _, idx = cKDTree(x_soil).query(x_virtual)
        return cls(np.asarray(idx, dtype=np.intp))


STRESS_FIELDS = 4  # sxx, syy, sxy, szz


def stress_fields(particles: Particles):
    """Stress components stacked as (n, 4) columns: sxx, syy, sxy, szz."""
    s = particles.sigma
    return np.stack([s[:, 0, 0], s[:, 1, 1], s[:, 0, 1], particles.sigma_zz], axis=1)


def assign_virtual_stress(virtual: Particles, soil: Particles, link: VirtualLink, copy_pressure=True,
                          gradients=None):
    """Set virtual-particle stress from the nearest soil particle.

    Without ``gradients`` the nearest stress is copied. With ``gradients``
    (n_soil, 4, 2), the gradient of each :func:`stress_fields` column, the
    stress is extrapolated linearly to the virtual position, which keeps a
    gravity stress profile linear through the wall.
    """
    if len(virtual) == 0:
        return virtual
    near = link.nearest
    vals = stress_fields(soil)[near]
    if gradients is not None:
        offset = virtual.x - soil.x[near]
        vals = vals + np.einsum("nck,nk->nc", gradients[near], offset)
    virtual.sigma[:, 0, 0] = vals[:, 0]
    virtual.sigma[:, 1, 1] = vals[:, 1]
    virtual.sigma[:, 0, 1] = vals[:, 2]
    virtual.sigma[:, 1, 0] = vals[:, 2]
    virtual.sigma_zz[:] = vals[:, 3]
    if copy_pressure:
        virtual.pw[:] = soil.pw[near]
    virtual.v[:] = 0.0
    return virtual
