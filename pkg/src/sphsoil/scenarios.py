"""Scenario geometry, pore-pressure fields and initial-stress procedures."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from matplotlib.path import Path

from sphsoil.boundary import BoundarySpec, EdgeCondition, generate_fixed_boundary
from sphsoil.constitutive import MaterialParams
from sphsoil.engine import Simulation, SolverSettings
from sphsoil.errors import InvalidArgumentError, UnsupportedGeometryError
from sphsoil.momentum import DampingParams, FormulationSwitch, PoreWaterForm, StabilizationParams, StressForm
from sphsoil.particles import Particles

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_H_RATIO = 1.2


# -- geometry ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rectangle:
    x0: float
    y0: float
    width: float
    height: float
    kind: str = "rectangle"

    def vertices(self):
        x0, y0, w, h = self.x0, self.y0, self.width, self.height
        return [(x0, y0), (x0 + w, y0), (x0 + w, y0 + h), (x0, y0 + h)]

    def bounds(self):
        return self.x0, self.x0 + self.width, self.y0, self.y0 + self.height


@dataclass(frozen=True)
class Polygon:
    """Simple polygon given counter-clockwise; the box of its vertices is the boundary box."""

    points: tuple
    kind: str = "polygon"

    def __post_init__(self):
        pts = tuple(tuple(float(c) for c in p) for p in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 3:
            raise InvalidArgumentError("polygon needs at least three vertices")

    def vertices(self):
        return list(self.points)

    def bounds(self):
        a = np.asarray(self.points)
        return float(a[:, 0].min()), float(a[:, 0].max()), float(a[:, 1].min()), float(a[:, 1].max())


def geometry_from_dict(d):
    d = dict(d)
    kind = d.pop("type", d.pop("kind", "rectangle"))
    if kind == "rectangle":
        return Rectangle(float(d["x0"]), float(d["y0"]), float(d["width"]), float(d["height"]))
    if kind == "polygon":
        return Polygon(tuple(tuple(p) for p in d["points"]))
    raise InvalidArgumentError(f"unknown geometry type {kind!r}")


def geometry_to_dict(g):
    if isinstance(g, Rectangle):
        return {"type": "rectangle", "x0": g.x0, "y0": g.y0, "width": g.width, "height": g.height}
    return {"type": "polygon", "points": [list(p) for p in g.points]}


LATTICE_ALIGNMENTS = ("surface", "cell")


def lattice_offset(spacing, align="surface"):
    """Vertical offset of lattice rows relative to cell centres.

    ``"cell"`` puts particles at cell centres, half a spacing below the top
    edge. ``"surface"`` lifts every row by half a spacing so the top row lies
    on the top edge. Corrected SPH sums put the traction-free surface at the
    centres of the outermost particles, so the second choice keeps the
    discrete free surface at the geometric one.
    """
    if align not in LATTICE_ALIGNMENTS:
        raise InvalidArgumentError(f"lattice alignment must be one of {LATTICE_ALIGNMENTS}, got {align!r}")
    return 0.5 * spacing if align == "surface" else 0.0


def lattice_points(geometry, spacing, align="surface"):
    """Lattice points of pitch ``spacing`` inside ``geometry`` (see :func:`lattice_offset`)."""
    if spacing <= 0 or not math.isfinite(spacing):
        raise InvalidArgumentError("spacing must be finite and > 0")
    xmin, xmax, ymin, ymax = geometry.bounds()
    nx = int(round((xmax - xmin) / spacing))
    ny = int(round((ymax - ymin) / spacing))
    xs = xmin + (np.arange(nx) + 0.5) * spacing
    ys = ymin + (np.arange(ny) + 0.5) * spacing + lattice_offset(spacing, align)
    grid = np.array(np.meshgrid(xs, ys)).reshape(2, -1).T
    if isinstance(geometry, Rectangle):
        pts = grid
    else:
        # nudge down so rows lying exactly on upward-facing edges count as inside
        probe = grid - np.array([0.0, 1e-6 * spacing])
        pts = grid[Path(np.asarray(geometry.vertices())).contains_points(probe)]
    if len(pts) == 0:
        raise InvalidArgumentError("geometry contains no lattice points")
    return pts


# -- configuration ----------------------------------------------------------------------

#: Boundary band width in units of h (the cubic-spline support).
SUPPORT_BAND = 2.0
LOADING_METHODS = ("gravity_damped", "k0")


@dataclass(frozen=True)
class Probe:
    label: str
    position: tuple

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        if len(self.position) != 2:
            raise InvalidArgumentError(f"probe {self.label!r} needs a 2D position")


@dataclass(frozen=True)
class LoadingPhase:
    method: str = "gravity_damped"
    xi: float = 0.002
    duration: float = 4.0
    early_exit: bool = True
    v_threshold: float = 1e-4
    hold_steps: int = 100
    min_duration: float = 0.0

    def __post_init__(self):
        if self.method not in LOADING_METHODS:
            raise InvalidArgumentError(f"loading method must be one of {LOADING_METHODS}, got {self.method!r}")
        if self.duration < 0:
            raise InvalidArgumentError("loading duration must be >= 0")


@dataclass(frozen=True)
class Formulation:
    pwater: str = "corrected"
    stress_form: str = "rhoab"
    kernel_correction: bool = True
    continuity: bool = True

    def switches(self, damping_on=True):
        return FormulationSwitch(
            stress_form=StressForm(self.stress_form),
            pwater_form=PoreWaterForm(self.pwater),
            kernel_correction=self.kernel_correction,
            damping_on=damping_on,
        )


@dataclass(frozen=True)
class Stabilization:
    alpha_visc: float = 0.1
    beta_visc: float = 0.1
    viscosity: bool = True
    artificial_stress: bool = False
    eps_as: float = 0.3
    n_as: float = 2.55


@dataclass(frozen=True)
class OutputPlan:
    probe_interval: float = 0.01
    snapshot_interval: float = 0.0
    vtk: bool = False
    figures: bool = True


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to build and run one simulation."""

    name: str
    geometry: Rectangle | Polygon
    spacing: float
    material: MaterialParams
    water_level: float | None = None
    h_ratio: float = DEFAULT_H_RATIO
    lattice: str = "surface"
    boundaries: dict = field(
        default_factory=lambda: {"left": "free_roller", "right": "free_roller", "bottom": "full_fixity", "top": "free"}
    )
    loading: LoadingPhase = field(default_factory=LoadingPhase)
    analysis_duration: float = 0.0
    formulation: Formulation = field(default_factory=Formulation)
    stabilization: Stabilization = field(default_factory=Stabilization)
    cfl: float = 0.1
    dt_every: int = 10
    probes: tuple = ()
    output: OutputPlan = field(default_factory=OutputPlan)
    deterministic: bool = True
    perturbation: float = 0.0
    seed: int = 0
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise InvalidArgumentError("spacing must be finite and > 0")
        if self.h_ratio <= 0:
            raise InvalidArgumentError("h_ratio must be > 0")
        lattice_offset(self.spacing, self.lattice)
        if not 0.0 <= self.perturbation < 0.5:
            raise InvalidArgumentError("perturbation must lie in [0, 0.5) spacings")

    @property
    def h(self):
        return self.h_ratio * self.spacing

    def boundary_spec(self):
        xmin, xmax, ymin, ymax = self.geometry.bounds()
        return BoundarySpec(
            xmin, xmax, ymin, ymax,
            **{k: EdgeCondition(v) for k, v in self.boundaries.items()},
            band=SUPPORT_BAND * self.h,
        )

    def surface_level(self, x=None):
        """Ground elevation at ``x`` (the top of the geometry column)."""
        if isinstance(self.geometry, Rectangle):
            top = self.geometry.y0 + self.geometry.height
            return top if x is None else np.full(np.shape(x), top)
        if x is None:
            return self.geometry.bounds()[3]
        return surface_elevation(self.geometry, x)

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "name": self.name,
            "geometry": geometry_to_dict(self.geometry),
            "spacing": self.spacing,
            "h_ratio": self.h_ratio,
            "lattice": self.lattice,
            "water_level": self.water_level,
            "material": self.material.to_dict(),
            "boundaries": dict(self.boundaries),
            "loading": asdict(self.loading),
            "analysis_duration": self.analysis_duration,
            "formulation": asdict(self.formulation),
            "stabilization": asdict(self.stabilization),
            "time": {"cfl": self.cfl, "dt_every": self.dt_every},
            "probes": [{"label": p.label, "position": list(p.position)} for p in self.probes],
            "output": asdict(self.output),
            "deterministic": self.deterministic,
            "perturbation": self.perturbation,
            "seed": self.seed,
        }


def surface_elevation(geometry, x):
    """Highest polygon boundary crossing at each abscissa (vertical ray cast)."""
    pts = np.asarray(geometry.vertices(), dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.full(x.shape, -np.inf)
    for k in range(len(pts)):
        (x1, y1), (x2, y2) = pts[k], pts[(k + 1) % len(pts)]
        if x1 == x2:
            hit = np.isclose(x, x1)
            out[hit] = np.maximum(out[hit], max(y1, y2))
            continue
        lo, hi = min(x1, x2), max(x1, x2)
        inside = (x >= lo) & (x <= hi)
        y = y1 + (y2 - y1) * (x - x1) / (x2 - x1)
        out[inside] = np.maximum(out[inside], y[inside])
    return out


# -- builders ---------------------------------------------------------------------------


def build_lattice(geometry, spacing, material: MaterialParams | None = None, water_level=None, align="surface"):
    """Particles on a uniform lattice filling ``geometry``.

    Density is ``gamma_sat/g`` below the water level and ``gamma_unsat/g``
    above (``gamma_sat/g`` everywhere when there is no water level).
    """
    x = lattice_points(geometry, spacing, align)
    if material is None:
        rho = np.ones(len(x))
    elif water_level is None:
        rho = np.full(len(x), material.rho_sat)
    else:
        rho = np.where(x[:, 1] <= water_level, material.rho_sat, material.rho_unsat)
    return Particles.from_positions(x, rho, spacing)


def hydrostatic(water_level, gamma_w=9.81e3):
    """Pore-pressure field ``-gamma_w (H_w - y)`` below ``H_w``, zero above."""

    def field(x):
        y = np.asarray(x, dtype=float)[..., 1]
        return np.where(y <= water_level, -gamma_w * (water_level - y), 0.0)

    return field


def assign_pore_pressure(particles: Particles, water_level, gamma_w=9.81e3):
    particles.pw[:] = hydrostatic(water_level, gamma_w)(particles.x)
    return particles


def surface_mask(x, spacing):
    """Particles with no lattice neighbour directly above them."""
    x = np.asarray(x, dtype=float)
    key = np.round(x / spacing).astype(np.int64)
    occupied = set(map(tuple, key.tolist()))
    return np.array([(kx, ky + 1) not in occupied for kx, ky in key.tolist()])


def analytic_vertical_stress(y, surface, water_level, material: MaterialParams):
    """Effective and total vertical stress of a 1D layered column.

    Soil above the water table weighs ``gamma_unsat``, submerged soil
    ``gamma_sat - gamma_w``. Returns ``(sigma_eff_yy, p_w, sigma_total_yy)``,
    compression negative.
    """
    y = np.asarray(y, dtype=float)
    surface = np.broadcast_to(np.asarray(surface, dtype=float), y.shape)
    depth = np.maximum(surface - y, 0.0)
    if water_level is None:
        eff = -material.gamma_sat * depth
        pw = np.zeros_like(depth)
    else:
        dry = np.clip(surface - np.maximum(y, water_level), 0.0, None)
        wet = depth - dry
        eff = -(material.gamma_unsat * dry + material.gamma_buoyant * wet)
        pw = np.where(y <= water_level, -material.gamma_w * (water_level - y), 0.0)
    return eff, pw, eff + pw


def k0_initialize(particles: Particles, material: MaterialParams, spacing, water_level=None, surface=None):
    """Geostatic effective stresses with ``sigma_h = K0 sigma_v``.

    Only valid for a horizontal ground surface; each lattice column must
    reach the same top elevation. ``surface`` defaults to the top particle
    row, which matches a surface-aligned lattice.
    """
    soil = particles.soil
    x = particles.x[soil]
    cols = np.round(x[:, 0] / spacing).astype(np.int64)
    tops = {}
    for c, y in zip(cols.tolist(), x[:, 1].tolist()):
        tops[c] = max(tops.get(c, -np.inf), y)
    top_vals = np.array(list(tops.values()))
    if top_vals.max() - top_vals.min() > 1e-6 * max(1.0, abs(top_vals.max())):
        raise UnsupportedGeometryError("K0 initialisation needs a horizontal ground surface")
    if surface is None:
        surface = top_vals.max()
    eff, _, _ = analytic_vertical_stress(x[:, 1], surface, water_level, material)
    k0 = material.k0
    sig = np.zeros((len(x), 2, 2))
    sig[:, 1, 1] = eff
    sig[:, 0, 0] = k0 * eff
    particles.sigma[soil] = sig
    particles.sigma_zz[soil] = k0 * eff
    return particles


# -- simulation setup -------------------------------------------------------------------


def build_simulation(cfg: ScenarioConfig, switches: FormulationSwitch | None = None) -> Simulation:
    """Soil lattice, boundary particles and pore-pressure field for ``cfg``."""
    mat = cfg.material
    soil = build_lattice(cfg.geometry, cfg.spacing, mat, cfg.water_level, cfg.lattice)
    if cfg.perturbation > 0:
        rng = np.random.default_rng(cfg.seed)
        soil.x += rng.uniform(-1.0, 1.0, soil.x.shape) * cfg.perturbation * cfg.spacing
    spec = cfg.boundary_spec()
    offset = lattice_offset(cfg.spacing, cfg.lattice)
    rho_wall = mat.rho_sat if cfg.water_level is not None else mat.rho_unsat
    virtual = generate_fixed_boundary(spec, cfg.spacing, rho_wall, y_offset=offset)
    st = cfg.stabilization
    settings = SolverSettings(
        h=cfg.h,
        spacing=cfg.spacing,
        material=mat,
        switches=switches or cfg.formulation.switches(),
        stabilization=StabilizationParams(
            alpha_visc=st.alpha_visc, beta_visc=st.beta_visc, viscosity=st.viscosity,
            eps_as=st.eps_as, n_as=st.n_as, artificial_stress=st.artificial_stress, spacing=cfg.spacing,
        ),
        cfl=cfg.cfl,
        dt_every=cfg.dt_every,
        continuity=cfg.formulation.continuity,
    )
    pore = hydrostatic(cfg.water_level, mat.gamma_w) if cfg.water_level is not None else None
    sim = Simulation(soil, settings, spec, pore, virtual)
    if cfg.loading.method == "k0":
        k0_initialize(sim.particles, mat, cfg.spacing, cfg.water_level, surface=cfg.surface_level())
        sim.refresh()
    return sim


@dataclass
class PhaseResult:
    steps: int
    t_end: float
    converged: bool
    reason: str


def gravity_load_phase(sim: Simulation, xi=0.002, duration=4.0, early_exit=True, v_threshold=1e-4,
                       hold_steps=100, min_duration=0.0, on_step=None, require_zero_stress=True):
    """Apply self-weight and pore pressure at once and relax with damping.

    Runs until ``duration`` has elapsed or, with ``early_exit``, until the
    maximum soil speed stays below ``v_threshold`` for ``hold_steps``
    consecutive steps (not before ``min_duration``). Damping is switched
    off afterwards. ``on_step(sim)`` is called after every step.
    """
    if require_zero_stress and np.any(sim.particles.sigma[: sim.n_soil] != 0.0):
        raise InvalidArgumentError("gravity loading expects a stress-free initial state")
    sim.set_damping(DampingParams(xi))
    t_start = sim.t
    calm = 0
    steps = 0
    reason = "duration"
    converged = False
    while sim.t - t_start < duration - 1e-12:
        sim.step()
        steps += 1
        if on_step is not None:
            on_step(sim)
        calm = calm + 1 if sim.max_speed() < v_threshold else 0
        if calm >= hold_steps:
            converged = True
            if early_exit and sim.t - t_start >= min_duration:
                reason = "converged"
                break
    sim.set_damping(None)
    log.info("loading phase ended after %d steps at t=%.4f s (%s)", steps, sim.t, reason)
    return PhaseResult(steps, sim.t, converged, reason)


def free_phase(sim: Simulation, duration, on_step=None):
    """Undamped analysis phase of fixed length."""
    sim.set_damping(None)
    t_start = sim.t
    steps = 0
    while sim.t - t_start < duration - 1e-12:
        sim.step()
        steps += 1
        if on_step is not None:
            on_step(sim)
    return PhaseResult(steps, sim.t, False, "duration")


# -- presets ----------------------------------------------------------------------------


def submerged_foundation(spacing=0.2, water_depth=2.0, **overrides):
    """Fully submerged 25 m x 6 m elastic foundation under gravity loading.

    At 0.2 m spacing this is 125 x 30 = 3750 particles with h = 0.24 m.
    Probes A and B sit on the centre line at 1.5 m and 4.5 m depth.
    """
    geom = Rectangle(0.0, 0.0, 25.0, 6.0)
    cfg = dict(
        name="submerged_foundation",
        geometry=geom,
        spacing=spacing,
        material=MaterialParams(E=15e6, nu=0.33, gamma_sat=20e3, gamma_unsat=20e3, gamma_w=9.81e3),
        water_level=6.0 + water_depth,
        probes=(Probe("A", (12.5, 4.5)), Probe("B", (12.5, 1.5))),
    )
    cfg.update(overrides)
    return ScenarioConfig(**cfg)


def embankment_polygon(foundation_width=60.0, foundation_height=4.0, crest_width=12.0, height=5.0,
                       left_slope=1.0, right_slope=2.0, center=None):
    """Foundation block with a trapezoidal embankment; slopes are horizontal:vertical."""
    W, H = foundation_width, foundation_height
    base = crest_width + (left_slope + right_slope) * height
    c = W / 2.0 if center is None else center
    xl = c - base / 2.0
    xr = xl + base
    return Polygon((
        (0.0, 0.0), (W, 0.0), (W, H), (xr, H),
        (xr - right_slope * height, H + height),
        (xl + left_slope * height, H + height),
        (xl, H), (0.0, H),
    ))


def two_side_embankment(spacing=0.2, water_level=6.0, **overrides):
    """Two-side slope embankment on a submerged foundation, steeper slope on the left.

    The default polygon gives about 8450 particles at 0.2 m spacing. Far-field
    probes FL and FR sit in the flat submerged foundation, probe A in the
    embankment above the water table.
    """
    poly = embankment_polygon()
    cfg = dict(
        name="two_side_embankment",
        geometry=poly,
        spacing=spacing,
        material=MaterialParams(E=15e6, nu=0.25, gamma_sat=20e3, gamma_unsat=18.6e3, gamma_w=9.81e3),
        water_level=water_level,
        probes=(Probe("FL", (3.0, 2.0)), Probe("FR", (57.0, 2.0)), Probe("A", (30.0, 6.0))),
    )
    cfg.update(overrides)
    return ScenarioConfig(**cfg)
