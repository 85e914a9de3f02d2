"""Kick-drift-kick leapfrog integration and step orchestration."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from sphsoil import _fast
from sphsoil.boundary import (
    BoundarySpec,
    GhostMap,
    VirtualLink,
    assign_virtual_stress,
    ghost_map,
    mirror_state,
    stress_fields,
)
from sphsoil.constitutive import GRAVITY, MaterialParams, sound_speed, stress_increment
from sphsoil.errors import InvalidArgumentError, SimulationDivergedError
from sphsoil.kernel import MAX_CONDITION, MIN_NEIGHBORS, CubicSplineKernel
from sphsoil.momentum import (
    DampingParams,
    FormulationSwitch,
    PoreWaterForm,
    StabilizationParams,
    StressForm,
    damping_force,
)
from sphsoil.particles import Kind, Particles, build_neighbors

log = logging.getLogger(__name__)


@dataclass
class SolverSettings:
    h: float
    spacing: float
    material: MaterialParams
    switches: FormulationSwitch = field(default_factory=FormulationSwitch)
    stabilization: StabilizationParams | None = field(default_factory=StabilizationParams)
    cfl: float = 0.1
    dt_every: int = 10
    skin: float | None = None
    continuity: bool = True
    gravity: tuple = (0.0, -GRAVITY)
    #: "linear" extrapolates virtual-particle stress with the soil stress gradient, "copy" uses the nearest value.
    virtual_stress: str = "linear"

    def __post_init__(self):
        if self.virtual_stress not in ("linear", "copy"):
            raise InvalidArgumentError(f"virtual_stress must be 'linear' or 'copy', got {self.virtual_stress!r}")
        if self.cfl <= 0:
            raise InvalidArgumentError("cfl must be > 0")
        if self.skin is None:
            self.skin = 0.1 * self.spacing


def stable_dt(particles, h, cfl, G):
    """``cfl * h / max(c + |v|)`` over soil particles."""
    soil = particles.kind == Kind.SOIL
    if not soil.any():
        raise InvalidArgumentError("no soil particles")
    c = sound_speed(G, particles.rho[soil])
    speed = np.sqrt(np.einsum("nk,nk->n", particles.v[soil], particles.v[soil]))
    return float(cfl * h / np.max(c + speed))


class Simulation:
    """Particle state plus the machinery to advance it.

    ``pore_pressure`` maps soil positions (n, 2) to pore pressures; when
    given it is re-evaluated every step (a static water table). Otherwise
    the initial soil ``pw`` values are carried with the particles.
    """

    def __init__(self, soil: Particles, settings: SolverSettings, boundary: BoundarySpec | None = None,
                 pore_pressure=None, virtual: Particles | None = None):
        self.settings = settings
        self.kernel = CubicSplineKernel(settings.h)
        self.boundary = boundary
        if boundary is not None:
            boundary.check_band(settings.h)
        self.pore_pressure = pore_pressure
        self.n_soil = len(soil)
        self.x0 = soil.x.copy()
        self.t = 0.0
        self.step_count = 0
        self.dt = None
        self.degenerate_total = 0
        self.last_degenerate = 0
        self.dt_history = []
        self.rebuilds = 0
        self.damping: DampingParams | None = None
        self._virtual_template = virtual if virtual is not None else Particles.empty(0)
        self._virtual_template.kind[:] = Kind.VIRTUAL
        if pore_pressure is not None:
            soil.pw[:] = pore_pressure(soil.x)
        self._assemble(soil)
        self.acc = np.zeros((self.n_soil, 2))

    # -- particle set management -------------------------------------------------
    @property
    def soil(self) -> Particles:
        return self.particles.take(slice(0, self.n_soil))

    def _assemble(self, soil: Particles):
        width = self.boundary.band + self.settings.skin if self.boundary is not None else 0.0
        if self.boundary is not None:
            self.gmap = ghost_map(soil.x, self.boundary, width)
        else:
            self.gmap = GhostMap(np.zeros(0, dtype=np.intp), np.zeros(0), np.zeros(0))
        ghosts = mirror_state(soil, self.gmap)
        ghosts.kind[:] = Kind.GHOST
        virtual = self._virtual_template.copy()
        self.particles = Particles.concat(soil, ghosts, virtual)
        self.sl_ghost = slice(self.n_soil, self.n_soil + len(ghosts))
        self.sl_virtual = slice(self.n_soil + len(ghosts), len(self.particles))
        self.vlink = VirtualLink.build(virtual.x, soil.x)
        self._vneed = np.zeros(self.n_soil, dtype=np.bool_)
        self._vneed[self.vlink.nearest] = True
        self.table = build_neighbors(self.particles, self.settings.h, skin=self.settings.skin, kernel=self.kernel)
        self.rebuilds += 1
        self.kind32 = self.particles.kind.astype(np.int64)
        self._refresh_boundary()

    def _refresh_boundary(self, stress=True):
        p = self.particles
        soil = self._soil_view()
        if self.sl_ghost.stop > self.sl_ghost.start:
            ghosts = _SliceView(p, self.sl_ghost)
            mirror_state(soil, self.gmap, out=ghosts)
        if stress and self.sl_virtual.stop > self.sl_virtual.start:
            virtual = _SliceView(p, self.sl_virtual)
            grads = None
            if self.settings.virtual_stress == "linear":
                t = self.table
                grads = _fast.soil_field_gradients(
                    self.n_soil, t.i, t.j, t.r_ab, t.grad, p.volume, stress_fields(soil), MAX_CONDITION, self._vneed
                )
            assign_virtual_stress(virtual, soil, self.vlink, copy_pressure=self.pore_pressure is None,
                                  gradients=grads)
            if self.pore_pressure is not None:
                virtual.pw[:] = self.pore_pressure(virtual.x)

    def _soil_view(self):
        return _SliceView(self.particles, slice(0, self.n_soil))

    def _update_neighbors(self):
        x = self.particles.x
        if self.table.needs_rebuild(x):
            self._assemble(self.particles.take(slice(0, self.n_soil)).copy())
        else:
            t = self.table
            t.r_ab, t.dist, t.w, t.grad = _fast.pair_geometry(x, t.i, t.j, self.kernel.h, self.kernel.alpha)

    # -- physics -------------------------------------------------------------------
    def _gradients(self):
        t = self.table
        if self.settings.switches.kernel_correction:
            grad, _, n_bad = _fast.corrected_gradients(
                t.n, t.i, t.j, t.r_ab, t.grad, self.particles.volume, self.kind32, MAX_CONDITION, MIN_NEIGHBORS
            )
            self.last_degenerate = int(n_bad)
            self.degenerate_total += int(n_bad)
            return grad
        return t.grad

    def _acceleration(self, grad, dt):
        s = self.settings
        st = s.stabilization or StabilizationParams(viscosity=False)
        p, t = self.particles, self.table
        n = self.n_soil
        w_ref = float(self.kernel.w(st.spacing if st.spacing else s.spacing))
        acc = _fast.accelerations(
            t.n, t.i, t.j, p.v, p.m, p.rho, p.sigma, p.pw, t.r_ab, t.dist, t.w, grad, self.kind32,
            s.switches.stress_form is StressForm.RHOAB,
            s.switches.pwater_form is PoreWaterForm.CORRECTED,
            self.kernel.h, s.material.G, st.alpha_visc, st.beta_visc, st.viscosity,
            st.artificial_stress, st.eps_as, st.n_as, w_ref,
        )[:n]
        acc += np.asarray(s.gravity, dtype=float)
        d = self.damping
        if s.switches.damping_on and d is not None and d.active_phase and d.xi > 0:
            acc += damping_force(p.v[:n], d.xi, dt)
        bad = ~np.isfinite(acc).all(axis=1)
        if bad.any():
            raise SimulationDivergedError(
                "non-finite acceleration", step=self.step_count, particle=int(np.flatnonzero(bad)[0]),
                field="acceleration",
            )
        return acc

    def initialize(self, damping: DampingParams | None = None):
        """Compute the first acceleration and time step."""
        self.damping = damping
        self.dt = stable_dt(self.particles, self.settings.h, self.settings.cfl, self.settings.material.G)
        grad = self._gradients()
        self.acc = self._acceleration(grad, self.dt)

    def set_damping(self, damping: DampingParams | None):
        """Switch damping on or off and refresh the stored acceleration."""
        self.damping = damping
        if self.dt is not None:
            self.acc = self._acceleration(self._gradients(), self.dt)

    def refresh(self):
        """Re-derive boundary particles after the soil state was edited in place."""
        self._refresh_boundary()
        if self.dt is not None:
            self.acc = self._acceleration(self._gradients(), self.dt)

    def stable_dt(self):
        return stable_dt(self.particles, self.settings.h, self.settings.cfl, self.settings.material.G)

    def step(self, dt=None):
        """Advance one step; returns the step size used."""
        if self.dt is None:
            self.initialize(self.damping)
        if dt is None:
            if self.step_count % self.settings.dt_every == 0:
                self.dt = self.stable_dt()
                self.dt_history.append((self.t, self.dt))
            dt = self.dt
        else:
            self.dt = dt
        n = self.n_soil
        p = self.particles
        v_half = p.v[:n] + 0.5 * dt * self.acc
        p.x[:n] += dt * v_half
        p.v[:n] = v_half
        if self.pore_pressure is not None:
            p.pw[:n] = self.pore_pressure(p.x[:n])
        self._update_neighbors()
        p = self.particles
        self._refresh_boundary(stress=False)

        grad = self._update_material(dt)
        self.acc = self._acceleration(grad, dt)
        p.v[:n] = v_half + 0.5 * dt * self.acc
        self.t += dt
        self.step_count += 1
        self._check_finite()
        return dt

    def _update_material(self, dt):
        p = self.particles
        n = self.n_soil
        grad = self._gradients()
        t = self.table
        lgrad, drho = _fast.kinematics(t.n, t.i, t.j, p.v, p.m, p.rho, grad)
        eps = 0.5 * (lgrad + np.swapaxes(lgrad, 1, 2))
        omega = 0.5 * (lgrad - np.swapaxes(lgrad, 1, 2))
        p.sigma[:n], p.sigma_zz[:n] = stress_increment(
            p.sigma[:n], p.sigma_zz[:n], eps[:n], omega[:n], dt, self.settings.material
        )
        if self.settings.continuity:
            p.rho[:n] += dt * drho[:n]
        self._refresh_boundary()
        return grad

    def update_material(self, dt):
        """Advance stress and density by ``dt`` from the current positions and velocities.

        This is the constitutive half of :meth:`step` without the kick and
        drift, for driving the particles with a prescribed motion.
        """
        self._update_neighbors()
        self._refresh_boundary(stress=False)
        self._update_material(dt)
        self.t += dt
        self.step_count += 1
        self._check_finite()

    def _check_finite(self):
        p = self.particles
        n = self.n_soil
        checks = (
            ("x", p.x[:n].reshape(n, -1)),
            ("v", p.v[:n].reshape(n, -1)),
            ("sigma", p.sigma[:n].reshape(n, -1)),
            ("rho", p.rho[:n].reshape(n, -1)),
        )
        for name, arr in checks:
            bad = ~np.isfinite(arr).all(axis=1)
            if name == "rho":
                bad |= ~(arr[:, 0] > 0)
            if bad.any():
                raise SimulationDivergedError(
                    f"non-finite {name}", step=self.step_count, particle=int(np.flatnonzero(bad)[0]), field=name
                )

    # -- diagnostics -----------------------------------------------------------------
    def kinetic_energy(self):
        p = self.particles
        n = self.n_soil
        return float(0.5 * np.sum(p.m[:n] * np.einsum("nk,nk->n", p.v[:n], p.v[:n])))

    def max_speed(self):
        v = self.particles.v[: self.n_soil]
        return float(np.sqrt(np.max(np.einsum("nk,nk->n", v, v))))

    def momentum(self):
        p = self.particles
        n = self.n_soil
        return np.sum(p.m[:n, None] * p.v[:n], axis=0)


class _SliceView(Particles):
    """Particles whose arrays are views into a slice of a larger set."""

    def __init__(self, parent: Particles, sl: slice):
        super().__init__(
            x=parent.x[sl], v=parent.v[sl], rho=parent.rho[sl], rho0=parent.rho0[sl], m=parent.m[sl],
            sigma=parent.sigma[sl], sigma_zz=parent.sigma_zz[sl], pw=parent.pw[sl], kind=parent.kind[sl],
            material_id=parent.material_id[sl],
        )


def shepard_interpolate(particles: Particles, kernel: CubicSplineKernel, points, values):
    """Kernel-weighted average of ``values`` (n, ...) at ``points`` over soil particles.

    Weights ``V_b W(|p - x_b|)`` are normalised to sum to one; points with no
    soil particle in range return NaN.
    """
    soil = particles.kind == Kind.SOIL
    xs = particles.x[soil]
    vol = particles.volume[soil]
    vals = np.asarray(values)[soil]
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = []
    for pt in points:
        d = np.sqrt(np.sum((xs - pt) ** 2, axis=1))
        near = d < kernel.radius
        w = vol[near] * kernel.w(d[near])
        tot = w.sum()
        if tot <= 0:
            out.append(np.full(vals.shape[1:], np.nan))
        else:
            out.append(np.tensordot(w, vals[near], axes=(0, 0)) / tot)
    return np.array(out)
