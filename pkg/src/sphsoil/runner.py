"""Run a scenario end to end: loading, optional analysis phase, outputs."""

from __future__ import annotations

import logging
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from sphsoil import __version__
from sphsoil.engine import Simulation
from sphsoil.errors import SimulationDivergedError
from sphsoil.io import (
    PROBE_FIELDS,
    ProbeSeries,
    dump_scenario,
    write_manifest,
    write_probes,
    write_snapshot,
    write_vtk,
)
from sphsoil.momentum import FormulationSwitch
from sphsoil.scenarios import ScenarioConfig, build_simulation, free_phase, gravity_load_phase, surface_mask

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DIVERGED = 3
#: Uplift of a surface particle beyond this many spacings counts as expulsion.
EXPULSION_SPACINGS = 5.0


class ProbeSampler:
    """Shepard-normalised kernel interpolation of soil fields at fixed points."""

    def __init__(self, probes):
        self.series = [ProbeSeries(p.label, p.position) for p in probes]
        self.points = np.array([p.position for p in probes], dtype=float).reshape(-1, 2)

    def sample(self, sim: Simulation):
        if not self.series:
            return
        n = sim.n_soil
        p = sim.particles
        xs = p.x[:n]
        tree = cKDTree(xs)
        vol = p.volume[:n]
        fields = {
            "sxx_eff": p.sigma[:n, 0, 0], "syy_eff": p.sigma[:n, 1, 1], "sxy_eff": p.sigma[:n, 0, 1],
            "szz_eff": p.sigma_zz[:n], "pw": p.pw[:n], "vx": p.v[:n, 0], "vy": p.v[:n, 1],
        }
        for s, pt, near in zip(self.series, self.points, tree.query_ball_point(self.points, sim.kernel.radius)):
            near = np.sort(np.asarray(near, dtype=np.intp))
            w = vol[near] * sim.kernel.w(np.linalg.norm(xs[near] - pt, axis=1))
            tot = w.sum()
            rec = {k: (float(np.dot(w, v[near]) / tot) if tot > 0 else float("nan")) for k, v in fields.items()}
            for comp in ("sxx", "syy", "szz"):
                rec[comp] = rec[f"{comp}_eff"] + rec["pw"]
            rec["sxy"] = rec["sxy_eff"]
            s.append(sim.t, rec)


@dataclass
class Recorder:
    """Per-step bookkeeping: probe samples, energy history and surface uplift."""

    sim: Simulation
    probe_interval: float
    sampler: ProbeSampler
    snapshot_interval: float = 0.0
    snapshot_dir: Path | None = None
    vtk: bool = False
    energy: list = field(default_factory=list)
    next_sample: float = 0.0
    next_snapshot: float = 0.0
    snapshots: list = field(default_factory=list)
    last_good: tuple | None = None

    def __post_init__(self):
        sim = self.sim
        dx = sim.settings.spacing
        surface = np.flatnonzero(surface_mask(sim.x0, dx))
        # partner: the particle one spacing below each surface particle
        dist, below = cKDTree(sim.x0).query(sim.x0[surface] - np.array([0.0, dx]))
        keep = dist < 0.5 * dx
        self.surface = surface[keep]
        self.below = below[keep]
        self.gap0 = np.linalg.norm(sim.x0[self.surface] - sim.x0[self.below], axis=1)
        self.max_uplift = np.full(len(self.surface), -np.inf)
        self.max_separation = np.full(len(self.surface), -np.inf)

    def __call__(self, sim: Simulation):
        x = sim.particles.x
        up = x[self.surface, 1] - sim.x0[self.surface, 1]
        gap = np.linalg.norm(x[self.surface] - x[self.below], axis=1) - self.gap0
        np.maximum(self.max_uplift, up, out=self.max_uplift)
        np.maximum(self.max_separation, gap, out=self.max_separation)
        if sim.t >= self.next_sample - 1e-12:
            self.sampler.sample(sim)
            self.energy.append((sim.t, sim.kinetic_energy(), sim.max_speed(), sim.dt or 0.0))
            self.last_good = (sim.t, sim.particles.take(slice(0, sim.n_soil)).copy())
            while self.next_sample <= sim.t + 1e-12:
                self.next_sample += self.probe_interval
        if self.snapshot_interval > 0 and self.snapshot_dir is not None and sim.t >= self.next_snapshot - 1e-12:
            k = len(self.snapshots)
            path = self.snapshot_dir / f"snapshot_{k:05d}.csv"
            write_snapshot(path, sim.particles.take(slice(0, sim.n_soil)), sim.t)
            if self.vtk:
                write_vtk(path.with_suffix(".vtk"), sim.particles.take(slice(0, sim.n_soil)), sim.t)
            self.snapshots.append(path.name)
            while self.next_snapshot <= sim.t + 1e-12:
                self.next_snapshot += self.snapshot_interval

    def expulsion(self, spacing, diverged):
        """Surface expulsion metric.

        ``max_separation_m`` is the largest growth of the gap between a
        surface particle and the particle beneath it, clipped at zero; a
        surface layer pushed off the soil shows up here even when the whole
        body settles. ``expelled`` flags divergence or a separation or
        uplift beyond five spacings.
        """
        limit = EXPULSION_SPACINGS * spacing
        if len(self.surface) == 0:
            return {"max_separation_m": 0.0, "max_uplift_m": 0.0, "particle": None, "x0": None,
                    "threshold_m": limit, "expelled": bool(diverged)}
        sep = np.maximum(self.max_separation, 0.0)
        k = int(np.argmax(sep))
        uplift = max(float(np.max(self.max_uplift)), 0.0)
        return {
            "max_separation_m": float(sep[k]),
            "max_uplift_m": uplift,
            "particle": int(self.surface[k]),
            "x0": [float(c) for c in self.sim.x0[self.surface[k]]],
            "threshold_m": limit,
            "expelled": bool(diverged or sep[k] > limit or uplift > limit),
        }

    def separation_field(self):
        """``(x0, max separation)`` of every tracked surface particle."""
        return self.sim.x0[self.surface], np.maximum(self.max_separation, 0.0)


@dataclass
class RunResult:
    status: int
    manifest: dict
    probes: list
    simulation: Simulation
    recorder: Recorder
    error: SimulationDivergedError | None = None


def run_scenario(cfg: ScenarioConfig, outdir=None, switches: FormulationSwitch | None = None,
                 xi: float | None = None, duration: float | None = None, early_exit: bool | None = None,
                 figures: bool | None = None) -> RunResult:
    """Build, run and (when ``outdir`` is given) write every output of ``cfg``.

    Keyword overrides take precedence over the scenario file. Divergence is
    caught: the last good state is written and the status is
    :data:`EXIT_DIVERGED`.
    """
    wall0 = time.perf_counter()
    out = Path(outdir) if outdir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    loading = cfg.loading
    xi = loading.xi if xi is None else xi
    duration = loading.duration if duration is None else duration
    early_exit = loading.early_exit if early_exit is None else early_exit
    sim = build_simulation(cfg, switches)
    sampler = ProbeSampler(cfg.probes)
    rec = Recorder(sim, cfg.output.probe_interval, sampler, cfg.output.snapshot_interval,
                   out, cfg.output.vtk)
    rec(sim)
    phases = []
    error = None
    try:
        if loading.method == "gravity_damped":
            res = gravity_load_phase(sim, xi, duration, early_exit, loading.v_threshold, loading.hold_steps,
                                     loading.min_duration, on_step=rec)
            phases.append({"phase": "loading", "xi": xi, **res.__dict__})
        if cfg.analysis_duration > 0:
            res = free_phase(sim, cfg.analysis_duration, on_step=rec)
            phases.append({"phase": "analysis", **res.__dict__})
        if not rec.energy or rec.energy[-1][0] < sim.t:
            sampler.sample(sim)
            rec.energy.append((sim.t, sim.kinetic_energy(), sim.max_speed(), sim.dt or 0.0))
    except SimulationDivergedError as exc:
        log.error("simulation diverged: %s", exc)
        error = exc
    status = EXIT_DIVERGED if error is not None else EXIT_OK
    sw = sim.settings.switches
    manifest = {
        "sphsoil_version": __version__,
        "python": platform.python_version(),
        "status": "diverged" if error else "ok",
        "exit_code": status,
        "scenario": cfg.to_dict(),
        "effective_switches": {
            "pwater": sw.pwater_form.value, "stress_form": sw.stress_form.value,
            "kernel_correction": sw.kernel_correction, "xi": xi, "loading_duration": duration,
            "early_exit": early_exit,
        },
        "particles": {"soil": sim.n_soil, "total": len(sim.particles),
                      "ghost": sim.sl_ghost.stop - sim.sl_ghost.start,
                      "virtual": sim.sl_virtual.stop - sim.sl_virtual.start},
        "h": cfg.h,
        "phases": phases,
        "t_end": sim.t,
        "steps": sim.step_count,
        "dt_history": [[t, d] for t, d in sim.dt_history],
        "dt_min": min((d for _, d in sim.dt_history), default=None),
        "dt_max": max((d for _, d in sim.dt_history), default=None),
        "counters": {
            "degenerate_corrections": sim.degenerate_total,
            "neighbour_rebuilds": sim.rebuilds,
        },
        "surface_expulsion": rec.expulsion(cfg.spacing, error is not None),
        "divergence": None if error is None else {
            "message": str(error), "step": error.step, "particle": error.particle, "field": error.field,
        },
        "wall_time_s": None,
        "outputs": {},
    }
    if out is not None:
        _write_outputs(out, cfg, sim, rec, manifest, error, figures)
    manifest["wall_time_s"] = time.perf_counter() - wall0
    if out is not None:
        write_manifest(out / "manifest.json", _strip_wall_time(manifest) if cfg.deterministic else manifest)
    return RunResult(status, manifest, sampler.series, sim, rec, error)


def _strip_wall_time(manifest):
    # deterministic runs keep the manifest byte-identical across repeats
    return {k: v for k, v in manifest.items() if k not in ("wall_time_s", "python")}


def _write_outputs(out, cfg, sim, rec, manifest, error, figures):
    from sphsoil.report import probe_report, render_figures, write_report

    outputs = manifest["outputs"]
    (out / "scenario.yaml").write_text(dump_scenario(cfg))
    outputs["scenario"] = "scenario.yaml"
    write_probes(out / "probes.csv", rec.sampler.series)
    outputs["probes"] = "probes.csv"
    with open(out / "energy.csv", "w") as fh:
        fh.write("t[s],kinetic_energy[J/m],max_speed[m/s],dt[s]\n")
        for row in rec.energy:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    outputs["energy"] = "energy.csv"
    if error is not None and rec.last_good is not None:
        t_good, good = rec.last_good
        write_snapshot(out / "snapshot_last_good.csv", good, t_good)
        outputs["snapshot"] = "snapshot_last_good.csv"
    else:
        soil = sim.particles.take(slice(0, sim.n_soil))
        write_snapshot(out / "snapshot_final.csv", soil, sim.t)
        outputs["snapshot"] = "snapshot_final.csv"
        if cfg.output.vtk:
            write_vtk(out / "snapshot_final.vtk", soil, sim.t)
            outputs["vtk"] = "snapshot_final.vtk"
    if rec.snapshots:
        outputs["snapshots"] = list(rec.snapshots)
    rows = probe_report(rec.sampler.series, cfg)
    write_report(out / "probe_report.csv", rows)
    outputs["probe_report"] = "probe_report.csv"
    manifest["probe_report"] = rows
    if figures if figures is not None else cfg.output.figures:
        outputs["figures"] = render_figures(out, rec.sampler.series, rec.energy, sim, rows)


__all__ = ["EXIT_DIVERGED", "EXIT_INVALID", "EXIT_OK", "ProbeSampler", "RunResult", "run_scenario", "PROBE_FIELDS"]
