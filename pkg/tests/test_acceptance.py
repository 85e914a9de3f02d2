"""Acceptance criteria 1-9.

Each test records one verdict through ``record_criterion``; the terminal
summary prints one PASS/FAIL line per criterion. The long foundation and
embankment runs are shared through session fixtures, so the whole module
takes several minutes on one core.
"""

import dataclasses
import time

import numpy as np
import pytest

from sphsoil.constitutive import MaterialParams
from sphsoil.engine import Simulation, SolverSettings
from sphsoil.io import read_probes
from sphsoil.momentum import FormulationSwitch, PoreWaterForm, StressForm
from sphsoil.particles import build_neighbors
from sphsoil.runner import run_scenario
from sphsoil.scenarios import (
    Formulation,
    LoadingPhase,
    analytic_vertical_stress,
    build_simulation,
    embankment_polygon,
    submerged_foundation,
    two_side_embankment,
)
from sphsoil.sph_ops import GradientForm, sph_gradient

from conftest import lattice, record_criterion

SPACING = 0.2
# oscillation amplitude at 2 s is measured over the window [2 - W, 2]; W exceeds the
# fundamental period of the 6 m column (about 0.23 s)
AMPLITUDE_WINDOW = 0.25


# -- shared runs -----------------------------------------------------------------------


@pytest.fixture(scope="session")
def foundation(tmp_path_factory):
    """Cached runs of the submerged foundation, keyed by variant name."""
    cache = {}
    variants = {
        "base": dict(),
        "repeat": dict(),
        "xi0": dict(xi=0.0, duration=2.0, early_exit=False),
        # the slowest damping needs longer than the default 4 s cap to settle
        "xi0.001": dict(xi=0.001, duration=10.0),
        "xi0.005": dict(xi=0.005),
        "uncorrected": dict(formulation=Formulation(kernel_correction=False)),
        "rho2": dict(formulation=Formulation(stress_form="rho2")),
        "conventional": dict(formulation=Formulation(pwater="conventional")),
    }

    def get(name):
        if name not in cache:
            opts = dict(variants[name])
            overrides = {k: opts.pop(k) for k in ("formulation",) if k in opts}
            cfg = submerged_foundation(**overrides)
            out = tmp_path_factory.mktemp(f"foundation_{name}")
            cache[name] = run_scenario(cfg, out, figures=False, **opts), out
        return cache[name]

    return get


@pytest.fixture(scope="session")
def embankment(tmp_path_factory):
    cache = {}

    def get(pwater):
        if pwater not in cache:
            cfg = two_side_embankment(formulation=Formulation(pwater=pwater))
            out = tmp_path_factory.mktemp(f"embankment_{pwater}")
            cache[pwater] = run_scenario(cfg, out, figures=False)
        return cache[pwater]

    return get


def probe(result, label):
    return next(s for s in result.probes if s.label == label)


def targets(cfg, series):
    x, y = series.position
    eff, pw, tot = analytic_vertical_stress(np.array([y]), cfg.surface_level(), cfg.water_level, cfg.material)
    return float(eff[0]), float(pw[0]), float(tot[0])


def rel(value, target):
    return abs(value - target) / abs(target)


# -- 1 ---------------------------------------------------------------------------------


def test_criterion_1_linear_completeness():
    p = lattice(50, 20, dx=SPACING)
    c0, c1, c2 = 2.5, -4.0, 7.25
    f = c0 + c1 * p.x[:, 0] + c2 * p.x[:, 1]
    sph_gradient(f, p, build_neighbors(p, 1.2 * SPACING))  # compile once
    t0 = time.perf_counter()
    table = build_neighbors(p, 1.2 * SPACING)
    g = sph_gradient(f, p, table, GradientForm.DIFFERENCE, corrected=True)
    elapsed = time.perf_counter() - t0
    err = np.max(np.abs(g - [c1, c2]) / np.abs([c1, c2]))
    ok = err < 1e-10 and elapsed < 1.0
    record_criterion(1, ok, f"max relative gradient error {err:.2e} over {len(p)} particles in {elapsed:.3f} s")
    assert ok


# -- 2 ---------------------------------------------------------------------------------


def _pore_block_acceleration(P, pwater):
    mat = MaterialParams(E=15e6, nu=0.33, gamma_sat=20e3, gamma_w=9.81e3)
    soil = lattice(30, 15, dx=SPACING, rho=mat.rho_sat)
    settings = SolverSettings(
        h=1.2 * SPACING, spacing=SPACING, material=mat, gravity=(0.0, 0.0),
        switches=FormulationSwitch(pwater_form=pwater),
    )
    sim = Simulation(soil, settings, pore_pressure=lambda x: np.full(len(x), -P))
    sim.initialize()
    return sim.particles.x[: sim.n_soil], sim.acc, mat.rho_sat


def test_criterion_2_instability_reproduction():
    t0 = time.perf_counter()
    pressures = np.array([1e4, 5e4, 1e5])
    outward = []
    for P in pressures:
        x, acc, rho = _pore_block_acceleration(P, PoreWaterForm.CONVENTIONAL)
        top = np.isclose(x[:, 1], x[:, 1].max())
        assert np.all(acc[top, 1] > 0), "conventional surface accelerations must point outward"
        outward.append(acc[top, 1].mean())
    outward = np.array(outward)
    slope, icpt = np.polyfit(pressures, outward, 1)
    fit = slope * pressures + icpt
    r2 = 1.0 - np.sum((outward - fit) ** 2) / np.sum((outward - outward.mean()) ** 2)
    worst = 0.0
    for P in pressures:
        x, acc, rho = _pore_block_acceleration(P, PoreWaterForm.CORRECTED)
        worst = max(worst, np.max(np.abs(acc)) / (P / rho))
    elapsed = time.perf_counter() - t0
    ok = r2 > 0.999 and slope > 0 and worst < 1e-12 and elapsed < 5.0
    record_criterion(
        2, ok,
        f"conventional outward accel R2={r2:.6f} slope={slope:.3e} (m/s2)/Pa; "
        f"corrected max|a|/(P/rho)={worst:.1e}; {elapsed:.2f} s",
    )
    assert ok


# -- 3 ---------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_3_submerged_foundation(foundation):
    result, _ = foundation("base")
    cfg = submerged_foundation()
    assert result.status == 0
    assert result.manifest["particles"]["soil"] == 3750
    assert cfg.h == pytest.approx(0.24)
    parts, ok = [], True
    for label in ("A", "B"):
        s = probe(result, label)
        eff_t, pw_t, tot_t = targets(cfg, s)
        eff, pw, tot = s.final("syy_eff"), s.final("pw"), s.final("syy")
        e_eff, e_tot = rel(eff, eff_t), rel(tot, tot_t)
        consistent = abs(tot - (eff + pw)) <= 1e-9 * abs(tot)
        ok &= e_eff < 0.05 and e_tot < 0.05 and consistent
        parts.append(f"{label} depth {cfg.surface_level() - s.position[1]:.1f} m: eff {eff / 1e3:.2f} kPa "
                     f"({100 * e_eff:.2f}% err), total {tot / 1e3:.2f} kPa ({100 * e_tot:.2f}% err)")
    parts.append(f"loading ended at {result.manifest['t_end']:.2f} s")
    record_criterion(3, ok, "; ".join(parts))
    assert ok


# -- 4 ---------------------------------------------------------------------------------


def oscillation_amplitudes(series, field="syy_eff", t_eval=2.0):
    """``(amplitude at t_eval, peak amplitude)`` about the mean of the final window."""
    t = series.array("t")
    v = series.array(field)
    keep = t <= t_eval + 1e-9
    t, v = t[keep], v[keep]
    window = t >= t_eval - AMPLITUDE_WINDOW
    ref = v[window].mean()
    return float(np.max(np.abs(v[window] - ref))), float(np.max(np.abs(v - ref)))


@pytest.mark.slow
def test_criterion_4_damping(foundation):
    damped, _ = foundation("base")
    free, _ = foundation("xi0")
    parts, ok = [], True
    for label in ("A", "B"):
        a_d, peak_d = oscillation_amplitudes(probe(damped, label))
        a_f, peak_f = oscillation_amplitudes(probe(free, label))
        ok &= a_d / peak_d < 0.05 and a_f / peak_f > 0.25
        parts.append(f"{label}: xi=0.002 ratio {a_d / peak_d:.4f}, xi=0 ratio {a_f / peak_f:.3f}")
    finals = {}
    for name, xi in (("xi0.001", 0.001), ("base", 0.002), ("xi0.005", 0.005)):
        res, _ = foundation(name)
        assert res.status == 0
        finals[xi] = np.array([probe(res, label).final("syy_eff") for label in ("A", "B")])
    ref = finals[0.002]
    spread = max(np.max(np.abs(v - ref) / np.abs(ref)) for v in finals.values())
    ok &= spread < 0.01
    parts.append(f"final stress spread over xi in {{0.001, 0.002, 0.005}}: {100 * spread:.3f}%")
    record_criterion(4, ok, "; ".join(parts))
    assert ok


# -- 5 ---------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_5_kernel_correction(foundation):
    cfg = submerged_foundation()
    corrected, _ = foundation("base")
    raw, _ = foundation("uncorrected")
    parts, ok = [], True
    for label in ("A", "B"):
        target = targets(cfg, probe(corrected, label))[0]
        e_c = rel(probe(corrected, label).final("syy_eff"), target)
        e_u = rel(probe(raw, label).final("syy_eff"), target)
        ok &= e_u > e_c
        parts.append(f"{label}: corrected {100 * e_c:.2f}%, uncorrected {100 * e_u:.2f}%")
    record_criterion(5, ok, "; ".join(parts))
    assert ok


# -- 6 ---------------------------------------------------------------------------------


def _first_acceleration(stress_form):
    cfg = submerged_foundation(loading=LoadingPhase(method="k0"))
    sw = cfg.formulation.switches()
    sim = build_simulation(cfg, dataclasses.replace(sw, stress_form=stress_form))
    sim.initialize()
    return sim.acc.copy()


@pytest.mark.slow
def test_criterion_6_formulation_equivalence(foundation):
    a1 = _first_acceleration(StressForm.RHOAB)
    a2 = _first_acceleration(StressForm.RHO2)
    step1 = float(np.max(np.abs(a1 - a2)) / np.max(np.abs(a1)))
    rhoab, _ = foundation("base")
    rho2, _ = foundation("rho2")
    diffs = []
    for label in ("A", "B"):
        for field in ("syy_eff", "sxx_eff", "syy"):
            x, y = probe(rhoab, label).final(field), probe(rho2, label).final(field)
            diffs.append(abs(x - y) / abs(x))
    end = max(diffs)
    ok = step1 < 1e-12 and end < 1e-3
    record_criterion(6, ok, f"step-1 acceleration relative difference {step1:.1e}; "
                            f"final probe stress difference {100 * end:.4f}%")
    assert ok


# -- 7 ---------------------------------------------------------------------------------


def invariants(sigma, sigma_zz):
    tr = sigma[:, 0, 0] + sigma[:, 1, 1] + sigma_zz
    mean = tr / 3.0
    dev = [sigma[:, 0, 0] - mean, sigma[:, 1, 1] - mean, sigma_zz - mean]
    j2 = 0.5 * (dev[0] ** 2 + dev[1] ** 2 + dev[2] ** 2) + sigma[:, 0, 1] ** 2
    return tr, j2


def test_criterion_7_jaumann_objectivity():
    mat = MaterialParams(E=15e6, nu=0.33)
    soil = lattice(10, 10, dx=SPACING, rho=mat.rho_sat)
    sig0 = np.array([[-80e3, 25e3], [25e3, -30e3]])
    soil.sigma[:] = sig0
    soil.sigma_zz[:] = -40e3
    sim = Simulation(soil, SolverSettings(h=1.2 * SPACING, spacing=SPACING, material=mat, gravity=(0.0, 0.0)))
    tr0, j20 = invariants(sim.particles.sigma[: sim.n_soil].copy(), sim.particles.sigma_zz[: sim.n_soil].copy())
    x0 = sim.x0.copy()
    centre = x0.mean(axis=0)
    omega = 2.0  # rad/s
    n_steps = 2000
    dt = 0.5 * np.pi / omega / n_steps
    n = sim.n_soil
    for k in range(1, n_steps + 1):
        th = omega * k * dt
        rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        r = (x0 - centre) @ rot.T
        sim.particles.x[:n] = centre + r
        sim.particles.v[:n] = omega * np.stack([-r[:, 1], r[:, 0]], axis=1)
        sim.update_material(dt)
    p = sim.particles
    tr, j2 = invariants(p.sigma[:n], p.sigma_zz[:n])
    e_tr = float(np.max(np.abs(tr - tr0) / np.abs(tr0)))
    e_j2 = float(np.max(np.abs(j2 - j20) / np.abs(j20)))
    # after a quarter turn the in-plane tensor is the rotated initial tensor
    q = np.array([[0.0, -1.0], [1.0, 0.0]])
    turned = float(np.max(np.abs(p.sigma[:n] - q @ sig0 @ q.T)) / np.abs(sig0).max())
    ok = e_tr < 1e-4 and e_j2 < 1e-4
    record_criterion(7, ok, f"90 deg rigid rotation in {n_steps} steps: max rel change tr {e_tr:.1e}, "
                            f"J2 {e_j2:.1e}; deviation from rotated tensor {turned:.1e}")
    assert ok


# -- 8 ---------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_8_embankment(embankment):
    corrected = embankment("corrected")
    cfg = two_side_embankment()
    n = corrected.manifest["particles"]["soil"]
    ok = corrected.status == 0 and abs(n - 8454) / 8454 < 0.02
    parts = [f"{n} particles, corrected run {corrected.manifest['status']} at t={corrected.manifest['t_end']:.2f} s"]
    for label in ("FL", "FR"):
        s = probe(corrected, label)
        x, y = s.position
        surface = float(cfg.surface_level(np.array([x]))[0])
        eff_t, _, tot_t = (float(v[0]) for v in analytic_vertical_stress(np.array([y]), surface, cfg.water_level,
                                                                          cfg.material))
        e_eff, e_tot = rel(s.final("syy_eff"), eff_t), rel(s.final("syy"), tot_t)
        ok &= e_eff < 0.10 and e_tot < 0.10
        parts.append(f"{label}: eff err {100 * e_eff:.2f}%, total err {100 * e_tot:.2f}%")

    conventional = embankment("conventional")
    poly = embankment_polygon()
    toes = [pt for pt in poly.vertices() if np.isclose(pt[1], 4.0) and 0.0 < pt[0] < 60.0]
    assert len(toes) == 2 and all(pt[1] < cfg.water_level for pt in toes)
    for run, name in ((conventional, "conventional"), (corrected, "corrected")):
        x0, sep = run.recorder.separation_field()
        vals = []
        for tx, ty in toes:
            near = (np.abs(x0[:, 0] - tx) <= 2.0) & (x0[:, 1] < cfg.water_level)
            vals.append(float(sep[near].max()))
        if name == "conventional":
            conv = vals
            diverged = run.status != 0
        else:
            corr = vals
    toe_ok = all(c > 1e-6 for c in conv) or diverged
    ok &= toe_ok
    parts.append("toe separation conventional " + ", ".join(f"{v:.2e}" for v in conv)
                 + " m vs corrected " + ", ".join(f"{v:.2e}" for v in corr) + " m"
                 + (" (conventional diverged)" if diverged else ""))
    record_criterion(8, ok, "; ".join(parts))
    assert ok


# -- 9 ---------------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_9_determinism(foundation):
    first, out1 = foundation("base")
    second, out2 = foundation("repeat")
    assert first.manifest["scenario"]["deterministic"]
    a = (out1 / "probes.csv").read_bytes()
    b = (out2 / "probes.csv").read_bytes()
    snap = (out1 / "snapshot_final.csv").read_bytes() == (out2 / "snapshot_final.csv").read_bytes()
    ok = a == b and snap
    record_criterion(9, ok, f"probe files identical: {a == b} ({len(a)} bytes); final snapshots identical: {snap}")
    assert ok


# -- surface expulsion metric on the foundation ----------------------------------------


@pytest.mark.slow
def test_expulsion_metric_separates_formulations(foundation):
    corrected, _ = foundation("base")
    conventional, out = foundation("conventional")
    c = corrected.manifest["surface_expulsion"]["max_separation_m"]
    v = conventional.manifest["surface_expulsion"]["max_separation_m"]
    print(f"foundation surface separation: corrected {c:.2e} m, conventional {v:.2e} m")
    assert c < 0.01 * SPACING
    assert v > 0.0 and v > c
    assert read_probes(out / "probes.csv")
