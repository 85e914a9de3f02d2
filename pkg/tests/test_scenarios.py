import dataclasses

import numpy as np
import pytest

from sphsoil.constitutive import MaterialParams
from sphsoil.errors import InvalidArgumentError, UnsupportedGeometryError
from sphsoil.particles import Particles
from sphsoil.scenarios import (
    LoadingPhase,
    Polygon,
    Rectangle,
    ScenarioConfig,
    analytic_vertical_stress,
    assign_pore_pressure,
    build_lattice,
    build_simulation,
    gravity_load_phase,
    hydrostatic,
    k0_initialize,
    lattice_points,
    submerged_foundation,
    surface_elevation,
    surface_mask,
    two_side_embankment,
)

MAT = MaterialParams(E=15e6, nu=0.33, gamma_sat=20e3, gamma_w=9.81e3)


def test_foundation_lattice_count_and_mass():
    p = build_lattice(Rectangle(0, 0, 25, 6), 0.2, MAT, water_level=8.0)
    assert len(p) == 3750
    np.testing.assert_allclose(p.m, MAT.rho_sat * 0.04)


def test_unit_square_half_spacing():
    assert len(build_lattice(Rectangle(0, 0, 1, 1), 0.5)) == 4


def test_surface_lattice_puts_top_row_on_surface():
    x = lattice_points(Rectangle(0, 0, 25, 6), 0.2)
    assert x[:, 1].max() == pytest.approx(6.0)
    assert x[:, 1].min() == pytest.approx(0.2)
    cell = lattice_points(Rectangle(0, 0, 25, 6), 0.2, align="cell")
    assert cell[:, 1].max() == pytest.approx(5.9)
    with pytest.raises(InvalidArgumentError):
        lattice_points(Rectangle(0, 0, 1, 1), 0.2, align="staggered")


def test_embankment_particle_count():
    cfg = two_side_embankment()
    n = len(build_lattice(cfg.geometry, cfg.spacing))
    assert abs(n - 8454) / 8454 < 0.02


def test_density_above_and_below_water():
    mat = MaterialParams(E=15e6, nu=0.25, gamma_sat=20e3, gamma_unsat=18.6e3)
    p = build_lattice(Rectangle(0, 0, 2, 4), 0.2, mat, water_level=2.0)
    wet = p.x[:, 1] <= 2.0
    np.testing.assert_allclose(p.rho[wet], mat.rho_sat)
    np.testing.assert_allclose(p.rho[~wet], mat.rho_unsat)


@pytest.mark.parametrize("y, expected", [(8.0, 0.0), (5.0, -29430.0), (9.0, 0.0)])
def test_hydrostatic_pore_pressure(y, expected):
    assert float(hydrostatic(8.0)(np.array([0.0, y]))) == pytest.approx(expected)


def test_assign_pore_pressure():
    p = Particles.from_positions([[0.0, 5.0], [0.0, 9.0]], 2000.0, 0.2)
    assign_pore_pressure(p, 8.0)
    np.testing.assert_allclose(p.pw, [-29430.0, 0.0])


def test_k0_stresses():
    mat = MaterialParams(E=15e6, nu=0.33, gamma_sat=20e3, gamma_w=9.81e3, phi=30.0)
    assert mat.k0 == pytest.approx(0.5)
    p = build_lattice(Rectangle(0, 0, 1.0, 6.0), 0.2, mat, 8.0)
    k0_initialize(p, mat, 0.2, water_level=8.0)
    top = np.isclose(p.x[:, 1], 6.0)
    np.testing.assert_array_equal(p.sigma[top], 0.0)
    at3 = np.isclose(p.x[:, 1], 3.0)
    np.testing.assert_allclose(p.sigma[at3, 1, 1], -30570.0, rtol=1e-12)
    np.testing.assert_allclose(p.sigma[at3, 0, 0], -15285.0, rtol=1e-12)
    np.testing.assert_allclose(p.sigma_zz[at3], -15285.0, rtol=1e-12)
    np.testing.assert_array_equal(p.sigma[:, 0, 1], 0.0)


def test_k0_rejects_sloping_surface():
    poly = Polygon(((0, 0), (4, 0), (4, 2), (0, 1)))
    p = build_lattice(poly, 0.2, MAT)
    with pytest.raises(UnsupportedGeometryError):
        k0_initialize(p, MAT, 0.2)


def test_layered_analytic_column():
    mat = MaterialParams(E=15e6, nu=0.25, gamma_sat=20e3, gamma_unsat=18.6e3, gamma_w=9.81e3)
    # 9 m surface, water at 6 m, point at 2 m: 3 m dry over 4 m submerged
    eff, pw, tot = analytic_vertical_stress(np.array([2.0]), 9.0, 6.0, mat)
    assert eff[0] == pytest.approx(-(18.6e3 * 3 + 10.19e3 * 4))
    assert pw[0] == pytest.approx(-9.81e3 * 4)
    assert tot[0] == pytest.approx(eff[0] + pw[0])


def test_surface_elevation_and_mask():
    cfg = two_side_embankment()
    np.testing.assert_allclose(surface_elevation(cfg.geometry, [3.0, 30.0]), [4.0, 9.0])
    x = lattice_points(Rectangle(0, 0, 1, 1), 0.2)
    mask = surface_mask(x, 0.2)
    assert mask.sum() == 5 and np.allclose(x[mask, 1], 1.0)


def test_zero_gravity_without_water_stays_zero():
    cfg = ScenarioConfig(name="still", geometry=Rectangle(0, 0, 2, 1), spacing=0.2, material=MAT)
    sim = build_simulation(cfg)
    sim.settings = dataclasses.replace(sim.settings, gravity=(0.0, 0.0))
    sim.refresh()
    gravity_load_phase(sim, 0.002, 0.05, early_exit=False)
    np.testing.assert_array_equal(sim.particles.sigma[: sim.n_soil], 0.0)


def test_gravity_phase_requires_zero_stress_and_disables_damping():
    cfg = ScenarioConfig(name="col", geometry=Rectangle(0, 0, 1, 1), spacing=0.2, material=MAT)
    sim = build_simulation(cfg)
    res = gravity_load_phase(sim, 0.002, 0.02, early_exit=False)
    assert res.reason == "duration" and sim.t >= 0.02 - 1e-12
    assert sim.damping is None
    with pytest.raises(InvalidArgumentError):
        gravity_load_phase(sim, 0.002, 0.02)


def test_k0_scenario_starts_near_equilibrium():
    cfg = ScenarioConfig(name="k0", geometry=Rectangle(0, 0, 4, 3), spacing=0.2,
                         material=MaterialParams(E=15e6, nu=0.33, gamma_sat=20e3, gamma_w=9.81e3, phi=30.0),
                         water_level=4.0, loading=LoadingPhase(method="k0"))
    sim = build_simulation(cfg)
    sim.step()
    x = sim.particles.x[: sim.n_soil]
    interior = (x[:, 0] > 1.0) & (x[:, 0] < 3.0) & (x[:, 1] > 0.8) & (x[:, 1] < 2.2)
    acc = np.linalg.norm(sim.acc[: sim.n_soil][interior], axis=1)
    assert acc.max() < 0.05 * 9.81


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        ScenarioConfig(name="x", geometry=Rectangle(0, 0, 1, 1), spacing=0.0, material=MAT)
    with pytest.raises(InvalidArgumentError):
        ScenarioConfig(name="x", geometry=Rectangle(0, 0, 1, 1), spacing=0.2, material=MAT, perturbation=0.7)
    with pytest.raises(InvalidArgumentError):
        build_lattice(Rectangle(0, 0, 0.01, 0.01), 0.2)


def test_perturbation_is_seeded():
    base = dict(name="p", geometry=Rectangle(0, 0, 1, 1), spacing=0.2, material=MAT, perturbation=0.05)
    a = build_simulation(ScenarioConfig(**base, seed=4)).particles.x
    b = build_simulation(ScenarioConfig(**base, seed=4)).particles.x
    c = build_simulation(ScenarioConfig(**base, seed=5)).particles.x
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
