import numpy as np
import pytest

from sphsoil.boundary import (
    BoundarySpec,
    EdgeCondition,
    VirtualLink,
    assign_virtual_stress,
    fixed_boundary_positions,
    generate_fixed_boundary,
    generate_ghosts,
    stress_fields,
)
from sphsoil.errors import InvalidArgumentError
from sphsoil.particles import Kind

from conftest import lattice

BOX = BoundarySpec(0.0, 2.4, 0.0, 2.0, band=0.48)


def test_conditions_coerced_from_strings():
    s = BoundarySpec(0, 1, 0, 1, left="free", bottom="free_roller")
    assert s.left is EdgeCondition.FREE and s.bottom is EdgeCondition.FREE_ROLLER


def test_degenerate_box_and_band():
    with pytest.raises(InvalidArgumentError):
        BoundarySpec(0, 0, 0, 1)
    with pytest.raises(InvalidArgumentError):
        BOX.check_band(0.3)
    BOX.check_band(0.24)


def test_ghosts_mirror_positions_velocity_and_shear():
    soil = lattice(12, 10)
    soil.v[:] = [0.3, -0.2]
    soil.sigma[:, 0, 1] = soil.sigma[:, 1, 0] = 7.0
    ghosts, gmap = generate_ghosts(soil, BOX, 0.48)
    assert (ghosts.kind == Kind.GHOST).all()
    left = gmap.wall_x == 0.0
    np.testing.assert_allclose(ghosts.x[left, 0], -soil.x[gmap.source[left], 0])
    np.testing.assert_allclose(ghosts.v[left], [[-0.3, -0.2]] * int(left.sum()))
    np.testing.assert_allclose(ghosts.sigma[left, 0, 1], -7.0)
    # every ghost lies outside the box and within the band
    outside = (ghosts.x[:, 0] < 0) | (ghosts.x[:, 0] > 2.4)
    assert outside.all()
    assert np.all(np.minimum(np.abs(ghosts.x[:, 0]), np.abs(ghosts.x[:, 0] - 2.4)) < 0.48)


def test_corner_ghosts_for_two_roller_edges():
    spec = BoundarySpec(0, 2.4, 0, 2.0, bottom="free_roller", band=0.48)
    soil = lattice(12, 10)
    soil.sigma[:, 0, 1] = soil.sigma[:, 1, 0] = 5.0
    ghosts, gmap = generate_ghosts(soil, spec, 0.48)
    corner = ~np.isnan(gmap.wall_x) & ~np.isnan(gmap.wall_y)
    assert corner.sum() == 2 * 4  # two bottom corners, 2x2 particles each within the band
    np.testing.assert_allclose(ghosts.sigma[corner, 0, 1], 5.0)  # two reflections keep the sign


def test_fixed_boundary_rows_and_offset():
    pts = fixed_boundary_positions(BOX, 0.2)
    assert len(np.unique(np.round(pts[:, 1], 9))) == 3  # ceil(0.48 / 0.2)
    assert np.all(pts[:, 1] < 0.0)
    assert pts[:, 0].min() < 0.0 and pts[:, 0].max() > 2.4
    shifted = fixed_boundary_positions(BOX, 0.2, y_offset=0.1)
    np.testing.assert_allclose(np.unique(np.round(shifted[:, 1], 9)), [-0.4, -0.2, 0.0], atol=1e-12)
    v = generate_fixed_boundary(BOX, 0.2, rho=2000.0)
    assert (v.kind == Kind.VIRTUAL).all()


def test_virtual_stress_copy_and_linear_extrapolation():
    soil = lattice(12, 10)
    soil.sigma[:, 1, 1] = -1000.0 * (2.0 - soil.x[:, 1])
    virtual = generate_fixed_boundary(BOX, 0.2, 2000.0)
    link = VirtualLink.build(virtual.x, soil.x)
    assign_virtual_stress(virtual, soil, link)
    np.testing.assert_allclose(virtual.sigma[:, 1, 1], soil.sigma[link.nearest, 1, 1])
    grads = np.zeros((len(soil), 4, 2))
    grads[:, 1, 1] = 1000.0
    assign_virtual_stress(virtual, soil, link, gradients=grads)
    np.testing.assert_allclose(virtual.sigma[:, 1, 1], -1000.0 * (2.0 - virtual.x[:, 1]), rtol=1e-12)
    np.testing.assert_array_equal(virtual.v, 0.0)
    assert stress_fields(soil).shape == (len(soil), 4)
