import numpy as np
import pytest

from ecgifoe.exceptions import EllipticityError, IoError, ParameterOutOfRange, ShapeMismatch
from ecgifoe.fem.assembly import (
    MassSolver,
    assemble_mass_2d,
    assemble_spatial_mass,
    assemble_stiffness,
    assemble_surface_gradient,
    assemble_temporal_mass,
    l2_project_p0_to_p1,
)
from ecgifoe.fem.fields import GradientField, SpaceTimeField, read_field, read_field_csv, write_field, write_field_csv
from ecgifoe.fem.temporal import apply_temporal_kernel, compose_kernels, cross_correlation_matrix, refine_kernel
from ecgifoe.fem.timegrid import TimeGrid
from ecgifoe.geometry.mesh import build_disk_mesh
from ecgifoe.geometry.tags import Region

GAUSS_X, GAUSS_W = np.polynomial.legendre.leggauss(3)


def _tent(x):
    return np.maximum(0.0, 1.0 - np.abs(x))


def _cell_integral(f, a, b):
    x = 0.5 * (b - a) * GAUSS_X + 0.5 * (a + b)
    return 0.5 * (b - a) * float(np.sum(GAUSS_W * f(x)))


def _mass_oracle(grid):
    n = grid.n_nodes
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            for c in range(grid.n_intervals):
                out[i, j] += _cell_integral(lambda x: _tent(x - i) * _tent(x - j), c, c + 1)
    return grid.step * out


def _correlation_oracle(grid, n_w, s):
    lo, hi = max(-n_w, -s), min(n_w, grid.n_intervals - s)
    out = np.zeros((2 * n_w + 1, grid.n_nodes))
    for i in range(2 * n_w + 1):
        for j in range(grid.n_nodes):
            for c in range(lo, hi):
                out[i, j] += _cell_integral(lambda x: _tent(x - (i - n_w)) * _tent(x - (j - s)), c, c + 1)
    return grid.step * out


@pytest.mark.parametrize("n_intervals", range(1, 11))
def test_temporal_mass_matches_quadrature(n_intervals):
    grid = TimeGrid(n_intervals, 0.37)
    np.testing.assert_allclose(assemble_temporal_mass(grid).toarray(), _mass_oracle(grid), rtol=0.0, atol=1e-14)


@pytest.mark.parametrize("n_intervals", range(1, 11))
def test_cross_correlation_matches_quadrature(n_intervals):
    grid = TimeGrid(n_intervals, 0.37)
    for s in range(grid.n_nodes):
        np.testing.assert_allclose(cross_correlation_matrix(grid, 2, s), _correlation_oracle(grid, 2, s), rtol=0.0, atol=1e-14)


def test_cross_correlation_rejects_bad_index():
    with pytest.raises(ShapeMismatch):
        cross_correlation_matrix(TimeGrid(4, 1.0), 2, 5)


def test_kernel_response_of_linear_signal():
    grid = TimeGrid(12, 0.25)
    u = np.tile(grid.nodes, (3, 1))
    response = apply_temporal_kernel(u, [0.0, -0.5, 0.0, 0.5, 0.0], grid)
    np.testing.assert_allclose(response[:, 2:-2], grid.step ** 2, rtol=1e-12)


def test_refined_kernel_gives_consistent_response():
    coarse = TimeGrid(12, 0.25)
    fine = coarse.refine(2)
    kernel = np.array([0.1, -0.5, 0.3, 0.5, -0.2])
    u_coarse = 1.0 + 2.0 * coarse.nodes
    u_fine = 1.0 + 2.0 * fine.nodes
    r_coarse = apply_temporal_kernel(u_coarse[None, :], kernel, coarse)[0]
    r_fine = apply_temporal_kernel(u_fine[None, :], refine_kernel(kernel, 2), fine)[0]
    np.testing.assert_allclose(r_fine[::2][2:-2], r_coarse[2:-2], rtol=1e-12)


def test_compose_tents_gives_quintic_spline():
    tent = [0.0, 0.0, 1.0, 0.0, 0.0]
    composed = compose_kernels(tent, tent, tent)
    expected = np.zeros(13)
    expected[6] = 66.0 / 120.0
    expected[[5, 7]] = 26.0 / 120.0
    expected[[4, 8]] = 1.0 / 120.0
    assert composed.shape == (13,)
    np.testing.assert_allclose(composed, expected, atol=1e-12)


def test_compose_kernels_needs_five_values():
    with pytest.raises(ShapeMismatch):
        compose_kernels([0.0, 1.0, 0.0], [0.0, 0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0, 0.0])


def test_spatial_mass(surface):
    M, m_lump = assemble_spatial_mass(surface)
    assert abs(M.sum() - surface.length) < 1e-12
    L = surface.segment_lengths
    np.testing.assert_allclose(m_lump, 0.5 * (L + np.roll(L, 1)))
    assert abs(M - M.T).max() == 0.0


def test_surface_gradient_of_coordinate(surface):
    Gx, Gy = assemble_surface_gradient(surface)
    x = surface.points[:, 0]
    t = surface.tangents
    np.testing.assert_allclose(Gx @ x, t[:, 0] ** 2, atol=1e-14)
    np.testing.assert_allclose(Gy @ x, t[:, 0] * t[:, 1], atol=1e-14)


def test_l2_projection(surface, rng):
    p1 = rng.standard_normal((surface.n_vertices, 3))
    np.testing.assert_allclose(l2_project_p0_to_p1(surface, p1, source="p1"), p1, atol=1e-10)
    ones = l2_project_p0_to_p1(surface, np.ones((surface.n_segments, 2)))
    np.testing.assert_allclose(ones, 1.0, atol=1e-12)
    field = GradientField.from_components(np.ones((surface.n_segments, 9)), np.zeros((surface.n_segments, 9)), TimeGrid(8, 0.1))
    gx, gy = l2_project_p0_to_p1(surface, field)
    np.testing.assert_allclose(gx, 1.0, atol=1e-12)
    np.testing.assert_allclose(gy, 0.0, atol=1e-12)
    with pytest.raises(ShapeMismatch):
        l2_project_p0_to_p1(surface, np.ones((surface.n_segments + 1, 1)))


def test_mass_solver_residual(surface, rng):
    M, _ = assemble_spatial_mass(surface)
    b = rng.standard_normal(surface.n_vertices)
    x = MassSolver(M).solve(b)
    assert np.linalg.norm(M @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_context_metric(ctx, rng):
    u, w, e = (rng.standard_normal(ctx.shape) for _ in range(3))
    assert ctx.inner(u, w) == pytest.approx(ctx.inner(w, u), rel=1e-13, abs=1e-13)
    assert ctx.inner(u, ctx.metric_solve(e)) == pytest.approx(float(np.sum(u * e)), rel=1e-10, abs=1e-10)
    assert ctx.norm(ctx.zeros()) == 0.0
    with pytest.raises(ShapeMismatch):
        ctx.check_shape(np.zeros((3, 3)))


def test_context_caches_kernel_matrices(ctx):
    kernel = [0.0, -0.5, 0.0, 0.5, 0.0]
    assert ctx.kernel_matrix(kernel) is ctx.kernel_matrix(tuple(kernel))
    assert ctx.memo("answer", lambda: 42) == 42
    assert ctx.memo("answer", lambda: 0) == 42


def test_stiffness_annihilates_constants():
    disk = build_disk_mesh(1.0, 0.3)
    K = assemble_stiffness(disk, {Region.HEART: 2.0})
    np.testing.assert_allclose(K @ np.ones(disk.n_vertices), 0.0, atol=1e-12)
    M = assemble_mass_2d(disk)
    assert abs(M.sum() - disk.signed_areas().sum()) < 1e-12
    x = disk.vertices[:, 0]
    # energy of the linear function x equals sigma times the area
    assert float(x @ (K @ x)) == pytest.approx(2.0 * disk.signed_areas().sum(), rel=1e-12)


def test_conductivity_must_be_elliptic():
    disk = build_disk_mesh(1.0, 0.5)
    with pytest.raises(EllipticityError):
        assemble_stiffness(disk, {Region.TORSO: 1.0})
    with pytest.raises(EllipticityError):
        assemble_stiffness(disk, -1.0)
    skew = np.tile(np.array([[1.0, 0.5], [0.0, 1.0]]), (disk.n_triangles, 1, 1))
    with pytest.raises(EllipticityError):
        assemble_stiffness(disk, skew)


def test_time_grid():
    grid = TimeGrid.over(60.0, 60)
    assert grid.n_nodes == 61 and grid.step == 1.0 and grid.duration == 60.0
    with pytest.raises(ParameterOutOfRange):
        TimeGrid(0, 1.0)
    with pytest.raises(ParameterOutOfRange):
        TimeGrid(4, -1.0)


def test_field_files(tmp_path, rng):
    field = SpaceTimeField(rng.standard_normal((5, 7)), TimeGrid(6, 0.5))
    path = str(tmp_path / "u.stf")
    write_field(field, path)
    back = read_field(path)
    assert np.array_equal(back.values, field.values)
    assert back.grid == field.grid

    write_field_csv(field, str(tmp_path / "u.csv"))
    assert np.array_equal(read_field_csv(str(tmp_path / "u.csv"), 0.5).values, field.values)

    (tmp_path / "bad.stf").write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(IoError):
        read_field(str(tmp_path / "bad.stf"))
    with pytest.raises(ShapeMismatch):
        SpaceTimeField(np.full((2, 3), np.nan), TimeGrid(2, 1.0))
