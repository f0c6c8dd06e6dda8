import numpy as np
import pytest
import scipy.linalg

from ecgifoe.exceptions import IoError, ShapeMismatch
from ecgifoe.fem.assembly import assemble_mass_2d
from ecgifoe.fem.context import FemContext
from ecgifoe.fem.timegrid import TimeGrid
from ecgifoe.forward.fidelity import DenoiseFidelity, InverseFidelity, fidelity_value_grad
from ecgifoe.forward.observation import NoiseMeta, Observation, read_observation, write_observation, write_observation_csv
from ecgifoe.forward.system import ForwardMatrix, ForwardSystem, apply_forward, assemble_forward_matrix
from ecgifoe.geometry.mesh import MeshConfig, build_torso_mesh, define_electrodes, refine_uniform


@pytest.fixture(scope="module")
def forward(torso_mesh):
    system = ForwardSystem(torso_mesh)
    electrodes = define_electrodes(torso_mesh, 8)
    return system, electrodes, assemble_forward_matrix(system, electrodes)


def _annulus_error(mesh):
    # v = (r + R^2 / r) cos(theta) is harmonic with zero normal flux at r = R
    R = mesh.outer_radius
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    r2 = x ** 2 + y ** 2
    exact = x * (1.0 + R ** 2 / r2)
    system = ForwardSystem(mesh, sigma=1.0)
    v = system.solve(exact[system.heart])
    e = v - exact
    return float(np.sqrt(e @ (assemble_mass_2d(mesh) @ e)))


@pytest.mark.slow
def test_manufactured_solution_converges():
    mesh = build_torso_mesh(MeshConfig(3.0, 1.0, (0.0, 0.0), [], target_h=0.4))
    errors = []
    for _ in range(3):
        errors.append(_annulus_error(mesh))
        mesh = refine_uniform(mesh)
    assert errors[1] < errors[0] / 2.5
    assert errors[2] < errors[1] / 2.5


def test_dense_and_matrix_free_agree(forward, rng):
    system, electrodes, A = forward
    u = rng.standard_normal((system.n_epicardial, 3))
    np.testing.assert_allclose(system.solve(u, matrix_free=True), system.solve(u), atol=1e-10)
    np.testing.assert_allclose(apply_forward(system, electrodes, u), A.apply(u), atol=1e-10)


def test_constant_epicardium_gives_constant_torso(forward):
    system, electrodes, A = forward
    v = system.solve(np.ones(system.n_epicardial))
    np.testing.assert_allclose(v, 1.0, atol=1e-10)
    np.testing.assert_allclose(A.apply(np.ones(system.n_epicardial)), 1.0, atol=1e-10)


def test_solve_rejects_wrong_size(forward):
    system, _, _ = forward
    with pytest.raises(ShapeMismatch):
        system.solve(np.ones(system.n_epicardial + 1))


def test_forward_adjoint_identity(forward, rng):
    system, _, A = forward
    ctx = FemContext(system.surface, TimeGrid(4, 0.5))
    for _ in range(100):
        u = rng.standard_normal(ctx.shape)
        w = rng.standard_normal((A.n_electrodes, ctx.grid.n_nodes))
        lhs = float(np.sum(ctx.m_lump[:, None] * u * A.adjoint(w, ctx)))
        assert lhs == pytest.approx(float(np.sum(A.apply(u) * w)), rel=1e-10, abs=1e-10)


@pytest.fixture
def small_inverse(ctx, rng):
    A = ForwardMatrix(rng.standard_normal((5, ctx.shape[0])))
    z = rng.standard_normal((5, ctx.grid.n_nodes))
    return InverseFidelity(z, A, ctx)


def test_inverse_fidelity_gradient(small_inverse, ctx, rng):
    u = rng.standard_normal(ctx.shape)
    h = rng.standard_normal(ctx.shape)
    value, grad = small_inverse.value_grad(u)
    eps = 1e-6
    slope = (small_inverse.value(u + eps * h) - small_inverse.value(u - eps * h)) / (2.0 * eps)
    assert ctx.inner(grad, h) == pytest.approx(slope, rel=1e-5)
    assert value >= 0.0


def test_inverse_fidelity_lipschitz(small_inverse, ctx):
    A = small_inverse.A.matrix
    top = scipy.linalg.eigh(A.T @ A, np.diag(ctx.m_lump), eigvals_only=True)[-1]
    assert small_inverse.lipschitz() == pytest.approx(top / A.shape[0], rel=1e-4)


def test_inverse_resolvent_is_optimal(small_inverse, ctx, rng):
    y = rng.standard_normal(ctx.shape)
    tau = 0.7
    u = small_inverse.resolvent(y, tau)
    # optimality of the lumped fidelity plus the proximal term
    residual = small_inverse.normal(u) - small_inverse.rhs() + (u - y) / tau
    np.testing.assert_allclose(residual, 0.0, atol=1e-10)


def test_denoise_fidelity(ctx, rng):
    z = rng.standard_normal(ctx.shape)
    fidelity = DenoiseFidelity(z, ctx)
    u = rng.standard_normal(ctx.shape)
    value, grad = fidelity.value_grad(u)
    assert value == pytest.approx(0.5 * ctx.norm(u - z) ** 2)
    np.testing.assert_array_equal(grad, u - z)
    assert fidelity.value(z) == 0.0
    y = rng.standard_normal(ctx.shape)
    np.testing.assert_allclose(fidelity.resolvent(y, 1.0), 0.5 * (z + y))
    with pytest.raises(ShapeMismatch):
        DenoiseFidelity(z[:, :-1], ctx)


def test_fidelity_shape_checks(ctx, rng):
    A = ForwardMatrix(rng.standard_normal((5, ctx.shape[0])))
    with pytest.raises(ShapeMismatch):
        fidelity_value_grad(ctx.zeros(), np.zeros((4, ctx.grid.n_nodes)), A, ctx.D, ctx.m_lump)
    with pytest.raises(ShapeMismatch):
        InverseFidelity(np.zeros((5, 3)), A, ctx)


def test_observation_file(tmp_path, rng):
    obs = Observation(rng.standard_normal((8, 11)), TimeGrid(10, 2.0), NoiseMeta("gaussian_snr", 30.0, 17))
    path = str(tmp_path / "z.obs")
    write_observation(obs, path)
    back = read_observation(path)
    assert np.array_equal(back.values, obs.values)
    assert back.grid == obs.grid
    assert back.noise == obs.noise

    csv = str(tmp_path / "z.csv")
    write_observation_csv(obs, csv)
    with open(csv) as f:
        assert f.readline().startswith("# kind=gaussian_snr level=30.0 seed=17")
    np.testing.assert_array_equal(np.loadtxt(csv, delimiter=","), obs.values)

    (tmp_path / "bad.obs").write_bytes(b"OBS2" + bytes(60))
    with pytest.raises(IoError):
        read_observation(str(tmp_path / "bad.obs"))
    with pytest.raises(IoError):
        read_observation(str(tmp_path / "missing.obs"))
    with pytest.raises(ShapeMismatch):
        Observation(np.zeros((3, 4)), TimeGrid(4, 1.0))
