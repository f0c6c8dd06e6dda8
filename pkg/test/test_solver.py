import math

import numpy as np
import pytest

from ecgifoe.exceptions import CGDivergence, NonFiniteObjective, ParameterOutOfRange, ZeroIterate
from ecgifoe.forward.fidelity import InverseFidelity
from ecgifoe.forward.system import ForwardMatrix
from ecgifoe.regularizers.modelio import bundled_model
from ecgifoe.solver.agd import EnergyProblem, SolveReport, agd_restart
from ecgifoe.solver.cg import cg
from ecgifoe.solver.power import power_method
from ecgifoe.solver.reconstruct import BaselineSpec, inverse_reconstruct, minimize_energy, prox_denoise
from ecgifoe.utils.observer import Events, Observable, Observer


def _spd(rng, n, spread=100.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return Q @ np.diag(np.linspace(1.0, spread, n)) @ Q.T


def test_cg_solves_spd_system(rng):
    H = _spd(rng, 30)
    b = rng.standard_normal(30)
    x, iterations = cg(lambda v: H @ v, b, tol=1e-12, info=True)
    np.testing.assert_allclose(H @ x, b, atol=1e-9)
    assert 0 < iterations <= 300


def test_cg_on_matrix_shaped_unknowns(rng):
    H = _spd(rng, 6)
    B = rng.standard_normal((6, 4))
    X = cg(lambda V: H @ V, B, tol=1e-12)
    np.testing.assert_allclose(H @ X, B, atol=1e-9)


def test_cg_zero_rhs():
    x, iterations = cg(lambda v: 2.0 * v, np.zeros(5), info=True)
    assert iterations == 0 and not np.any(x)


def test_cg_failures(rng):
    H = _spd(rng, 30, spread=1e6)
    with pytest.raises(CGDivergence):
        cg(lambda v: H @ v, rng.standard_normal(30), tol=1e-14, max_iter=2)
    indefinite = np.diag([1.0, -1.0, 2.0])
    with pytest.raises(CGDivergence):
        cg(lambda v: indefinite @ v, np.array([0.0, 1.0, 0.0]))


def test_power_method():
    d = np.array([1.0, 4.0, 2.5, 0.5])
    assert power_method(lambda v: d * v, (4,), max_iter=500, tol=1e-14) == pytest.approx(4.0, rel=1e-10)


def test_power_method_weighted_inner():
    # M^{-1} H is self-adjoint in the M inner product
    m = np.array([1.0, 2.0, 4.0])
    H = np.array([[2.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 4.0]])
    top = power_method(lambda v: (H @ v) / m, (3,), max_iter=1000, tol=1e-14, inner=lambda x, y: float(np.sum(m * x * y)))
    expected = np.linalg.eigvals(np.diag(1.0 / m) @ H).real.max()
    assert top == pytest.approx(expected, rel=1e-8)


def test_power_method_zero_operator():
    with pytest.raises(ZeroIterate):
        power_method(lambda v: 0.0 * v, (3,))


def _quadratic(H, target):
    def value_grad(u):
        r = u - target
        g = H @ r
        return 0.5 * float(r @ g), g

    return EnergyProblem(value_grad, float(np.linalg.eigvalsh(H).max()), target.shape)


def test_agd_converges_on_quadratic(rng):
    H = np.diag(np.linspace(1.0, 10.0, 50))
    target = rng.standard_normal(50)
    u, report = agd_restart(_quadratic(H, target), max_iter=100, tol=0.0)
    assert np.linalg.norm(u - target) <= 1e-6 * np.linalg.norm(target)
    assert len(report.objective_trace) == report.iterations <= 100


def test_agd_momentum_and_restart_rule(rng):
    H = np.diag(np.logspace(-3.0, 0.0, 40))
    target = rng.standard_normal(40)
    _, report = agd_restart(_quadratic(H, target), max_iter=300, tol=0.0)

    tau, f_prev = 1.0, math.inf
    for f, restart, recorded in zip(report.objective_trace, report.restart_flags, report.tau_trace):
        assert restart == (f > f_prev)
        tau = 1.0 if restart else (1.0 + math.sqrt(1.0 + 4.0 * tau * tau)) / 2.0
        assert recorded == tau
        f_prev = f
    assert not report.restart_flags[0]
    assert report.restarts == sum(report.restart_flags) > 0


def test_agd_stops_on_gradient_tolerance(rng):
    H = np.diag(np.linspace(1.0, 10.0, 20))
    target = rng.standard_normal(20)
    u, report = agd_restart(_quadratic(H, target), max_iter=5000, tol=1e-10)
    assert report.converged
    assert report.iterations < 5000
    assert np.linalg.norm(H @ (u - target)) <= 1e-10 * (1.0 + report.final_objective)


def test_agd_notifies_observers(rng):
    class Counter(Observer):
        def __init__(self):
            self.events = []

        def update(self, event, obj):
            self.events.append(event)

    counter = Counter()
    H = np.diag(np.linspace(1.0, 10.0, 5))
    agd_restart(_quadratic(H, rng.standard_normal(5)), max_iter=10, tol=0.0, observers=[counter])
    assert counter.events.count(Events.SOLVER_ITERATION_EVENT) == 10
    assert counter.events[-1] == Events.SOLVER_FINISHED_EVENT


def test_agd_rejects_non_finite_objective():
    problem = EnergyProblem(lambda u: (float("nan"), u), 1.0, (3,))
    with pytest.raises(NonFiniteObjective):
        agd_restart(problem, u0=np.ones(3))


def test_energy_problem_needs_positive_lipschitz():
    with pytest.raises(ParameterOutOfRange):
        EnergyProblem(lambda u: (0.0, u), 0.0, (3,))


def test_solve_report_text():
    report = SolveReport(method="AGD-cmfoe", restarts=1, converged=True)
    report.objective_trace = [3.0, 2.5, 2.75, 1.0 / 3.0]
    report.restart_flags = [False, False, True, False]
    back = SolveReport.from_text(report.to_text())
    assert back.objective_trace == report.objective_trace
    assert back.restart_flags == report.restart_flags
    assert (back.method, back.converged, back.restarts) == ("AGD-cmfoe", True, 1)
    assert back.iterations == 4 and back.final_objective == 1.0 / 3.0


def test_fidelity_only_inverse_matches_least_squares(ctx, rng):
    A = rng.standard_normal((20, ctx.shape[0]))
    z = rng.standard_normal((20, ctx.grid.n_nodes))
    field, report = minimize_energy(InverseFidelity(z, ForwardMatrix(A), ctx), None, ctx, tol=1e-12, max_iter=20000)
    expected = np.linalg.lstsq(A, z, rcond=None)[0]
    assert report.converged
    assert report.method == "AGD-none"
    np.testing.assert_allclose(field.values, expected, atol=1e-6)


def test_convex_prox_is_nonexpansive(ctx, rng):
    model = bundled_model("cmfoe").with_lambda(0.1)
    for _ in range(20):
        z1, z2 = rng.standard_normal((2,) + ctx.shape)
        p1 = prox_denoise(z1, model, 0.1, ctx, tol=1e-10).values
        p2 = prox_denoise(z2, model, 0.1, ctx, tol=1e-10).values
        assert ctx.norm(p1 - p2) <= ctx.norm(z1 - z2) + 1e-8


def test_prox_rejects_negative_noise_level(ctx):
    with pytest.raises(ParameterOutOfRange):
        prox_denoise(ctx.zeros(), bundled_model("cmfoe"), -0.1, ctx)


def test_inverse_reconstruct_dispatch(ctx, rng):
    A = ForwardMatrix(rng.standard_normal((6, ctx.shape[0])))
    z = rng.standard_normal((6, ctx.grid.n_nodes))
    _, tik = inverse_reconstruct(z, BaselineSpec("TIK", 0.1, 0.1), A, ctx)
    _, tv = inverse_reconstruct(z, BaselineSpec("TV", 0.1, 0.1), A, ctx, tol=1e-5)
    _, foe = inverse_reconstruct(z, bundled_model("cmfoe"), A, ctx, kappa=0.1, tol=1e-5)
    assert (tik.method, tv.method, foe.method) == ("TIK", "TV", "AGD-cmfoe")
    with pytest.raises(ParameterOutOfRange):
        inverse_reconstruct(z, "MFoE", A, ctx)
    with pytest.raises(ParameterOutOfRange):
        BaselineSpec("L1", 0.1, 0.1)
    with pytest.raises(ParameterOutOfRange):
        BaselineSpec("TV", -0.1, 0.1)


def test_inverse_reconstruct_honours_solver_limits(ctx, rng):
    A = ForwardMatrix(rng.standard_normal((6, ctx.shape[0])))
    z = rng.standard_normal((6, ctx.grid.n_nodes))
    tv = BaselineSpec("TV", 0.1, 0.1)
    _, free = inverse_reconstruct(z, tv, A, ctx, tol=1e-5)
    _, capped = inverse_reconstruct(z, tv, A, ctx, tol=1e-5, max_iter=1)
    assert free.iterations > 1
    assert capped.iterations == 1 and not capped.converged
    _, loose = inverse_reconstruct(z, tv, A, ctx, tol=1e-2)
    assert loose.iterations <= free.iterations
    with pytest.raises(CGDivergence):
        inverse_reconstruct(z, BaselineSpec("TIK", 0.1, 0.1), A, ctx, tol=1e-12, max_iter=1)


def test_observable_registration():
    report = SolveReport()
    events = Observable(report)
    assert events.get_observers() == [report]
    events.remove_observer(report)
    assert events.get_observers() == []
    with pytest.raises(TypeError):
        Observable(object())
