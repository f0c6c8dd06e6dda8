#
# This file is part of the ecgifoe package.
#

"""
Accelerated gradient descent with objective-based restart.
"""
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ecgifoe.exceptions import NonFiniteObjective, ParameterOutOfRange
from ecgifoe.utils.observer import Events, Observable, Observer


@dataclass
class SolveReport(Observer):
    """
    Trace of an iterative solve. Equality ignores the wall time, so two
    deterministic reruns compare equal.
    """

    method: str = "AGD"
    iterations: int = 0
    restarts: int = 0
    final_objective: float = float("nan")
    objective_trace: list = field(default_factory=list)
    restart_flags: list = field(default_factory=list)
    tau_trace: list = field(default_factory=list)
    wall_time: float = field(default=0.0, compare=False)
    converged: bool = False

    def update(self, event, obj):
        if event == Events.SOLVER_ITERATION_EVENT:
            self.objective_trace.append(obj["objective"])
            self.restart_flags.append(obj["restart"])
            self.tau_trace.append(obj["tau"])
        elif event == Events.SOLVER_RESTART_EVENT:
            self.restarts += 1
        elif event == Events.SOLVER_FINISHED_EVENT:
            self.iterations = obj["iterations"]
            self.converged = obj["converged"]
            self.final_objective = obj["objective"]

    def to_text(self):
        """
        Line-oriented ``iter f restart`` table.
        """
        lines = ["# method {} converged {} restarts {}".format(self.method, int(self.converged), self.restarts), "iter f restart"]
        lines += ["{} {!r} {}".format(k + 1, float(f), int(r)) for k, (f, r) in enumerate(zip(self.objective_trace, self.restart_flags))]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        report = cls()
        for line in text.splitlines():
            parts = line.split()
            if not parts or parts[0] == "iter":
                continue
            if parts[0] == "#":
                report.method, report.converged, report.restarts = parts[2], bool(int(parts[4])), int(parts[6])
                continue
            report.objective_trace.append(float(parts[1]))
            report.restart_flags.append(bool(int(parts[2])))
        report.iterations = len(report.objective_trace)
        if report.objective_trace:
            report.final_objective = report.objective_trace[-1]
        return report


class EnergyProblem:
    """
    Smooth energy with a known gradient Lipschitz bound.

    Args:
        value_grad: Callable ``u -> (value, gradient)``; the gradient is taken in the metric of ``norm``.
        lipschitz: Lipschitz constant of the gradient.
        shape: Shape of the unknown.
        norm: Norm of the metric (Euclidean by default).
        value: Optional cheaper value-only callable.
    """

    def __init__(self, value_grad, lipschitz, shape, norm=None, value=None):
        if not lipschitz > 0.0:
            raise ParameterOutOfRange("Lipschitz constant must be positive, got {}".format(lipschitz))
        self.value_grad = value_grad
        self.lipschitz = float(lipschitz)
        self.shape = tuple(shape)
        self.norm = norm or (lambda g: float(np.linalg.norm(g)))
        self._value = value

    def value(self, u):
        return self._value(u) if self._value is not None else self.value_grad(u)[0]

    def grad_norm(self, g):
        return self.norm(g)


def agd_restart(problem, u0=None, max_iter=5000, tol=1e-7, observers=()):
    """
    Accelerated gradient descent with objective-based restart.

    Each step takes a gradient step from the extrapolated point, updates the
    momentum ``tau_{n+1} = (1 + sqrt(1 + 4 tau_n^2)) / 2`` and resets
    ``v = u, tau = 1`` whenever the objective increases.

    Args:
        problem: EnergyProblem.
        u0: Initial iterate (zero by default).
        max_iter: Iteration limit.
        tol: Stop when the metric gradient norm is at most ``tol * (1 + |f|)``.
        observers: Extra observers of the solver events.

    Returns:
        tuple: ``(u, SolveReport)``.

    Raises:
        NonFiniteObjective: If the objective or gradient becomes NaN or infinite.
    """
    report = SolveReport()
    events = Observable(report, *observers)

    u = np.zeros(problem.shape) if u0 is None else np.array(u0, dtype=float)
    v = u.copy()
    tau = 1.0
    f_prev = math.inf
    step = 1.0 / problem.lipschitz
    converged = False
    f_v = math.nan
    start = time.perf_counter()

    n = 0
    for n in range(max_iter):
        f_v, g = problem.value_grad(v)
        if not math.isfinite(f_v) or not np.all(np.isfinite(g)):
            raise NonFiniteObjective("Objective became non-finite at iteration {} (f={})".format(n, f_v))
        if problem.grad_norm(g) <= tol * (1.0 + abs(f_v)):
            u = v
            converged = True
            break
        u_next = v - step * g
        tau_next = (1.0 + math.sqrt(1.0 + 4.0 * tau * tau)) / 2.0
        v_next = u_next + ((tau - 1.0) / tau_next) * (u_next - u)
        f_next = problem.value(u_next)
        if not math.isfinite(f_next):
            raise NonFiniteObjective("Objective became non-finite at iteration {}".format(n + 1))
        restart = f_next > f_prev
        if restart:
            v_next = u_next.copy()
            tau_next = 1.0
            events.notify(Events.SOLVER_RESTART_EVENT, n + 1)
        events.notify(Events.SOLVER_ITERATION_EVENT, {"iteration": n + 1, "objective": f_next, "tau": tau_next, "restart": restart})
        u, v, tau, f_prev = u_next, v_next, tau_next, f_next
    else:
        n = max_iter

    final = f_v if converged else f_prev
    report.wall_time = time.perf_counter() - start
    events.notify(Events.SOLVER_FINISHED_EVENT, {"iterations": n, "converged": converged, "objective": final})
    if converged:
        logging.debug("[AGD] Converged after {} iterations ({} restarts), f={:.6e}".format(n, report.restarts, final))
    else:
        logging.info("[AGD] Stopped at the iteration limit {} ({} restarts), f={:.6e}".format(max_iter, report.restarts, final))
    return u, report
