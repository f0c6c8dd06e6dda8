#
# This file is part of the ecgifoe package.
#

"""
Isotropic spatiotemporal total variation baseline solved by a primal-dual method.

Each space-time cell ``J x [t_s, t_{s+1}]`` carries the cell-averaged surface
and time derivatives of the bilinear interpolant, weighted by the cell area.
"""
import logging
import math
import time

import numpy as np

from ecgifoe.exceptions import NonConvergence, ParameterOutOfRange
from ecgifoe.regularizers.regularizer import Regularizer
from ecgifoe.solver.agd import SolveReport
from ecgifoe.solver.power import power_method

TV_TOL = 1e-6
TV_MAX_ITER = 20000
STEP_SAFETY = 0.99


class CellGradient:
    """
    ``K u = |J| delta (lam_gamma g_Gamma, lam_t g_t)`` per space-time cell and its adjoint.
    """

    def __init__(self, ctx, lam_gamma, lam_t):
        self.lengths = ctx.surface.segment_lengths
        self.step = ctx.grid.step
        self.lam_gamma = float(lam_gamma)
        self.lam_t = float(lam_t)
        self.shape = ctx.shape
        self.dual_shape = (2, ctx.surface.n_segments, ctx.grid.n_intervals)

    def apply(self, u):
        ahead = np.roll(u, -1, axis=0)
        jump = ahead - u
        g_space = 0.5 * (jump[:, :-1] + jump[:, 1:]) * self.step
        slope = u[:, 1:] - u[:, :-1]
        g_time = 0.5 * (slope + np.roll(slope, -1, axis=0)) * self.lengths[:, None]
        return np.stack([self.lam_gamma * g_space, self.lam_t * g_time])

    def adjoint(self, p):
        out = np.zeros(self.shape)
        c_space = 0.5 * self.lam_gamma * self.step * p[0]
        g = np.zeros(self.shape)
        g[:, :-1] += c_space
        g[:, 1:] += c_space
        out += np.roll(g, 1, axis=0) - g
        c_time = 0.5 * self.lam_t * self.lengths[:, None] * p[1]
        h = c_time + np.roll(c_time, 1, axis=0)
        out[:, 1:] += h
        out[:, :-1] -= h
        return out


def project_dual(p):
    norms = np.sqrt(p[0] ** 2 + p[1] ** 2)
    return p / np.maximum(norms, 1.0)[None]


def tv_value(u, lam_gamma, lam_t, ctx):
    q = CellGradient(ctx, lam_gamma, lam_t).apply(u)
    return float(np.sum(np.sqrt(q[0] ** 2 + q[1] ** 2)))


def tv_energy(fidelity, u, lam_gamma, lam_t, ctx):
    return fidelity.lumped_value(u) + tv_value(u, lam_gamma, lam_t, ctx)


def _operator_norm(K, metric):
    root = np.sqrt(metric)
    return math.sqrt(power_method(lambda v: K.adjoint(K.apply(v / root)) / root, K.shape))


def tv_solve(fidelity, lam_gamma, lam_t, ctx, tol=TV_TOL, max_iter=TV_MAX_ITER, strict=False):
    """
    Minimize ``fidelity + sum_cells |Lambda grad_(x,t) u|`` with a first-order
    primal-dual scheme in the fidelity's primal metric.

    The dual variable lives in the product of unit discs, the primal step is the
    fidelity resolvent. Step sizes satisfy ``tau sigma ||K P^{-1/2}||^2 <= 1`` and
    are accelerated when the fidelity is strongly convex.

    Args:
        fidelity: DenoiseFidelity or InverseFidelity.
        lam_gamma: Spatial weight.
        lam_t: Temporal weight.
        ctx: FemContext.
        tol: Stop on relative primal change below ``tol``.
        max_iter: Iteration limit.
        strict: Raise instead of returning an unconverged iterate.

    Returns:
        tuple: ``(SpaceTimeField, SolveReport)``; on the iteration limit the
        lowest-energy iterate is returned with ``converged=False``.

    Raises:
        NonConvergence: With ``strict`` when the iteration limit is reached.
    """
    if lam_gamma < 0.0 or lam_t < 0.0:
        raise ParameterOutOfRange("TV weights must be nonnegative")
    start = time.perf_counter()
    report = SolveReport(method="TV")
    if lam_gamma == 0.0 and lam_t == 0.0 and fidelity.name == "denoise":
        u = fidelity.z.copy()
        report.converged = True
        report.final_objective = fidelity.lumped_value(u)
        report.objective_trace.append(report.final_objective)
        report.restart_flags.append(False)
        report.wall_time = time.perf_counter() - start
        return ctx.field(u), report

    K = CellGradient(ctx, lam_gamma, lam_t)
    metric = fidelity.primal_metric
    if lam_gamma == 0.0 and lam_t == 0.0:
        tau = sigma = 1.0
    else:
        norm = _operator_norm(K, metric)
        tau = sigma = STEP_SAFETY / norm
    gamma = fidelity.strong_convexity()

    x = fidelity.initial()
    x_bar = x.copy()
    p = np.zeros(K.dual_shape)
    best, best_energy = x.copy(), tv_energy(fidelity, x, lam_gamma, lam_t, ctx)
    converged = False
    n = 0
    for n in range(1, max_iter + 1):
        p = project_dual(p + sigma * K.apply(x_bar))
        x_new = fidelity.resolvent(x - tau * K.adjoint(p) / metric, tau)
        theta = 1.0 / math.sqrt(1.0 + 2.0 * gamma * tau) if gamma > 0.0 else 1.0
        tau, sigma = tau * theta, sigma / theta
        x_bar = x_new + theta * (x_new - x)
        change = np.linalg.norm(x_new - x)
        x = x_new

        energy = tv_energy(fidelity, x, lam_gamma, lam_t, ctx)
        report.objective_trace.append(energy)
        report.restart_flags.append(False)
        report.tau_trace.append(tau)
        if energy <= best_energy:
            best, best_energy = x.copy(), energy
        if change <= tol * max(np.linalg.norm(x), np.finfo(float).tiny):
            converged = True
            break

    if converged:
        u, final = x, report.objective_trace[-1]
        logging.debug("[TV] Converged after {} iterations, E={:.6e}".format(n, final))
    elif strict:
        raise NonConvergence("TV did not converge within {} iterations (E={:.6e})".format(max_iter, best_energy))
    else:
        u, final = best, best_energy
        logging.warning("[TV] No convergence within {} iterations; returning the lowest-energy iterate (E={:.6e})".format(max_iter, final))
    report.iterations = n
    report.converged = converged
    report.final_objective = final
    report.wall_time = time.perf_counter() - start
    return ctx.field(u), report


class TotalVariation(Regularizer):
    name = "TV"

    def __init__(self, lam_gamma, lam_t):
        super().__init__({"lam_gamma": lam_gamma, "lam_t": lam_t})

    def value(self, u, ctx):
        return tv_value(ctx.check_shape(u), self.params["lam_gamma"], self.params["lam_t"], ctx)

    def solve(self, fidelity, ctx, **kwargs):
        return tv_solve(fidelity, self.params["lam_gamma"], self.params["lam_t"], ctx, **kwargs)
