#
# This file is part of the ecgifoe package.
#

"""
Spatiotemporal first-order Tikhonov baseline solved by CG on its optimality system.
"""
import logging
import time

import numpy as np
import scipy.sparse as sp

from ecgifoe.exceptions import ParameterOutOfRange
from ecgifoe.regularizers.regularizer import Regularizer
from ecgifoe.solver.agd import SolveReport
from ecgifoe.solver.cg import cg

TIK_TOL = 1e-8


def surface_stiffness(ctx):
    """
    ``K_Gamma = sum_k G_k^T diag(|J|) G_k`` on the epicardial polyline.
    """

    def build():
        L = sp.diags(ctx.surface.segment_lengths)
        Gx, Gy = ctx.grad_ops
        return sp.csr_matrix(Gx.T @ L @ Gx + Gy.T @ L @ Gy)

    return ctx.memo(("surface-stiffness",), build)


def temporal_stiffness(grid):
    n = grid.n_nodes
    main = np.full(n, 2.0 / grid.step)
    main[0] = main[-1] = 1.0 / grid.step
    off = np.full(n - 1, -1.0 / grid.step)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def gradient_energy(u, ctx):
    """
    Lumped ``(||grad_Gamma u||^2, ||d_t u||^2)`` over the space-time domain.
    """
    K_s = surface_stiffness(ctx)
    K_t = ctx.memo(("temporal-stiffness",), lambda: temporal_stiffness(ctx.grid))
    spatial = float(np.sum(ctx.d_lump[None, :] * u * (K_s @ u)))
    temporal = float(np.sum(ctx.m_lump[:, None] * u * (K_t @ u.T).T))
    return spatial, temporal


def tik_energy(fidelity, u, lam_gamma, lam_t, ctx):
    spatial, temporal = gradient_energy(u, ctx)
    return fidelity.lumped_value(u) + 0.5 * (lam_gamma ** 2 * spatial + lam_t ** 2 * temporal)


def tik_solve(fidelity, lam_gamma, lam_t, ctx, tol=TIK_TOL, max_iter=None):
    """
    Minimize ``fidelity + 1/2 ||Lambda grad_(x,t) u||^2`` with lumped quadrature.

    Args:
        fidelity: DenoiseFidelity or InverseFidelity.
        lam_gamma: Spatial weight.
        lam_t: Temporal weight.
        ctx: FemContext.
        tol: Relative CG residual.
        max_iter: CG limit (default ``10 * dof``).

    Returns:
        tuple: ``(SpaceTimeField, SolveReport)``.

    Raises:
        CGDivergence: If CG misses the tolerance.
    """
    if lam_gamma < 0.0 or lam_t < 0.0:
        raise ParameterOutOfRange("Tikhonov weights must be nonnegative")
    start = time.perf_counter()
    report = SolveReport(method="TIK")
    if lam_gamma == 0.0 and lam_t == 0.0 and fidelity.name == "denoise":
        u = fidelity.z.copy()
        report.converged = True
    else:
        K_s = surface_stiffness(ctx)
        K_t = ctx.memo(("temporal-stiffness",), lambda: temporal_stiffness(ctx.grid))
        d = ctx.d_lump[None, :]
        m = ctx.m_lump[:, None]

        def normal(u):
            return fidelity.normal(u) + lam_gamma ** 2 * d * (K_s @ u) + lam_t ** 2 * m * (K_t @ u.T).T

        u, iterations = cg(normal, fidelity.rhs(), tol=tol, max_iter=max_iter or 10 * np.prod(ctx.shape), x0=fidelity.initial(), info=True)
        report.iterations = iterations
        report.converged = True
    report.final_objective = tik_energy(fidelity, u, lam_gamma, lam_t, ctx)
    report.objective_trace.append(report.final_objective)
    report.restart_flags.append(False)
    report.wall_time = time.perf_counter() - start
    logging.debug("[TIK] lam_gamma={:.3g} lam_t={:.3g}: {} CG iterations".format(lam_gamma, lam_t, report.iterations))
    return ctx.field(u), report


class Tikhonov(Regularizer):
    name = "TIK"

    def __init__(self, lam_gamma, lam_t):
        super().__init__({"lam_gamma": lam_gamma, "lam_t": lam_t})

    def value(self, u, ctx):
        spatial, temporal = gradient_energy(ctx.check_shape(u), ctx)
        return 0.5 * (self.params["lam_gamma"] ** 2 * spatial + self.params["lam_t"] ** 2 * temporal)

    def solve(self, fidelity, ctx, **kwargs):
        return tik_solve(fidelity, self.params["lam_gamma"], self.params["lam_t"], ctx, **kwargs)
