#
# This file is part of the ecgifoe package.
#

import logging

import numpy as np

from ecgifoe.exceptions import CGDivergence


def cg(op_apply, rhs, tol=1e-8, max_iter=None, x0=None, info=False):
    """
    Conjugate gradient for a symmetric positive (semi)definite operator.

    Works on arrays of any shape; the Euclidean inner product of the flattened
    arrays is used.

    Args:
        op_apply: Callable mapping an array shaped like ``rhs`` to an array of the same shape.
        rhs: Right-hand side.
        tol: Relative residual tolerance ``||b - A x|| <= tol ||b||``.
        max_iter: Iteration limit (default ``10 * rhs.size``).
        x0: Initial guess (default zero).
        info: Also return the number of iterations.

    Returns:
        The solution, or ``(solution, iterations)`` when ``info`` is set.

    Raises:
        CGDivergence: If the tolerance is not met within ``max_iter`` iterations
            or a non-positive curvature is met.
    """
    rhs = np.asarray(rhs, dtype=float)
    if max_iter is None:
        max_iter = 10 * rhs.size
    b_norm = np.linalg.norm(rhs)
    if b_norm == 0.0:
        x = np.zeros_like(rhs)
        return (x, 0) if info else x

    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=float)
    r = rhs - op_apply(x) if x0 is not None else rhs.copy()
    d = r.copy()
    rr = float(np.vdot(r, r))
    k = 0
    while np.sqrt(rr) > tol * b_norm:
        if k >= max_iter:
            raise CGDivergence("CG did not reach relative residual {:.1e} in {} iterations (residual {:.3e})".format(tol, max_iter, np.sqrt(rr) / b_norm))
        Ad = op_apply(d)
        curvature = float(np.vdot(d, Ad))
        if curvature <= 0.0 or not np.isfinite(curvature):
            raise CGDivergence("Non-positive curvature {:.3e} at CG iteration {}".format(curvature, k))
        alpha = rr / curvature
        x += alpha * d
        r -= alpha * Ad
        rr_new = float(np.vdot(r, r))
        d = r + (rr_new / rr) * d
        rr = rr_new
        k += 1
    logging.debug("[CG] Converged in {} iterations (relative residual {:.3e})".format(k, np.sqrt(rr) / b_norm))
    return (x, k) if info else x
