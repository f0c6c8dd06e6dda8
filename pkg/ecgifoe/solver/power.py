#
# This file is part of the ecgifoe package.
#

import logging

import numpy as np

from ecgifoe.exceptions import ZeroIterate

MAX_ATTEMPTS = 3


def _euclidean(x, y):
    return float(np.vdot(x, y))


def power_method(op, shape, max_iter=200, tol=1e-10, seed=0, inner=None):
    """
    Largest eigenvalue of a self-adjoint positive operator.

    Args:
        op: Callable applying the operator to an array of ``shape``.
        shape: Shape of the operator's domain.
        max_iter: Iteration limit.
        tol: Stop on relative change of the Rayleigh quotient below ``tol``.
        seed: Seed of the random start vector.
        inner: Inner product in which ``op`` is self-adjoint (default Euclidean).

    Returns:
        float: Rayleigh-quotient estimate of the largest eigenvalue.

    Raises:
        ZeroIterate: If the operator annihilates the start vector for every reseed.
    """
    inner = inner or _euclidean
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng(seed + attempt)
        x = rng.standard_normal(shape)
        x /= np.sqrt(inner(x, x))
        estimate = None
        annihilated = False
        for k in range(max_iter):
            y = op(x)
            rayleigh = inner(x, y)
            y_norm = np.sqrt(max(inner(y, y), 0.0))
            if y_norm == 0.0:
                annihilated = True
                break
            x = y / y_norm
            if estimate is not None and abs(rayleigh - estimate) <= tol * abs(rayleigh):
                logging.debug("[POWER] Converged after {} iterations: {:.6e}".format(k + 1, rayleigh))
                return rayleigh
            estimate = rayleigh
        if not annihilated:
            return estimate
        logging.warning("[POWER] Operator annihilated the start vector (seed {}), reseeding".format(seed + attempt))
    raise ZeroIterate("Power method produced a zero iterate for {} seeds".format(MAX_ATTEMPTS))
