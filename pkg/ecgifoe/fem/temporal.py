#
# This file is part of the ecgifoe package.
#

"""
Temporal cross-correlation with P1 kernels on the uniform grid.

Kernels are nodal values ``k_j`` at ``(j - N_w) * step`` for ``j = 0..2 N_w``; the
kernel is zero outside ``[-N_w step, N_w step]`` and the signal is zero-extended
outside the time window.
"""
import numpy as np

from ecgifoe.exceptions import ShapeMismatch

SUB_KERNEL_HALF_WIDTH = 2


def half_width(kernel):
    n = len(kernel)
    if n % 2 == 0 or n < 3:
        raise ShapeMismatch("Kernel needs an odd number (>= 3) of nodal values, got {}".format(n))
    return (n - 1) // 2


def _hat_overlap(m, c, lo, hi):
    """
    Integral over [lo, hi] (unit grid, integer bounds) of the product of the hats centred at m and c.
    """
    same = (m == c)
    left = same & (m - 1 >= lo) & (m <= hi)
    right = same & (m >= lo) & (m + 1 <= hi)
    near = np.abs(m - c) == 1
    low = np.minimum(m, c)
    side = near & (low >= lo) & (low + 1 <= hi)
    return (2.0 * left + 2.0 * right + 1.0 * side) / 6.0


def cross_correlation_matrix(grid, n_w, s):
    """
    Matrix ``D(t_s)`` of shape (2 N_w + 1, N_T + 1) with entries
    ``int rho_{i - N_w}(tau) rho_{j - s}(tau) dtau`` over the admissible window.
    """
    if not 0 <= s <= grid.n_intervals:
        raise ShapeMismatch("Time index {} outside 0..{}".format(s, grid.n_intervals))
    m = (np.arange(2 * n_w + 1) - n_w)[:, None]
    c = (np.arange(grid.n_nodes) - s)[None, :]
    lo, hi = max(-n_w, -s), min(n_w, grid.n_intervals - s)
    return grid.step * _hat_overlap(m, c, lo, hi)


def temporal_kernel_matrix(grid, kernel):
    """
    Matrix ``T`` with ``T[l, s] = sum_j k_j D(t_s)[j, l]``, so that ``apply_temporal_kernel(u) = u @ T``.
    """
    kernel = np.asarray(kernel, dtype=float)
    n_w = half_width(kernel)
    T = np.empty((grid.n_nodes, grid.n_nodes))
    for s in range(grid.n_nodes):
        T[:, s] = kernel @ cross_correlation_matrix(grid, n_w, s)
    return T


def apply_temporal_kernel(u, kernel, grid, matrix=None):
    """
    Cross-correlate every row of ``u`` (N_V, N_T + 1) with the kernel.
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != grid.n_nodes:
        raise ShapeMismatch("Field with {} columns does not match {} time nodes".format(u.shape[-1], grid.n_nodes))
    if matrix is None:
        matrix = temporal_kernel_matrix(grid, kernel)
    return u @ matrix


def _unit_kernel(values):
    nodes = np.arange(len(values)) - half_width(values)
    return lambda x: np.interp(x, nodes, values, left=0.0, right=0.0)


def compose_kernels(k1, k2, k3, step=1.0):
    """
    Nodal values on the widened support of ``k(t) = int int k3(s) k2(tau) k1(tau + s + t) ds dtau``.

    Each sub-kernel has half-width 2, the result half-width 6. The integrands are
    piecewise polynomial on unit cells, so Gauss-Legendre rules are exact.
    """
    subs = [np.asarray(k, dtype=float) for k in (k1, k2, k3)]
    for k in subs:
        if half_width(k) != SUB_KERNEL_HALF_WIDTH:
            raise ShapeMismatch("Sub-kernels must have 5 nodal values, got {}".format(len(k)))
    f1, f2, f3 = (_unit_kernel(k) for k in subs)
    x2, w2 = np.polynomial.legendre.leggauss(2)
    x3, w3 = np.polynomial.legendre.leggauss(3)

    def inner(y):
        # c(y) = int k3(s) k2(y - s) ds, breakpoints at integers and at y - integers
        lo, hi = max(-2.0, y - 2.0), min(2.0, y + 2.0)
        if hi <= lo:
            return 0.0
        cuts = np.concatenate([[lo, hi], np.arange(-2, 3, dtype=float), y - np.arange(-2, 3, dtype=float)])
        cuts = np.unique(cuts[(cuts >= lo) & (cuts <= hi)])
        a, b = cuts[:-1], cuts[1:]
        pts = (0.5 * (b - a))[:, None] * x2[None, :] + (0.5 * (a + b))[:, None]
        return float(np.sum((0.5 * (b - a))[:, None] * w2[None, :] * f3(pts) * f2(y - pts)))

    cells = np.arange(-4, 4, dtype=float)
    ys = (cells[:, None] + 0.5 + 0.5 * x3[None, :]).ravel()
    weights = np.tile(0.5 * w3, len(cells))
    c_values = np.array([inner(y) for y in ys])
    shifts = np.arange(-6, 7, dtype=float)
    composed = np.array([np.sum(weights * c_values * f1(ys + m)) for m in shifts])
    return step ** 2 * composed


def refine_kernel(kernel, factor):
    """
    Resample a P1 kernel onto a grid ``factor`` times finer (exact for P1).
    """
    kernel = np.asarray(kernel, dtype=float)
    n_w = half_width(kernel)
    fine = np.arange(-n_w * factor, n_w * factor + 1) / factor
    return np.interp(fine, np.arange(-n_w, n_w + 1, dtype=float), kernel)
