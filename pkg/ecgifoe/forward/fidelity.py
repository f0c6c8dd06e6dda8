#
# This file is part of the ecgifoe package.
#

"""
Data fidelities. ``value_grad`` works in the space-time metric of the FemContext;
the ``lumped_value``, ``normal`` and ``rhs`` members give the lumped Euclidean forms
used by the TIK baseline, and ``resolvent`` is the primal step of the TV solver in
the fidelity's ``primal_metric``.
"""
import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ecgifoe.exceptions import ShapeMismatch
from ecgifoe.forward.observation import Observation
from ecgifoe.solver.power import power_method


def fidelity_value_grad(u, z, A, D, m_lump):
    """
    Inverse fidelity ``1/(2 N_Sigma) sum_i r_i D r_i^T`` with ``r = A u - z`` and its
    metric gradient ``1/N_Sigma Mlump^{-1} A^T r``.

    Raises:
        ShapeMismatch: If the shapes of ``u``, ``z`` and ``A`` disagree.
    """
    matrix = A.matrix if hasattr(A, "matrix") else np.asarray(A)
    z = z.values if isinstance(z, Observation) else np.asarray(z)
    if u.shape[0] != matrix.shape[1] or z.shape != (matrix.shape[0], u.shape[1]) or len(m_lump) != u.shape[0]:
        raise ShapeMismatch("Fidelity shapes disagree: u {}, z {}, A {}".format(u.shape, z.shape, matrix.shape))
    n_sigma = matrix.shape[0]
    r = matrix @ u - z
    value = 0.5 / n_sigma * float(np.sum((D @ r.T).T * r))
    grad = (matrix.T @ r) / (n_sigma * m_lump[:, None])
    return value, grad


class DenoiseFidelity:
    """
    ``1/2 ||u - z||^2`` in the space-time metric.
    """

    name = "denoise"

    def __init__(self, z, ctx):
        self.z = ctx.check_shape(z)
        self.ctx = ctx
        self.weights = ctx.m_lump[:, None] * ctx.d_lump[None, :]

    def value_grad(self, u):
        r = u - self.z
        return 0.5 * self.ctx.inner(r, r), r

    def value(self, u):
        return self.value_grad(u)[0]

    def lipschitz(self):
        return 1.0

    def initial(self):
        return self.z.copy()

    def lumped_value(self, u):
        return 0.5 * float(np.sum(self.weights * (u - self.z) ** 2))

    def normal(self, u):
        return self.weights * u

    def rhs(self):
        return self.weights * self.z

    def strong_convexity(self):
        """
        Modulus of strong convexity of the lumped fidelity in its own ``primal_metric``.
        """
        return 1.0

    @property
    def primal_metric(self):
        return self.weights

    def resolvent(self, y, tau):
        """
        ``argmin_u lumped_value(u) + ||u - y||_W^2 / (2 tau)`` in the lumped metric ``W``.
        """
        return (self.z + y / tau) / (1.0 + 1.0 / tau)


class InverseFidelity:
    """
    Electrode misfit ``1/(2 N_Sigma) sum_i int (A u - z)_i^2 dt``.
    """

    name = "inverse"

    def __init__(self, z, A, ctx):
        self.z = z.values if isinstance(z, Observation) else np.asarray(z, dtype=float)
        self.A = A
        self.ctx = ctx
        self.n_sigma = A.n_electrodes
        if self.z.shape != (self.n_sigma, ctx.grid.n_nodes):
            raise ShapeMismatch("Observation shape {} does not match ({}, {})".format(self.z.shape, self.n_sigma, ctx.grid.n_nodes))
        self._lipschitz = None
        self._factors = {}

    def value_grad(self, u):
        return fidelity_value_grad(u, self.z, self.A, self.ctx.D, self.ctx.m_lump)

    def value(self, u):
        return self.value_grad(u)[0]

    def lipschitz(self, max_iter=200):
        """
        ``lambda_max(A* A) / N_Sigma``; the temporal factor cancels in the metric.
        """
        if self._lipschitz is None:
            m = self.ctx.m_lump
            A = self.A.matrix
            top = power_method(lambda v: (A.T @ (A @ v)) / m, (A.shape[1],), max_iter=max_iter, inner=lambda x, y: float(np.sum(m * x * y)))
            self._lipschitz = top / self.n_sigma
        return self._lipschitz

    def initial(self):
        return self.ctx.zeros()

    def lumped_value(self, u):
        r = self.A.matrix @ u - self.z
        return 0.5 / self.n_sigma * float(np.sum(self.ctx.d_lump[None, :] * r ** 2))

    def normal(self, u):
        A = self.A.matrix
        return (A.T @ (A @ u)) * self.ctx.d_lump[None, :] / self.n_sigma

    def rhs(self):
        return (self.A.matrix.T @ self.z) * self.ctx.d_lump[None, :] / self.n_sigma

    def strong_convexity(self):
        return 0.0

    @property
    def primal_metric(self):
        return np.ones((self.A.matrix.shape[1], self.ctx.grid.n_nodes))

    def resolvent(self, y, tau):
        """
        Column-wise ``((d_s/N_Sigma) A^T A + I/tau) u_s = (d_s/N_Sigma) A^T z_s + y_s/tau``,
        one Cholesky factorization per distinct time weight.
        """
        A = self.A.matrix
        out = np.empty_like(y)
        rhs = self.rhs() + y / tau
        for d in np.unique(self.ctx.d_lump):
            key = (float(d), float(tau))
            factor = self._factors.get(key)
            if factor is None:
                system = (d / self.n_sigma) * (A.T @ A) + np.eye(A.shape[1]) / tau
                factor = cho_factor(system)
                self._factors[key] = factor
            cols = self.ctx.d_lump == d
            out[:, cols] = cho_solve(factor, rhs[:, cols])
        return out
