#
# This file is part of the ecgifoe package.
#

"""
Spatiotemporal Fields-of-Experts regularizer.

Each expert sees the 4-channel response ``(eps_theta u, P grad_x u, P grad_y u, K_i u)``
at every space-time node; the regularizer sums the expert potentials with the
lumped weights ``Mlump (x) Dlump``.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ecgifoe.exceptions import ParameterOutOfRange
from ecgifoe.regularizers.potentials import GRAD_SOURCES, MIN_MU, phi_grad, phi_lipschitz, phi_value
from ecgifoe.regularizers.regularizer import Regularizer
from ecgifoe.solver.power import power_method


@dataclass(eq=False)
class RegularizerModel:
    """
    Global weights and experts of a (convex or nonconvex) multivariate FoE prior.
    """

    lam: float
    eps_theta: float
    eps_omega: float
    experts: list = field(default_factory=list)
    convex_mode: bool = False
    grad_source: str = "analytic"
    name: str = "FoE"

    def __post_init__(self):
        if not self.experts:
            raise ParameterOutOfRange("A model needs at least one expert")
        if self.lam < 0.0 or self.eps_theta <= 0.0 or self.eps_omega <= 0.0:
            raise ParameterOutOfRange("Model weights out of range: lambda={}, epsTheta={}, epsOmega={}".format(self.lam, self.eps_theta, self.eps_omega))
        if self.grad_source not in GRAD_SOURCES:
            raise ParameterOutOfRange("Unknown gradient source '{}'".format(self.grad_source))
        if self.convex_mode and any(np.any(expert.Q) for expert in self.experts):
            logging.warning("[FOE] Convex mode: mixing matrices of the experts set to zero")
            self.experts = [replace(expert, Q=np.zeros_like(expert.Q)) if np.any(expert.Q) else expert for expert in self.experts]

    @property
    def n_experts(self):
        return len(self.experts)

    def with_lambda(self, lam):
        return replace(self, lam=float(lam), experts=list(self.experts))

    def at_noise_level(self, kappa):
        """
        Apply the noise-level rule ``mu_i = max(kappa * m_i, 1e-8)`` with the stored base values ``m_i``.
        """
        if kappa is None:
            return self
        experts = [e.with_mu(max(kappa * e.base_mu, MIN_MU)) for e in self.experts]
        return replace(self, experts=experts)

    def trainable_vector(self):
        """
        ``[log lambda, log eps_theta, log m_1, ..., log m_N, kernels...]``.
        """
        parts = [np.log([self.lam, self.eps_theta]), np.log([e.base_mu for e in self.experts])]
        parts += [e.kernel for e in self.experts]
        return np.concatenate(parts)

    def with_trainable_vector(self, vector):
        vector = np.asarray(vector, dtype=float)
        lam, eps_theta = np.exp(vector[:2])
        n = self.n_experts
        base = np.exp(vector[2:2 + n])
        offset = 2 + n
        experts = []
        for e, m in zip(self.experts, base):
            size = len(e.kernel)
            kernel = vector[offset:offset + size].copy()
            offset += size
            scale = e.mu / e.base_mu
            experts.append(replace(e, mu=max(scale * m, MIN_MU), base_mu=float(m), kernel=kernel, subkernels=None))
        return replace(self, lam=float(lam), eps_theta=float(eps_theta), experts=experts)

    def responses(self, u, ctx):
        """
        Per expert, the stacked responses of shape (N_V, N_T + 1, 4).
        """
        gx, gy = ctx.surface_gradient(u)
        shared = [self.eps_theta * u, gx, gy]
        return [np.stack(shared + [u @ ctx.kernel_matrix(e.kernel)], axis=-1) for e in self.experts]

    def adjoint(self, w, ctx):
        """
        Adjoint of the stacked response operator between the lumped-weighted response
        space and the space-time metric; ``w`` holds one (N_V, N_T + 1, 4) array per expert.
        """
        weights = ctx.m_lump[:, None] * ctx.d_lump[None, :]
        return ctx.metric_solve(self._transpose(w, weights, ctx))

    def _transpose(self, w, weights, ctx):
        Px, Py = ctx.projected_grad
        total = np.zeros(ctx.shape)
        for expert, wi in zip(self.experts, w):
            g = weights[..., None] * wi
            total += self.eps_theta * g[..., 0] + Px.T @ g[..., 1] + Py.T @ g[..., 2] + g[..., 3] @ ctx.kernel_matrix(expert.kernel).T
        return total

    def value_grad(self, u, ctx):
        """
        ``R(u) = lam sum_i sum_nodes W phi_i(L_i u)`` and its metric gradient ``lam L* Phi'(L u)``.
        """
        weights = ctx.m_lump[:, None] * ctx.d_lump[None, :]
        ys = self.responses(u, ctx)
        value = 0.0
        grads = []
        for expert, y in zip(self.experts, ys):
            value += float(np.sum(weights * phi_value(y, expert, self.eps_omega)))
            grads.append(phi_grad(y, expert, self.eps_omega, self.grad_source))
        euclidean = self._transpose(grads, weights, ctx)
        return self.lam * value, self.lam * ctx.metric_solve(euclidean)

    def value(self, u, ctx):
        weights = ctx.m_lump[:, None] * ctx.d_lump[None, :]
        return self.lam * sum(float(np.sum(weights * phi_value(y, e, self.eps_omega))) for e, y in zip(self.experts, self.responses(u, ctx)))

    def value_quadrature(self, u, ctx, points=3):
        """
        Regularizer value with a tensor Gauss rule on every space-time cell applied to the
        bilinear interpolant of the nodal responses (reference for the lumped rule).
        """
        x, w = np.polynomial.legendre.leggauss(points)
        x = 0.5 * (x + 1.0)
        w = 0.5 * w
        a, b = ctx.surface.segment_endpoints()
        cell = ctx.surface.segment_lengths[:, None] * ctx.grid.step
        total = 0.0
        for expert, y in zip(self.experts, self.responses(u, ctx)):
            corners = [y[a, :-1], y[b, :-1], y[a, 1:], y[b, 1:]]
            for xi, wi in zip(x, w):
                for tj, wj in zip(x, w):
                    yq = (1 - xi) * (1 - tj) * corners[0] + xi * (1 - tj) * corners[1] + (1 - xi) * tj * corners[2] + xi * tj * corners[3]
                    total += wi * wj * float(np.sum(cell * phi_value(yq, expert, self.eps_omega)))
        return self.lam * total

    def operator_norm(self, ctx, max_iter=200, seed=0):
        """
        ``lambda_max(L* L)`` of the stacked response operator by the power method.
        """
        return power_method(lambda v: self.adjoint(self.responses(v, ctx), ctx), ctx.shape, max_iter=max_iter, seed=seed, inner=ctx.inner)

    def potential_lipschitz(self):
        return max(phi_lipschitz(e, self.eps_omega, self.grad_source) for e in self.experts)

    def lipschitz(self, ctx, max_iter=200):
        """
        Lipschitz constant of the regularizer gradient in the space-time metric.
        """
        if self.lam == 0.0:
            return 0.0
        return self.lam * self.potential_lipschitz() * self.operator_norm(ctx, max_iter)


def foe_value_grad(u, model, ctx):
    u = ctx.check_shape(u)
    return model.value_grad(u, ctx)


class FieldsOfExperts(Regularizer):
    """
    Regularizer wrapper of a RegularizerModel at a given noise level.
    """

    def __init__(self, model, kappa=None):
        super().__init__({"lambda": model.lam} if kappa is None else {"lambda": model.lam, "kappa": kappa})
        self.model = model.at_noise_level(kappa)
        self.kappa = kappa
        self.name = model.name

    def value(self, u, ctx):
        return self.model.value(ctx.check_shape(u), ctx)

    def value_grad(self, u, ctx):
        return self.model.value_grad(ctx.check_shape(u), ctx)

    def solve(self, fidelity, ctx, **kwargs):
        from ecgifoe.solver.reconstruct import minimize_energy

        return minimize_energy(fidelity, self.model, ctx, **kwargs)
