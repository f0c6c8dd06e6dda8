#
# This file is part of the ecgifoe package.
#

"""
Multivariate expert potentials built from Moreau envelopes of the max-norm.

All functions act on the last axis (length 4) and broadcast over leading axes.
"""
from dataclasses import dataclass, replace

import numpy as np

from ecgifoe.exceptions import ParameterOutOfRange

RESPONSE_DIM = 4
MIN_MU = 1e-8
GRAD_SOURCES = ("analytic", "display")


def project_l1_ball(y, radius=1.0):
    """
    Euclidean projection onto the l1 ball, sort-based exact thresholding along the last axis.
    """
    y = np.asarray(y, dtype=float)
    magnitude = np.abs(y)
    inside = magnitude.sum(axis=-1, keepdims=True) <= radius
    s = -np.sort(-magnitude, axis=-1)
    cumulative = np.cumsum(s, axis=-1) - radius
    index = np.arange(1, y.shape[-1] + 1)
    active = s - cumulative / index > 0
    rho = y.shape[-1] - 1 - np.argmax(active[..., ::-1], axis=-1)
    theta = np.take_along_axis(cumulative, rho[..., None], axis=-1) / (rho[..., None] + 1)
    projected = np.sign(y) * np.maximum(magnitude - theta, 0.0)
    return np.where(inside, y, projected)


def _sq(y):
    return np.sum(y * y, axis=-1)


def omega_value(y, mu, eps):
    """
    ``||y - mu P(y/mu)||_inf + mu/2 ||P(y/mu)||^2 + eps/2 ||y/mu||^2``.
    """
    y = np.asarray(y, dtype=float)
    p = project_l1_ball(y / mu)
    return np.max(np.abs(y - mu * p), axis=-1) + 0.5 * mu * _sq(p) + 0.5 * eps * _sq(y / mu)


def omega_grad(y, mu, eps, source="analytic"):
    """
    Gradient of ``omega_value``; ``source="display"`` uses ``P(y/mu) + eps y/mu``.
    The two agree at ``mu = 1``.
    """
    y = np.asarray(y, dtype=float)
    p = project_l1_ball(y / mu)
    if source == "display":
        return p + eps * y / mu
    return p + eps * y / mu ** 2


@dataclass(eq=False)
class ExpertParams:
    """
    One expert: envelope scale ``mu``, second-envelope factor ``eta``, 4x4 mixing ``Q``
    and a temporal kernel (nodal values, or three composable sub-kernels).
    """

    mu: float
    eta: float
    Q: np.ndarray
    kernel: np.ndarray
    subkernels: list = None
    base_mu: float = None
    unconstrained: bool = False

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float).reshape(RESPONSE_DIM, RESPONSE_DIM)
        self.kernel = np.asarray(self.kernel, dtype=float)
        if self.base_mu is None:
            self.base_mu = self.mu
        if not self.mu >= MIN_MU:
            raise ParameterOutOfRange("Expert mu must be at least {:.0e}, got {}".format(MIN_MU, self.mu))
        if np.any(self.Q) and not self.eta > 0.0:
            raise ParameterOutOfRange("Expert eta must be positive, got {}".format(self.eta))

    @property
    def q_norm2(self):
        return float(np.linalg.norm(self.Q, 2))

    @property
    def q_norm_inf(self):
        return float(np.abs(self.Q).sum(axis=1).max())

    def nonnegative(self, eps):
        """
        Whether the potential is guaranteed nonnegative with its unique minimum at the origin.
        """
        if not np.any(self.Q):
            return True
        q2 = self.q_norm2
        return self.q_norm_inf <= 1.0 + 1e-12 and self.eta > q2 ** 2 and (eps == 0.0 or self.eta >= q2)

    def with_mu(self, mu):
        return replace(self, mu=max(float(mu), MIN_MU), base_mu=self.base_mu)


def phi_value(y, expert, eps):
    """
    ``mu omega_mu(y) - mu omega_{eta mu}(Q y)``.
    """
    y = np.asarray(y, dtype=float)
    mu = expert.mu
    value = mu * omega_value(y, mu, eps)
    if np.any(expert.Q):
        value = value - mu * omega_value(y @ expert.Q.T, expert.eta * mu, eps)
    return value


def phi_grad(y, expert, eps, source="analytic"):
    """
    Gradient of ``phi_value``; ``source="display"`` gives
    ``mu (P(y/mu) - Q^T P(Q y/(mu eta)) + eps (I - Q^T Q) y)``.
    """
    if source not in GRAD_SOURCES:
        raise ParameterOutOfRange("Unknown gradient source '{}'".format(source))
    y = np.asarray(y, dtype=float)
    mu, eta, Q = expert.mu, expert.eta, expert.Q
    if source == "display":
        out = mu * (project_l1_ball(y / mu) + eps * y)
        if np.any(Q):
            qy = y @ Q.T
            out = out - mu * (project_l1_ball(qy / (mu * eta)) @ Q + eps * (qy @ Q))
        return out
    out = mu * project_l1_ball(y / mu) + eps * y / mu
    if np.any(Q):
        qy = y @ Q.T
        out = out - mu * (project_l1_ball(qy / (eta * mu)) @ Q) - eps * (qy @ Q) / (eta ** 2 * mu)
    return out


def phi_lipschitz(expert, eps, source="analytic"):
    """
    Lipschitz constant of ``phi_grad``.
    """
    mu, eta = expert.mu, expert.eta
    q2 = expert.q_norm2
    if source == "display":
        spread = np.linalg.norm(np.eye(RESPONSE_DIM) - expert.Q.T @ expert.Q, 2)
        return 1.0 + (q2 ** 2 / eta if q2 > 0 else 0.0) + mu * eps * spread
    first = 1.0 + eps / mu
    if q2 == 0.0:
        return first
    return max(first, q2 ** 2 / eta * (1.0 + eps / (eta * mu)))
