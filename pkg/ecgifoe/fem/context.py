#
# This file is part of the ecgifoe package.
#

import logging
import threading

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from ecgifoe.exceptions import ShapeMismatch
from ecgifoe.fem.assembly import MassSolver, assemble_p0_load, assemble_spatial_mass, assemble_surface_gradient, assemble_temporal_mass, lumped
from ecgifoe.fem.fields import SpaceTimeField
from ecgifoe.fem.temporal import temporal_kernel_matrix


class FemContext:
    """
    Discrete operators shared by fidelities, regularizers and solvers on one
    (surface mesh, time grid) pair.

    The space-time inner product is ``<u, w> = sum_i m_i (u D w^T)_ii`` with the
    lumped spatial mass ``m`` and the consistent temporal mass ``D``; gradients
    returned by energies are Riesz representatives in this metric.

    Args:
        surface: SurfaceMesh1D of the epicardium.
        grid: TimeGrid.
    """

    def __init__(self, surface, grid):
        self.surface = surface
        self.grid = grid
        self.M, self.m_lump = assemble_spatial_mass(surface)
        self.D = assemble_temporal_mass(grid)
        self.d_lump = lumped(self.D)
        self.mass_solver = MassSolver(self.M)
        self.grad_ops = assemble_surface_gradient(surface)
        load = assemble_p0_load(surface)
        # P^sp grad_k as dense (N_V, N_V) operators
        self.projected_grad = tuple(self.mass_solver.solve((load @ G).toarray()) for G in self.grad_ops)

        off = self.D.diagonal(1)
        banded = np.zeros((2, grid.n_nodes))
        banded[0, 1:] = off
        banded[1, :] = self.D.diagonal()
        self._d_cholesky = cholesky_banded(banded)

        self._kernel_cache = {}
        self._lock = threading.Lock()
        logging.debug("[FEM] Context with {} surface nodes and {} time nodes".format(surface.n_vertices, grid.n_nodes))

    @property
    def shape(self):
        return self.surface.n_vertices, self.grid.n_nodes

    def zeros(self):
        return np.zeros(self.shape)

    def check_shape(self, u):
        u = u.values if isinstance(u, SpaceTimeField) else np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise ShapeMismatch("Field of shape {} does not match the context shape {}".format(u.shape, self.shape))
        return u

    def field(self, values):
        return SpaceTimeField(values, self.grid, self.surface.name)

    def kernel_matrix(self, kernel):
        key = tuple(float(k) for k in kernel)
        with self._lock:
            T = self._kernel_cache.get(key)
            if T is None:
                T = temporal_kernel_matrix(self.grid, np.asarray(key))
                self._kernel_cache[key] = T
        return T

    def memo(self, key, factory):
        """
        Cache a derived quantity (operator norms, stiffness matrices) on this context.
        """
        with self._lock:
            if key in self._kernel_cache:
                return self._kernel_cache[key]
        value = factory()
        with self._lock:
            return self._kernel_cache.setdefault(key, value)

    def time_mass(self, u):
        return (self.D @ u.T).T

    def inner(self, u, w):
        return float(np.sum(self.m_lump[:, None] * self.time_mass(u) * w))

    def norm(self, u):
        return float(np.sqrt(max(self.inner(u, u), 0.0)))

    def time_solve(self, y):
        """
        Right multiplication by ``D^{-1}``.
        """
        return cho_solve_banded((self._d_cholesky, False), y.T).T

    def metric_solve(self, euclidean):
        """
        Turn a Euclidean gradient ``E`` into the metric gradient ``Mlump^{-1} E D^{-1}``.
        """
        return self.time_solve(euclidean / self.m_lump[:, None])

    def surface_gradient(self, u):
        return tuple(P @ u for P in self.projected_grad)

    @classmethod
    def from_mesh(cls, mesh, grid):
        from ecgifoe.geometry.mesh import extract_epicardial_curve

        return cls(extract_epicardial_curve(mesh), grid)
