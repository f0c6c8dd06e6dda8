#
# This file is part of the ecgifoe package.
#

"""
Discrete forward problem: Dirichlet data on the epicardium, homogeneous Neumann
condition on the torso surface, electrode averages of the torso trace.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ecgifoe.exceptions import ShapeMismatch, SingularSystem
from ecgifoe.fem.assembly import assemble_stiffness
from ecgifoe.geometry.mesh import extract_epicardial_curve
from ecgifoe.geometry.tags import Marker, Region

TORSO_CONDUCTIVITY = {Region.TORSO: 0.2, Region.LUNG: 0.05}
TRIAL_TOL = 1e-10


class ForwardSystem:
    """
    Factorized Dirichlet-reduced stiffness of the torso.

    Epicardial data is ordered along the loop returned by ``extract_epicardial_curve``.

    Args:
        mesh: Torso Mesh2D.
        sigma: Conductivity (region map, per-element scalars or tensors); defaults to TORSO 0.2 / LUNG 0.05.

    Raises:
        SingularSystem: If the reduced stiffness cannot be factorized.
    """

    def __init__(self, mesh, sigma=None):
        self.mesh = mesh
        self.sigma = TORSO_CONDUCTIVITY if sigma is None else sigma
        self.surface = extract_epicardial_curve(mesh)
        K = sp.csr_matrix(assemble_stiffness(mesh, self.sigma))

        self.heart = self.surface.vertex_ids
        mask = np.ones(mesh.n_vertices, dtype=bool)
        mask[self.heart] = False
        self.interior = np.flatnonzero(mask)
        self.outer = mesh.boundary_vertices(Marker.OUTER)
        K_ii = sp.csc_matrix(K[self.interior][:, self.interior])
        self.K_ih = sp.csr_matrix(K[self.interior][:, self.heart])
        try:
            self._lu = splu(K_ii)
        except RuntimeError as e:
            raise SingularSystem("Dirichlet-reduced stiffness is singular: {}".format(e))
        self._K_ii = K_ii

        trial = np.random.default_rng(0).standard_normal(len(self.interior))
        residual = np.linalg.norm(K_ii @ self._lu.solve(trial) - trial) / np.linalg.norm(trial)
        if not residual <= TRIAL_TOL:
            raise SingularSystem("Reduced stiffness trial residual {:.3e} exceeds {:.0e}".format(residual, TRIAL_TOL))
        # interior response to unit epicardial data, columns in loop order
        self.lifting = -self._lu.solve(self.K_ih.toarray())
        logging.info("[FORWARD] Forward system: {} interior unknowns, {} epicardial nodes".format(len(self.interior), len(self.heart)))

    @property
    def n_epicardial(self):
        return len(self.heart)

    def solve(self, u, matrix_free=False):
        """
        Nodal torso potential for epicardial data ``u`` of shape (N_V,) or (N_V, k).
        """
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.n_epicardial:
            raise ShapeMismatch("Epicardial data has {} rows, expected {}".format(u.shape[0], self.n_epicardial))
        v = np.empty((self.mesh.n_vertices,) + u.shape[1:])
        v[self.heart] = u
        v[self.interior] = -self._lu.solve(self.K_ih @ u) if matrix_free else self.lifting @ u
        return v

    def averaging_operator(self, electrodes):
        """
        Sparse (N_Sigma, n_vertices) trapezoid-rule electrode averages.
        """
        rows, cols, vals = [], [], []
        ends = self.mesh.vertices[self.mesh.boundary_edges]
        lengths = np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1)
        for i, (patch, total) in enumerate(zip(electrodes.patches, electrodes.patch_lengths)):
            for e in patch:
                a, b = self.mesh.boundary_edges[e]
                w = 0.5 * lengths[e] / total
                rows += [i, i]
                cols += [a, b]
                vals += [w, w]
        E = sp.csr_matrix((vals, (rows, cols)), shape=(electrodes.n_electrodes, self.mesh.n_vertices))
        E.sum_duplicates()
        return E

    def average(self, v, electrodes):
        return self.averaging_operator(electrodes) @ v


@dataclass(eq=False)
class ForwardMatrix:
    """
    Dense map ``A`` from epicardial nodal values to electrode averages, applied per time column.
    """

    matrix: np.ndarray

    @property
    def n_electrodes(self):
        return self.matrix.shape[0]

    def apply(self, u):
        return self.matrix @ u

    def adjoint(self, w, ctx):
        """
        Metric adjoint ``Mlump^{-1} A^T w``.
        """
        return (self.matrix.T @ w) / ctx.m_lump[:, None]


def build_forward_system(mesh, sigma=None):
    return ForwardSystem(mesh, sigma)


def assemble_forward_matrix(system, electrodes):
    E = system.averaging_operator(electrodes)
    A = E[:, system.heart].toarray() + (E[:, system.interior] @ system.lifting)
    logging.info("[FORWARD] Forward matrix {}x{} assembled".format(*A.shape))
    return ForwardMatrix(np.asarray(A))


def apply_forward(system, electrodes, u):
    """
    Matrix-free evaluation: solve then average.
    """
    return system.average(system.solve(u, matrix_free=True), electrodes)
