#
# This file is part of the ecgifoe package.
#

"""
Finite element matrices: temporal/spatial mass, stiffness and surface gradients,
plus the L2 projection of piecewise constant fields onto P1.
"""
import logging

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ecgifoe.exceptions import EllipticityError, ShapeMismatch, SolveFailure
from ecgifoe.fem.fields import GradientField
from ecgifoe.solver.cg import cg

DIRECT_SOLVE_LIMIT = 50000
MASS_RESIDUAL_TOL = 1e-12


def assemble_temporal_mass(grid):
    """
    Temporal P1 mass matrix ``D`` of size (N_T + 1)^2.
    """
    n, delta = grid.n_nodes, grid.step
    main = np.full(n, 4.0 * delta / 6.0)
    main[0] = main[-1] = 2.0 * delta / 6.0
    off = np.full(n - 1, delta / 6.0)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def lumped(matrix):
    """
    Row-sum lumping.
    """
    return np.asarray(matrix.sum(axis=1)).ravel()


def assemble_spatial_mass(surface):
    """
    Consistent and lumped P1 mass on a closed polyline.

    Returns:
        tuple: ``(M, m_lump)`` with ``M`` sparse CSR and ``m_lump`` the diagonal as an array.
    """
    a, b = surface.segment_endpoints()
    L = surface.segment_lengths
    rows = np.concatenate([a, a, b, b])
    cols = np.concatenate([a, b, a, b])
    vals = np.concatenate([2.0 * L, L, L, 2.0 * L]) / 6.0
    n = surface.n_vertices
    M = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    M.sum_duplicates()
    M.sort_indices()
    return M, lumped(M)


def _gradients(mesh):
    p = mesh.vertices[mesh.triangles]
    twice_area = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    bx = np.stack([p[:, 1, 1] - p[:, 2, 1], p[:, 2, 1] - p[:, 0, 1], p[:, 0, 1] - p[:, 1, 1]], axis=1) / twice_area[:, None]
    by = np.stack([p[:, 2, 0] - p[:, 1, 0], p[:, 0, 0] - p[:, 2, 0], p[:, 1, 0] - p[:, 0, 0]], axis=1) / twice_area[:, None]
    return np.stack([bx, by], axis=1), 0.5 * twice_area


def element_tensors(mesh, sigma):
    """
    Expand a conductivity description to per-element 2x2 tensors.

    Args:
        sigma: Mapping region tag -> scalar, array of per-element scalars, or (m, 2, 2) tensors.

    Raises:
        EllipticityError: If any tensor is not symmetric positive definite.
    """
    m = mesh.n_triangles
    if isinstance(sigma, dict):
        missing = set(np.unique(mesh.regions)) - set(sigma)
        if missing:
            raise EllipticityError("No conductivity given for regions {}".format(sorted(missing)))
        scalars = np.array([float(sigma[tag]) for tag in mesh.regions])
        tensors = scalars[:, None, None] * np.eye(2)
    else:
        sigma = np.asarray(sigma, dtype=float)
        if sigma.ndim == 0:
            tensors = np.broadcast_to(sigma * np.eye(2), (m, 2, 2)).copy()
        elif sigma.shape == (m,):
            tensors = sigma[:, None, None] * np.eye(2)
        elif sigma.shape == (m, 2, 2):
            tensors = sigma
        else:
            raise ShapeMismatch("Conductivity of shape {} does not match {} elements".format(sigma.shape, m))
    if not np.allclose(tensors, np.transpose(tensors, (0, 2, 1)), rtol=0.0, atol=1e-14 * max(1.0, float(np.abs(tensors).max()))):
        raise EllipticityError("Conductivity tensors are not symmetric")
    if not np.all(np.isfinite(tensors)) or np.linalg.eigvalsh(tensors).min() <= 0.0:
        raise EllipticityError("Conductivity tensors are not positive definite")
    return tensors


def assemble_stiffness(mesh, sigma):
    """
    P1 stiffness ``K_ij = sum_e area_e * grad(phi_i) . sigma_e grad(phi_j)`` (pure Neumann form).
    """
    tensors = element_tensors(mesh, sigma)
    grads, areas = _gradients(mesh)
    local = areas[:, None, None] * np.einsum("eki,ekl,elj->eij", grads, tensors, grads)
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_vertices
    K = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    K.sum_duplicates()
    K.sort_indices()
    return K


def assemble_mass_2d(mesh):
    """
    Consistent P1 mass on a triangulation.
    """
    _, areas = _gradients(mesh)
    local = areas[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_vertices
    M = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    M.sum_duplicates()
    M.sort_indices()
    return M


def assemble_surface_gradient(surface):
    """
    Exact tangential gradient of P1 functions on the polyline, one operator per ambient component.

    Returns:
        tuple: ``(G_x, G_y)``, each sparse (N_Q, N_V); segment J maps ``u`` to ``t_J (u_b - u_a) / |J|``.
    """
    a, b = surface.segment_endpoints()
    L = surface.segment_lengths
    n_q, n_v = surface.n_segments, surface.n_vertices
    segments = np.arange(n_q)
    ops = []
    for k in range(2):
        t = surface.tangents[:, k]
        vals = np.concatenate([-t / L, t / L])
        G = sp.csr_matrix((vals, (np.concatenate([segments, segments]), np.concatenate([a, b]))), shape=(n_q, n_v))
        G.sum_duplicates()
        G.sort_indices()
        ops.append(G)
    return tuple(ops)


def assemble_p0_load(surface):
    """
    Load operator ``B`` (N_V, N_Q) with ``B[i, J] = |J| / 2`` for both endpoints ``i`` of ``J``.
    """
    a, b = surface.segment_endpoints()
    half = 0.5 * surface.segment_lengths
    segments = np.arange(surface.n_segments)
    B = sp.csr_matrix((np.concatenate([half, half]), (np.concatenate([a, b]), np.concatenate([segments, segments]))), shape=(surface.n_vertices, surface.n_segments))
    B.sum_duplicates()
    return B


class MassSolver:
    """
    Solves ``M x = b`` with a sparse LU factorization below 50 000 unknowns and CG above,
    enforcing a relative residual of at most 1e-12.
    """

    def __init__(self, M, tol=MASS_RESIDUAL_TOL):
        self.M = sp.csr_matrix(M)
        self.tol = tol
        self.direct = self.M.shape[0] < DIRECT_SOLVE_LIMIT
        self._lu = splu(sp.csc_matrix(self.M)) if self.direct else None

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self.direct:
            x = self._lu.solve(b)
        else:
            x = cg(lambda v: self.M @ v, b, tol=0.1 * self.tol, max_iter=10 * b.shape[0])
        b_norm = np.linalg.norm(b)
        if b_norm > 0.0:
            residual = np.linalg.norm(self.M @ x - b) / b_norm
            if residual > self.tol:
                raise SolveFailure("Mass solve residual {:.3e} exceeds {:.0e}".format(residual, self.tol))
        return x


def l2_project_p0_to_p1(surface, p, source="p0", solver=None):
    """
    L2 projection onto continuous P1 on the polyline.

    Args:
        surface: SurfaceMesh1D.
        p: Per-segment values (N_Q, k), a GradientField, or nodal values (N_V, k) when ``source="p1"``.
        source: ``"p0"`` for piecewise constant input, ``"p1"`` for continuous P1 input.
        solver: Optional MassSolver of the surface mass matrix.

    Returns:
        Nodal array (N_V, k), or a tuple of two arrays for a GradientField.

    Raises:
        SolveFailure: If the mass solve misses the residual tolerance.
    """
    if solver is None:
        M, _ = assemble_spatial_mass(surface)
        solver = MassSolver(M)
    if isinstance(p, GradientField):
        return tuple(l2_project_p0_to_p1(surface, p.component(k), "p0", solver) for k in range(2))
    p = np.asarray(p, dtype=float)
    if source == "p0":
        if p.shape[0] != surface.n_segments:
            raise ShapeMismatch("Expected {} segment rows, got {}".format(surface.n_segments, p.shape[0]))
        rhs = assemble_p0_load(surface) @ p
    elif source == "p1":
        if p.shape[0] != surface.n_vertices:
            raise ShapeMismatch("Expected {} nodal rows, got {}".format(surface.n_vertices, p.shape[0]))
        rhs = solver.M @ p
    else:
        raise ShapeMismatch("Unknown projection source '{}'".format(source))
    logging.debug("[FEM] L2 projection of {} input with {} columns".format(source, p.shape[1] if p.ndim > 1 else 1))
    return solver.solve(rhs)
