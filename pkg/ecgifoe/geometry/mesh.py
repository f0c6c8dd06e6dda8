#
# This file is part of the ecgifoe package.
#

"""
Parametric torso/heart geometry: annulus and disk triangulations, the epicardial
polyline, electrode patches and uniform refinement.
"""
import logging
import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy.spatial import Delaunay

from ecgifoe.exceptions import GeometryOverlap, InsufficientResolution, MeshQuality, TopologyError
from ecgifoe.geometry.tags import Marker, Region

MIN_ANGLE_DEG = 20.0
CIRCLE_TOL = 1e-12


@dataclass
class MeshConfig:
    """
    Geometry parameters of the torso model (lengths in cm).
    """

    outer_radius: float = 3.0
    heart_radius: float = 1.0
    heart_center: tuple = (0.0, 0.0)
    lung_disks: list = field(default_factory=list)
    target_h: float = 0.1

    @classmethod
    def from_config(cls, config):
        section = config.section("mesh")
        lungs = [(tuple(float(c) for c in center), float(radius)) for center, radius in section.get("lung_disks") or []]
        return cls(
            outer_radius=float(section["outer_radius"]),
            heart_radius=float(section["heart_radius"]),
            heart_center=tuple(float(c) for c in section["heart_center"]),
            lung_disks=lungs,
            target_h=float(section["target_h"]),
        )


@dataclass(eq=False)
class Mesh2D:
    """
    Conforming triangulation with region tags and boundary markers.

    Args:
        vertices: (n, 2) coordinates in cm.
        triangles: (m, 3) vertex indices, counterclockwise.
        regions: (m,) region tag per triangle (``Region``).
        boundary_edges: (k, 2) vertex indices of boundary edges.
        markers: (k,) marker per boundary edge (``Marker``).
        target_h: Mesh size the triangulation was built for; None when unknown (read back from disk).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    boundary_edges: np.ndarray
    markers: np.ndarray
    outer_radius: float
    heart_radius: float
    heart_center: tuple
    target_h: float = None

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def edges(self):
        """
        Unique undirected edges (sorted vertex pairs) and the number of triangles sharing each.
        """
        return unique_edges(self.triangles)

    def boundary_vertices(self, marker):
        return np.unique(self.boundary_edges[self.markers == marker].ravel())

    def angles(self):
        return triangle_angles(self.vertices, self.triangles)

    def diameters(self):
        p = self.vertices[self.triangles]
        lengths = np.stack([np.linalg.norm(p[:, (i + 1) % 3] - p[:, i], axis=1) for i in range(3)], axis=1)
        return lengths.max(axis=1)


@dataclass(eq=False)
class SurfaceMesh1D:
    """
    Closed epicardial polyline. Segment ``J`` joins loop positions ``J`` and ``J+1`` (cyclically).
    """

    vertex_ids: np.ndarray
    points: np.ndarray
    segment_lengths: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray
    name: str = "epicardium"

    @property
    def n_vertices(self):
        return len(self.vertex_ids)

    @property
    def n_segments(self):
        return len(self.segment_lengths)

    @property
    def length(self):
        return float(self.segment_lengths.sum())

    def segment_endpoints(self):
        start = np.arange(self.n_vertices)
        return start, (start + 1) % self.n_vertices

    @classmethod
    def from_points(cls, points, vertex_ids=None, name="epicardium"):
        points = np.asarray(points, dtype=float)
        n = len(points)
        if n < 3:
            raise TopologyError("A closed surface mesh needs at least 3 vertices, got {}".format(n))
        if vertex_ids is None:
            vertex_ids = np.arange(n)
        chords = np.roll(points, -1, axis=0) - points
        lengths = np.linalg.norm(chords, axis=1)
        if np.any(lengths <= 0.0):
            raise TopologyError("Degenerate segment of zero length in surface mesh")
        tangents = chords / lengths[:, None]
        normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=1)
        return cls(np.asarray(vertex_ids, dtype=int), points, lengths, tangents, normals, name)

    @classmethod
    def circle(cls, n, radius=1.0, center=(0.0, 0.0), name="circle"):
        angles = 2.0 * np.pi * np.arange(n) / n
        points = np.asarray(center, dtype=float) + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        return cls.from_points(points, name=name)


@dataclass(eq=False)
class ElectrodeSet:
    """
    Electrode patches as runs of indices into ``Mesh2D.boundary_edges``.
    """

    patches: list
    patch_lengths: np.ndarray
    coverage: float

    @property
    def n_electrodes(self):
        return len(self.patches)


def unique_edges(triangles):
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e = np.sort(e, axis=1)
    edges, counts = np.unique(e, axis=0, return_counts=True)
    return edges, counts


def triangle_angles(vertices, triangles):
    """
    Interior angles in degrees, shape (m, 3).
    """
    p = vertices[triangles]
    out = np.empty((len(triangles), 3))
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        v = p[:, (i + 2) % 3] - p[:, i]
        cross = np.abs(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0])
        dot = (u * v).sum(axis=1)
        out[:, i] = np.degrees(np.arctan2(cross, dot))
    return out


def _check_geometry(config):
    R, r = config.outer_radius, config.heart_radius
    c = np.asarray(config.heart_center, dtype=float)
    if config.target_h <= 0.0:
        raise GeometryOverlap("targetH must be positive, got {}".format(config.target_h))
    if r <= 0.0 or R <= 0.0:
        raise GeometryOverlap("Radii must be positive")
    if np.linalg.norm(c) + r >= R:
        raise GeometryOverlap("Heart disk (center {}, radius {}) is not strictly inside the torso of radius {}".format(tuple(c), r, R))
    for center, radius in config.lung_disks:
        center = np.asarray(center, dtype=float)
        if radius <= 0.0 or np.linalg.norm(center) + radius >= R:
            raise GeometryOverlap("Lung disk (center {}, radius {}) is not inside the torso".format(tuple(center), radius))
        if np.linalg.norm(center - c) <= radius + r:
            raise GeometryOverlap("Lung disk (center {}, radius {}) overlaps the heart".format(tuple(center), radius))


def _ring(center, radius, n, offset):
    angles = offset + 2.0 * np.pi * np.arange(n) / n
    return np.asarray(center, dtype=float) + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _triangulate(vertices, hole=None):
    """
    Delaunay triangulation of the ring points; triangles whose centroid falls inside
    the ``hole`` disk (center, radius) are dropped.
    """
    triangles = Delaunay(vertices).simplices
    if hole is not None:
        center, radius = hole
        centroids = vertices[triangles].mean(axis=1)
        triangles = triangles[np.linalg.norm(centroids - np.asarray(center, dtype=float), axis=1) >= radius]
    return _orient(vertices, triangles)


def _orient(vertices, triangles):
    triangles = np.asarray(triangles, dtype=int)
    p = vertices[triangles]
    area = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = area < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    return triangles


def _adjacency(n_vertices, triangles):
    vertex_tris = [[] for _ in range(n_vertices)]
    neighbours = [set() for _ in range(n_vertices)]
    for t_idx, (a, b, c) in enumerate(triangles):
        for v, others in ((a, (b, c)), (b, (a, c)), (c, (a, b))):
            vertex_tris[v].append(t_idx)
            neighbours[v].update(others)
    return vertex_tris, [np.fromiter(sorted(n), dtype=int) for n in neighbours]


def _smooth(vertices, triangles, movable, max_edge, sweeps=3):
    """
    Quality-guarded Laplacian smoothing; boundary vertices are never moved.
    """
    vertex_tris, neighbours = _adjacency(len(vertices), triangles)
    accepted = 0
    for _ in range(sweeps):
        for v in movable:
            local = triangles[vertex_tris[v]]
            old = vertices[v].copy()
            before = triangle_angles(vertices, local).min()
            vertices[v] = vertices[neighbours[v]].mean(axis=0)
            p = vertices[local]
            e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
            areas = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
            longest = np.linalg.norm(vertices[neighbours[v]] - vertices[v], axis=1).max()
            if areas.min() <= 0.0 or longest > max_edge or triangle_angles(vertices, local).min() < before:
                vertices[v] = old
            else:
                accepted += 1
    return accepted


def _tag_regions(mesh_vertices, triangles, lung_disks):
    regions = np.full(len(triangles), Region.TORSO, dtype=object)
    centroids = mesh_vertices[triangles].mean(axis=1)
    for center, radius in lung_disks:
        inside = np.linalg.norm(centroids - np.asarray(center, dtype=float), axis=1) < radius
        regions[inside] = Region.LUNG
    return regions


def _boundary_from_rings(ring_ids, marker):
    n = len(ring_ids)
    return [(ring_ids[i], ring_ids[(i + 1) % n]) for i in range(n)], [marker] * n


def build_torso_mesh(config, seed=0):
    """
    Triangulate the annulus between heart and torso circles.

    Args:
        config: ``MeshConfig``.
        seed: Seed of the interior jitter.

    Returns:
        Mesh2D: Valid mesh (all invariants checked).

    Raises:
        GeometryOverlap: If the disks violate containment or disjointness.
        MeshQuality: If the minimum angle ends up below 20 degrees or a triangle exceeds 1.5 targetH.
    """
    _check_geometry(config)
    R, r, h = config.outer_radius, config.heart_radius, config.target_h
    c = np.asarray(config.heart_center, dtype=float)
    n_rings = max(1, math.ceil((R - r + np.linalg.norm(c)) / h))

    points, ring_ids = [], []
    count = 0
    for k in range(n_rings + 1):
        rho = k / n_rings
        radius = (1.0 - rho) * r + rho * R
        n_k = max(6, math.ceil(2.0 * np.pi * radius / h))
        points.append(_ring((1.0 - rho) * c, radius, n_k, (k % 2) * np.pi / n_k))
        ring_ids.append(np.arange(count, count + n_k))
        count += n_k
    vertices = np.concatenate(points)

    interior = np.concatenate(ring_ids[1:-1]) if n_rings > 1 else np.empty(0, dtype=int)
    rng = np.random.default_rng(seed)
    vertices[interior] += rng.uniform(-0.02 * h, 0.02 * h, size=(len(interior), 2))
    triangles = _triangulate(vertices, hole=(c, r))
    if len(interior):
        accepted = _smooth(vertices, triangles, interior, 1.5 * h)
        logging.debug("[MESH] Smoothing accepted {} moves".format(accepted))

    heart_edges, heart_markers = _boundary_from_rings(ring_ids[0], Marker.HEART)
    outer_edges, outer_markers = _boundary_from_rings(ring_ids[-1], Marker.OUTER)
    mesh = Mesh2D(
        vertices=vertices,
        triangles=triangles,
        regions=_tag_regions(vertices, triangles, config.lung_disks),
        boundary_edges=np.asarray(heart_edges + outer_edges, dtype=int),
        markers=np.asarray(heart_markers + outer_markers, dtype=object),
        outer_radius=float(R),
        heart_radius=float(r),
        heart_center=tuple(float(x) for x in c),
        target_h=float(h),
    )
    check_mesh(mesh)
    logging.info("[MESH] Torso mesh: {} vertices, {} triangles, {} epicardial nodes".format(mesh.n_vertices, mesh.n_triangles, len(ring_ids[0])))
    return mesh


def build_disk_mesh(radius, target_h, center=(0.0, 0.0)):
    """
    Triangulate a full disk (the fine heart mesh). Rim edges are marked HEART.
    """
    if radius <= 0.0 or target_h <= 0.0:
        raise GeometryOverlap("Disk radius and targetH must be positive")
    c = np.asarray(center, dtype=float)
    n_rings = max(1, math.ceil(radius / target_h))
    points, rim = [c[None, :].copy()], None
    count = 1
    for k in range(1, n_rings + 1):
        ring_radius = radius * k / n_rings
        n_k = max(6, math.ceil(2.0 * np.pi * ring_radius / target_h))
        points.append(_ring(c, ring_radius, n_k, (k % 2) * np.pi / n_k))
        rim = np.arange(count, count + n_k)
        count += n_k
    vertices = np.concatenate(points)
    triangles = _triangulate(vertices)

    rim_edges, rim_markers = _boundary_from_rings(rim, Marker.HEART)
    mesh = Mesh2D(
        vertices=vertices,
        triangles=triangles,
        regions=np.full(len(triangles), Region.HEART, dtype=object),
        boundary_edges=np.asarray(rim_edges, dtype=int),
        markers=np.asarray(rim_markers, dtype=object),
        outer_radius=float(radius),
        heart_radius=float(radius),
        heart_center=tuple(float(x) for x in c),
        target_h=float(target_h),
    )
    check_mesh(mesh)
    logging.info("[MESH] Disk mesh: {} vertices, {} triangles".format(mesh.n_vertices, mesh.n_triangles))
    return mesh


def check_mesh(mesh, min_angle=MIN_ANGLE_DEG):
    """
    Verify every Mesh2D invariant. The diameter bound of 1.5 targetH is only checked
    when the mesh carries its ``target_h``.

    Raises:
        TopologyError: Non-conforming triangulation, bad orientation or off-circle boundary vertices.
        MeshQuality: Minimum angle below ``min_angle`` degrees, or a triangle wider than 1.5 targetH.
    """
    tris = mesh.triangles
    if tris.min() < 0 or tris.max() >= mesh.n_vertices:
        raise TopologyError("Triangle references a vertex out of range")
    if np.any(mesh.signed_areas() <= 0.0):
        raise TopologyError("{} triangles are not positively oriented".format(int(np.sum(mesh.signed_areas() <= 0.0))))
    edges, counts = mesh.edges()
    if np.any(counts > 2):
        raise TopologyError("Edges shared by more than two triangles")
    single = {tuple(e) for e in edges[counts == 1]}
    marked = {tuple(sorted(e)) for e in mesh.boundary_edges}
    if single != marked or len(marked) != len(mesh.boundary_edges):
        raise TopologyError("Boundary edges do not match the edges owned by a single triangle")

    heart = mesh.boundary_vertices(Marker.HEART)
    if len(heart):
        dist = np.linalg.norm(mesh.vertices[heart] - np.asarray(mesh.heart_center), axis=1)
        if np.max(np.abs(dist - mesh.heart_radius)) > CIRCLE_TOL * mesh.heart_radius:
            raise TopologyError("HEART vertices off the heart circle")
    outer = mesh.boundary_vertices(Marker.OUTER)
    if len(outer):
        dist = np.linalg.norm(mesh.vertices[outer], axis=1)
        if np.max(np.abs(dist - mesh.outer_radius)) > CIRCLE_TOL * mesh.outer_radius:
            raise TopologyError("OUTER vertices off the torso circle")

    if mesh.target_h is not None:
        widest = mesh.diameters().max()
        if widest > 1.5 * mesh.target_h:
            raise MeshQuality("Triangle diameter {:.4f} above 1.5 targetH ({:.4f})".format(widest, 1.5 * mesh.target_h))

    worst = mesh.angles().min()
    if worst < min_angle:
        raise MeshQuality("Minimum angle {:.2f} deg below {:.1f} deg".format(worst, min_angle))
    return True


def mesh_quality(mesh):
    return {"min_angle": float(mesh.angles().min()), "max_diameter": float(mesh.diameters().max()), "vertices": mesh.n_vertices, "triangles": mesh.n_triangles}


def extract_epicardial_curve(mesh):
    """
    Order the HEART boundary vertices into a closed counterclockwise loop.

    Raises:
        TopologyError: If the HEART edges do not form a single closed loop.
    """
    heart_edges = mesh.boundary_edges[mesh.markers == Marker.HEART]
    if len(heart_edges) < 3:
        raise TopologyError("Need at least 3 HEART edges, got {}".format(len(heart_edges)))
    graph = nx.Graph()
    graph.add_edges_from(map(tuple, heart_edges))
    if graph.number_of_edges() != len(heart_edges) or any(d != 2 for _, d in graph.degree()) or not nx.is_connected(graph):
        raise TopologyError("HEART edges do not form a single closed loop")

    start = min(graph.nodes)
    loop = [start]
    previous, current = None, start
    while True:
        nxt = [v for v in sorted(graph.neighbors(current)) if v != previous][0]
        if nxt == start:
            break
        loop.append(nxt)
        previous, current = current, nxt
    loop = np.asarray(loop, dtype=int)

    rel = mesh.vertices[loop] - np.asarray(mesh.heart_center)
    twice_area = np.sum(rel[:, 0] * np.roll(rel[:, 1], -1) - np.roll(rel[:, 0], -1) * rel[:, 1])
    if twice_area < 0:
        loop = np.concatenate([loop[:1], loop[1:][::-1]])
    return SurfaceMesh1D.from_points(mesh.vertices[loop], vertex_ids=loop)


def define_electrodes(mesh, n_electrodes, coverage=0.9):
    """
    Split the OUTER boundary into ``n_electrodes`` equal-angular-width patches.

    Raises:
        InsufficientResolution: If the boundary is too coarse or a patch gets no edge.
    """
    if not 0.0 < coverage <= 1.0:
        raise InsufficientResolution("Coverage fraction must lie in (0, 1], got {}".format(coverage))
    outer_idx = np.flatnonzero(mesh.markers == Marker.OUTER)
    if n_electrodes < 1 or len(outer_idx) < 2 * n_electrodes:
        raise InsufficientResolution("{} OUTER edges cannot host {} electrodes".format(len(outer_idx), n_electrodes))
    ends = mesh.vertices[mesh.boundary_edges[outer_idx]]
    mids = ends.mean(axis=1)
    lengths = np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1)
    mid_angles = np.arctan2(mids[:, 1], mids[:, 0])

    width = coverage * 2.0 * np.pi / n_electrodes
    patches, patch_lengths = [], []
    for k in range(n_electrodes):
        centre = 2.0 * np.pi * k / n_electrodes
        offset = np.mod(mid_angles - centre + np.pi, 2.0 * np.pi) - np.pi
        inside = np.flatnonzero((offset >= -0.5 * width) & (offset < 0.5 * width))
        if len(inside) == 0:
            raise InsufficientResolution("Electrode {} contains no boundary edge".format(k))
        inside = inside[np.argsort(offset[inside], kind="stable")]
        patches.append(outer_idx[inside])
        patch_lengths.append(lengths[inside].sum())
    return ElectrodeSet(patches=patches, patch_lengths=np.asarray(patch_lengths), coverage=float(coverage))


def refine_uniform(mesh):
    """
    Red refinement: every triangle is split into four through its edge midpoints.
    Boundary midpoints are projected onto their circles.
    """
    edges, _ = mesh.edges()
    n = mesh.n_vertices
    midpoint_index = {tuple(e): n + k for k, e in enumerate(edges)}
    midpoints = mesh.vertices[edges].mean(axis=1)

    centre = np.asarray(mesh.heart_center, dtype=float)
    new_edges, new_markers = [], []
    for (a, b), marker in zip(mesh.boundary_edges, mesh.markers):
        m = midpoint_index[tuple(sorted((a, b)))]
        k = m - n
        if marker == Marker.HEART:
            rel = midpoints[k] - centre
            midpoints[k] = centre + mesh.heart_radius * rel / np.linalg.norm(rel)
        else:
            midpoints[k] = mesh.outer_radius * midpoints[k] / np.linalg.norm(midpoints[k])
        new_edges += [(a, m), (m, b)]
        new_markers += [marker, marker]

    tris = mesh.triangles
    ab = np.array([midpoint_index[tuple(sorted((t[0], t[1])))] for t in tris])
    bc = np.array([midpoint_index[tuple(sorted((t[1], t[2])))] for t in tris])
    ca = np.array([midpoint_index[tuple(sorted((t[2], t[0])))] for t in tris])
    children = np.stack(
        [
            np.stack([tris[:, 0], ab, ca], axis=1),
            np.stack([ab, tris[:, 1], bc], axis=1),
            np.stack([ca, bc, tris[:, 2]], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ],
        axis=1,
    ).reshape(-1, 3)

    refined = Mesh2D(
        vertices=np.concatenate([mesh.vertices, midpoints]),
        triangles=children,
        regions=np.repeat(mesh.regions, 4),
        boundary_edges=np.asarray(new_edges, dtype=int),
        markers=np.asarray(new_markers, dtype=object),
        outer_radius=mesh.outer_radius,
        heart_radius=mesh.heart_radius,
        heart_center=mesh.heart_center,
        target_h=None if mesh.target_h is None else 0.5 * mesh.target_h,
    )
    check_mesh(refined)
    return refined
