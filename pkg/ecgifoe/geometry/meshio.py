#
# This file is part of the ecgifoe package.
#

"""
Reader and writer of the ``mesh2d v1`` text format.
"""
import logging

import numpy as np

from ecgifoe.exceptions import IoError
from ecgifoe.geometry.mesh import ElectrodeSet, Mesh2D
from ecgifoe.geometry.tags import Marker

HEADER = "mesh2d v1"


def write_mesh(mesh, path, electrodes=None):
    """
    Write a mesh (and optionally its electrode patches) to ``path``.

    Args:
        mesh: Mesh2D to store.
        path: Destination file.
        electrodes: Optional ElectrodeSet; stored as runs of boundary-edge indices.
    """
    lines = [HEADER]
    cx, cy = mesh.heart_center
    lines.append("geometry {!r} {!r} {!r} {!r}".format(mesh.outer_radius, mesh.heart_radius, cx, cy))
    lines.append("vertices {}".format(mesh.n_vertices))
    lines += ["{!r} {!r}".format(float(x), float(y)) for x, y in mesh.vertices]
    lines.append("triangles {}".format(mesh.n_triangles))
    lines += ["{} {} {} {}".format(i, j, k, tag) for (i, j, k), tag in zip(mesh.triangles, mesh.regions)]
    lines.append("boundary {}".format(len(mesh.boundary_edges)))
    lines += ["{} {} {}".format(i, j, marker) for (i, j), marker in zip(mesh.boundary_edges, mesh.markers)]
    if electrodes is not None:
        lines.append("electrodes {}".format(electrodes.n_electrodes))
        lines += [" ".join(str(int(e)) for e in patch) for patch in electrodes.patches]
    try:
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as e:
        raise IoError("Cannot write mesh file {}: {}".format(path, e))
    logging.info("[MESH] Mesh written to {}".format(path))


def _block(lines, pos, name):
    if pos >= len(lines):
        raise IoError("Unexpected end of file, expected block '{}'".format(name))
    parts = lines[pos].split()
    if len(parts) != 2 or parts[0] != name:
        raise IoError("Expected '{} <count>' at line {}, got '{}'".format(name, pos + 1, lines[pos]))
    try:
        count = int(parts[1])
    except ValueError:
        raise IoError("Invalid count in '{}'".format(lines[pos]))
    if pos + 1 + count > len(lines):
        raise IoError("Block '{}' is truncated".format(name))
    return count, lines[pos + 1: pos + 1 + count], pos + 1 + count


def read_mesh(path):
    """
    Read a ``mesh2d v1`` file.

    Returns:
        tuple: ``(Mesh2D, ElectrodeSet or None)``.

    Raises:
        IoError: If the file is missing or malformed.
    """
    try:
        with open(path) as f:
            lines = [line.strip() for line in f if line.strip()]
    except OSError as e:
        raise IoError("Cannot read mesh file {}: {}".format(path, e))
    if not lines or lines[0] != HEADER:
        raise IoError("{} is not a '{}' file".format(path, HEADER))

    try:
        pos = 1
        geometry = None
        if lines[pos].startswith("geometry"):
            geometry = [float(v) for v in lines[pos].split()[1:5]]
            pos += 1
        _, rows, pos = _block(lines, pos, "vertices")
        vertices = np.array([[float(v) for v in row.split()] for row in rows]).reshape(-1, 2)
        _, rows, pos = _block(lines, pos, "triangles")
        split = [row.split() for row in rows]
        triangles = np.array([[int(v) for v in parts[:3]] for parts in split], dtype=int).reshape(-1, 3)
        regions = np.array([parts[3] for parts in split], dtype=object)
        _, rows, pos = _block(lines, pos, "boundary")
        split = [row.split() for row in rows]
        boundary = np.array([[int(v) for v in parts[:2]] for parts in split], dtype=int).reshape(-1, 2)
        markers = np.array([parts[2] for parts in split], dtype=object)
        electrodes = None
        if pos < len(lines):
            _, rows, pos = _block(lines, pos, "electrodes")
            patches = [np.array([int(v) for v in row.split()], dtype=int) for row in rows]
            ends = vertices[boundary]
            lengths = np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1)
            electrodes = ElectrodeSet(patches=patches, patch_lengths=np.array([lengths[p].sum() for p in patches]), coverage=float("nan"))
    except (ValueError, IndexError) as e:
        raise IoError("Malformed mesh file {}: {}".format(path, e))

    if geometry is None:
        heart = np.unique(boundary[markers == Marker.HEART].ravel())
        outer = np.unique(boundary[markers == Marker.OUTER].ravel())
        centre = vertices[heart].mean(axis=0) if len(heart) else np.zeros(2)
        heart_radius = float(np.linalg.norm(vertices[heart] - centre, axis=1).mean()) if len(heart) else 0.0
        outer_radius = float(np.linalg.norm(vertices[outer], axis=1).mean()) if len(outer) else heart_radius
        geometry = [outer_radius, heart_radius, centre[0], centre[1]]

    mesh = Mesh2D(
        vertices=vertices,
        triangles=triangles,
        regions=regions,
        boundary_edges=boundary,
        markers=markers,
        outer_radius=geometry[0],
        heart_radius=geometry[1],
        heart_center=(geometry[2], geometry[3]),
    )
    return mesh, electrodes
