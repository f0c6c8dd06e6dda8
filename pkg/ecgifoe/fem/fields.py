#
# This file is part of the ecgifoe package.
#

"""
Space-time coefficient containers and their file formats.
"""
import logging
from dataclasses import dataclass

import numpy as np

from ecgifoe.exceptions import IoError, ShapeMismatch
from ecgifoe.fem.timegrid import TimeGrid

FIELD_MAGIC = b"STF1"


@dataclass(eq=False)
class SpaceTimeField:
    """
    Nodal coefficients ``u[i, s]`` of a P1 x P1 space-time function.

    Args:
        values: (N_V, N_T + 1) array.
        grid: TimeGrid of the columns.
        mesh_ref: Identifier of the surface mesh owning the rows.
    """

    values: np.ndarray
    grid: TimeGrid
    mesh_ref: str = "epicardium"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != self.grid.n_nodes:
            raise ShapeMismatch("Field of shape {} does not match a grid with {} nodes".format(self.values.shape, self.grid.n_nodes))
        if not np.all(np.isfinite(self.values)):
            raise ShapeMismatch("Field contains non-finite entries")

    @property
    def n_vertices(self):
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape

    def with_values(self, values):
        return SpaceTimeField(values, self.grid, self.mesh_ref)

    def copy(self):
        return self.with_values(self.values.copy())


@dataclass(eq=False)
class GradientField:
    """
    Per-segment ambient 2-vectors per time node, stored component-major:
    rows ``[0, N_Q)`` hold the x component and rows ``[N_Q, 2 N_Q)`` the y component.
    """

    values: np.ndarray
    grid: TimeGrid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] % 2 or self.values.shape[1] != self.grid.n_nodes:
            raise ShapeMismatch("Gradient field of shape {} is not (2 N_Q, N_T + 1)".format(self.values.shape))

    @property
    def n_segments(self):
        return self.values.shape[0] // 2

    def component(self, k):
        n = self.n_segments
        return self.values[k * n:(k + 1) * n]

    @classmethod
    def from_components(cls, gx, gy, grid):
        return cls(np.concatenate([gx, gy], axis=0), grid)


def write_field(field, path):
    """
    Write a SpaceTimeField in the ``STF1`` binary format (little endian).
    """
    n_v, n_t = field.values.shape
    try:
        with open(path, "wb") as f:
            f.write(FIELD_MAGIC)
            f.write(np.array([n_v, n_t], dtype="<u8").tobytes())
            f.write(np.array([field.grid.step], dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    except OSError as e:
        raise IoError("Cannot write field file {}: {}".format(path, e))
    logging.debug("[FIELD] Wrote {}x{} field to {}".format(n_v, n_t, path))


def read_field(path, mesh_ref="epicardium"):
    """
    Read an ``STF1`` file.

    Raises:
        IoError: If the file is missing, has a wrong magic or a truncated payload.
    """
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise IoError("Cannot read field file {}: {}".format(path, e))
    if raw[:4] != FIELD_MAGIC or len(raw) < 28:
        raise IoError("{} is not an STF1 field file".format(path))
    n_v, n_t = (int(v) for v in np.frombuffer(raw, dtype="<u8", count=2, offset=4))
    step = float(np.frombuffer(raw, dtype="<f8", count=1, offset=20)[0])
    if n_t < 2 or len(raw) != 28 + 8 * n_v * n_t:
        raise IoError("Field file {} has an inconsistent payload".format(path))
    values = np.frombuffer(raw, dtype="<f8", offset=28).reshape(n_v, n_t).astype(float)
    return SpaceTimeField(values, TimeGrid(n_t - 1, step), mesh_ref)


def write_field_csv(field, path):
    try:
        np.savetxt(path, field.values, delimiter=",", fmt="%.17g")
    except OSError as e:
        raise IoError("Cannot write CSV {}: {}".format(path, e))


def read_field_csv(path, step, mesh_ref="epicardium"):
    try:
        values = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as e:
        raise IoError("Cannot read CSV {}: {}".format(path, e))
    return SpaceTimeField(values, TimeGrid(values.shape[1] - 1, step), mesh_ref)
