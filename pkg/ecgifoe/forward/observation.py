#
# This file is part of the ecgifoe package.
#

import logging
from dataclasses import dataclass, field

import numpy as np

from ecgifoe.exceptions import IoError, ShapeMismatch
from ecgifoe.fem.timegrid import TimeGrid

OBSERVATION_MAGIC = b"OBS1"
NOISE_KINDS = ("none", "gaussian_field", "gaussian_snr")


@dataclass(frozen=True)
class NoiseMeta:
    """
    Noise record of an observation: kind, level (kappa or SNR in dB) and seed.
    """

    kind: str = "none"
    level: float = 0.0
    seed: int = 0


@dataclass(eq=False)
class Observation:
    """
    Per-electrode time series ``z`` of shape (N_Sigma, N_T + 1).
    """

    values: np.ndarray
    grid: TimeGrid
    noise: NoiseMeta = field(default_factory=NoiseMeta)
    electrode_ref: str = "electrodes"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[1] != self.grid.n_nodes:
            raise ShapeMismatch("Observation of shape {} does not match {} time nodes".format(self.values.shape, self.grid.n_nodes))
        if not np.all(np.isfinite(self.values)):
            raise ShapeMismatch("Observation contains non-finite entries")

    @property
    def n_electrodes(self):
        return self.values.shape[0]


def write_observation(obs, path):
    n_e, n_t = obs.values.shape
    try:
        with open(path, "wb") as f:
            f.write(OBSERVATION_MAGIC)
            f.write(np.array([n_e, n_t], dtype="<u8").tobytes())
            f.write(np.array([obs.grid.step], dtype="<f8").tobytes())
            f.write(np.array([NOISE_KINDS.index(obs.noise.kind)], dtype="<u8").tobytes())
            f.write(np.array([obs.noise.level], dtype="<f8").tobytes())
            f.write(np.array([obs.noise.seed], dtype="<u8").tobytes())
            f.write(np.ascontiguousarray(obs.values, dtype="<f8").tobytes())
    except OSError as e:
        raise IoError("Cannot write observation {}: {}".format(path, e))
    logging.debug("[FORWARD] Observation written to {}".format(path))


def read_observation(path):
    """
    Read an ``OBS1`` file.

    Raises:
        IoError: On a missing file, wrong magic, unknown noise kind or truncated payload.
    """
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as e:
        raise IoError("Cannot read observation {}: {}".format(path, e))
    header = 4 + 16 + 8 + 24
    if raw[:4] != OBSERVATION_MAGIC or len(raw) < header:
        raise IoError("{} is not an OBS1 observation file".format(path))
    n_e, n_t = (int(v) for v in np.frombuffer(raw, dtype="<u8", count=2, offset=4))
    step = float(np.frombuffer(raw, dtype="<f8", count=1, offset=20)[0])
    kind = int(np.frombuffer(raw, dtype="<u8", count=1, offset=28)[0])
    level = float(np.frombuffer(raw, dtype="<f8", count=1, offset=36)[0])
    seed = int(np.frombuffer(raw, dtype="<u8", count=1, offset=44)[0])
    if kind >= len(NOISE_KINDS) or n_t < 2 or len(raw) != header + 8 * n_e * n_t:
        raise IoError("Observation file {} is inconsistent".format(path))
    values = np.frombuffer(raw, dtype="<f8", offset=header).reshape(n_e, n_t).astype(float)
    return Observation(values, TimeGrid(n_t - 1, step), NoiseMeta(NOISE_KINDS[kind], level, seed))


def write_observation_csv(obs, path):
    try:
        np.savetxt(path, obs.values, delimiter=",", fmt="%.17g", header="kind={} level={!r} seed={}".format(obs.noise.kind, obs.noise.level, obs.noise.seed))
    except OSError as e:
        raise IoError("Cannot write CSV {}: {}".format(path, e))
