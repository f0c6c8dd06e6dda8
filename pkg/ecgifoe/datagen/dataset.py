#
# This file is part of the ecgifoe package.
#

"""
Synthetic epicardial datasets: sample parameter draws, one simulated sample per
seed, noise models and the on-disk dataset layout.
"""
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ecgifoe.datagen.heart import HeartModel, Scar, Stimulus
from ecgifoe.datagen.monodomain import extracellular_solve, simulate_monodomain
from ecgifoe.exceptions import IoError, MissingArtifacts, ParameterOutOfRange
from ecgifoe.fem.fields import SpaceTimeField, read_field, write_field
from ecgifoe.forward.observation import NoiseMeta, Observation
from ecgifoe.geometry.mesh import build_disk_mesh
from ecgifoe.geometry.meshio import read_mesh, write_mesh
from ecgifoe.utils.observer import Events, Observable

DT_RANGE = (0.07, 0.12)
N_SAMPLE_RANGE = (7, 13)
LAM_LT_RANGE = (2.16, 2.84)
EPS_RANGE = (0.58, 0.93)
SCAR_FACTOR_RANGE = (0.05, 0.25)
SCAR_PROBABILITY = 1.0 / 3.0
SECOND_SCAR_PROBABILITY = 0.5
SPLIT_FRACTIONS = (0.8, 0.1)


@dataclass(frozen=True)
class DatagenSettings:
    """
    Geometry of stimulus and scars (fractions of the heart radius), stimulus gain
    and the fine heart mesh spacing (``None`` picks four fine nodes per coarse one).
    """

    stimulus_radius: float = 0.15
    stimulus_gain: float = 40.0
    scar_radius: float = 0.2
    fine_h: float = None

    @classmethod
    def from_config(cls, config):
        section = config.section("datagen")
        fine_h = section.get("fine_h")
        return cls(
            stimulus_radius=float(section["stimulus_radius"]),
            stimulus_gain=float(section["stimulus_gain"]),
            scar_radius=float(section["scar_radius"]),
            fine_h=None if fine_h is None else float(fine_h),
        )


@dataclass(frozen=True)
class SampleParameters:
    seed: int
    dt: float
    n_sample: int
    lam_lt: float
    eps: float
    stimulus_angle: float
    scars: tuple = ()

    def to_text(self):
        lines = [
            "seed {}".format(self.seed),
            "dt {!r}".format(self.dt),
            "n_sample {}".format(self.n_sample),
            "lam_lt {!r}".format(self.lam_lt),
            "eps {!r}".format(self.eps),
            "stimulus_angle {!r}".format(self.stimulus_angle),
        ]
        lines += ["scar {!r} {!r} {!r} {!r}".format(s.center[0], s.center[1], s.radius, s.factor) for s in self.scars]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        values, scars = {}, []
        for line in text.splitlines():
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "scar":
                x, y, r, f = (float(p) for p in parts[1:5])
                scars.append(Scar((x, y), r, f))
            else:
                values[parts[0]] = parts[1]
        try:
            return cls(int(values["seed"]), float(values["dt"]), int(values["n_sample"]), float(values["lam_lt"]), float(values["eps"]), float(values["stimulus_angle"]), tuple(scars))
        except (KeyError, ValueError) as e:
            raise IoError("Malformed sample metadata: {}".format(e))


def _heart_circle(surface):
    center = surface.points.mean(axis=0)
    radius = float(np.linalg.norm(surface.points - center, axis=1).mean())
    return center, radius


def draw_sample_parameters(seed, heart_center=(0.0, 0.0), heart_radius=1.0, settings=None):
    """
    Draw time step, snapshot stride, ``lambda_LT``, ``eps`` and the stimulus angle
    uniformly; a scar with probability 1/3 and a second one with probability 1/6.
    """
    settings = settings or DatagenSettings()
    rng = np.random.default_rng(seed)
    dt = float(rng.uniform(*DT_RANGE))
    n_sample = int(rng.integers(N_SAMPLE_RANGE[0], N_SAMPLE_RANGE[1] + 1))
    lam_lt = float(rng.uniform(*LAM_LT_RANGE))
    eps = float(rng.uniform(*EPS_RANGE))
    angle = float(rng.uniform(0.0, 2.0 * np.pi))
    scars = []
    if rng.random() < SCAR_PROBABILITY:
        scars.append(_draw_scar(rng, heart_center, heart_radius, settings))
        if rng.random() < SECOND_SCAR_PROBABILITY:
            scars.append(_draw_scar(rng, heart_center, heart_radius, settings))
    return SampleParameters(int(seed), dt, n_sample, lam_lt, eps, angle, tuple(scars))


def _draw_scar(rng, center, radius, settings):
    r = radius * math.sqrt(rng.random())
    theta = rng.uniform(0.0, 2.0 * np.pi)
    c = (float(center[0] + r * math.cos(theta)), float(center[1] + r * math.sin(theta)))
    return Scar(c, settings.scar_radius * radius, float(rng.uniform(*SCAR_FACTOR_RANGE)))


def fine_heart_mesh(surface, settings=None):
    settings = settings or DatagenSettings()
    center, radius = _heart_circle(surface)
    h = settings.fine_h or 2.0 * np.pi * radius / (4 * surface.n_vertices)
    return build_disk_mesh(radius, h, center)


def heart_model_for(params, fine_mesh, settings=None):
    settings = settings or DatagenSettings()
    center = np.asarray(fine_mesh.heart_center)
    radius = fine_mesh.heart_radius
    stim_center = tuple(center + radius * np.array([math.cos(params.stimulus_angle), math.sin(params.stimulus_angle)]))
    stimulus = Stimulus(stim_center, settings.stimulus_radius * radius, gain=settings.stimulus_gain)
    return HeartModel.build(fine_mesh, stimulus, params.lam_lt, params.eps, scars=params.scars)


def restriction_indices(fine_mesh, surface):
    """
    Nearest fine-mesh vertex of every coarse epicardial node.
    """
    _, idx = cKDTree(fine_mesh.vertices).query(surface.points)
    return idx


def normalize_unit(values):
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def make_sample(seed, surface, grid, settings=None, fine_mesh=None, nearest=None):
    """
    Simulate one sample and restrict it to the coarse epicardial curve.

    Args:
        seed: Sample seed.
        surface: Coarse SurfaceMesh1D.
        grid: TimeGrid of the output.
        settings: DatagenSettings.
        fine_mesh: Fine heart mesh (built from ``surface`` when omitted).
        nearest: Precomputed ``restriction_indices``.

    Returns:
        tuple: ``(SpaceTimeField scaled to [0, 1], SampleParameters)``.
    """
    settings = settings or DatagenSettings()
    fine_mesh = fine_mesh or fine_heart_mesh(surface, settings)
    nearest = restriction_indices(fine_mesh, surface) if nearest is None else nearest
    params = draw_sample_parameters(seed, fine_mesh.heart_center, fine_mesh.heart_radius, settings)
    model = heart_model_for(params, fine_mesh, settings)

    stride = params.n_sample * params.dt
    steps = params.n_sample * int(math.ceil(grid.duration / stride - 1e-12))
    result = simulate_monodomain(model, params.dt, steps, sample_every=params.n_sample)
    ve = extracellular_solve(result, model)[:, nearest]
    times = result.times
    values = np.stack([np.interp(grid.nodes, times, ve[:, i]) for i in range(surface.n_vertices)])
    logging.debug("[DATAGEN] Sample {}: dt={:.4f} n_sample={} scars={}".format(seed, params.dt, params.n_sample, len(params.scars)))
    return SpaceTimeField(normalize_unit(values), grid, surface.name), params


def add_field_noise(u, kappa, seed):
    """
    ``u + kappa n`` with ``n`` standard normal per nodal coefficient.
    """
    if kappa < 0.0:
        raise ParameterOutOfRange("Noise level must be nonnegative, got {}".format(kappa))
    values = u.values if isinstance(u, SpaceTimeField) else np.asarray(u, dtype=float)
    noisy = values + kappa * np.random.default_rng(seed).standard_normal(values.shape)
    return u.with_values(noisy) if isinstance(u, SpaceTimeField) else noisy


def add_observation_noise(z, snr_db, seed):
    """
    White Gaussian noise with per-electrode standard deviation ``rms(z_i) 10^(-snr/20)``.
    """
    if not math.isfinite(snr_db):
        raise ParameterOutOfRange("SNR must be finite, got {}".format(snr_db))
    rms = np.sqrt(np.mean(z.values ** 2, axis=1))
    std = rms * 10.0 ** (-snr_db / 20.0)
    noise = std[:, None] * np.random.default_rng(seed).standard_normal(z.values.shape)
    return Observation(z.values + noise, z.grid, NoiseMeta("gaussian_snr", float(snr_db), int(seed)), z.electrode_ref)


def split_seeds(seeds):
    """
    Contiguous 80/10/10 split of the sorted seeds into train, validation and test.
    """
    seeds = sorted(int(s) for s in seeds)
    n = len(seeds)
    n_train = int(round(SPLIT_FRACTIONS[0] * n))
    n_val = int(round(SPLIT_FRACTIONS[1] * n))
    return seeds[:n_train], seeds[n_train:n_train + n_val], seeds[n_train + n_val:]


###########################
#     Dataset layout      #
###########################


@dataclass(eq=False)
class Dataset:
    """
    Loaded dataset: torso mesh with electrodes, ground-truth fields and metadata per seed.
    """

    mesh: object
    electrodes: object
    fields: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    split: dict = field(default_factory=dict)

    def subset(self, name, limit=None):
        seeds = self.split.get(name, [])
        if limit is not None:
            seeds = seeds[:limit]
        return [self.fields[s] for s in seeds]


def _sample_path(out, seed, ext):
    return os.path.join(out, "samples", "{:04d}.{}".format(seed, ext))


def generate_dataset(out, seeds, mesh, electrodes, surface, grid, settings=None, threads=1, observers=()):
    """
    Write ``mesh.txt``, ``samples/NNNN.stf``, ``samples/NNNN.meta`` and ``split.txt`` under ``out``.
    """
    settings = settings or DatagenSettings()
    seeds = sorted(int(s) for s in seeds)
    os.makedirs(os.path.join(out, "samples"), exist_ok=True)
    write_mesh(mesh, os.path.join(out, "mesh.txt"), electrodes)

    fine_mesh = fine_heart_mesh(surface, settings)
    nearest = restriction_indices(fine_mesh, surface)
    logging.info("[DATAGEN] Generating {} samples on a fine mesh with {} vertices ({} threads)".format(len(seeds), fine_mesh.n_vertices, threads))

    events = Observable(*observers)

    def work(seed):
        return make_sample(seed, surface, grid, settings, fine_mesh, nearest)

    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        for seed, (sample, params) in zip(seeds, pool.map(work, seeds)):
            write_field(sample, _sample_path(out, seed, "stf"))
            with open(_sample_path(out, seed, "meta"), "w") as f:
                f.write(params.to_text())
            events.notify(Events.SAMPLE_GENERATED_EVENT, seed)

    train, val, test = split_seeds(seeds)
    with open(os.path.join(out, "split.txt"), "w") as f:
        for name, part in (("train", train), ("val", val), ("test", test)):
            f.write(" ".join([name] + [str(s) for s in part]) + "\n")
    logging.info("[DATAGEN] Dataset written to {} ({} train, {} val, {} test)".format(out, len(train), len(val), len(test)))


def load_dataset(path):
    """
    Read a dataset directory written by ``generate_dataset``.

    Raises:
        MissingArtifacts: If the directory, its mesh, split or a listed sample is missing.
    """
    split_file = os.path.join(path, "split.txt")
    mesh_file = os.path.join(path, "mesh.txt")
    if not os.path.isfile(split_file) or not os.path.isfile(mesh_file):
        raise MissingArtifacts("No dataset found at {}".format(path))
    mesh, electrodes = read_mesh(mesh_file)
    split = {}
    with open(split_file) as f:
        for line in f:
            parts = line.split()
            if parts:
                split[parts[0]] = [int(s) for s in parts[1:]]
    dataset = Dataset(mesh, electrodes, split=split)
    for seed in sorted(s for part in split.values() for s in part):
        stf = _sample_path(path, seed, "stf")
        if not os.path.isfile(stf):
            raise MissingArtifacts("Sample {} listed in the split is missing".format(stf))
        dataset.fields[seed] = read_field(stf)
        meta = _sample_path(path, seed, "meta")
        if os.path.isfile(meta):
            with open(meta) as f:
                dataset.params[seed] = SampleParameters.from_text(f.read())
    logging.info("[DATAGEN] Loaded {} samples from {}".format(len(dataset.fields), path))
    return dataset
