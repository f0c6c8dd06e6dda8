#
# This file is part of the ecgifoe package.
#

"""
Heart tissue model of the synthetic data generator: anisotropic conductivities
with circumferential fibres, membrane and ionic constants, stimulus and scars.

Units are cm, ms, mV and uA/cm^2; conductivities are read in mS/cm.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from ecgifoe.exceptions import ParameterOutOfRange
from ecgifoe.fem.assembly import assemble_mass_2d, assemble_stiffness

SIGMA_IL = 3.0
ALPHA = 1.0
FIBER_TAPER = 0.1


@dataclass(frozen=True)
class IonicModel:
    """
    Cubic ionic current without repolarization.
    """

    v_rest: float = -85.0
    v_dep: float = 30.0
    v_th: float = -55.0
    g_max: float = 1.4e-3

    def current(self, v):
        return self.g_max * (v - self.v_rest) * (v - self.v_th) * (v - self.v_dep)


@dataclass(frozen=True)
class Membrane:
    cm: float = 1.0
    beta: float = 100.0


@dataclass(frozen=True)
class Stimulus:
    """
    Disk-shaped stimulus region. The applied current is ``gain * i_max`` for
    ``t < duration`` on nodes that have not yet crossed the threshold.
    """

    center: tuple
    radius: float
    i_max: float = 1.2
    duration: float = 100.0
    gain: float = 40.0

    @property
    def amplitude(self):
        return self.gain * self.i_max


@dataclass(frozen=True)
class Scar:
    center: tuple
    radius: float
    factor: float

    def __post_init__(self):
        if not 0.0 < self.factor <= 1.0 or self.radius <= 0.0:
            raise ParameterOutOfRange("Scar factor must lie in (0, 1] and radius be positive, got {} and {}".format(self.factor, self.radius))


def conductivity_values(sigma_il, lam_lt, alpha, eps):
    """
    Transverse and extracellular conductivities from ``sigma_il``, the
    anisotropy ratio ``lam_lt``, the ratio ``alpha`` and ``eps``.

    Returns:
        dict: ``sigma_il``, ``sigma_it``, ``sigma_el``, ``sigma_et``.

    Raises:
        ParameterOutOfRange: Unless ``sigma_il, lam_lt, alpha > 0`` and ``0 < eps < 1``.
    """
    if sigma_il <= 0.0 or lam_lt <= 0.0 or alpha <= 0.0 or not 0.0 < eps < 1.0:
        raise ParameterOutOfRange("Invalid conductivity parameters sigma_il={}, lam_lt={}, alpha={}, eps={}".format(sigma_il, lam_lt, alpha, eps))
    sigma_it = sigma_il / lam_lt ** 2 * (1.0 + alpha * (1.0 - eps)) / (1.0 + alpha)
    return {
        "sigma_il": float(sigma_il),
        "sigma_it": float(sigma_it),
        "sigma_el": float(sigma_il / alpha),
        "sigma_et": float(sigma_it / (alpha * (1.0 - eps))),
    }


def _rank_one(longitudinal, transverse, fiber):
    outer = fiber[..., :, None] * fiber[..., None, :]
    return transverse * np.eye(2) + (longitudinal - transverse) * outer


def conductivity_tensors(sigma_il, lam_lt, alpha, eps, fiber):
    """
    ``G_a = sigma_at I + (sigma_al - sigma_at) l (x) l`` for ``a`` in ``{i, e}`` and
    ``G_m = G_i (G_i + G_e)^{-1} G_e``.

    Args:
        fiber: A 2-vector or an (m, 2) array of fibre directions. Vectors shorter
            than one blend the tensors toward isotropy.

    Returns:
        tuple: ``(Gi, Ge, Gm)`` of shape (2, 2) or (m, 2, 2).
    """
    s = conductivity_values(sigma_il, lam_lt, alpha, eps)
    fiber = np.asarray(fiber, dtype=float)
    Gi = _rank_one(s["sigma_il"], s["sigma_it"], fiber)
    Ge = _rank_one(s["sigma_el"], s["sigma_et"], fiber)
    Gm = Gi @ np.linalg.solve(Gi + Ge, Ge)
    Gm = 0.5 * (Gm + np.swapaxes(Gm, -1, -2))
    return Gi, Ge, Gm


def circumferential_fibers(mesh, center=None, taper=FIBER_TAPER):
    """
    Unit circumferential fibre per element, scaled by ``sqrt(r / (taper r_H))``
    inside the core radius ``taper r_H`` so the tensors become isotropic at the center.
    """
    c = np.asarray(mesh.heart_center if center is None else center, dtype=float)
    d = mesh.centroids() - c
    r = np.linalg.norm(d, axis=1)
    fibers = np.zeros_like(d)
    nonzero = r > 0.0
    fibers[nonzero] = np.stack([-d[nonzero, 1], d[nonzero, 0]], axis=1) / r[nonzero, None]
    core = taper * mesh.heart_radius
    if core > 0.0:
        fibers *= np.sqrt(np.minimum(1.0, r / core))[:, None]
    return fibers


@dataclass(eq=False)
class HeartModel:
    """
    Tissue of the fine heart mesh. ``Gm`` already carries the scar reductions.
    """

    mesh: object
    fibers: np.ndarray
    Gi: np.ndarray
    Ge: np.ndarray
    Gm: np.ndarray
    stimulus: Stimulus
    ionic: IonicModel = field(default_factory=IonicModel)
    membrane: Membrane = field(default_factory=Membrane)
    scars: list = field(default_factory=list)

    @classmethod
    def build(cls, mesh, stimulus, lam_lt, eps, sigma_il=SIGMA_IL, alpha=ALPHA, scars=(), ionic=None, membrane=None, taper=FIBER_TAPER):
        fibers = circumferential_fibers(mesh, taper=taper)
        Gi, Ge, Gm = conductivity_tensors(sigma_il, lam_lt, alpha, eps, fibers)
        centroids = mesh.centroids()
        for scar in scars:
            inside = np.linalg.norm(centroids - np.asarray(scar.center), axis=1) < scar.radius
            Gm[inside] *= scar.factor
            logging.debug("[DATAGEN] Scar at {} (radius {:.3g}, factor {:.3g}) covers {} elements".format(scar.center, scar.radius, scar.factor, int(inside.sum())))
        return cls(mesh, fibers, Gi, Ge, Gm, stimulus, ionic or IonicModel(), membrane or Membrane(), list(scars))

    def stimulus_nodes(self):
        d = np.linalg.norm(self.mesh.vertices - np.asarray(self.stimulus.center), axis=1)
        return d <= self.stimulus.radius

    def mass(self):
        return assemble_mass_2d(self.mesh)

    def stiffness(self, which="m"):
        """
        Stiffness of ``G_m`` (``"m"``), ``G_i`` (``"i"``) or ``G_e`` (``"e"``).
        """
        tensors = {"m": self.Gm, "i": self.Gi, "e": self.Ge}[which]
        return assemble_stiffness(self.mesh, tensors)
