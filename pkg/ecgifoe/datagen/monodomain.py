#
# This file is part of the ecgifoe package.
#

"""
Monodomain reaction-diffusion simulation and pseudo-bidomain extracellular solve.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from ecgifoe.exceptions import BlowUp, ParameterOutOfRange, SolveFailure

BLOWUP_LIMIT = 1e3
PSEUDO_BIDOMAIN_ETA = 1e-9
EXTRACELLULAR_RESIDUAL_TOL = 1e-8


@dataclass(eq=False)
class SimulationResult:
    """
    Snapshots of the transmembrane potential every ``sample_every`` steps.

    Args:
        transmembrane: (n_snapshots, n_vertices) in mV.
        dt: Time step in ms.
        sample_every: Steps between snapshots.
        extracellular: Filled by ``extracellular_solve``.
    """

    transmembrane: np.ndarray
    dt: float
    sample_every: int
    extracellular: np.ndarray = None

    @property
    def n_snapshots(self):
        return self.transmembrane.shape[0]

    @property
    def times(self):
        return np.arange(self.n_snapshots) * self.sample_every * self.dt


def _factorize(matrix, what):
    try:
        return spla.splu(matrix.tocsc())
    except RuntimeError as e:
        raise SolveFailure("Factorization of the {} matrix failed: {}".format(what, e))


def simulate_monodomain(model, dt, steps, sample_every=1, stimulate=True):
    """
    Semi-implicit time stepping
    ``(C_m M + dt/beta K_m) v^{n+1} = M (C_m v^n - dt (I_ion(v^n) - I_stim))``
    from the rest state, with the left-hand matrix factorized once.

    Args:
        model: HeartModel.
        dt: Time step (ms).
        steps: Number of steps.
        sample_every: Keep every ``sample_every``-th state (the initial state included).
        stimulate: Apply the stimulus (off for rest-state runs).

    Returns:
        SimulationResult: ``floor(steps / sample_every) + 1`` snapshots.

    Raises:
        BlowUp: If any potential exceeds 1e3 mV in magnitude.
        SolveFailure: If the system matrix cannot be factorized.
    """
    if dt <= 0.0 or steps < 0 or sample_every < 1:
        raise ParameterOutOfRange("Invalid time stepping dt={}, steps={}, sample_every={}".format(dt, steps, sample_every))
    ionic, membrane, stimulus = model.ionic, model.membrane, model.stimulus
    M = model.mass()
    K = model.stiffness("m")
    lu = _factorize(membrane.cm * M + (dt / membrane.beta) * K, "monodomain")

    v = np.full(model.mesh.n_vertices, ionic.v_rest)
    region = model.stimulus_nodes() if stimulate else np.zeros(model.mesh.n_vertices, dtype=bool)
    activated = np.zeros_like(region)
    snapshots = [v.copy()]
    logging.debug("[DATAGEN] Monodomain run: {} nodes, {} steps of {:.4f} ms, {} stimulated nodes".format(len(v), steps, dt, int(region.sum())))

    for n in range(steps):
        t = n * dt
        i_stim = np.zeros_like(v)
        if t < stimulus.duration:
            i_stim[region & ~activated] = stimulus.amplitude
        rhs = M @ (membrane.cm * v - dt * (ionic.current(v) - i_stim))
        v = lu.solve(rhs)
        if not np.all(np.isfinite(v)) or np.abs(v).max() > BLOWUP_LIMIT:
            raise BlowUp("Transmembrane potential blew up at step {} (t={:.3f} ms)".format(n + 1, (n + 1) * dt))
        activated |= v >= ionic.v_th
        if (n + 1) % sample_every == 0:
            snapshots.append(v.copy())

    return SimulationResult(np.array(snapshots), dt, sample_every)


def extracellular_solve(result, model, eta=PSEUDO_BIDOMAIN_ETA):
    """
    Pseudo-bidomain ``(K_i + K_e + eta M) v_e = -K_i v`` for every snapshot, shifted
    to zero mass-weighted mean.

    Returns:
        np.ndarray: (n_snapshots, n_vertices) extracellular potentials, also stored on ``result``.

    Raises:
        SolveFailure: If the relative residual exceeds 1e-8.
    """
    M = model.mass()
    Ki = model.stiffness("i")
    A = (Ki + model.stiffness("e") + eta * M).tocsc()
    lu = _factorize(A, "extracellular")
    weights = np.asarray(M.sum(axis=1)).ravel()

    rhs = -(Ki @ result.transmembrane.T)
    ve = lu.solve(rhs)
    if ve.ndim == 1:
        ve = ve[:, None]
    residual = np.linalg.norm(A @ ve - rhs, axis=0)
    scale = np.linalg.norm(rhs, axis=0)
    bad = residual > EXTRACELLULAR_RESIDUAL_TOL * np.maximum(scale, np.finfo(float).tiny)
    if np.any(bad & (scale > 0.0)) or np.any(residual[scale == 0.0] > 0.0):
        raise SolveFailure("Extracellular solve residual {:.3e} above tolerance".format(float(residual.max())))
    ve = ve - (weights @ ve) / weights.sum()
    result.extracellular = ve.T.copy()
    return result.extracellular


def activation_times(result, v_th):
    """
    First crossing of ``v_th`` per node, linearly interpolated between snapshots
    (``inf`` for nodes that never activate).
    """
    v = result.transmembrane
    times = result.times
    out = np.full(v.shape[1], np.inf)
    above = v >= v_th
    crossed = above.any(axis=0)
    first = np.argmax(above, axis=0)
    out[crossed & (first == 0)] = 0.0
    idx = np.nonzero(crossed & (first > 0))[0]
    k = first[idx]
    v0, v1 = v[k - 1, idx], v[k, idx]
    frac = (v_th - v0) / (v1 - v0)
    out[idx] = times[k - 1] + frac * (times[k] - times[k - 1])
    return out
