#
# This file is part of the ecgifoe package.
#

"""
Derivative-free training of FoE parameters by simultaneous perturbation
stochastic approximation on the denoising loss.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from ecgifoe.exceptions import NumericalError, ParameterOutOfRange
from ecgifoe.learning.learner import RegularizerLearner
from ecgifoe.solver.reconstruct import prox_denoise
from ecgifoe.utils.observer import Events, Observable, Observer

GAIN_DECAY = 0.602
PERTURBATION_DECAY = 0.101


@dataclass(eq=False)
class TrainingSample:
    """
    A clean field, its noisy version and the noise level used to draw it.
    """

    clean: np.ndarray
    noisy: np.ndarray
    kappa: float


def training_loss(model, dataset, ctx, tol=1e-7, max_iter=300):
    """
    ``1/M sum_m kappa_m^{-1/2} ||v_m - prox(z_m)||`` in the space-time metric.
    """
    total = 0.0
    for sample in dataset:
        u = prox_denoise(sample.noisy, model, sample.kappa, ctx, tol=tol, max_iter=max_iter).values
        total += ctx.norm(u - sample.clean) / math.sqrt(sample.kappa)
    return total / len(dataset)


class LossTrace(Observer):
    def __init__(self):
        self.losses = []
        self.best = []

    def update(self, event, obj):
        if event == Events.TRAINING_STEP_EVENT:
            self.losses.append(obj["loss"])
            self.best.append(obj["best_loss"])


def _safe_loss(model0, vector, dataset, ctx, tol, max_iter):
    try:
        return training_loss(model0.with_trainable_vector(vector), dataset, ctx, tol, max_iter)
    except (NumericalError, ParameterOutOfRange) as e:
        logging.warning("[SPSA] Loss evaluation failed ({}); treating it as infinite".format(e))
        return math.inf


def spsa_train(dataset, model0, budget, ctx, gain=0.1, perturbation=0.05, stability=None, seed=0, tol=1e-7, max_iter=300, observers=()):
    """
    Train ``lambda``, ``eps_theta``, the base ``mu`` of every expert (all in log space)
    and the temporal kernels.

    Args:
        dataset: List of TrainingSample (nonempty).
        model0: Starting RegularizerModel.
        budget: Number of SPSA steps.
        ctx: FemContext of the samples.
        gain: ``a`` of the step sequence ``a / (k + 1 + A)^0.602``.
        perturbation: ``c`` of the perturbation sequence ``c / (k + 1)^0.101``.
        stability: ``A`` (default ``budget / 10``).
        seed: Seed of the Rademacher perturbations.

    Returns:
        RegularizerModel: The parameters with the lowest loss encountered.
    """
    if budget < 0:
        raise ParameterOutOfRange("Training budget must be nonnegative, got {}".format(budget))
    if not dataset:
        raise ParameterOutOfRange("Training needs at least one sample")
    if budget == 0 or perturbation == 0.0:
        return model0
    stability = 0.1 * budget if stability is None else stability

    events = Observable(*observers)
    rng = np.random.default_rng(seed)
    theta = model0.trainable_vector()
    best_theta = theta.copy()
    best_loss = _safe_loss(model0, theta, dataset, ctx, tol, max_iter)
    logging.info("[SPSA] Initial loss {:.6e} over {} samples, {} parameters".format(best_loss, len(dataset), theta.size))

    for k in range(budget):
        a_k = gain / (k + 1 + stability) ** GAIN_DECAY
        c_k = perturbation / (k + 1) ** PERTURBATION_DECAY
        delta = rng.choice([-1.0, 1.0], size=theta.size)
        plus = _safe_loss(model0, theta + c_k * delta, dataset, ctx, tol, max_iter)
        minus = _safe_loss(model0, theta - c_k * delta, dataset, ctx, tol, max_iter)
        if math.isfinite(plus) and math.isfinite(minus):
            theta = theta - a_k * (plus - minus) / (2.0 * c_k) * delta
        loss = _safe_loss(model0, theta, dataset, ctx, tol, max_iter)
        if loss < best_loss:
            best_loss, best_theta = loss, theta.copy()
        events.notify(Events.TRAINING_STEP_EVENT, {"step": k + 1, "loss": loss, "best_loss": best_loss})
        logging.debug("[SPSA] Step {}: loss {:.6e} (best {:.6e})".format(k + 1, loss, best_loss))

    logging.info("[SPSA] Finished {} steps, best loss {:.6e}".format(budget, best_loss))
    return model0.with_trainable_vector(best_theta)


###########################
#      SPSALearner        #
###########################


class SPSALearner(RegularizerLearner):
    """
    Learner running SPSA on a RegularizerModel.

    Attributes:
        model: Model to train.
        data: Training pairs.
        ctx: FemContext of the pairs.
        budget: Number of SPSA steps.
    """

    def __init__(self, model, data, ctx, budget=200, gain=0.1, perturbation=0.05, seed=0, max_iter=300, observers=()):
        self.model = model
        self.data = list(data)
        self.ctx = ctx
        self.budget = budget
        self.gain = gain
        self.perturbation = perturbation
        self.seed = seed
        self.max_iter = max_iter
        self.trace = LossTrace()
        self.observers = [self.trace] + list(observers)

    @classmethod
    def from_config(cls, config, model, data, ctx, observers=()):
        return cls(
            model,
            data,
            ctx,
            budget=int(config.get("train.budget")),
            gain=float(config.get("train.gain")),
            perturbation=float(config.get("train.perturbation")),
            seed=int(config.get("mesh.seed") or 0),
            max_iter=int(config.get("train.max_iter")),
            observers=observers,
        )

    def set_model(self, model):
        self.model = model

    def set_data(self, data):
        self.data = list(data)

    def set_budget(self, budget):
        self.budget = budget

    def fit(self):
        self.model = spsa_train(self.data, self.model, self.budget, self.ctx, gain=self.gain, perturbation=self.perturbation, seed=self.seed, max_iter=self.max_iter, observers=self.observers)
        return self.model

    def evaluate(self, data=None):
        return training_loss(self.model, self.data if data is None else list(data), self.ctx, max_iter=self.max_iter)

    def get_model(self):
        return self.model

    def get_num_samples(self):
        return len(self.data)
