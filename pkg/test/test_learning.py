import numpy as np
import pytest

from ecgifoe.config.config import Config
from ecgifoe.exceptions import NonFiniteObjective, ParameterOutOfRange
from ecgifoe.learning import spsa
from ecgifoe.learning.spsa import LossTrace, SPSALearner, TrainingSample, spsa_train, training_loss
from ecgifoe.regularizers.modelio import bundled_model


@pytest.fixture
def model0():
    return bundled_model("cmfoe")


@pytest.fixture
def samples(ctx, rng):
    x = ctx.surface.points[:, 0]
    clean = np.outer(x, np.sin(3.0 * ctx.grid.nodes))
    out = []
    for kappa in (0.05, 0.1):
        noisy = clean + kappa * rng.standard_normal(ctx.shape)
        out.append(TrainingSample(clean=clean, noisy=noisy, kappa=kappa))
    return out


def _quadratic_loss(target):
    def loss(model, dataset, ctx, tol=1e-7, max_iter=300):
        return float(np.sum((model.trainable_vector() - target) ** 2))

    return loss


def test_zero_budget_returns_start_model(model0, samples, ctx):
    assert spsa_train(samples, model0, 0, ctx) is model0
    assert spsa_train(samples, model0, 5, ctx, perturbation=0.0) is model0


def test_invalid_training_input(model0, samples, ctx):
    with pytest.raises(ParameterOutOfRange):
        spsa_train(samples, model0, -1, ctx)
    with pytest.raises(ParameterOutOfRange):
        spsa_train([], model0, 3, ctx)


def test_failed_evaluations_keep_parameters(model0, samples, ctx, monkeypatch):
    def failing(*args, **kwargs):
        raise NonFiniteObjective("diverged")

    monkeypatch.setattr(spsa, "training_loss", failing)
    trace = LossTrace()
    result = spsa_train(samples, model0, 4, ctx, observers=[trace])
    np.testing.assert_allclose(result.trainable_vector(), model0.trainable_vector(), rtol=1e-12)
    assert trace.losses == [float("inf")] * 4


def test_spsa_is_deterministic_and_improves(model0, samples, ctx, monkeypatch):
    target = model0.trainable_vector() + 0.3
    monkeypatch.setattr(spsa, "training_loss", _quadratic_loss(target))
    start = float(np.sum((model0.trainable_vector() - target) ** 2))

    trace = LossTrace()
    a = spsa_train(samples, model0, 40, ctx, gain=0.05, perturbation=0.05, seed=7, observers=[trace])
    b = spsa_train(samples, model0, 40, ctx, gain=0.05, perturbation=0.05, seed=7)
    np.testing.assert_array_equal(a.trainable_vector(), b.trainable_vector())

    final = float(np.sum((a.trainable_vector() - target) ** 2))
    assert final <= start
    assert len(trace.losses) == 40
    assert trace.best == sorted(trace.best, reverse=True)
    assert final == pytest.approx(min([start] + trace.losses))


def test_training_loss_of_exact_prox(ctx, samples, model0):
    loss = training_loss(model0, samples, ctx, max_iter=50)
    assert np.isfinite(loss) and loss > 0.0


@pytest.mark.slow
def test_short_training_does_not_increase_loss(model0, samples, ctx):
    initial = training_loss(model0, samples, ctx, max_iter=50)
    trained = spsa_train(samples, model0, 3, ctx, max_iter=50)
    assert training_loss(trained, samples, ctx, max_iter=50) <= initial * (1.0 + 1e-9)


def test_spsa_learner(model0, samples, ctx, monkeypatch):
    target = model0.trainable_vector() - 0.2
    monkeypatch.setattr(spsa, "training_loss", _quadratic_loss(target))
    learner = SPSALearner.from_config(Config(), model0, samples, ctx)
    assert learner.budget == 200 and learner.gain == 0.1 and learner.max_iter == 300
    assert learner.get_num_samples() == 2

    learner.set_budget(10)
    learner.gain = 0.02
    before = learner.evaluate()
    model = learner.fit()
    assert model is learner.get_model()
    assert learner.evaluate() <= before
    assert len(learner.trace.losses) == 10

    learner.set_data(samples[:1])
    assert learner.get_num_samples() == 1
