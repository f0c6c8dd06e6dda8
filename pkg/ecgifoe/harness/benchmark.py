#
# This file is part of the ecgifoe package.
#

"""
Denoising and inverse-problem benchmarks: parameters are grid-tuned on the
validation split and errors are reported on the test split.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from rich.console import Console
from rich.progress import Progress
from rich.table import Table

from ecgifoe.datagen.dataset import add_field_noise, add_observation_noise, load_dataset
from ecgifoe.exceptions import ConfigError, MissingArtifacts
from ecgifoe.fem.context import FemContext
from ecgifoe.forward.fidelity import DenoiseFidelity
from ecgifoe.forward.observation import Observation
from ecgifoe.forward.system import assemble_forward_matrix, build_forward_system
from ecgifoe.geometry.tags import Region
from ecgifoe.learning.spsa import SPSALearner, TrainingSample
from ecgifoe.regularizers.modelio import bundled_model, read_model
from ecgifoe.regularizers.tikhonov import Tikhonov
from ecgifoe.regularizers.tv import TotalVariation
from ecgifoe.solver.reconstruct import BaselineSpec, inverse_reconstruct, minimize_energy
from ecgifoe.utils.observer import Events, Observable, Observer

METHODS = ("TIK", "TV", "CMFoE", "MFoE")
FOE_METHODS = {"CMFoE": "cmfoe", "MFoE": "mfoe"}


def l2_error(u, u_ref, ctx):
    """
    Mass-weighted space-time L2 distance ``sqrt((u - u_ref)^T (Mlump (x) D) (u - u_ref))``.

    Raises:
        ShapeMismatch: If a field does not match the context.
    """
    return ctx.norm(ctx.check_shape(u) - ctx.check_shape(u_ref))


def noise_seed(*parts):
    """
    Integer noise seed derived from (run seed, sample seed, noise level index).
    """
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def log_grid(anchor, points=8, span=10.0):
    """
    ``points`` logarithmically spaced values in ``[anchor / span, anchor * span]``.
    """
    if anchor <= 0.0 or points < 1 or span < 1.0:
        raise ConfigError("Invalid grid anchor={}, points={}, span={}".format(anchor, points, span))
    if points == 1:
        return np.array([float(anchor)])
    return anchor * span ** np.linspace(-1.0, 1.0, points)


def tune(candidates, errors_of):
    """
    Pick the candidate with the smallest mean validation error; candidates are
    visited in order, so ties go to the earlier (smaller) weight.

    Returns:
        tuple: ``(best candidate, its mean error)``.
    """
    best, best_error = None, math.inf
    for candidate in candidates:
        error = float(np.mean(errors_of(candidate)))
        logging.debug("[BENCH] candidate {} -> validation error {:.6e}".format(candidate, error))
        if error < best_error:
            best, best_error = candidate, error
    return best, best_error


@dataclass
class BenchmarkConfig:
    """
    Settings of the benchmark runs, read from the ``bench.*`` keys. With a positive
    ``train_budget`` the MFoE model is SPSA-trained (``train.*`` keys) before the denoising bench.
    """

    dataset: str
    kappas: list
    snr_dbs: list
    methods: list
    grid_points: int = 8
    grid_span: float = 10.0
    anchors: dict = field(default_factory=dict)
    foe_kappas: list = field(default_factory=lambda: [0.1, 0.4])
    models: dict = field(default_factory=dict)
    max_val_samples: int = None
    max_test_samples: int = None
    seed: int = 0
    threads: int = 1
    tol: float = 1e-7
    denoise_max_iter: int = 5000
    inverse_max_iter: int = 20000
    out: str = "results"
    sigma: dict = None
    train_budget: int = 0
    train_kappa: float = 0.1
    train_samples: int = None
    train_gain: float = 0.1
    train_perturbation: float = 0.05
    train_max_iter: int = 300

    def __post_init__(self):
        if not self.kappas or not self.snr_dbs or not self.methods:
            raise ConfigError("Benchmark noise levels and methods must be nonempty")
        if self.train_budget < 0 or self.train_kappa <= 0.0:
            raise ConfigError("Invalid training settings: budget={}, kappa={}".format(self.train_budget, self.train_kappa))
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError("Unknown benchmark methods {}".format(sorted(unknown)))

    @classmethod
    def from_config(cls, config, dataset=None, out=None, seed=0, threads=1):
        bench = config.section("bench")
        anchors = {key: float(value) for key, value in bench.items() if key.startswith(("denoise.", "inverse.")) and not isinstance(value, list)}
        models = {name: config.get("models.{}".format(key)) for name, key in FOE_METHODS.items()}
        return cls(
            dataset=dataset or config.get("datagen.dataset"),
            kappas=[float(k) for k in bench["kappas"]],
            snr_dbs=[float(s) for s in bench["snr_dbs"]],
            methods=list(bench["methods"]),
            grid_points=int(bench["grid_points"]),
            grid_span=float(bench["grid_span"]),
            anchors=anchors,
            foe_kappas=[float(k) for k in bench["inverse.foe_kappas"]],
            models=models,
            max_val_samples=bench.get("max_val_samples"),
            max_test_samples=bench.get("max_test_samples"),
            seed=int(seed),
            threads=int(threads),
            tol=float(config.get("solver.tol")),
            denoise_max_iter=int(config.get("solver.denoise_max_iter")),
            inverse_max_iter=int(config.get("solver.inverse_max_iter")),
            out=out or "results",
            sigma={Region.TORSO: float(config.get("mesh.sigma_torso")), Region.LUNG: float(config.get("mesh.sigma_lung"))},
            train_budget=int(bench.get("train_budget") or 0),
            train_kappa=float(config.get("train.kappa")),
            train_samples=config.get("train.samples"),
            train_gain=float(config.get("train.gain")),
            train_perturbation=float(config.get("train.perturbation")),
            train_max_iter=int(config.get("train.max_iter")),
        )

    def anchor(self, task, key, default):
        return self.anchors.get("{}.{}".format(task, key), default)

    def load_model(self, method):
        path = self.models.get(method)
        model = read_model(path) if path else bundled_model(FOE_METHODS[method])
        model.name = method
        return model


class ResultTable:
    """
    Benchmark rows ``(noise, method, params, mean_error, errors, reference_error)`` backed
    by a pandas DataFrame. ``reference_error`` is the mean error of the noisy input
    (denoising) or of the zero field (inverse problem).
    """

    COLUMNS = ["task", "noise", "method", "params", "mean_error", "errors", "reference_error"]

    def __init__(self, task):
        self.task = task
        self.rows = []

    def add(self, noise, method, params, errors, reference_error):
        errors = [float(e) for e in errors]
        self.rows.append(
            {
                "task": self.task,
                "noise": float(noise),
                "method": method,
                "params": params,
                "mean_error": float(np.mean(errors)),
                "errors": errors,
                "reference_error": float(reference_error),
            }
        )

    @property
    def frame(self):
        return pd.DataFrame(self.rows, columns=self.COLUMNS)

    def mean_error(self, noise, method):
        frame = self.frame
        row = frame[(frame["noise"] == float(noise)) & (frame["method"] == method)]
        if row.empty:
            raise KeyError("No result for noise {} and method {}".format(noise, method))
        return float(row["mean_error"].iloc[0])

    def mean_consistent(self, tol=1e-12):
        return all(abs(row["mean_error"] - float(np.mean(row["errors"]))) <= tol for row in self.rows)

    def to_csv(self, path):
        frame = self.frame
        frame["errors"] = [" ".join(repr(e) for e in errors) for errors in frame["errors"]]
        frame.to_csv(path, index=False, float_format="%.17g")
        logging.info("[BENCH] Results written to {}".format(path))

    def to_text(self):
        table = Table(title="{} benchmark".format(self.task))
        for name in ("noise", "method", "params", "mean L2 error", "reference"):
            table.add_column(name, justify="right" if name != "params" else "left")
        for row in self.rows:
            table.add_row("{:g}".format(row["noise"]), row["method"], row["params"], "{:.6f}".format(row["mean_error"]), "{:.6f}".format(row["reference_error"]))
        console = Console(record=True, width=120)
        with console.capture():
            console.print(table)
        return console.export_text()


class BenchProgress(Observer):
    """
    rich progress bar fed by ``BENCH_TASK_EVENT``.
    """

    def __init__(self, total, description="benchmark"):
        self.progress = Progress(transient=True)
        self.task = self.progress.add_task(description, total=total)

    def __enter__(self):
        self.progress.start()
        return self

    def __exit__(self, *exc):
        self.progress.stop()

    def update(self, event, obj):
        if event == Events.BENCH_TASK_EVENT:
            self.progress.advance(self.task)


def _map(threads, fn, items):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _splits(config, dataset):
    val = dataset.split.get("val", [])[: config.max_val_samples]
    test = dataset.split.get("test", [])[: config.max_test_samples]
    if not val or not test:
        raise MissingArtifacts("Dataset {} has an empty validation or test split".format(config.dataset))
    return val, test


def _candidates(config, task, method):
    if method == "TIK":
        anchor, ratio = config.anchor(task, "tik_anchor", 1.0), config.anchor(task, "tik_ratio", 2.0)
    elif method == "TV":
        anchor, ratio = config.anchor(task, "tv_anchor", 0.18), config.anchor(task, "tv_ratio", 0.5)
    else:
        anchor, ratio = config.anchor(task, "foe_anchor", 1.0), None
    grid = [float(v) for v in log_grid(anchor, config.grid_points, config.grid_span)]
    if task == "denoise":
        grid = [0.0] + grid
    if ratio is None:
        return [(lam,) for lam in grid]
    return [(lam, ratio * lam) for lam in grid]


def _describe(method, params):
    if method in ("TIK", "TV"):
        return "lam_gamma={:.4g} lam_t={:.4g}".format(*params)
    if len(params) == 1:
        return "lambda={:.4g}".format(params[0])
    return "lambda={:.4g} kappa={:.4g}".format(*params)


def train_model(config, dataset, ctx, model, observers=()):
    """
    SPSA-train ``model`` on noisy copies of the training split drawn at ``config.train_kappa``.

    Raises:
        MissingArtifacts: If the training split is empty.
    """
    seeds = dataset.split.get("train", [])[: config.train_samples]
    if not seeds:
        raise MissingArtifacts("Dataset {} has no training split to train {} on".format(config.dataset, model.name))
    kappa = config.train_kappa
    data = [TrainingSample(dataset.fields[s].values, add_field_noise(dataset.fields[s].values, kappa, noise_seed(config.seed, s)), kappa) for s in seeds]
    learner = SPSALearner(
        model,
        data,
        ctx,
        budget=config.train_budget,
        gain=config.train_gain,
        perturbation=config.train_perturbation,
        seed=config.seed,
        max_iter=config.train_max_iter,
        observers=observers,
    )
    before = learner.evaluate()
    learner.fit()
    after = learner.evaluate()
    logging.info("[BENCH] {} trained on {} samples at kappa={:g}: loss {:.6e} -> {:.6e}".format(model.name, len(data), kappa, before, after))
    return learner.get_model()


def run_denoise_bench(config, dataset=None, events=None):
    """
    Grid-tune every method per noise level on the validation split and report test errors.
    With a positive ``config.train_budget`` the MFoE model is first trained (``train_model``)
    starting from the centre of its lambda grid.

    Raises:
        MissingArtifacts: If the dataset or a split is missing.
    """
    dataset = dataset or load_dataset(config.dataset)
    val, test = _splits(config, dataset)
    grid = dataset.fields[val[0]].grid
    ctx = FemContext.from_mesh(dataset.mesh, grid)
    events = events or Observable()
    models = {m: config.load_model(m) for m in config.methods if m in FOE_METHODS}
    if config.train_budget > 0 and "MFoE" in models:
        start = models["MFoE"].with_lambda(config.anchor("denoise", "foe_anchor", 1.0))
        models["MFoE"] = train_model(config, dataset, ctx, start, observers=events.get_observers())
    table = ResultTable("denoise")

    for level, kappa in enumerate(config.kappas):
        noisy = {s: add_field_noise(dataset.fields[s].values, kappa, noise_seed(config.seed, s, level)) for s in val + test}

        def errors(seeds, method, params):
            def one(seed):
                fidelity = DenoiseFidelity(noisy[seed], ctx)
                if method == "TIK":
                    u, _ = Tikhonov(*params).solve(fidelity, ctx)
                elif method == "TV":
                    u, _ = TotalVariation(*params).solve(fidelity, ctx)
                else:
                    model = models[method].with_lambda(params[0]).at_noise_level(kappa)
                    u, _ = minimize_energy(fidelity, model, ctx, tol=config.tol, max_iter=config.denoise_max_iter)
                return l2_error(u, dataset.fields[seed], ctx)

            result = _map(config.threads, one, seeds)
            events.notify(Events.BENCH_TASK_EVENT, "{} {}".format(method, params))
            return result

        reference = float(np.mean([l2_error(noisy[s], dataset.fields[s], ctx) for s in test]))
        for method in config.methods:
            params, _ = tune(_candidates(config, "denoise", method), lambda p: errors(val, method, p))
            table.add(kappa, method, _describe(method, params), errors(test, method, params), reference)
            logging.info("[BENCH] denoise kappa={:g} {}: {} -> {:.6f}".format(kappa, method, _describe(method, params), table.rows[-1]["mean_error"]))
    return table


def run_inverse_bench(config, dataset=None, events=None):
    """
    Synthesize noisy electrode observations per SNR, grid-tune every method on the
    validation split and report test errors.

    Raises:
        MissingArtifacts: If the dataset, its electrodes or a split is missing.
    """
    dataset = dataset or load_dataset(config.dataset)
    if dataset.electrodes is None:
        raise MissingArtifacts("Dataset {} has no electrode definition".format(config.dataset))
    val, test = _splits(config, dataset)
    grid = dataset.fields[val[0]].grid
    ctx = FemContext.from_mesh(dataset.mesh, grid)
    A = assemble_forward_matrix(build_forward_system(dataset.mesh, config.sigma), dataset.electrodes)
    events = events or Observable()
    models = {m: config.load_model(m) for m in config.methods if m in FOE_METHODS}
    table = ResultTable("inverse")

    for level, snr in enumerate(config.snr_dbs):
        observations = {}
        for s in val + test:
            clean = Observation(A.apply(dataset.fields[s].values), grid)
            observations[s] = add_observation_noise(clean, snr, noise_seed(config.seed, s, level))

        def errors(seeds, method, params):
            if method in FOE_METHODS:
                lam, kappa = params
                regularizer, kappa = models[method].with_lambda(lam), kappa
            else:
                regularizer, kappa = BaselineSpec(method, *params), None

            def one(seed):
                u, _ = inverse_reconstruct(observations[seed], regularizer, A, ctx, kappa=kappa, tol=config.tol, max_iter=config.inverse_max_iter)
                return l2_error(u, dataset.fields[seed], ctx)

            result = _map(config.threads, one, seeds)
            events.notify(Events.BENCH_TASK_EVENT, "{} {}".format(method, params))
            return result

        reference = float(np.mean([l2_error(ctx.zeros(), dataset.fields[s], ctx) for s in test]))
        for method in config.methods:
            candidates = _candidates(config, "inverse", method)
            if method in FOE_METHODS:
                candidates = [(lam, kappa) for (lam,) in candidates for kappa in config.foe_kappas]
            params, _ = tune(candidates, lambda p: errors(val, method, p))
            table.add(snr, method, _describe(method, params), errors(test, method, params), reference)
            logging.info("[BENCH] inverse snr={:g} dB {}: {} -> {:.6f}".format(snr, method, _describe(method, params), table.rows[-1]["mean_error"]))
    return table


def bench_task_count(config, task):
    per_level = 0
    for method in config.methods:
        n = len(_candidates(config, task, method))
        if task == "inverse" and method in FOE_METHODS:
            n *= len(config.foe_kappas)
        per_level += n + 1
    return per_level * len(config.kappas if task == "denoise" else config.snr_dbs)
