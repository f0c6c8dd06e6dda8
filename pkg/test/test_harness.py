import math
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
from PIL import Image

from ecgifoe.config.config import Config
from ecgifoe.datagen.dataset import Dataset
from ecgifoe.exceptions import ConfigError, MissingArtifacts, ParameterOutOfRange
from ecgifoe.fem.context import FemContext
from ecgifoe.fem.fields import SpaceTimeField, read_field_csv
from ecgifoe.fem.timegrid import TimeGrid
from ecgifoe.geometry.mesh import SurfaceMesh1D, build_torso_mesh, define_electrodes, extract_epicardial_curve
from ecgifoe.geometry.tags import Region
from ecgifoe.harness import benchmark
from ecgifoe.harness.benchmark import (
    BenchmarkConfig,
    ResultTable,
    bench_task_count,
    l2_error,
    log_grid,
    noise_seed,
    run_denoise_bench,
    run_inverse_bench,
    train_model,
    tune,
)
from ecgifoe.harness.plotting import plot_spacetime, spacetime_rgb
from ecgifoe.harness.refinement import observed_orders, refinement_study, smooth_field, tik_analytic_energy
from ecgifoe.learning.spsa import LossTrace
from ecgifoe.regularizers.modelio import bundled_model
from ecgifoe.utils.observer import Events, Observable, Observer


def test_log_grid():
    grid = log_grid(2.0, points=5, span=10.0)
    np.testing.assert_allclose(grid, [0.2, 2.0 / math.sqrt(10.0), 2.0, 2.0 * math.sqrt(10.0), 20.0])
    np.testing.assert_allclose(np.diff(np.log(grid)), np.log(10.0) / 2.0)
    np.testing.assert_array_equal(log_grid(3.0, points=1), [3.0])
    for args in [(0.0, 4, 10.0), (1.0, 0, 10.0), (1.0, 4, 0.5)]:
        with pytest.raises(ConfigError):
            log_grid(*args)


def test_tune_prefers_smallest_error_and_earliest_tie():
    errors = {0.1: [3.0, 1.0], 0.2: [1.0, 1.0], 0.4: [0.5, 1.5], 0.8: [2.0, 2.0]}
    best, error = tune(list(errors), lambda c: errors[c])
    assert (best, error) == (0.2, 1.0)


def test_noise_seed():
    assert noise_seed(0, 3, 1) == noise_seed(0, 3, 1)
    seeds = {noise_seed(run, sample, level) for run in (0, 1) for sample in range(5) for level in range(3)}
    assert len(seeds) == 30


def test_l2_error(ctx, rng):
    u = rng.standard_normal(ctx.shape)
    assert l2_error(u, u, ctx) == 0.0
    assert l2_error(ctx.field(u), ctx.zeros(), ctx) == pytest.approx(ctx.norm(u))


def test_result_table(tmp_path):
    table = ResultTable("denoise")
    table.add(0.1, "TIK", "lam_gamma=1 lam_t=2", [1.0, 2.0], 4.0)
    table.add(0.1, "TV", "lam_gamma=0.1 lam_t=0.05", [0.5, 1.0, 1.5], 4.0)
    assert table.mean_error(0.1, "TIK") == pytest.approx(1.5)
    assert table.mean_error(0.1, "TV") == pytest.approx(1.0)
    assert table.mean_consistent()
    with pytest.raises(KeyError):
        table.mean_error(0.2, "TIK")

    path = str(tmp_path / "denoise.csv")
    table.to_csv(path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ResultTable.COLUMNS
    assert list(frame["method"]) == ["TIK", "TV"]
    assert [float(e) for e in frame["errors"].iloc[1].split()] == [0.5, 1.0, 1.5]

    text = table.to_text()
    assert "TIK" in text and "TV" in text and "1.500000" in text


def test_benchmark_config_from_config():
    config = BenchmarkConfig.from_config(Config())
    assert config.kappas == [0.05, 0.1, 0.2]
    assert config.snr_dbs == [30.0, 40.0, 50.0]
    assert config.methods == ["TIK", "TV", "CMFoE", "MFoE"]
    assert config.sigma == {Region.TORSO: 0.2, Region.LUNG: 0.05}
    assert config.anchor("denoise", "tv_anchor", None) == 0.18
    assert config.anchor("inverse", "tik_anchor", None) == 8e-3
    assert config.foe_kappas == [0.1, 0.4]
    assert config.load_model("MFoE").name == "MFoE"
    assert config.train_budget == 0 and config.train_kappa == 0.1


def test_benchmark_config_validation():
    with pytest.raises(ConfigError):
        BenchmarkConfig(dataset="d", kappas=[0.1], snr_dbs=[30.0], methods=["TIK", "L1"])
    with pytest.raises(ConfigError):
        BenchmarkConfig(dataset="d", kappas=[], snr_dbs=[30.0], methods=["TIK"])
    with pytest.raises(ConfigError):
        BenchmarkConfig(dataset="d", kappas=[0.1], snr_dbs=[30.0], methods=["MFoE"], train_budget=-1)
    with pytest.raises(ConfigError):
        BenchmarkConfig(dataset="d", kappas=[0.1], snr_dbs=[30.0], methods=["MFoE"], train_kappa=0.0)


def test_candidates_and_task_count():
    config = BenchmarkConfig.from_config(Config())
    tik = benchmark._candidates(config, "denoise", "TIK")
    assert len(tik) == 9 and tik[0] == (0.0, 0.0)
    assert all(t == pytest.approx(2.0 * g) for g, t in tik[1:])
    foe = benchmark._candidates(config, "inverse", "CMFoE")
    assert len(foe) == 8 and foe[0][0] == pytest.approx(5e-4)
    # 4 methods x (9 candidates + 1 test run) per noise level
    assert bench_task_count(config, "denoise") == 3 * 4 * 10
    # inverse: TIK and TV 8 + 1, each FoE model 8 x 2 kappas + 1
    assert bench_task_count(config, "inverse") == 3 * (9 + 9 + 17 + 17)


@pytest.fixture(scope="module")
def tiny_dataset(torso_mesh):
    surface = extract_epicardial_curve(torso_mesh)
    grid = TimeGrid.over(1.0, 6)
    angle = np.arctan2(surface.points[:, 1], surface.points[:, 0] - 0.3)
    fields = {}
    for seed in range(4):
        shift = 0.7 * seed
        values = 0.5 + 0.4 * np.cos(angle + shift)[:, None] * np.sin(np.pi * grid.nodes)[None, :]
        fields[seed] = SpaceTimeField(values, grid)
    return Dataset(torso_mesh, define_electrodes(torso_mesh, 8), fields, split={"train": [], "val": [0, 1], "test": [2, 3]})


def _tiny_config(methods, **kwargs):
    settings = dict(
        dataset="memory",
        kappas=[0.1],
        snr_dbs=[40.0],
        methods=methods,
        grid_points=2,
        foe_kappas=[0.1],
        tol=1e-6,
        denoise_max_iter=300,
        inverse_max_iter=500,
        sigma={Region.TORSO: 0.2, Region.LUNG: 0.05},
    )
    settings.update(kwargs)
    return BenchmarkConfig(**settings)


class TaskCounter(Observer):
    def __init__(self):
        self.count = 0

    def update(self, event, obj):
        if event == Events.BENCH_TASK_EVENT:
            self.count += 1


@pytest.mark.slow
def test_denoise_bench_is_deterministic(tiny_dataset):
    config = _tiny_config(["TIK", "TV", "CMFoE"])
    events = Observable()
    counter = TaskCounter()
    events.add_observer(counter)
    first = run_denoise_bench(config, dataset=tiny_dataset, events=events)
    second = run_denoise_bench(_tiny_config(["TIK", "TV", "CMFoE"], threads=2), dataset=tiny_dataset)

    assert counter.count == bench_task_count(config, "denoise")
    assert first.mean_consistent() and second.mean_consistent()
    assert [row["params"] for row in first.rows] == [row["params"] for row in second.rows]
    np.testing.assert_allclose(first.frame["mean_error"], second.frame["mean_error"], rtol=1e-12)
    for row in first.rows:
        assert len(row["errors"]) == 2
        assert np.isfinite(row["mean_error"]) and row["reference_error"] > 0.0


@pytest.mark.slow
def test_inverse_bench(tiny_dataset):
    config = _tiny_config(["TIK", "CMFoE"], inverse_max_iter=2000)
    table = run_inverse_bench(config, dataset=tiny_dataset)
    assert [row["method"] for row in table.rows] == ["TIK", "CMFoE"]
    assert table.mean_consistent()
    for row in table.rows:
        assert np.isfinite(row["mean_error"])
        assert row["reference_error"] > 0.0
    assert "kappa=0.1" in table.rows[1]["params"]


def test_bench_needs_splits_and_electrodes(tiny_dataset):
    empty = Dataset(tiny_dataset.mesh, None, tiny_dataset.fields, split={"val": [0], "test": []})
    with pytest.raises(MissingArtifacts):
        run_denoise_bench(_tiny_config(["TIK"]), dataset=empty)
    with pytest.raises(MissingArtifacts):
        run_inverse_bench(_tiny_config(["TIK"]), dataset=empty)


def test_training_needs_a_train_split(tiny_dataset):
    ctx = FemContext.from_mesh(tiny_dataset.mesh, tiny_dataset.fields[0].grid)
    config = _tiny_config(["MFoE"], train_budget=2)
    with pytest.raises(MissingArtifacts):
        train_model(config, tiny_dataset, ctx, bundled_model("mfoe"))
    with pytest.raises(MissingArtifacts):
        run_denoise_bench(config, dataset=tiny_dataset)


def _action_potentials(points, center, grid, seed):
    # front sweeping around the heart from a seed-dependent origin, plateau then recovery
    theta = np.arctan2(points[:, 1] - center[1], points[:, 0] - center[0])
    onset = 12.0 + 8.0 * (1.0 - np.cos(theta - 0.9 * seed))
    t = grid.nodes[None, :] - onset[:, None]
    return 1.0 / (1.0 + np.exp(-t)) / (1.0 + np.exp((t - 25.0) / 4.0))


@pytest.fixture(scope="module")
def front_dataset(torso_config):
    mesh = build_torso_mesh(replace(torso_config, target_h=0.2), seed=0)
    surface = extract_epicardial_curve(mesh)
    grid = TimeGrid.over(60.0, 30)
    fields = {s: SpaceTimeField(_action_potentials(surface.points, torso_config.heart_center, grid, s), grid) for s in range(9)}
    return Dataset(mesh, None, fields, split={"train": [0, 1, 2], "val": [3, 4, 5], "test": [6, 7, 8]})


@pytest.mark.slow
def test_denoise_bench_method_ordering(front_dataset):
    config = _tiny_config(
        ["TIK", "TV", "MFoE"],
        kappas=[0.1, 0.2],
        grid_points=8,
        anchors={"denoise.foe_anchor": 0.3},
        train_budget=10,
        train_kappa=0.2,
        train_max_iter=200,
    )
    trace = LossTrace()
    table = run_denoise_bench(config, dataset=front_dataset, events=Observable(trace))

    assert len(trace.losses) == config.train_budget
    assert trace.best[-1] <= trace.losses[0]
    for kappa in config.kappas:
        assert table.mean_error(kappa, "TV") <= table.mean_error(kappa, "TIK")
    assert table.mean_error(config.train_kappa, "MFoE") <= table.mean_error(config.train_kappa, "TV")


def test_observed_orders():
    np.testing.assert_allclose(observed_orders([4.0, 1.0, 0.25]), [2.0, 2.0])
    assert observed_orders([0.0, 0.0]) == [math.inf]
    assert observed_orders([1.0, 0.0]) == [math.inf]
    assert observed_orders([0.0, 1.0]) == [-math.inf]


def test_tik_analytic_energy():
    # 1/2 (pi / R * T / 2) for the spatial term alone
    assert tik_analytic_energy(2.0, 3.0, 1.0, 0.0) == pytest.approx(0.5 * math.pi / 2.0 * 1.5)


def test_refinement_study_tik_check(tmp_path):
    report = refinement_study(None, levels=3, n_vertices=16, n_intervals=8)
    assert len(report.energies) == 3 and len(report.differences) == 2 and len(report.orders) == 1
    assert report.h[1] == pytest.approx(report.h[0] / 2.0, rel=1e-2)
    assert report.step == [pytest.approx(1.0 / 8), pytest.approx(1.0 / 16), pytest.approx(1.0 / 32)]
    gaps = report.tik_gaps
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[1] / gaps[2] > 3.0

    path = str(tmp_path / "refinement.csv")
    report.to_csv(path)
    frame = pd.read_csv(path)
    assert list(frame["level"]) == [0, 1, 2]
    assert np.isnan(frame["order"].iloc[-1])


def test_refinement_study_with_foe_model():
    report = refinement_study(bundled_model("cmfoe").with_lambda(0.5), levels=4, n_vertices=12, n_intervals=8)
    assert all(np.isfinite(report.energies))
    assert all(e > 0.0 for e in report.energies)
    assert report.frame().shape == (4, 7)
    assert len(report.orders) == 2
    assert min(report.orders) >= 1.5


def test_study_field_stays_in_quadratic_regime():
    model = bundled_model("cmfoe")
    ctx = FemContext(SurfaceMesh1D.circle(12), TimeGrid.over(1.0, 8))
    theta = 2.0 * np.pi * np.arange(12) / 12
    values = smooth_field(theta, ctx.grid.nodes, 1.0)
    for y in model.responses(values, ctx):
        assert np.abs(y).sum(axis=-1).max() < 1.0
    with pytest.raises(ParameterOutOfRange):
        refinement_study(None, levels=2)


def test_spacetime_rgb_orientation():
    values = np.tile(np.arange(5.0), (3, 1))
    rgb = spacetime_rgb(values)
    assert rgb.shape == (5, 3, 3) and rgb.dtype == np.uint8
    # earliest time (smallest value) in the bottom row
    np.testing.assert_array_equal(rgb[-1], np.tile(rgb[-1, 0], (3, 1)))
    assert rgb[-1, 0].tolist() != rgb[0, 0].tolist()
    assert spacetime_rgb(np.ones((2, 3))).shape == (3, 2, 3)


def test_plot_spacetime(tmp_path, rng):
    grid = TimeGrid(4, 0.5)
    field = SpaceTimeField(rng.standard_normal((6, 5)), grid)
    ppm, csv = plot_spacetime(field, str(tmp_path / "u"))
    with Image.open(ppm) as image:
        assert image.size == (6 * 4, 5 * 4)
    np.testing.assert_array_equal(read_field_csv(csv, 0.5).values, field.values)
