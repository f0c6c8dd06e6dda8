import logging
import math
import os
import re

from dotenv import load_dotenv

from ecgifoe.config.config import Config
from ecgifoe.exceptions import ConfigError, ECGIError, IoError, MissingArtifacts, ModelFormatError, NumericalError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class TermEscapeCodeFormatter(logging.Formatter):
    """A class to strip the escape codes from the log records"""

    def __init__(self, fmt=None, datefmt=None, style="%", validate=True):
        super().__init__(fmt, datefmt, style, validate)

    def format(self, record):
        escape_re = re.compile(r"\x1b\[[0-9;]*m")
        record.msg = re.sub(escape_re, "", str(record.msg))
        return super().format(record)


log_console_format = "[%(levelname)s] - %(asctime)s - ecgifoe - %(message)s"


def configure_logging(verbose=False, log_dir=None):
    """
    Configure the root logger once: a console handler (INFO, DEBUG with ``verbose``)
    and, when ``log_dir`` is given, a DEBUG file handler ``ecgifoe.log``.
    """
    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.DEBUG if verbose else logging.INFO)
    console_handler.setFormatter(TermEscapeCodeFormatter(log_console_format))
    handlers = [console_handler]
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.FileHandler(os.path.join(log_dir, "ecgifoe.log"))
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(log_console_format))
        handlers.append(file_handler)
    logging.basicConfig(level=logging.DEBUG, handlers=handlers, force=True)


def exit_code(error):
    if isinstance(error, (ConfigError, ModelFormatError, MissingArtifacts, IoError)):
        return EXIT_CONFIG
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_FAILURE


class Controller:
    """
    Controller class that runs one CLI subcommand
    """

    def __init__(self, args):
        self.command = args.command
        self.args = args
        self.config_file = getattr(args, "config", None)
        self.seed = getattr(args, "seed", 0) or 0
        self.out = getattr(args, "out", None)
        self.env_path = getattr(args, "env", None)
        self.verbose = getattr(args, "verbose", False)
        self.threads = getattr(args, "threads", None)
        self.config = Config(entity="controller")

    def start(self):
        """
        Load the environment and configuration, then run the subcommand.

        Returns:
            int: Process exit code (0 success, 2 configuration or artifact error, 3 numerical failure).
        """
        if self.env_path and os.path.isfile(self.env_path):
            load_dotenv(self.env_path)
        configure_logging(self.verbose, os.getenv("ECGIFOE_LOG_DIR"))
        if self.verbose:
            from ecgifoe.utils.env import collect_env

            collect_env()
        if self.threads is None:
            self.threads = int(os.getenv("ECGIFOE_THREADS", "1"))

        try:
            if self.config_file:
                self.config.set_config_file(self.config_file)
            handler = getattr(self, "run_" + self.command.replace("-", "_"), None)
            if handler is None:
                raise ConfigError("Unknown command '{}'".format(self.command))
            handler()
        except ECGIError as e:
            code = exit_code(e)
            logging.error("[CONTROLLER] {}: {}".format(type(e).__name__, e))
            return code
        return EXIT_OK

    ##########################
    #    Shared artifacts    #
    ##########################

    def _output(self, default):
        path = self.out or default
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        return path

    def _mesh(self):
        from ecgifoe.geometry.mesh import MeshConfig, build_torso_mesh, define_electrodes

        mesh = build_torso_mesh(MeshConfig.from_config(self.config), seed=self.seed)
        electrodes = define_electrodes(mesh, int(self.config.get("electrodes.count")), float(self.config.get("electrodes.coverage")))
        return mesh, electrodes

    def _grid(self):
        from ecgifoe.fem.timegrid import TimeGrid

        return TimeGrid.over(float(self.config.get("time.window")), int(self.config.get("time.n_intervals")))

    def _bench_config(self):
        from ecgifoe.harness.benchmark import BenchmarkConfig

        dataset = getattr(self.args, "dataset", None)
        return BenchmarkConfig.from_config(self.config, dataset=dataset, out=self.out, seed=self.seed, threads=self.threads)

    ##########################
    #       Commands         #
    ##########################

    def run_mesh(self):
        from ecgifoe.geometry.mesh import mesh_quality
        from ecgifoe.geometry.meshio import write_mesh

        mesh, electrodes = self._mesh()
        path = self._output("mesh.txt")
        write_mesh(mesh, path, electrodes)
        quality = mesh_quality(mesh)
        logging.info("[MESH] {} vertices, {} triangles, {} electrodes, min angle {:.2f} deg, max diameter {:.4f} -> {}".format(mesh.n_vertices, mesh.n_triangles, electrodes.n_electrodes, quality["min_angle"], quality["max_diameter"], path))

    def run_datagen(self):
        from ecgifoe.datagen.dataset import DatagenSettings, generate_dataset
        from ecgifoe.geometry.mesh import extract_epicardial_curve

        mesh, electrodes = self._mesh()
        first = int(self.config.get("datagen.first_seed"))
        seeds = range(first, first + int(self.config.get("datagen.n_samples")))
        out = self.out or self.config.get("datagen.dataset")
        generate_dataset(out, seeds, mesh, electrodes, extract_epicardial_curve(mesh), self._grid(), DatagenSettings.from_config(self.config), threads=self.threads)

    def _bench(self, runner, task):
        from ecgifoe.harness.benchmark import BenchProgress, bench_task_count
        from ecgifoe.utils.observer import Observable

        config = self._bench_config()
        events = Observable()
        with BenchProgress(bench_task_count(config, task), task) as progress:
            events.add_observer(progress)
            table = runner(config, events=events)
        out = config.out
        os.makedirs(out, exist_ok=True)
        table.to_csv(os.path.join(out, "{}.csv".format(task)))
        text = table.to_text()
        with open(os.path.join(out, "{}.txt".format(task)), "w") as f:
            f.write(text)
        print(text)

    def run_denoise(self):
        from ecgifoe.harness.benchmark import run_denoise_bench

        self._bench(run_denoise_bench, "denoise")

    def run_inverse(self):
        from ecgifoe.harness.benchmark import run_inverse_bench

        self._bench(run_inverse_bench, "inverse")

    def run_eval(self):
        from ecgifoe.fem.context import FemContext
        from ecgifoe.fem.fields import read_field
        from ecgifoe.geometry.meshio import read_mesh
        from ecgifoe.harness.benchmark import l2_error

        mesh_path = self.args.mesh or os.path.join(self.config.get("datagen.dataset"), "mesh.txt")
        if not os.path.isfile(mesh_path):
            raise MissingArtifacts("Mesh file {} not found".format(mesh_path))
        mesh, _ = read_mesh(mesh_path)
        u, ref = read_field(self.args.field), read_field(self.args.reference)
        ctx = FemContext.from_mesh(mesh, u.grid)
        error = l2_error(u, ref, ctx)
        line = "{!r}\n".format(error)
        if self.out:
            with open(self._output(self.out), "w") as f:
                f.write(line)
        print(line, end="")

    def run_refine_study(self):
        from ecgifoe.harness.refinement import refinement_study
        from ecgifoe.regularizers.modelio import bundled_model, read_model

        path = self.config.get("models.cmfoe")
        model = read_model(path) if path else bundled_model("cmfoe")
        report = refinement_study(
            model,
            levels=int(self.config.get("refine.levels")),
            n_intervals=int(self.config.get("refine.n_intervals")),
            n_vertices=max(6, int(round(2.0 * math.pi * float(self.config.get("mesh.heart_radius")) / float(self.config.get("refine.target_h"))))),
            radius=float(self.config.get("mesh.heart_radius")),
        )
        report.to_csv(self._output("refinement.csv"))
        print(report.frame().to_string(index=False))

    def run_train(self):
        from ecgifoe.datagen.dataset import add_field_noise, load_dataset
        from ecgifoe.fem.context import FemContext
        from ecgifoe.learning.spsa import SPSALearner, TrainingSample
        from ecgifoe.regularizers.modelio import bundled_model, read_model, write_model

        dataset = load_dataset(getattr(self.args, "dataset", None) or self.config.get("datagen.dataset"))
        kappa = float(self.config.get("train.kappa"))
        clean = dataset.subset("train", int(self.config.get("train.samples")))
        if not clean:
            raise MissingArtifacts("The dataset has no training samples")
        ctx = FemContext.from_mesh(dataset.mesh, clean[0].grid)
        data = [TrainingSample(u.values, add_field_noise(u.values, kappa, [self.seed, k]), kappa) for k, u in enumerate(clean)]
        path = self.config.get("models.mfoe")
        model = read_model(path) if path else bundled_model("mfoe")
        learner = SPSALearner.from_config(self.config, model, data, ctx)
        learner.seed = self.seed
        before = learner.evaluate()
        learner.fit()
        after = learner.evaluate()
        out = self._output("mfoe-trained.foe")
        write_model(learner.get_model(), out)
        logging.info("[TRAIN] Loss {:.6e} -> {:.6e}; model written to {}".format(before, after, out))

    def run_plot(self):
        from ecgifoe.fem.fields import read_field
        from ecgifoe.harness.plotting import plot_spacetime

        field = read_field(self.args.field)
        prefix = self.out or os.path.splitext(self.args.field)[0]
        plot_spacetime(field, prefix)
