#
# This file is part of the ecgifoe package.
#


"""
Module to define the configuration of ecgifoe runs.
"""
import copy
import json
import logging
import os

import yaml

from ecgifoe.exceptions import ConfigError


###################
#  Global Config  #
###################


class Config:
    """
    Class to define the configuration of an ecgifoe run.

    Settings are flat dotted keys (``mesh.target_h``) read from a line-oriented
    ``key = value`` file or from a JSON document with nested sections.
    """

    DEFAULTS = {
        # torso and heart geometry (cm)
        "mesh.outer_radius": 3.0,
        "mesh.heart_radius": 1.0,
        "mesh.heart_center": [0.3, 0.0],
        "mesh.lung_disks": [[[-1.7, 1.0], 0.6], [[1.9, 1.3], 0.55]],
        "mesh.target_h": 0.1,
        "mesh.seed": 0,
        "mesh.sigma_torso": 0.2,
        "mesh.sigma_lung": 0.05,
        "electrodes.count": 32,
        "electrodes.coverage": 0.9,
        # space-time grid of the epicardial fields (ms)
        "time.n_intervals": 60,
        "time.window": 60.0,
        # synthetic dataset
        "datagen.dataset": "dataset",
        "datagen.n_samples": 200,
        "datagen.first_seed": 0,
        "datagen.fine_h": None,
        "datagen.stimulus_gain": 40.0,
        "datagen.stimulus_radius": 0.15,
        "datagen.scar_radius": 0.2,
        # regularizer models
        "models.cmfoe": None,
        "models.mfoe": None,
        # solver
        "solver.tol": 1e-7,
        "solver.denoise_max_iter": 5000,
        "solver.inverse_max_iter": 20000,
        "solver.power_iterations": 200,
        # benchmarks
        "bench.kappas": [0.05, 0.1, 0.2],
        "bench.snr_dbs": [30.0, 40.0, 50.0],
        "bench.grid_points": 8,
        "bench.grid_span": 10.0,
        "bench.max_val_samples": None,
        "bench.max_test_samples": None,
        "bench.methods": ["TIK", "TV", "CMFoE", "MFoE"],
        "bench.train_budget": 0,
        "bench.denoise.tik_anchor": 1.0,
        "bench.denoise.tik_ratio": 2.0,
        "bench.denoise.tv_anchor": 0.18,
        "bench.denoise.tv_ratio": 0.5,
        "bench.denoise.foe_anchor": 7.0,
        "bench.inverse.tik_anchor": 8e-3,
        "bench.inverse.tik_ratio": 1.0,
        "bench.inverse.tv_anchor": 3e-5,
        "bench.inverse.tv_ratio": 0.2,
        "bench.inverse.foe_anchor": 5e-3,
        "bench.inverse.foe_kappas": [0.1, 0.4],
        # training
        "train.budget": 200,
        "train.kappa": 0.1,
        "train.samples": 4,
        "train.gain": 0.1,
        "train.perturbation": 0.05,
        "train.max_iter": 300,
        # refinement study
        "refine.levels": 3,
        "refine.target_h": 0.4,
        "refine.n_intervals": 8,
    }

    def __init__(self, entity="controller", config_file=None):
        self.entity = entity
        self.settings = copy.deepcopy(self.DEFAULTS)
        self.config_file = None

        if config_file is not None:
            self.set_config_file(config_file)

    def __getstate__(self):
        # Return the attributes of the class that should be serialized
        return {"entity": self.entity, "settings": self.settings}

    def __setstate__(self, state):
        self.entity = state["entity"]
        self.settings = state["settings"]
        self.config_file = None

    def get_config(self):
        return json.dumps(self.settings, indent=2, sort_keys=True)

    def set_config_file(self, config_file):
        """
        Read a configuration file and overlay its values on the current settings.

        Args:
            config_file: Path to a ``key = value`` file or to a ``.json`` file.

        Raises:
            ConfigError: If the file does not exist or a line is malformed.
        """
        if not os.path.isfile(config_file):
            raise ConfigError("Configuration file not found: {}".format(config_file))
        if config_file.endswith(".json"):
            with open(config_file) as json_file:
                try:
                    values = self._flatten(json.load(json_file))
                except json.JSONDecodeError as e:
                    raise ConfigError("Invalid JSON configuration {}: {}".format(config_file, e))
        else:
            with open(config_file) as text_file:
                values = self.parse_lines(text_file.read().splitlines(), source=config_file)
        for key, value in values.items():
            if key not in self.DEFAULTS:
                logging.warning("[SETTINGS] Unknown configuration key {} (kept)".format(key))
            self.settings[key] = value
        self.config_file = config_file
        logging.info("[SETTINGS] Loaded {} settings from {}".format(len(values), config_file))

    @staticmethod
    def parse_lines(lines, source="<string>"):
        """
        Parse ``key = value`` lines. Values are interpreted with YAML scalar/flow syntax.

        Returns:
            dict: Parsed settings.
        """
        values = {}
        for number, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("{}:{}: expected 'key = value', got '{}'".format(source, number, raw.strip()))
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise ConfigError("{}:{}: empty key".format(source, number))
            try:
                values[key] = yaml.safe_load(value) if value else None
            except yaml.YAMLError as e:
                raise ConfigError("{}:{}: cannot parse value '{}': {}".format(source, number, value, e))
        return values

    @staticmethod
    def _flatten(tree, prefix=""):
        flat = {}
        for key, value in tree.items():
            name = prefix + str(key)
            if isinstance(value, dict):
                flat.update(Config._flatten(value, name + "."))
            else:
                flat[name] = value
        return flat

    def get(self, key, default=None):
        return self.settings.get(key, default)

    def set(self, key, value):
        self.settings[key] = value

    def section(self, prefix):
        """
        Return the settings below ``prefix`` with the prefix removed.
        """
        prefix = prefix.rstrip(".") + "."
        return {key[len(prefix):]: value for key, value in self.settings.items() if key.startswith(prefix)}

    def require(self, key, kind=None):
        """
        Return a setting, checking that it is present and optionally of a given type.

        Raises:
            ConfigError: If the value is missing or has the wrong type.
        """
        value = self.settings.get(key)
        if value is None:
            raise ConfigError("Missing configuration value {}".format(key))
        if kind is not None:
            try:
                value = kind(value)
            except (TypeError, ValueError):
                raise ConfigError("Configuration value {}={!r} is not a valid {}".format(key, value, kind.__name__))
        return value
