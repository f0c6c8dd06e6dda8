#
# This file is part of the ecgifoe package.
#

"""
Reader and writer of the line-oriented ``foe-model v1`` format.

    foe-model v1
    lambda 7.0
    epsTheta 1.0
    epsOmega 0.01
    nExperts 1
    convexMode 0
    mu 0.1
    eta 2.0
    Q 0.5 0 0 0 0 0.5 0 0 0 0 0.5 0 0 0 0 0.5
    kernel 5 0 -0.5 0 0.5 0

An expert may give ``subkernels 3`` followed by 15 values instead of ``kernel``.
"""
import logging
import os

import numpy as np

from ecgifoe.exceptions import IoError, ModelFormatError, ParameterOutOfRange
from ecgifoe.fem.temporal import compose_kernels
from ecgifoe.regularizers.foe import RegularizerModel
from ecgifoe.regularizers.potentials import MIN_MU, ExpertParams

HEADER = "foe-model v1"
GLOBALS = ("lambda", "epsTheta", "epsOmega", "nExperts", "convexMode")


def _tokens(text):
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield number, line.split()


def parse_model(text, name="FoE"):
    """
    Parse model text and validate the expert invariants.

    Experts violating the nonnegativity conditions are kept but marked unconstrained.

    Raises:
        ModelFormatError: On syntax errors or invalid parameter values.
    """
    lines = list(_tokens(text))
    if not lines or " ".join(lines[0][1]) != HEADER:
        raise ModelFormatError("Missing '{}' header".format(HEADER))
    values = {}
    pos = 1
    try:
        for key in GLOBALS:
            number, parts = lines[pos]
            if parts[0] != key or len(parts) != 2:
                raise ModelFormatError("line {}: expected '{} <value>'".format(number, key))
            values[key] = float(parts[1])
            pos += 1
        experts = []
        for _ in range(int(values["nExperts"])):
            record = {}
            for key in ("mu", "eta", "Q"):
                number, parts = lines[pos]
                if parts[0] != key:
                    raise ModelFormatError("line {}: expected '{}'".format(number, key))
                record[key] = [float(v) for v in parts[1:]]
                pos += 1
            number, parts = lines[pos]
            pos += 1
            subkernels = None
            if parts[0] == "kernel":
                size = int(parts[1])
                kernel = np.array([float(v) for v in parts[2:]])
                if len(kernel) != size or size % 2 == 0:
                    raise ModelFormatError("line {}: kernel needs an odd number of values matching its length".format(number))
            elif parts[0] == "subkernels":
                if int(parts[1]) != 3 or len(parts) != 17:
                    raise ModelFormatError("line {}: expected 'subkernels 3' and 15 values".format(number))
                flat = np.array([float(v) for v in parts[2:]])
                subkernels = [flat[0:5], flat[5:10], flat[10:15]]
                kernel = compose_kernels(*subkernels)
            else:
                raise ModelFormatError("line {}: expected 'kernel' or 'subkernels'".format(number))
            if len(record["mu"]) != 1 or len(record["eta"]) != 1 or len(record["Q"]) != 16:
                raise ModelFormatError("Expert {} has malformed mu, eta or Q".format(len(experts)))
            if record["mu"][0] < MIN_MU:
                raise ModelFormatError("Expert {} has mu below {:.0e}".format(len(experts), MIN_MU))
            experts.append(ExpertParams(mu=record["mu"][0], eta=record["eta"][0], Q=record["Q"], kernel=kernel, subkernels=subkernels))
    except IndexError:
        raise ModelFormatError("Unexpected end of model file")
    except (ValueError, ParameterOutOfRange) as e:
        raise ModelFormatError("Invalid model value: {}".format(e))

    if pos != len(lines):
        raise ModelFormatError("line {}: trailing content".format(lines[pos][0]))
    try:
        model = RegularizerModel(
            lam=values["lambda"],
            eps_theta=values["epsTheta"],
            eps_omega=values["epsOmega"],
            experts=experts,
            convex_mode=bool(int(values["convexMode"])),
            name=name,
        )
    except ParameterOutOfRange as e:
        raise ModelFormatError(str(e))
    if model.lam <= 0.0:
        raise ModelFormatError("lambda must be positive, got {}".format(model.lam))

    for index, expert in enumerate(model.experts):
        if not expert.nonnegative(model.eps_omega):
            expert.unconstrained = True
            logging.warning("[FOE] Expert {} of {} violates the nonnegativity conditions (||Q||_inf={:.3g}, ||Q||_2={:.3g}, eta={:.3g}); treated as unconstrained".format(index, name, expert.q_norm_inf, expert.q_norm2, expert.eta))
        elif np.any(expert.Q) and abs(expert.q_norm2 - 1.0) > 1e-8:
            logging.debug("[FOE] Expert {} of {} has ||Q||_2={:.6g}".format(index, name, expert.q_norm2))
    return model


def read_model(path):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ModelFormatError("Cannot read model file {}: {}".format(path, e))
    model = parse_model(text, name=os.path.splitext(os.path.basename(path))[0])
    logging.info("[FOE] Loaded model {} with {} experts (convex={})".format(model.name, model.n_experts, model.convex_mode))
    return model


def format_model(model):
    lines = [
        HEADER,
        "lambda {!r}".format(float(model.lam)),
        "epsTheta {!r}".format(float(model.eps_theta)),
        "epsOmega {!r}".format(float(model.eps_omega)),
        "nExperts {}".format(model.n_experts),
        "convexMode {}".format(int(model.convex_mode)),
    ]
    for expert in model.experts:
        lines.append("mu {!r}".format(float(expert.base_mu)))
        lines.append("eta {!r}".format(float(expert.eta)))
        lines.append("Q " + " ".join(repr(float(q)) for q in expert.Q.ravel()))
        if expert.subkernels is not None:
            lines.append("subkernels 3 " + " ".join(repr(float(v)) for k in expert.subkernels for v in k))
        else:
            lines.append("kernel {} ".format(len(expert.kernel)) + " ".join(repr(float(v)) for v in expert.kernel))
    return "\n".join(lines) + "\n"


def write_model(model, path):
    try:
        with open(path, "w") as f:
            f.write(format_model(model))
    except OSError as e:
        raise IoError("Cannot write model file {}: {}".format(path, e))
    logging.info("[FOE] Model {} written to {}".format(model.name, path))


MODELS_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "models")


def bundled_model(name):
    """
    Load one of the packaged default models (``cmfoe`` or ``mfoe``).
    """
    return read_model(os.path.join(MODELS_DIR, "{}.foe".format(name.lower())))
