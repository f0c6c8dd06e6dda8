#
# This file is part of the ecgifoe package.
#

import logging

import matplotlib
import numpy as np
from PIL import Image

from ecgifoe.exceptions import IoError
from ecgifoe.fem.fields import SpaceTimeField, write_field_csv

UPSCALE = 4


def spacetime_rgb(values):
    """
    Map a (N_V, N_T + 1) array to an RGB image with angle along x and time along y
    (earliest time at the bottom), min-max normalized through the viridis palette.
    """
    values = np.asarray(values, dtype=float)
    lo, hi = float(values.min()), float(values.max())
    scaled = np.zeros_like(values) if hi == lo else (values - lo) / (hi - lo)
    rgba = matplotlib.colormaps["viridis"](scaled.T[::-1], bytes=True)
    return np.ascontiguousarray(rgba[..., :3])


def plot_spacetime(u, path, scale=UPSCALE):
    """
    Write ``<path>.ppm`` (space-time plot) and ``<path>.csv`` (raw matrix).

    Raises:
        IoError: If a file cannot be written.
    """
    field = u if isinstance(u, SpaceTimeField) else None
    values = u.values if field is not None else np.asarray(u, dtype=float)
    image = Image.fromarray(spacetime_rgb(values), mode="RGB")
    image = image.resize((image.width * scale, image.height * scale), resample=Image.NEAREST)
    try:
        image.save(path + ".ppm", format="PPM")
        if field is not None:
            write_field_csv(field, path + ".csv")
        else:
            np.savetxt(path + ".csv", values, delimiter=",", fmt="%.17g")
    except OSError as e:
        raise IoError("Cannot write plot {}: {}".format(path, e))
    logging.info("[PLOT] Space-time plot written to {}.ppm".format(path))
    return path + ".ppm", path + ".csv"
