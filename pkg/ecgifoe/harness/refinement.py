#
# This file is part of the ecgifoe package.
#

"""
Refinement study: the discrete energy of a fixed smooth field on nested
circle meshes and time grids, with observed convergence orders.
"""
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from ecgifoe.exceptions import ParameterOutOfRange
from ecgifoe.fem.context import FemContext
from ecgifoe.fem.temporal import refine_kernel
from ecgifoe.fem.timegrid import TimeGrid
from ecgifoe.forward.fidelity import DenoiseFidelity
from ecgifoe.geometry.mesh import SurfaceMesh1D
from ecgifoe.regularizers.tikhonov import gradient_energy


STUDY_AMPLITUDE = 0.2


def smooth_field(theta, t, duration, amplitude=STUDY_AMPLITUDE):
    """
    Default study field ``a (cos(theta) sin(pi t / T)^2 + 0.5 sin(2 theta) sin(pi t / T))``.

    On the unit circle the default amplitude keeps every response of the bundled
    convex model inside the unit l1 ball, where its potentials are quadratic.
    """
    s = np.sin(np.pi * t / duration)
    return amplitude * (np.cos(theta)[:, None] * (s ** 2)[None, :] + 0.5 * np.sin(2.0 * theta)[:, None] * s[None, :])


def tik_analytic_energy(radius, duration, lam_gamma, lam_t):
    """
    Exact TIK energy of ``cos(theta) sin(pi t / T)`` on a circle.
    """
    spatial = (math.pi / radius) * duration / 2.0
    temporal = math.pi * radius * math.pi ** 2 / (2.0 * duration)
    return 0.5 * (lam_gamma ** 2 * spatial + lam_t ** 2 * temporal)


def refine_model(model, factor):
    if factor == 1:
        return model
    experts = [replace(e, kernel=refine_kernel(e.kernel, factor), subkernels=None) for e in model.experts]
    return replace(model, experts=experts)


def observed_orders(differences):
    """
    ``log2(d_l / d_{l+1})`` of consecutive energy differences; ``inf`` where both vanish (exact).
    """
    orders = []
    for a, b in zip(differences[:-1], differences[1:]):
        if a == 0.0 and b == 0.0:
            orders.append(math.inf)
        elif b == 0.0:
            orders.append(math.inf)
        elif a == 0.0:
            orders.append(-math.inf)
        else:
            orders.append(math.log2(a / b))
    return orders


@dataclass
class RefinementReport:
    h: list = field(default_factory=list)
    step: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    differences: list = field(default_factory=list)
    orders: list = field(default_factory=list)
    tik_gaps: list = field(default_factory=list)

    @property
    def exact(self):
        return all(d == 0.0 for d in self.differences)

    def frame(self):
        n = len(self.h)
        pad = lambda values: list(values) + [float("nan")] * (n - len(values))
        return pd.DataFrame(
            {
                "level": list(range(n)),
                "h": self.h,
                "step": self.step,
                "energy": self.energies,
                "difference": pad(self.differences),
                "order": pad(self.orders),
                "tik_gap": pad(self.tik_gaps),
            }
        )

    def to_csv(self, path):
        self.frame().to_csv(path, index=False, float_format="%.17g")
        logging.info("[REFINE] Orders written to {}".format(path))


def refinement_study(model, levels=3, n_vertices=16, n_intervals=8, radius=1.0, duration=1.0, u=None, z=None, tik_weights=(1.0, 1.0)):
    """
    Evaluate ``J_h(u) = 1/2 ||u_h - z_h||^2 + R(u_h)`` at ``levels`` nested
    refinements of a circle mesh and a time grid (both halved per level).

    Args:
        model: RegularizerModel (kernels given at the coarsest step) or ``None`` for ``R = 0``.
        levels: Number of levels (at least 3).
        u: Callable ``(theta, t, T) -> values`` (``smooth_field`` by default).
        z: Callable of the same form for the data (zero by default).
        tik_weights: ``(lam_gamma, lam_t)`` of the analytic TIK check.

    Returns:
        RefinementReport
    """
    if levels < 3:
        raise ParameterOutOfRange("A refinement study needs at least 3 levels, got {}".format(levels))
    u = u or smooth_field
    report = RefinementReport()
    tik_reference = tik_analytic_energy(radius, duration, *tik_weights)
    for level in range(levels):
        factor = 2 ** level
        n = n_vertices * factor
        surface = SurfaceMesh1D.circle(n, radius=radius)
        grid = TimeGrid.over(duration, n_intervals * factor)
        ctx = FemContext(surface, grid)
        theta = 2.0 * np.pi * np.arange(n) / n
        values = u(theta, grid.nodes, duration)
        data = ctx.zeros() if z is None else z(theta, grid.nodes, duration)
        energy = DenoiseFidelity(data, ctx).value(values)
        if model is not None:
            energy += refine_model(model, factor).value(values, ctx)
        report.h.append(float(surface.segment_lengths.max()))
        report.step.append(grid.step)
        report.energies.append(float(energy))

        tik_u = np.cos(theta)[:, None] * np.sin(np.pi * grid.nodes / duration)[None, :]
        spatial, temporal = gradient_energy(tik_u, ctx)
        discrete = 0.5 * (tik_weights[0] ** 2 * spatial + tik_weights[1] ** 2 * temporal)
        report.tik_gaps.append(abs(discrete - tik_reference))
        logging.info("[REFINE] level {}: h={:.4g} step={:.4g} J={:.10e}".format(level, report.h[-1], grid.step, energy))

    report.differences = [abs(a - b) for a, b in zip(report.energies[:-1], report.energies[1:])]
    report.orders = observed_orders(report.differences)
    return report
