#
# This file is part of the ecgifoe package.
#

from dataclasses import dataclass

import numpy as np

from ecgifoe.exceptions import ParameterOutOfRange


@dataclass(frozen=True)
class TimeGrid:
    """
    Uniform temporal grid with nodes ``t_s = s * step``, ``s = 0..n_intervals``.
    """

    n_intervals: int
    step: float

    def __post_init__(self):
        if int(self.n_intervals) != self.n_intervals or self.n_intervals < 1:
            raise ParameterOutOfRange("TimeGrid needs at least one interval, got {}".format(self.n_intervals))
        if not self.step > 0.0:
            raise ParameterOutOfRange("TimeGrid step must be positive, got {}".format(self.step))

    @classmethod
    def over(cls, window, n_intervals):
        return cls(int(n_intervals), float(window) / int(n_intervals))

    @property
    def n_nodes(self):
        return self.n_intervals + 1

    @property
    def nodes(self):
        return self.step * np.arange(self.n_nodes)

    @property
    def duration(self):
        return self.step * self.n_intervals

    def refine(self, factor=2):
        return TimeGrid(self.n_intervals * factor, self.step / factor)
