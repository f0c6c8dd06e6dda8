#
# This file is part of the ecgifoe package.
#


###################################
#    Regularizer Interface        #  -->  Template Pattern
###################################


class Regularizer:
    """
    Template for the regularizers compared by the benchmarks.

    Args:
        params: Dictionary of the tunable parameters (used in result tables).
    """

    name = "regularizer"

    def __init__(self, params=None):
        self.params = dict(params or {})

    def value(self, u, ctx):
        """
        Evaluate the regularizer on the nodal field ``u``.

        Args:
            u: Array of shape (N_V, N_T + 1).
            ctx: FemContext.

        Returns:
            float: Regularizer value.
        """
        raise NotImplementedError

    def solve(self, fidelity, ctx, **kwargs):
        """
        Minimize ``fidelity + regularizer``.

        Args:
            fidelity: DenoiseFidelity or InverseFidelity.
            ctx: FemContext.

        Returns:
            tuple: ``(SpaceTimeField, SolveReport)``.
        """
        raise NotImplementedError

    def describe(self):
        return "{}({})".format(self.name, ", ".join("{}={:.4g}".format(k, v) for k, v in sorted(self.params.items())))
