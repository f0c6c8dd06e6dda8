#
# This file is part of the ecgifoe package.
#

"""
Drivers for proximal denoising and the inverse reconstruction.
"""
import logging
from dataclasses import dataclass

from ecgifoe.exceptions import ParameterOutOfRange
from ecgifoe.forward.fidelity import DenoiseFidelity, InverseFidelity
from ecgifoe.regularizers.foe import RegularizerModel
from ecgifoe.solver.agd import EnergyProblem, agd_restart

DEFAULT_TOL = 1e-7
DENOISE_MAX_ITER = 5000
INVERSE_MAX_ITER = 20000
POWER_ITERATIONS = 200


@dataclass(frozen=True)
class BaselineSpec:
    """
    A handcrafted regularizer: ``method`` is ``"TIK"`` or ``"TV"`` with weights ``lam_gamma`` (space) and ``lam_t`` (time).
    """

    method: str
    lam_gamma: float
    lam_t: float

    def __post_init__(self):
        if self.method not in ("TIK", "TV"):
            raise ParameterOutOfRange("Unknown baseline '{}'".format(self.method))
        if self.lam_gamma < 0.0 or self.lam_t < 0.0:
            raise ParameterOutOfRange("Baseline weights must be nonnegative")


def regularizer_lipschitz(model, ctx, power_iterations=POWER_ITERATIONS):
    if model is None or model.lam == 0.0:
        return 0.0
    key = ("response-norm", float(model.eps_theta), tuple(tuple(float(k) for k in e.kernel) for e in model.experts), power_iterations)
    norm = ctx.memo(key, lambda: model.operator_norm(ctx, power_iterations))
    return model.lam * model.potential_lipschitz() * norm


def energy_problem(fidelity, model, ctx, power_iterations=POWER_ITERATIONS):
    """
    ``fidelity + model`` as an EnergyProblem in the space-time metric, with
    ``L = L_fidelity + lam max_i Lip(phi_i') lambda_max(L* L)``.
    """
    if model is None or model.lam == 0.0:
        return EnergyProblem(fidelity.value_grad, fidelity.lipschitz(), ctx.shape, norm=ctx.norm, value=fidelity.value)

    def value_grad(u):
        f, g = fidelity.value_grad(u)
        r, h = model.value_grad(u, ctx)
        return f + r, g + h

    def value(u):
        return fidelity.value(u) + model.value(u, ctx)

    lipschitz = fidelity.lipschitz() + regularizer_lipschitz(model, ctx, power_iterations)
    return EnergyProblem(value_grad, lipschitz, ctx.shape, norm=ctx.norm, value=value)


def minimize_energy(fidelity, model, ctx, u0=None, tol=DEFAULT_TOL, max_iter=None, observers=(), power_iterations=POWER_ITERATIONS):
    if max_iter is None:
        max_iter = DENOISE_MAX_ITER if isinstance(fidelity, DenoiseFidelity) else INVERSE_MAX_ITER
    problem = energy_problem(fidelity, model, ctx, power_iterations)
    logging.debug("[AGD] {} problem with L={:.4e}".format(fidelity.name, problem.lipschitz))
    u, report = agd_restart(problem, u0=u0, max_iter=max_iter, tol=tol, observers=observers)
    report.method = "AGD-{}".format(model.name if model is not None else "none")
    return ctx.field(u), report


def prox_denoise(z, model, kappa, ctx, u0=None, tol=DEFAULT_TOL, max_iter=DENOISE_MAX_ITER, observers=()):
    """
    Proximal map of the regularizer at noise level ``kappa``:
    ``argmin_u 1/2 ||u - z||^2 + R(u)``.

    Returns:
        SpaceTimeField: The denoised field.
    """
    if kappa is not None and kappa < 0.0:
        raise ParameterOutOfRange("Noise level must be nonnegative, got {}".format(kappa))
    z = ctx.check_shape(z)
    fidelity = DenoiseFidelity(z, ctx)
    field, _ = minimize_energy(fidelity, model.at_noise_level(kappa), ctx, u0=u0, tol=tol, max_iter=max_iter, observers=observers)
    return field


def inverse_reconstruct(z, regularizer, A, ctx, kappa=None, tol=DEFAULT_TOL, max_iter=INVERSE_MAX_ITER, observers=()):
    """
    Minimize the electrode misfit plus a FoE model or a handcrafted baseline.

    Args:
        z: Observation or (N_Sigma, N_T + 1) array.
        regularizer: RegularizerModel or BaselineSpec.
        A: ForwardMatrix.
        ctx: FemContext.
        kappa: Noise-level parameter of a FoE model.
        tol: Stopping tolerance of the solver (AGD for FoE and TV, CG residual for TIK).
        max_iter: Iteration limit of that solver.

    Returns:
        tuple: ``(SpaceTimeField, SolveReport)``.
    """
    fidelity = InverseFidelity(z, A, ctx)
    if isinstance(regularizer, RegularizerModel):
        return minimize_energy(fidelity, regularizer.at_noise_level(kappa), ctx, tol=tol, max_iter=max_iter, observers=observers)
    if isinstance(regularizer, BaselineSpec):
        if regularizer.method == "TIK":
            from ecgifoe.regularizers.tikhonov import tik_solve

            return tik_solve(fidelity, regularizer.lam_gamma, regularizer.lam_t, ctx, tol=tol, max_iter=max_iter)
        from ecgifoe.regularizers.tv import tv_solve

        return tv_solve(fidelity, regularizer.lam_gamma, regularizer.lam_t, ctx, tol=tol, max_iter=max_iter)
    raise ParameterOutOfRange("Unsupported regularizer {!r}".format(regularizer))
