"""Model parameters and admissibility constants for the discounted fractional LQ problem.

The controlled state follows a Caputo-fractional stochastic delay equation of
order ``alpha`` in (1/2, 1], written as a Volterra integral equation with
kernel ``(t-s)^(alpha-1)/Gamma(alpha)``, drift ``b*X(t-delta) + c*u(t)`` and
additive noise intensity ``sigma``.  The running cost is
``exp(-lam*t) * (X^2 + u^2/gamma) / 2`` integrated over the half line.

Two scalar constants govern well-posedness.  ``rho_alpha`` bounds the growth
rate of the uncontrolled state; ``rho_tilde_alpha`` is the larger constant
under which the associated Fredholm kernel is a weighted-space contraction.
Synthesis requires ``lam > 2*rho_tilde_alpha`` and an exponential weight
``mu`` strictly between ``rho_tilde_alpha`` and ``lam/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "LqModel",
    "AdmissibilityConstants",
    "validate",
    "rho_alpha",
    "rho_tilde_alpha",
    "k_constant",
    "admissibility_constants",
]

# Bisection is run until the bracket is this wide (absolute, relative to the
# root's magnitude for large roots).
_BISECT_WIDTH = 1e-14
_RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class LqModel:
    """Scalar problem data.

    Attributes
    ----------
    x0 : float
        Initial state, held constant on [-delta, 0].
    b : float
        Delayed-state drift coefficient.
    c : float
        Control gain, nonzero.
    sigma : float
        Additive noise intensity, nonnegative.
    gamma : float
        Control-cost weight, positive (cost uses u^2/gamma).
    alpha : float
        Caputo order, in (1/2, 1].
    delta : float
        Delay, nonnegative.
    lam : float
        Discount rate, positive.
    """

    x0: float
    b: float
    c: float
    sigma: float
    gamma: float
    alpha: float
    delta: float
    lam: float


@dataclass(frozen=True)
class AdmissibilityConstants:
    """Criterion constants, chosen weight and control-representation constant."""

    rho_alpha: float
    rho_tilde_alpha: float
    mu: float
    k_const: float


def validate(model: LqModel) -> None:
    """Raise ValueError naming the first violated parameter constraint."""
    if not (0.5 < model.alpha <= 1.0):
        raise ValueError(f"alpha must lie in (1/2, 1], got {model.alpha}")
    if model.c == 0.0:
        raise ValueError("c must be nonzero")
    if model.gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {model.gamma}")
    if model.sigma < 0.0:
        raise ValueError(f"sigma must be nonnegative, got {model.sigma}")
    if model.delta < 0.0:
        raise ValueError(f"delta must be nonnegative, got {model.delta}")
    if model.lam <= 0.0:
        raise ValueError(f"lam must be positive, got {model.lam}")


def _bisect_root(fn, name: str) -> float:
    """Root of a continuous strictly decreasing fn with fn(0+) > 0 > fn(inf)."""
    lo, hi = 1.0, 1.0
    for _ in range(200):
        if fn(hi) < 0.0:
            break
        hi *= 2.0
    else:
        raise RuntimeError(f"{name}: failed to bracket root from above")
    for _ in range(200):
        if fn(lo) > 0.0:
            break
        lo /= 2.0
    else:
        raise RuntimeError(f"{name}: failed to bracket root from below")
    while hi - lo > _BISECT_WIDTH * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def rho_alpha(b: float, delta: float, alpha: float) -> float:
    """Growth-rate constant of the uncontrolled delayed state.

    Returns 0 for b == 0; otherwise the unique root of
    ``|b| * (1 + exp(-rho*delta)) * rho^(-alpha) = 1``.
    """
    if b == 0.0:
        return 0.0
    absb = abs(b)

    def crit(rho: float) -> float:
        return absb * (1.0 + math.exp(-rho * delta)) * rho ** (-alpha) - 1.0

    root = _bisect_root(crit, "rho_alpha")
    if abs(crit(root)) > _RESIDUAL_TOL * max(1.0, root):
        raise RuntimeError(f"rho_alpha: residual {crit(root):.3e} above tolerance")
    return root


def rho_tilde_alpha(model: LqModel) -> float:
    """Contraction threshold for the Fredholm kernel.

    Unique root of
    ``{(c^2 gamma + b^2 exp(-2 rho delta)) (2 rho)^(-alpha)
       + |b| (1 + exp(-rho delta))} rho^(-alpha) = 1/2``.
    Always strictly larger than ``rho_alpha`` when b != 0.
    """
    validate(model)
    c2g = model.c * model.c * model.gamma
    b2 = model.b * model.b
    absb = abs(model.b)
    delta, alpha = model.delta, model.alpha

    def crit(rho: float) -> float:
        inner = (c2g + b2 * math.exp(-2.0 * rho * delta)) * (2.0 * rho) ** (-alpha)
        inner += absb * (1.0 + math.exp(-rho * delta))
        return inner * rho ** (-alpha) - 0.5

    root = _bisect_root(crit, "rho_tilde_alpha")
    if abs(crit(root)) > _RESIDUAL_TOL * max(1.0, root):
        raise RuntimeError(f"rho_tilde_alpha: residual {crit(root):.3e} above tolerance")
    return root


def k_constant(model: LqModel) -> float:
    """Constant coefficient of the affine forcing in the control equation.

    ``((c^2 gamma + b^2 exp(-lam delta)) lam^(-alpha) - b) / c``.
    """
    c2g = model.c * model.c * model.gamma
    num = (c2g + model.b * model.b * math.exp(-model.lam * model.delta)) * model.lam ** (
        -model.alpha
    ) - model.b
    return num / model.c


def admissibility_constants(
    model: LqModel,
    mu: float | None = None,
    enforce_criterion: bool = True,
) -> AdmissibilityConstants:
    """Validate the model and fix the exponential weight.

    With ``enforce_criterion`` (the default) a ValueError is raised unless
    ``lam > 2*rho_tilde_alpha``; ``mu`` then defaults to the midpoint of
    ``(rho_tilde_alpha, lam/2)`` and must lie in that half-open interval.

    ``enforce_criterion=False`` skips the gate for configurations where the
    (sufficient) contraction criterion fails but the truncated equations are
    still solvable by a direct method; ``mu`` then defaults to ``lam/2`` and
    only ``0 < mu <= lam/2`` is required.
    """
    validate(model)
    ra = rho_alpha(model.b, model.delta, model.alpha)
    rt = rho_tilde_alpha(model)
    half = 0.5 * model.lam
    if enforce_criterion:
        if model.lam <= 2.0 * rt:
            raise ValueError(
                f"discount rate lam={model.lam} must exceed 2*rho_tilde_alpha="
                f"{2.0 * rt:.6g}; increase lam or pass enforce_criterion=False"
            )
        if mu is None:
            mu = 0.5 * (rt + half)
        if not (rt < mu <= half):
            raise ValueError(
                f"mu={mu} must lie in (rho_tilde_alpha, lam/2] = ({rt:.6g}, {half:.6g}]"
            )
    else:
        if mu is None:
            mu = half
        if not (0.0 < mu <= half):
            raise ValueError(f"mu={mu} must lie in (0, lam/2] = (0, {half:.6g}]")
    return AdmissibilityConstants(
        rho_alpha=ra, rho_tilde_alpha=rt, mu=mu, k_const=k_constant(model)
    )
