"""Nystrom discretization and resolvent solves for the two-sided control kernel.

The integral operator is discretized by collocation at the grid nodes
t_0..t_{n-1} with product integration over the n cells: the closed-form
weights

    int_cell tau^(alpha-1) dtau                     (below the diagonal)
    int_cell exp(-lam tau) tau^(alpha-1) dtau       (above the diagonal)

and their delta-shifted counterparts are integrated exactly (the exponential
ones via the regularized lower incomplete gamma), while the remaining smooth
midpoint factor tau^(1-alpha) f_lambda(tau) is frozen per cell.  The weight
matrix is Toeplitz in the node-cell offset, so assembly needs only n distinct
special-function evaluations.

The resolvent of the second-kind equation is computed either by a direct
dense solve of (I + K) R = K or by the alternating Neumann series, the
latter only inside the certified contraction regime.  Solutions at the final
node t_n are recovered from the integral equation itself with one extra
kernel row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc

from .kernels import KernelEvaluator
from .model import LqModel, k_constant, validate

__all__ = [
    "ContractionError",
    "TimeGrid",
    "DiscretizedKernel",
    "ResolventMatrix",
    "discretize",
    "neumann_resolvent",
    "direct_resolvent",
    "resolvent_final_row",
    "solve_fie",
    "phi_hat",
    "psi_hat",
    "exp_power_cell_integrals",
]

_FIE_RESIDUAL_TOL = 1e-9


class ContractionError(RuntimeError):
    """Neumann series requested outside the certified contraction regime."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < ... < t_n = horizon with n cells."""

    horizon: float
    n: int

    def __post_init__(self):
        if self.horizon <= 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.n < 2:
            raise ValueError(f"n must be at least 2, got {self.n}")

    @property
    def h(self) -> float:
        return self.horizon / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.h

    def delay_steps(self, delta: float) -> int:
        """Index m with delta = m*h, or ValueError if delta is off-grid."""
        if delta == 0.0:
            return 0
        m = int(round(delta / self.h))
        if m < 1 or abs(m * self.h - delta) > 1e-9 * max(self.h, delta):
            raise ValueError(
                f"delay {delta} is not a grid multiple of h={self.h}; "
                f"use horizon = n*delta/k for an integer k (e.g. {self.n * delta / max(m, 1)})"
            )
        return m


def exp_power_cell_integrals(alpha: float, lam: float, edges: np.ndarray) -> np.ndarray:
    """Exact integrals of exp(-lam tau) tau^(alpha-1) between consecutive edges."""
    edges = np.maximum(np.asarray(edges, dtype=float), 0.0)
    reg = gammainc(alpha, lam * edges)
    return math.gamma(alpha) * lam ** (-alpha) * np.diff(reg)


@dataclass
class DiscretizedKernel:
    """Collocation weights for one model on one grid.

    ``weights[i, j]`` approximates the integral of the two-sided kernel
    k(t_i, .) over cell j; ``final_row`` is the same for the extra node t_n.
    ``norm_estimate`` is the max of weighted row and column sums of absolute
    entries with weight exp(-mu (t_i - s_j)) at cell midpoints, an empirical
    stand-in for the weighted operator norm.
    """

    model: LqModel
    grid: TimeGrid
    mu: float
    weights: np.ndarray
    final_row: np.ndarray
    norm_estimate: float
    evaluator: KernelEvaluator = field(repr=False)
    _lower_vals: np.ndarray = field(repr=False)
    _upper_vals: np.ndarray = field(repr=False)


def discretize(
    model: LqModel,
    grid: TimeGrid,
    mu: float,
    evaluator: KernelEvaluator | None = None,
) -> DiscretizedKernel:
    """Assemble the product-integration weight matrix.

    The delay must be a grid multiple so that the interior singularity at
    offset delta always falls on a cell boundary and the midpoint factors are
    evaluated only at regular points.
    """
    validate(model)
    if mu <= 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    m_delay = grid.delay_steps(model.delta)  # noqa: F841  (validates on-grid delay)
    ev = evaluator if evaluator is not None else KernelEvaluator(model)
    n, h = grid.n, grid.h
    alpha, lam, b, delta = model.alpha, model.lam, model.b, model.delta
    ga = ev.gamma_alpha

    mids = (np.arange(n) + 0.5) * h
    smooth = np.array([ev.smooth_factor(t) for t in mids])

    edges = np.arange(n + 1) * h
    shifted = np.maximum(edges - delta, 0.0)
    pow_int = np.diff(edges**alpha) / alpha
    del_int = np.diff(shifted**alpha) / alpha
    epow_int = exp_power_cell_integrals(alpha, lam, edges)
    edel_int = math.exp(-lam * delta) * exp_power_cell_integrals(alpha, lam, shifted)

    bg = b / ga
    lower_vals = smooth * pow_int - bg * del_int
    upper_vals = smooth * epow_int - bg * edel_int

    idx = np.arange(n)
    offs = idx[:, None] - idx[None, :]  # i - j
    weights = np.where(
        offs > 0,
        lower_vals[np.clip(offs - 1, 0, n - 1)],
        upper_vals[np.clip(-offs, 0, n - 1)],
    )
    final_row = lower_vals[::-1].copy()

    row_fac = np.exp(-mu * idx * h)
    col_fac = np.exp(mu * mids)
    weighted = np.abs(weights) * row_fac[:, None] * col_fac[None, :]
    norm_estimate = float(max(weighted.sum(axis=1).max(), weighted.sum(axis=0).max()))

    return DiscretizedKernel(
        model=model,
        grid=grid,
        mu=mu,
        weights=weights,
        final_row=final_row,
        norm_estimate=norm_estimate,
        evaluator=ev,
        _lower_vals=lower_vals,
        _upper_vals=upper_vals,
    )


@dataclass
class ResolventMatrix:
    """Discrete resolvent R with R + K R = R + R K = K up to ``residual``."""

    grid: TimeGrid
    values: np.ndarray
    method: str
    residual: float


def _resolvent_residual(weights: np.ndarray, values: np.ndarray) -> float:
    left = values + weights @ values - weights
    right = values + values @ weights - weights
    return float(max(np.abs(left).max(), np.abs(right).max()))


def direct_resolvent(kernel: DiscretizedKernel) -> ResolventMatrix:
    """Resolvent by a dense solve of (I + K) R = K."""
    w = kernel.weights
    eye = np.eye(w.shape[0])
    values = np.linalg.solve(eye + w, w)
    return ResolventMatrix(
        grid=kernel.grid,
        values=values,
        method="direct",
        residual=_resolvent_residual(w, values),
    )


def neumann_resolvent(
    kernel: DiscretizedKernel, tol: float = 1e-13, max_terms: int = 500
) -> ResolventMatrix:
    """Resolvent by the alternating Neumann series K - K^2 + K^3 - ...

    Requires ``norm_estimate < 1``; the weighted max row/column sum bounds
    the weighted operator norm, so the series terms decay geometrically.
    """
    if kernel.norm_estimate >= 1.0:
        raise ContractionError(
            f"norm estimate {kernel.norm_estimate:.4f} >= 1: outside the "
            "contraction regime; raise mu or lambda, or use direct_resolvent"
        )
    w = kernel.weights
    term = w.copy()
    values = w.copy()
    for _ in range(max_terms):
        term = -(term @ w)
        values += term
        if np.abs(term).max() < tol:
            break
    else:
        raise ContractionError(f"Neumann series did not reach {tol:.1e} in {max_terms} terms")
    return ResolventMatrix(
        grid=kernel.grid,
        values=values,
        method="neumann",
        residual=_resolvent_residual(w, values),
    )


def resolvent_final_row(kernel: DiscretizedKernel, resolvent: ResolventMatrix) -> np.ndarray:
    """Row of the resolvent at the extra node t_n, from r = k - k o r."""
    return kernel.final_row - kernel.final_row @ resolvent.values


def solve_fie(
    kernel: DiscretizedKernel,
    forcing: np.ndarray,
    resolvent: ResolventMatrix | None = None,
) -> np.ndarray:
    """Solve x + K x = forcing on the grid nodes (n+1 values).

    Uses a dense solve by default, or variation of constants
    x = a - R a when a resolvent is supplied.  The discrete self-residual is
    checked at every node.
    """
    a = np.asarray(forcing, dtype=float)
    n = kernel.grid.n
    if a.shape != (n + 1,):
        raise ValueError(f"forcing must have {n + 1} node values, got shape {a.shape}")
    w = kernel.weights
    if resolvent is None:
        interior = np.linalg.solve(np.eye(n) + w, a[:n])
    else:
        interior = a[:n] - resolvent.values @ a[:n]
    x = np.empty(n + 1)
    x[:n] = interior
    x[n] = a[n] - kernel.final_row @ interior
    scale = max(1.0, float(np.abs(a).max()))
    res = float(np.abs(interior + w @ interior - a[:n]).max())
    if res > _FIE_RESIDUAL_TOL * scale:
        raise RuntimeError(f"solve_fie: discrete residual {res:.3e} above tolerance")
    return x


def phi_hat(
    model: LqModel,
    kernel: DiscretizedKernel,
    resolvent: ResolventMatrix | None = None,
    route: str = "solve",
) -> np.ndarray:
    """Deterministic feedback component: solution of x + K x + K_lam x0 = 0.

    route "solve" runs the dense solve; route "resolvent" uses the closed
    form K_lam (int r(t, s) ds - 1) x0, with the row integrals read off the
    resolvent matrix.
    """
    k_lam = k_constant(model)
    n = kernel.grid.n
    forcing = np.full(n + 1, -k_lam * model.x0)
    if route == "solve":
        return solve_fie(kernel, forcing, resolvent=None)
    if route == "resolvent":
        if resolvent is None:
            raise ValueError("route 'resolvent' needs a resolvent matrix")
        out = np.empty(n + 1)
        out[:n] = k_lam * model.x0 * (resolvent.values.sum(axis=1) - 1.0)
        out[n] = k_lam * model.x0 * (resolvent_final_row(kernel, resolvent).sum() - 1.0)
        return out
    raise ValueError(f"unknown route {route!r}")


def _projected_forcing_profile(kernel: DiscretizedKernel) -> np.ndarray:
    """Kernel profile g at the grid nodes, cell-averaged at its singular node.

    At the node equal to the offset delta (only singular when b != 0 and
    alpha < 1) the power factor is replaced by its symmetric cell average
    (h/2)^alpha / (alpha h); the continuous f part stays pointwise.
    """
    m = kernel.model
    ev = kernel.evaluator
    grid = kernel.grid
    h = grid.h
    vals = np.empty(grid.n + 1)
    singular_idx = -1
    if m.b != 0.0 and m.alpha < 1.0:
        singular_idx = grid.delay_steps(m.delta) if m.delta > 0.0 else 0
    for i, t in enumerate(grid.nodes):
        if i == singular_idx:
            avg_pow = (0.5 * h) ** m.alpha / (m.alpha * h)
            vals[i] = ev.c_lam / ev.gamma_alpha * ev.f(t) - m.b / ev.gamma_alpha * avg_pow
        else:
            vals[i] = ev.g(t)
    return vals


def psi_hat(
    model: LqModel,
    kernel: DiscretizedKernel,
    resolvent: ResolventMatrix | None = None,
    route: str = "solve",
) -> np.ndarray:
    """Noise feedback component: solution of x + K x + (sigma/c) g = 0.

    route "resolvent" uses the closed form (sigma/c)(int r(t,s) g(s) ds - g(t)).
    """
    ratio = model.sigma / model.c
    g_nodes = _projected_forcing_profile(kernel)
    forcing = -ratio * g_nodes
    if route == "solve":
        return solve_fie(kernel, forcing, resolvent=None)
    if route == "resolvent":
        if resolvent is None:
            raise ValueError("route 'resolvent' needs a resolvent matrix")
        n = kernel.grid.n
        out = np.empty(n + 1)
        out[:n] = ratio * (resolvent.values @ g_nodes[:n] - g_nodes[:n])
        out[n] = forcing[n] - resolvent_final_row(kernel, resolvent) @ forcing[:n]
        return out
    raise ValueError(f"unknown route {route!r}")
