"""Special functions and the two-sided Fredholm kernel of the control equation.

Everything here reduces to one Laplace-type integral,

    f_lambda(tau) = (1/Gamma(alpha)) * int_0^inf exp(-lam*th) th^(alpha-1)
                    (th + tau)^(alpha-1) dth,

which is finite for alpha in (1/2, 1] and decays like tau^(alpha-1).  The
kernel combines f_lambda with a shifted power singularity at offset delta:

    g_lambda(tau) = ((c^2 gamma + b^2 e^(-lam delta)) / Gamma(alpha)) f_lambda(tau)
                    - (b / Gamma(alpha)) (tau - delta)_+^(alpha-1)

and the two-sided kernel is g_lambda(t-s) below the diagonal and
exp(-lam (s-t)) g_lambda(s-t) above it.

f_lambda is computed by adaptive Gauss-Legendre after scaling out
tau^(2 alpha - 1) and substituting away the endpoint singularity; the
independent cross-check (kept out of this module) is the confluent
hypergeometric identity f_lambda(tau) = tau^(2 alpha - 1) U(alpha, 2 alpha,
lam * tau).
"""

from __future__ import annotations

import math

import numpy as np

from .model import LqModel, validate

__all__ = [
    "QuadratureError",
    "frac_kernel",
    "f_lambda",
    "g_lambda",
    "k_lambda",
    "m_mu_norm_bound",
    "KernelEvaluator",
]


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to meet its error budget."""


_GL_LO = np.polynomial.legendre.leggauss(16)
_GL_HI = np.polynomial.legendre.leggauss(32)


def _panel(f, a: float, b: float, rule) -> float:
    x, w = rule
    half = 0.5 * (b - a)
    return half * float(np.dot(w, f(a + half * (x + 1.0))))


def _adaptive_gl(f, a: float, b: float, tol: float, max_depth: int = 60) -> float:
    """Integrate a vectorized integrand on [a, b] to absolute tolerance tol."""
    span = b - a
    total = 0.0
    err = 0.0
    stack = [(a, b, 0)]
    while stack:
        lo, hi, depth = stack.pop()
        coarse = _panel(f, lo, hi, _GL_LO)
        fine = _panel(f, lo, hi, _GL_HI)
        local = abs(fine - coarse)
        if local <= tol * (hi - lo) / span or depth >= max_depth:
            total += fine
            err += local
        else:
            mid = 0.5 * (lo + hi)
            stack.append((lo, mid, depth + 1))
            stack.append((mid, hi, depth + 1))
        if len(stack) > 10000:
            raise QuadratureError("adaptive quadrature: panel budget exhausted")
    if err > 4.0 * tol:
        raise QuadratureError(
            f"adaptive quadrature: error estimate {err:.3e} above budget {tol:.1e}"
        )
    return total


def frac_kernel(alpha: float, tau):
    """Caputo convolution kernel tau^(alpha-1)/Gamma(alpha) for tau > 0."""
    if not 0.5 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (1/2, 1], got {alpha}")
    arr = np.asarray(tau, dtype=float)
    if np.any(arr <= 0.0):
        raise ValueError("frac_kernel requires tau > 0")
    out = arr ** (alpha - 1.0) / math.gamma(alpha)
    return out if out.ndim else float(out)


def f_lambda(alpha: float, lam: float, tau: float, tol: float = 1e-10) -> float:
    """Evaluate the Laplace-type integral defining the kernel's smooth part.

    Parameters
    ----------
    alpha : float
        Order in (1/2, 1].
    lam : float
        Positive exponential rate.
    tau : float
        Nonnegative offset.
    tol : float
        Absolute tolerance passed to the adaptive quadrature.

    Notes
    -----
    For tau > 0 the integral is scaled to
    ``tau^(2 alpha - 1) * int_0^inf exp(-z x) x^(alpha-1) (1+x)^(alpha-1) dx``
    with ``z = lam * tau``, so accuracy is uniform as tau -> 0.  Each piece is
    mapped to [0, 1]: the substitution ``x = u^(1/alpha)`` removes the
    left-endpoint singularity, and ``x = 1 - log(v)/z`` folds up the tail.
    At tau = 0 the combined singularity x^(2 alpha - 2) is removed by
    ``x = u^(1/(2 alpha - 1))`` instead.
    """
    if not 0.5 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (1/2, 1], got {alpha}")
    if lam <= 0.0:
        raise ValueError(f"lam must be positive, got {lam}")
    if tau < 0.0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    ga = math.gamma(alpha)

    if tau == 0.0:
        p = 2.0 * alpha - 1.0

        def head(u):
            return np.exp(-lam * u ** (1.0 / p)) / p

        def tail(v):
            return (1.0 - np.log(v) / lam) ** (p - 1.0)

        head_val = _adaptive_gl(head, 0.0, 1.0, 0.5 * tol * ga)
        tail_val = _adaptive_gl(tail, 0.0, 1.0, 0.5 * tol * ga * lam * math.exp(lam))
        return (head_val + math.exp(-lam) / lam * tail_val) / ga

    z = lam * tau
    scale = tau ** (2.0 * alpha - 1.0)
    # absolute tolerance required of the scaled integral
    tol_scaled = tol * ga / max(scale, 1e-300)

    def head(u):
        x = u ** (1.0 / alpha)
        return np.exp(-z * x) * (1.0 + x) ** (alpha - 1.0) / alpha

    def tail(v):
        x = 1.0 - np.log(v) / z
        return x ** (alpha - 1.0) * (1.0 + x) ** (alpha - 1.0)

    head_val = _adaptive_gl(head, 0.0, 1.0, 0.5 * tol_scaled)
    tail_tol = 0.5 * tol_scaled * z * min(math.exp(z), 1e300)
    tail_val = _adaptive_gl(tail, 0.0, 1.0, tail_tol)
    return scale * (head_val + math.exp(-z) / z * tail_val) / ga


def m_mu_norm_bound(model: LqModel, mu: float) -> float:
    """Closed-form bound on the weighted L1 norm of the kernel majorant.

    ``2 * {(c^2 gamma + b^2 e^(-2 mu delta)) (2 mu)^(-alpha)
           + |b| e^(-mu delta)} * mu^(-alpha)``;
    values below 1 certify the contraction regime for weight mu.
    """
    if mu <= 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    c2g = model.c * model.c * model.gamma
    inner = (c2g + model.b * model.b * math.exp(-2.0 * mu * model.delta)) * (
        2.0 * mu
    ) ** (-model.alpha)
    inner += abs(model.b) * math.exp(-mu * model.delta)
    return 2.0 * inner * mu ** (-model.alpha)


class KernelEvaluator:
    """Caching kernel evaluator bound to one model.

    Caches f_lambda values keyed on the offset rounded to 12 decimals, which
    is far below any grid resolution in use; re-evaluation therefore agrees
    with the cache to quadrature tolerance trivially.
    """

    def __init__(self, model: LqModel, tol: float = 1e-10):
        validate(model)
        self.model = model
        self.tol = tol
        self.gamma_alpha = math.gamma(model.alpha)
        # coefficient of the f part of g
        self.c_lam = (
            model.c * model.c * model.gamma
            + model.b * model.b * math.exp(-model.lam * model.delta)
        )
        self._f_cache: dict[float, float] = {}

    def f(self, tau: float) -> float:
        key = round(float(tau), 12)
        val = self._f_cache.get(key)
        if val is None:
            val = f_lambda(self.model.alpha, self.model.lam, float(tau), self.tol)
            self._f_cache[key] = val
        return val

    def smooth_factor(self, tau: float) -> float:
        """Midpoint factor tau^(1-alpha) * f(tau) times the f coefficient.

        This is what multiplies the exactly integrated power weight
        tau^(alpha-1) in the product-integration cells.
        """
        m = self.model
        return self.c_lam / self.gamma_alpha * float(tau) ** (1.0 - m.alpha) * self.f(tau)

    def _power_part(self, tau: float) -> float:
        m = self.model
        shifted = tau - m.delta
        if shifted <= 0.0:
            if shifted == 0.0 and m.b != 0.0 and m.alpha < 1.0:
                raise ValueError(
                    f"g_lambda is singular at offset delta={m.delta}; "
                    "evaluate away from it or use cell averages"
                )
            return 0.0
        if m.alpha == 1.0:
            return 1.0
        return shifted ** (m.alpha - 1.0)

    def g(self, tau: float) -> float:
        if tau < 0.0:
            raise ValueError(f"g_lambda requires tau >= 0, got {tau}")
        m = self.model
        val = self.c_lam / self.gamma_alpha * self.f(tau)
        if m.b != 0.0:
            val -= m.b / self.gamma_alpha * self._power_part(tau)
        return val

    def g_many(self, taus) -> np.ndarray:
        return np.array([self.g(t) for t in np.asarray(taus, dtype=float)])

    def k(self, t: float, s: float) -> float:
        m = self.model
        if t >= s:
            return self.g(t - s)
        return math.exp(-m.lam * (s - t)) * self.g(s - t)


def g_lambda(model: LqModel, tau: float, evaluator: KernelEvaluator | None = None) -> float:
    """One-sided kernel profile at offset tau >= 0.

    Satisfies the growth bound
    ``|g_lambda(tau)| <= (c_lam/Gamma(alpha)) lam^(-alpha) tau^(alpha-1)
                         + (|b|/Gamma(alpha)) (tau-delta)_+^(alpha-1)``.
    Raises ValueError at the singular offset tau == delta when b != 0 and
    alpha < 1.
    """
    ev = evaluator if evaluator is not None else KernelEvaluator(model)
    return ev.g(tau)


def k_lambda(model: LqModel, t: float, s: float, evaluator: KernelEvaluator | None = None) -> float:
    """Two-sided kernel: g_lambda(t-s) for t >= s, else exp(-lam(s-t)) g_lambda(s-t).

    Symmetric in the weighted sense k(t, s) = exp(-lam (s-t)) k(s, t).
    """
    ev = evaluator if evaluator is not None else KernelEvaluator(model)
    return ev.k(t, s)
