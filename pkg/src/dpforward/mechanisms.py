"""Calibration and sampling for matrix Gaussian mechanisms and label randomized response.

The analytic matrix Gaussian mechanism (aMGM) adds i.i.d. noise
``sigma * N(0, 1)`` with ``sigma = S2 / B``, where ``B`` is the largest
sensitivity-to-noise ratio ``s`` whose privacy curve

    g(s) = Phi(s/2 - eps/s) - e^eps * Phi(-s/2 - eps/s)

stays at or below ``delta``. ``g`` is increasing in ``s``, so ``B`` is a
one-dimensional root; :func:`compute_B` finds it in the reparametrised
``u``/``v`` coordinates that split the problem at ``s = sqrt(2 eps)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import log_ndtr

from dpforward.errors import DomainError, InvalidBudgetError
from dpforward.numerics import (
    RandomStream,
    inv_std_normal_cdf,
    sample_std_normal_matrix,
    solve_monotone,
    std_normal_cdf,
    std_normal_pdf,
)
from dpforward.sensitivity import SensitivityBound

B_BRACKET_HI = 1e6
B_BRACKET_CAP = 1e15
# residual tolerance used while solving; contracts are stated at 1e-9
B_SOLVER_TOL = 1e-12


class ClassicalGMRangeWarning(UserWarning):
    """Classical Gaussian mechanism evaluated outside its proven range (eps > 1)."""


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise InvalidBudgetError(f"epsilon must be finite and >= 0, got {self.epsilon!r}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidBudgetError(f"delta must lie in (0, 1), got {self.delta!r}")


@dataclass(frozen=True)
class GaussianCalibration:
    """Outcome of aMGM calibration.

    The row and column covariance factors are both ``sqrt(sigma) * I`` so
    that only their product ``sigma = S2 / B`` is observable.
    """

    B: float
    sigma: float
    sensitivity: SensitivityBound
    budget: PrivacyBudget
    covariance: str = "iid"
    warnings: tuple = field(default=())

    @property
    def factor_scale(self) -> float:
        return math.sqrt(self.sigma)


# --------------------------------------------------------------------------
# Privacy curve and the bound B
# --------------------------------------------------------------------------

def exp_scaled_cdf(epsilon: float, t: float) -> float:
    """``e^epsilon * Phi(t)`` without overflowing for large epsilon."""
    if epsilon < 700.0:
        return math.exp(epsilon) * std_normal_cdf(t)
    return math.exp(epsilon + float(log_ndtr(t)))


def privacy_curve(s: float, epsilon: float) -> float:
    """``g(s)``: the exact worst-case delta at sensitivity-to-noise ratio ``s``."""
    if not s > 0:
        raise DomainError(f"s must be positive, got {s!r}")
    a = 0.5 * s - epsilon / s
    b = -0.5 * s - epsilon / s
    return max(0.0, std_normal_cdf(a) - exp_scaled_cdf(epsilon, b))


def case_boundary_delta(epsilon: float) -> float:
    """``g(sqrt(2 eps))``, where the first CDF argument changes sign."""
    return std_normal_cdf(0.0) - exp_scaled_cdf(epsilon, -math.sqrt(2.0 * epsilon))


def _solve_expanding(f, fprime, target, increasing, tol):
    hi = B_BRACKET_HI
    while (f(hi) < target) if increasing else (f(hi) > target):
        hi *= 10.0
        if hi > B_BRACKET_CAP:
            raise DomainError(f"no root below {B_BRACKET_CAP:g} for target {target!r}")
    return solve_monotone(f, target, 0.0, hi, tol, fprime=fprime)


def compute_B(budget: PrivacyBudget) -> float:
    """Largest ``s`` with ``privacy_curve(s, eps) <= delta``.

    For ``eps = 0`` the curve collapses to ``2 Phi(s/2) - 1`` and
    ``B = 2 Phi^-1((1 + delta) / 2)``.
    """
    eps, delta = budget.epsilon, budget.delta
    if eps == 0.0:
        return 2.0 * inv_std_normal_cdf(0.5 * (1.0 + delta))

    tol = min(B_SOLVER_TOL, 1e-10 * delta)
    delta0 = case_boundary_delta(eps)
    if delta >= delta0:
        def g_plus(v):
            return std_normal_cdf(math.sqrt(eps * v)) - exp_scaled_cdf(eps, -math.sqrt(eps * (v + 2.0)))

        def g_plus_prime(v):
            if v <= 0.0:
                return math.inf
            r1, r2 = math.sqrt(eps * v), math.sqrt(eps * (v + 2.0))
            return std_normal_pdf(r1) * 0.5 * eps * (1.0 / r1 + 1.0 / r2)

        v_star = _solve_expanding(g_plus, g_plus_prime, delta, True, tol)
        alpha = math.sqrt(1.0 + v_star / 2.0) - math.sqrt(v_star / 2.0)
    else:
        def g_minus(u):
            return std_normal_cdf(-math.sqrt(eps * u)) - exp_scaled_cdf(eps, -math.sqrt(eps * (u + 2.0)))

        def g_minus_prime(u):
            if u <= 0.0:
                return -math.inf
            r1, r2 = math.sqrt(eps * u), math.sqrt(eps * (u + 2.0))
            return -std_normal_pdf(r1) * 0.5 * eps * (1.0 / r1 - 1.0 / r2)

        u_star = _solve_expanding(g_minus, g_minus_prime, delta, False, tol)
        alpha = math.sqrt(1.0 + u_star / 2.0) + math.sqrt(u_star / 2.0)
    return math.sqrt(2.0 * eps) / alpha


# --------------------------------------------------------------------------
# aMGM
# --------------------------------------------------------------------------

def amgm_calibrate(sensitivity: SensitivityBound, budget: PrivacyBudget) -> GaussianCalibration:
    B = compute_B(budget)
    return GaussianCalibration(B=B, sigma=sensitivity.value / B, sensitivity=sensitivity, budget=budget)


def amgm_sample(calib: GaussianCalibration, n: int, d: int, stream: RandomStream) -> np.ndarray:
    """Noise ``sigma * Z'`` with ``Z'`` an ``n x d`` standard normal matrix."""
    return calib.sigma * sample_std_normal_matrix(stream, n, d)


# --------------------------------------------------------------------------
# Classical GM
# --------------------------------------------------------------------------

def classical_gm_sigma(S2: float, budget: PrivacyBudget) -> float:
    """``S2 * sqrt(2 ln(1.25/delta)) / eps``.

    Emits :class:`ClassicalGMRangeWarning` for ``eps > 1``, where the
    formula is still returned but no longer certifies the budget.
    """
    eps = budget.epsilon
    if eps == 0.0:
        raise DomainError("classical Gaussian mechanism needs epsilon > 0")
    if eps > 1.0:
        warnings.warn(
            ClassicalGMRangeWarning(f"classical GM calibration at epsilon={eps:g} > 1 is not a DP guarantee"),
            stacklevel=2,
        )
    return S2 * math.sqrt(2.0 * math.log(1.25 / budget.delta)) / eps


# --------------------------------------------------------------------------
# MVG
# --------------------------------------------------------------------------

def harmonic(r: int, power: float = 1.0) -> float:
    """Generalized harmonic number ``sum_{k=1}^r k^-power``."""
    return math.fsum(k ** -power for k in range(1, r + 1))


@dataclass(frozen=True)
class MvgParams:
    n: int
    d: int
    gamma: float
    S2: float
    budget: PrivacyBudget

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise DomainError(f"n and d must be positive, got {self.n}x{self.d}")
        if not (self.gamma > 0 and self.S2 > 0):
            raise DomainError("gamma and S2 must be positive")

    @property
    def r(self) -> int:
        return min(self.n, self.d)

    @property
    def zeta(self) -> float:
        nd = self.n * self.d
        log_delta = math.log(self.budget.delta)
        return 2.0 * math.sqrt(-nd * log_delta) - 2.0 * log_delta + nd

    @property
    def alpha(self) -> float:
        h1, h_half = harmonic(self.r), harmonic(self.r, 0.5)
        return (h1 + h_half) * self.gamma ** 2 + 2.0 * h1 * self.gamma * self.S2

    @property
    def beta(self) -> float:
        return 2.0 * (self.n * self.d) ** 0.25 * harmonic(self.r) * self.S2 * self.zeta


def mvg_product_bound(p: MvgParams) -> float:
    """Upper bound on ``||sigma(Sigma^-1)||_2 * ||sigma(Psi^-1)||_2`` for MVG."""
    eps = p.budget.epsilon
    if eps == 0.0:
        raise DomainError("MVG bound needs epsilon > 0")
    alpha, beta = p.alpha, p.beta
    # -beta + sqrt(beta^2 + x) rewritten to avoid cancellation when beta^2 >> x
    x = 8.0 * alpha * eps
    root_gap = x / (beta + math.sqrt(beta * beta + x))
    return root_gap * root_gap / (4.0 * alpha * alpha)


def mvg_iid_sigma(p: MvgParams) -> float:
    """Per-entry noise standard deviation of MVG with i.i.d. covariances.

    With ``Sigma = a I_n`` and ``Psi = b I_d`` each entry has variance
    ``a b`` and the constrained product is ``sqrt(n d) / (a b)``, so the
    smallest admissible per-entry variance is ``sqrt(n d) / bound``.
    """
    return math.sqrt(math.sqrt(p.n * p.d) / mvg_product_bound(p))


# --------------------------------------------------------------------------
# Randomized response for labels
# --------------------------------------------------------------------------

def rr_keep_probability(label_count: int, epsilon: float) -> float:
    """``e^eps / (e^eps + |Y| - 1)``."""
    return 1.0 / (1.0 + (label_count - 1) * math.exp(-epsilon))


def _check_rr(y: int, label_count: int, epsilon: float) -> None:
    if label_count < 2:
        raise DomainError(f"label_count must be >= 2, got {label_count}")
    if not 0 <= y < label_count:
        raise DomainError(f"label {y} outside [0, {label_count})")
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon!r}")


def rr_probabilities(y: int, label_count: int, epsilon: float) -> np.ndarray:
    """Output distribution of :func:`rr_perturb` for true label ``y``."""
    _check_rr(y, label_count, epsilon)
    # each other label gets e^-eps times the keep mass; avoids 1 - keep cancelling
    other = math.exp(-epsilon) / (1.0 + (label_count - 1) * math.exp(-epsilon))
    probs = np.full(label_count, other)
    probs[y] = rr_keep_probability(label_count, epsilon)
    return probs


def rr_perturb(y: int, label_count: int, epsilon: float, stream: RandomStream) -> int:
    _check_rr(y, label_count, epsilon)
    if stream.uniform() < rr_keep_probability(label_count, epsilon):
        return y
    other = int(stream.integers(0, label_count - 1))
    return other if other < y else other + 1


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

REPORT_KEYS = ("epsilon", "delta", "sensitivity", "notion", "B", "sigma", "mechanism", "warnings")


def calibration_report(
    mechanism: str,
    budget: PrivacyBudget,
    sensitivity: SensitivityBound,
    sigma: float,
    B: Optional[float] = None,
    warnings_: tuple = (),
) -> dict:
    return {
        "epsilon": budget.epsilon,
        "delta": budget.delta,
        "sensitivity": sensitivity.value,
        "notion": sensitivity.notion,
        "B": B,
        "sigma": sigma,
        "mechanism": mechanism,
        "warnings": list(warnings_),
    }
