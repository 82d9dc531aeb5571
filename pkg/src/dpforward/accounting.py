"""Privacy accounting for Gaussian-noise mechanisms.

The privacy loss of a matrix Gaussian mechanism with sensitivity-to-noise
ratio ``s`` is ``N(eta, 2 eta)`` with ``eta = s^2 / 2``. Independent
repetitions add these Gaussians, so ``k``-fold self-composition is the
single mechanism with ratio ``sqrt(k) * s`` and the accountant is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple

import numpy as np

from dpforward.errors import DomainError, InvalidBudgetError
from dpforward.mechanisms import PrivacyBudget, exp_scaled_cdf, privacy_curve
from dpforward.numerics import RandomStream, solve_monotone, std_normal_cdf

MIN_MC_TRIALS = 10_000
MC_CHUNK = 1_000_000
MC_VERDICT_SIGMAS = 4.0
CLOSED_FORM_SLACK = 1e-9


@dataclass(frozen=True)
class PlrvSpec:
    """Gaussian privacy-loss random variable ``N(eta, 2 eta)``."""

    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise DomainError(f"eta must be positive, got {self.eta!r}")

    @classmethod
    def from_ratio(cls, s: float) -> "PlrvSpec":
        return cls(0.5 * s * s)

    @property
    def mean(self) -> float:
        return self.eta

    @property
    def variance(self) -> float:
        return 2.0 * self.eta

    def sample(self, stream: RandomStream, size: int) -> np.ndarray:
        return self.eta + math.sqrt(2.0 * self.eta) * stream.standard_normal(size)


def plrv_tail_probabilities(s: float, epsilon: float):
    """Return ``(Pr[L >= eps], Pr[L' <= -eps])`` for ratio ``s``."""
    if not s > 0:
        raise DomainError(f"s must be positive, got {s!r}")
    return (
        std_normal_cdf(0.5 * s - epsilon / s),
        std_normal_cdf(-0.5 * s - epsilon / s),
    )


def delta_for_epsilon(sigma: float, S2: float, epsilon: float) -> float:
    if not (sigma > 0 and S2 > 0):
        raise DomainError("sigma and S2 must be positive")
    return privacy_curve(S2 / sigma, epsilon)


def epsilon_for_delta(sigma: float, S2: float, delta: float) -> float:
    """Smallest ``eps >= 0`` with ``delta_for_epsilon(sigma, S2, eps) <= delta``."""
    if not (sigma > 0 and S2 > 0):
        raise DomainError("sigma and S2 must be positive")
    if not 0.0 < delta < 1.0:
        raise InvalidBudgetError(f"delta must lie in (0, 1), got {delta!r}")
    s = S2 / sigma
    if privacy_curve(s, 0.0) <= delta:
        return 0.0

    def curve(eps):
        return privacy_curve(s, eps)

    def slope(eps):
        # d/d eps of the curve; the two density terms cancel
        return -exp_scaled_cdf(eps, -0.5 * s - eps / s)

    hi = max(1.0, s * s)
    while curve(hi) > delta:
        hi *= 2.0
    tol = min(1e-12, 1e-10 * delta)
    return solve_monotone(curve, delta, 0.0, hi, tol, fprime=slope)


def compose_gaussian_self(k: int, sigma: float, S2: float, delta: float) -> float:
    """Overall epsilon of ``k`` independent runs of the same Gaussian mechanism."""
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k!r}")
    return epsilon_for_delta(sigma / math.sqrt(k), S2, delta)


# --------------------------------------------------------------------------
# Basic composition
# --------------------------------------------------------------------------

class LedgerEntry(NamedTuple):
    tag: str
    epsilon: float
    delta: float


class ComposedBudget(NamedTuple):
    """Summed budget; unlike :class:`PrivacyBudget`, ``delta`` may be 0."""

    epsilon: float
    delta: float

    def to_budget(self) -> PrivacyBudget:
        return PrivacyBudget(self.epsilon, self.delta)


@dataclass
class CompositionLedger:
    entries: List[LedgerEntry] = field(default_factory=list)

    def add(self, tag: str, epsilon: float, delta: float) -> None:
        if not (math.isfinite(epsilon) and epsilon >= 0):
            raise InvalidBudgetError(f"epsilon must be finite and >= 0, got {epsilon!r}")
        if not 0.0 <= delta < 1.0:
            raise InvalidBudgetError(f"delta must lie in [0, 1), got {delta!r}")
        self.entries.append(LedgerEntry(tag, float(epsilon), float(delta)))

    def __len__(self):
        return len(self.entries)


class LedgerFormatError(ValueError):
    pass


def parse_ledger(text: str) -> CompositionLedger:
    """Parse ``<tag> <epsilon> <delta>`` lines; blank lines and ``#`` comments skipped."""
    ledger = CompositionLedger()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise LedgerFormatError(f"line {lineno}: expected '<tag> <epsilon> <delta>', got {raw!r}")
        try:
            ledger.add(parts[0], float(parts[1]), float(parts[2]))
        except ValueError as exc:
            raise LedgerFormatError(f"line {lineno}: {exc}") from exc
    return ledger


def compose_basic(ledger: CompositionLedger) -> ComposedBudget:
    if not ledger.entries:
        raise DomainError("cannot compose an empty ledger")
    eps = math.fsum(e.epsilon for e in ledger.entries)
    delta = math.fsum(e.delta for e in ledger.entries)
    return ComposedBudget(eps, min(delta, math.nextafter(1.0, 0.0)))


# --------------------------------------------------------------------------
# Empirical verification
# --------------------------------------------------------------------------

def monte_carlo_delta_estimate(sigma: float, S2: float, epsilon: float, trials: int, stream: RandomStream):
    """Monte-Carlo estimate of ``Pr[L >= eps] - e^eps Pr[L' <= -eps]``.

    Both privacy losses share the law ``N(eta, 2 eta)``; each draw
    contributes ``1[L >= eps] - e^eps 1[L <= -eps]`` and the standard error
    is that of the sample mean of these contributions.

    Returns:
        ``(delta_hat, std_err)``.
    """
    if trials < MIN_MC_TRIALS:
        raise DomainError(f"need at least {MIN_MC_TRIALS} trials, got {trials}")
    plrv = PlrvSpec.from_ratio(S2 / sigma)
    weight = math.exp(epsilon)
    n_upper = 0
    n_lower = 0
    remaining = trials
    while remaining:
        size = min(remaining, MC_CHUNK)
        losses = plrv.sample(stream, size)
        n_upper += int(np.count_nonzero(losses >= epsilon))
        n_lower += int(np.count_nonzero(losses <= -epsilon))
        remaining -= size
    p_up = n_upper / trials
    p_lo = n_lower / trials
    delta_hat = p_up - weight * p_lo
    # multinomial variance of the per-draw contribution
    second_moment = p_up + weight * weight * p_lo
    var = max(second_moment - delta_hat * delta_hat, 0.0)
    return delta_hat, math.sqrt(var / trials)


@dataclass(frozen=True)
class VerificationResult:
    closed_form_delta: float
    delta_hat: float
    std_err: float
    budget: PrivacyBudget
    passed: bool

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


def verify_gaussian(sigma: float, S2: float, budget: PrivacyBudget, trials: int, stream: RandomStream) -> VerificationResult:
    """Check a Gaussian calibration against its budget both ways.

    Passes iff the Monte-Carlo estimate is within four standard errors of
    ``delta`` from below and the closed form is at most ``delta + 1e-9``.
    """
    closed = delta_for_epsilon(sigma, S2, budget.epsilon)
    delta_hat, se = monte_carlo_delta_estimate(sigma, S2, budget.epsilon, trials, stream)
    ok = delta_hat <= budget.delta + MC_VERDICT_SIGMAS * se and closed <= budget.delta + CLOSED_FORM_SLACK
    return VerificationResult(closed, delta_hat, se, budget, ok)
