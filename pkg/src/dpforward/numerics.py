"""Special functions, root finding, small dense linear algebra and seeded RNG.

Matrices are plain 2-D ``numpy.float64`` arrays; :func:`as_matrix` is the
single validation point used by the rest of the package.
"""

from __future__ import annotations

import math
from statistics import NormalDist
from typing import Callable, Optional

import numpy as np

from dpforward.errors import (
    BracketError,
    ConvergenceError,
    DimensionError,
    DomainError,
)

SQRT2 = math.sqrt(2.0)
SVD_MAX_DIM = 512
SOLVER_MAX_ITER = 200

_STD_NORMAL = NormalDist()


# --------------------------------------------------------------------------
# Normal distribution
# --------------------------------------------------------------------------

def std_normal_cdf(t: float) -> float:
    """Standard normal CDF, ``(1 + erf(t / sqrt 2)) / 2``.

    Evaluated through ``erfc`` so the lower tail keeps full relative
    precision instead of cancelling against 1.
    """
    return 0.5 * math.erfc(-t / SQRT2)


def std_normal_pdf(t: float) -> float:
    return math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)


def inv_std_normal_cdf(p: float) -> float:
    """Quantile of the standard normal distribution.

    Starts from the stdlib's rational approximation and applies one Newton
    correction against :func:`std_normal_cdf`, so the two functions agree to
    within rounding.

    Raises:
        DomainError: if ``p`` is not strictly inside (0, 1).
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {p!r}")
    t = _STD_NORMAL.inv_cdf(p)
    dens = std_normal_pdf(t)
    if dens > 0.0:
        t -= (std_normal_cdf(t) - p) / dens
    return t


# --------------------------------------------------------------------------
# Root finding
# --------------------------------------------------------------------------

def solve_monotone(
    f: Callable[[float], float],
    target: float,
    bracket_lo: float,
    bracket_hi: float,
    tol: float,
    fprime: Optional[Callable[[float], float]] = None,
    max_iter: int = SOLVER_MAX_ITER,
) -> float:
    """Find ``x`` in ``[bracket_lo, bracket_hi]`` with ``|f(x) - target| <= tol``.

    Bisection is the backbone. When ``fprime`` is supplied, a Newton step is
    taken instead of the midpoint whenever it lands strictly inside the
    current bracket. Iterates never leave the bracket.

    Args:
        f: Monotone function on the bracket (either direction).
        target: Value to solve for.
        bracket_lo: Left end of the bracket.
        bracket_hi: Right end of the bracket.
        tol: Absolute tolerance on the residual ``f(x) - target``.
        fprime: Optional derivative of ``f``.
        max_iter: Iteration cap.

    Raises:
        BracketError: if ``f`` at the endpoints does not straddle ``target``.
        ConvergenceError: on hitting ``max_iter``, or when the bracket has
            shrunk to adjacent floats without meeting ``tol``.
    """
    lo, hi = float(bracket_lo), float(bracket_hi)
    if not lo < hi:
        raise BracketError(f"empty bracket [{lo}, {hi}]")
    r_lo = f(lo) - target
    r_hi = f(hi) - target
    if abs(r_lo) <= tol:
        return lo
    if abs(r_hi) <= tol:
        return hi
    if (r_lo > 0) == (r_hi > 0):
        raise BracketError(
            f"f does not straddle {target!r} on [{lo}, {hi}]: "
            f"residuals {r_lo!r}, {r_hi!r}"
        )
    lo_sign = r_lo > 0

    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        r = f(x) - target
        if abs(r) <= tol:
            return x
        if (r > 0) == lo_sign:
            lo, r_lo = x, r
        else:
            hi, r_hi = x, r

        nxt = None
        if fprime is not None:
            slope = fprime(x)
            if math.isfinite(slope) and slope != 0.0:
                cand = x - r / slope
                if lo < cand < hi:
                    nxt = cand
        if nxt is None:
            nxt = 0.5 * (lo + hi)
        if not lo < nxt < hi:
            # adjacent floats: no representable point left to try
            best, r_best = (lo, r_lo) if abs(r_lo) <= abs(r_hi) else (hi, r_hi)
            if abs(r_best) <= tol:
                return best
            raise ConvergenceError(
                f"bracket collapsed at {best!r} with residual {r_best!r} > {tol!r}"
            )
        x = nxt
    raise ConvergenceError(f"no convergence within {max_iter} iterations")


# --------------------------------------------------------------------------
# Matrices
# --------------------------------------------------------------------------

def as_matrix(a) -> np.ndarray:
    """Validate and convert ``a`` to a finite, non-empty 2-D float64 array."""
    m = np.array(a, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise DimensionError(f"matrix must be non-empty, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError("matrix has non-finite entries")
    return m


def frobenius_norm(a) -> float:
    """Frobenius norm, scaled by the largest entry against under/overflow."""
    a = np.asarray(a, dtype=np.float64)
    big = float(np.max(np.abs(a))) if a.size else 0.0
    if big == 0.0:
        return 0.0
    scaled = a / big
    return big * math.sqrt(float(np.sum(scaled * scaled)))


def row_norms(a) -> np.ndarray:
    """2-norm of every row, without under/overflow."""
    return np.hypot.reduce(np.asarray(a, dtype=np.float64), axis=1)


def singular_values(a, tol: float = 1e-15, max_sweeps: int = 60) -> np.ndarray:
    """Singular values in nonincreasing order via one-sided Jacobi rotations.

    Columns are orthogonalised pairwise (Hestenes); the singular values are
    the final column norms. Rotations are orthogonal, so the sum of squares
    equals the squared Frobenius norm up to rounding.

    Raises:
        DimensionError: if either dimension exceeds ``SVD_MAX_DIM``.
    """
    a = as_matrix(a)
    if max(a.shape) > SVD_MAX_DIM:
        raise DimensionError(
            f"singular_values is capped at {SVD_MAX_DIM} rows/cols, got {a.shape}"
        )
    # Work on the orientation with fewer columns; nonzero spectra coincide.
    w = a.T.copy() if a.shape[1] > a.shape[0] else a.copy()
    k = w.shape[1]

    for _ in range(max_sweeps):
        rotated = False
        for i in range(k - 1):
            for j in range(i + 1, k):
                ci, cj = w[:, i], w[:, j]
                alpha = float(ci @ ci)
                beta = float(cj @ cj)
                gamma = float(ci @ cj)
                if gamma == 0.0 or abs(gamma) <= tol * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / math.hypot(1.0, t)
                s = c * t
                new_i = c * ci - s * cj
                new_j = s * ci + c * cj
                w[:, i] = new_i
                w[:, j] = new_j
        if not rotated:
            break
    else:
        raise ConvergenceError("Jacobi SVD did not converge")

    sv = np.sqrt(np.sum(w * w, axis=0))
    return np.sort(sv)[::-1]


def spectral_norm(a, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Largest singular value by power iteration on ``A^T A``.

    Returns 0 for the zero matrix. The start vector is a fixed Gaussian
    draw so results are reproducible and never start orthogonal to the
    leading singular vector except on a measure-zero set.
    """
    a = as_matrix(a)
    if not np.any(a):
        return 0.0
    v = np.random.default_rng(0x5EC7).standard_normal(a.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        u = a @ v
        new_est = float(np.linalg.norm(u))
        w = a.T @ u
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return new_est
        v = w / norm_w
        if est > 0.0 and abs(new_est - est) <= tol * new_est:
            return float(np.linalg.norm(a @ v))
        est = new_est
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps")


# --------------------------------------------------------------------------
# Random streams
# --------------------------------------------------------------------------

class RandomStream:
    """Seeded source of uniform and standard-normal deviates.

    Backed by the counter-based Philox generator keyed from
    ``SeedSequence([seed, shard])``; normals come from numpy's ziggurat
    sampler. Independent workers should use distinct ``shard`` values.
    """

    def __init__(self, seed: int = 42, shard: int = 0):
        if not 0 <= int(seed) < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
        self.seed = int(seed)
        self.shard = int(shard)
        bitgen = np.random.Philox(np.random.SeedSequence([self.seed, self.shard]))
        self._gen = np.random.Generator(bitgen)

    def spawn(self, shard: int) -> "RandomStream":
        return RandomStream(self.seed, shard)

    def uniform(self, size=None):
        return self._gen.random(size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, shard={self.shard})"


def sample_std_normal_matrix(stream: RandomStream, rows: int, cols: int) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise DimensionError(f"rows and cols must be >= 1, got {rows}x{cols}")
    return stream.standard_normal((rows, cols))


# --------------------------------------------------------------------------
# Matrix text format
# --------------------------------------------------------------------------

def format_matrix(a) -> str:
    """Serialise as ``<rows> <cols>`` then one line per row, 17 significant digits."""
    a = as_matrix(a)
    lines = [f"{a.shape[0]} {a.shape[1]}"]
    for row in a:
        lines.append(" ".join(f"{x:.17g}" for x in row))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DimensionError("empty matrix document")
    header = lines[0].split()
    if len(header) != 2:
        raise DimensionError(f"bad header line {lines[0]!r}")
    rows, cols = int(header[0]), int(header[1])
    body = lines[1:]
    if len(body) != rows:
        raise DimensionError(f"header says {rows} rows, found {len(body)}")
    data = []
    for ln in body:
        vals = [float(tok) for tok in ln.split()]
        if len(vals) != cols:
            raise DimensionError(f"expected {cols} columns, got {len(vals)}")
        data.append(vals)
    return as_matrix(data)


def write_matrix(path, a) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(format_matrix(a))


def read_matrix(path) -> np.ndarray:
    with open(path, encoding="ascii") as fh:
        return parse_matrix(fh.read())
