"""L2-sensitivity certificates from output normalization, clipping and Lipschitz maps."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dpforward.errors import DomainError, NotionMismatchError
from dpforward.numerics import as_matrix, frobenius_norm, row_norms, spectral_norm

SEQUENCE_LEVEL = "sequence-level"
TOKEN_LEVEL = "token-level"
NOTIONS = (SEQUENCE_LEVEL, TOKEN_LEVEL)

NORMALIZE = "normalize"
CLIP = "clip"
FULL_MATRIX = "full-matrix"
PER_ROW = "per-row"

# a rescaled norm may round a few ulps above C; treat that as within the cap
# so clipping is idempotent
CLIP_SLACK = 8 * np.finfo(np.float64).eps


@dataclass(frozen=True)
class ClipSpec:
    """How a pre-noise output is forced onto a bounded norm.

    ``normalize`` rescales to norm exactly ``C``; ``clip`` rescales only
    when the norm exceeds ``C``. ``full-matrix`` uses the Frobenius norm of
    the whole output, ``per-row`` the 2-norm of each row.
    """

    mode: str
    granularity: str
    C: float = 1.0

    def __post_init__(self):
        if self.mode not in (NORMALIZE, CLIP):
            raise DomainError(f"unknown clip mode {self.mode!r}")
        if self.granularity not in (FULL_MATRIX, PER_ROW):
            raise DomainError(f"unknown clip granularity {self.granularity!r}")
        if not (self.C > 0 and np.isfinite(self.C)):
            raise DomainError(f"C must be a positive finite number, got {self.C!r}")

    @property
    def notion(self) -> str:
        return SEQUENCE_LEVEL if self.granularity == FULL_MATRIX else TOKEN_LEVEL


@dataclass(frozen=True)
class SensitivityBound:
    value: float
    notion: str
    derivation: str = ""

    def __post_init__(self):
        if not (self.value > 0 and np.isfinite(self.value)):
            raise DomainError(f"sensitivity must be positive and finite, got {self.value!r}")
        if self.notion not in NOTIONS:
            raise DomainError(f"unknown privacy notion {self.notion!r}")


def _rescale_rows(X: np.ndarray, C: float) -> np.ndarray:
    # divide by the row max first so subnormal rows keep their direction
    big = np.max(np.abs(X), axis=1, keepdims=True)
    Y = X / big
    return (Y / row_norms(Y)[:, None]) * C


def apply_clip(X, spec: ClipSpec) -> np.ndarray:
    """Apply ``spec`` to ``X`` and return a new matrix.

    Raises:
        DomainError: when normalizing a zero matrix, or (per-row) any zero row.
    """
    X = as_matrix(X)
    C = float(spec.C)
    if spec.granularity == FULL_MATRIX:
        norm = frobenius_norm(X)
        if spec.mode == NORMALIZE:
            if norm == 0.0:
                raise DomainError("cannot normalize a zero matrix")
            return _rescale_rows(X.reshape(1, -1), C).reshape(X.shape)
        if norm <= C * (1.0 + CLIP_SLACK):
            return X.copy()
        return _rescale_rows(X.reshape(1, -1), C).reshape(X.shape)

    norms = row_norms(X)
    if spec.mode == NORMALIZE:
        if np.any(norms == 0.0):
            bad = np.flatnonzero(norms == 0.0).tolist()
            raise DomainError(f"cannot normalize zero rows {bad}")
        return _rescale_rows(X, C)
    out = X.copy()
    over = norms > C * (1.0 + CLIP_SLACK)
    out[over] = _rescale_rows(out[over], C)
    return out


def sensitivity_from_clip(spec: ClipSpec) -> SensitivityBound:
    """Sensitivity certified by a clip spec.

    Full-matrix: two outputs each of norm at most ``C`` differ by at most
    ``2C`` (sequence-level). Per-row: a single token touches one row of
    norm ``C``, giving ``C`` (token-level). The per-row value bounds the
    difference when the affected row is present on one side only; two
    different unit-norm rows can be up to ``2C`` apart.
    """
    if spec.granularity == FULL_MATRIX:
        return SensitivityBound(2.0 * spec.C, SEQUENCE_LEVEL, f"{spec.mode} full-matrix C={spec.C:g}: 2C")
    return SensitivityBound(float(spec.C), TOKEN_LEVEL, f"{spec.mode} per-row C={spec.C:g}: C")


def linear_map_sensitivity(W, C: float) -> SensitivityBound:
    """``C * sigma_max(W)`` for ``x -> x W`` on rows of norm ``C``."""
    W = as_matrix(W)
    if not C > 0:
        raise DomainError(f"C must be positive, got {C!r}")
    smax = spectral_norm(W)
    if smax == 0.0:
        raise DomainError("linear map is the zero matrix")
    return SensitivityBound(C * smax, TOKEN_LEVEL, f"linear map C={C:g} * sigma_max={smax:.12g}")


def chain_sensitivity(parts: Sequence[SensitivityBound]) -> SensitivityBound:
    """Bound for a composition ``f1(f2(...))`` as the product of part bounds.

    Scalar factors such as the ``sqrt(d)`` Frobenius-to-spectral slack are
    passed in as their own parts.
    """
    parts = list(parts)
    if not parts:
        raise DomainError("chain_sensitivity needs at least one part")
    notions = {p.notion for p in parts}
    if len(notions) > 1:
        raise NotionMismatchError(f"cannot chain bounds with notions {sorted(notions)}")
    value = 1.0
    for p in parts:
        value *= p.value
    derivation = " o ".join(f"[{p.derivation or p.value}]" for p in parts)
    return SensitivityBound(value, parts[0].notion, derivation)
