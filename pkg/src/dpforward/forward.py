"""Embedding-level perturbation and the token-wise nearest-neighbor inversion attack.

A small stand-in for the input embedding layer of a language model: a
random lookup table, row-wise normalization, calibrated matrix Gaussian
noise, and an attacker who maps each noisy row back to its closest
vocabulary embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from dpforward.errors import DimensionError, DomainError, NotionMismatchError
from dpforward.mechanisms import (
    GaussianCalibration,
    PrivacyBudget,
    amgm_calibrate,
    amgm_sample,
)
from dpforward.numerics import RandomStream, as_matrix, row_norms
from dpforward.sensitivity import (
    NORMALIZE,
    PER_ROW,
    ClipSpec,
    apply_clip,
    linear_map_sensitivity,
    sensitivity_from_clip,
)

MAX_VOCAB = 10_000
MAX_DIM = 64
MAX_LEN = 128


@dataclass(frozen=True)
class EmbeddingTable:
    table: np.ndarray

    def __post_init__(self):
        t = as_matrix(self.table)
        if np.unique(t, axis=0).shape[0] != t.shape[0]:
            raise DomainError("embedding table has duplicate rows")
        object.__setattr__(self, "table", t)

    @property
    def vocab_size(self) -> int:
        return self.table.shape[0]

    @property
    def dim(self) -> int:
        return self.table.shape[1]


@dataclass(frozen=True)
class TokenSequence:
    tokens: Tuple[int, ...]

    def __post_init__(self):
        toks = tuple(int(t) for t in self.tokens)
        if not toks:
            raise DomainError("token sequence must be non-empty")
        if min(toks) < 0:
            raise DomainError("token indices must be non-negative")
        object.__setattr__(self, "tokens", toks)

    def __len__(self):
        return len(self.tokens)


def random_table(vocab_size: int, dim: int, stream: RandomStream) -> EmbeddingTable:
    """I.i.d. standard normal rows, normalized to unit 2-norm."""
    raw = stream.standard_normal((vocab_size, dim))
    return EmbeddingTable(apply_clip(raw, ClipSpec(NORMALIZE, PER_ROW, 1.0)))


def embed(seq: TokenSequence, table: EmbeddingTable, clip: ClipSpec) -> np.ndarray:
    if max(seq.tokens) >= table.vocab_size:
        raise DomainError(f"token index {max(seq.tokens)} outside vocabulary of {table.vocab_size}")
    return apply_clip(table.table[list(seq.tokens)], clip)


def dp_forward_perturb(emb, calib: GaussianCalibration, stream: RandomStream, clip: ClipSpec) -> np.ndarray:
    """Add calibrated noise to an embedding produced under ``clip``.

    Raises:
        NotionMismatchError: if the calibration's neighbor relation does not
            match the clip granularity (token-level <-> per-row,
            sequence-level <-> full-matrix).
    """
    emb = as_matrix(emb)
    if calib.sensitivity.notion != clip.notion:
        raise NotionMismatchError(
            f"calibration is {calib.sensitivity.notion} but {clip.granularity} clipping gives {clip.notion}"
        )
    return emb + amgm_sample(calib, emb.shape[0], emb.shape[1], stream)


def linear_projection_calibration(W, C: float, budget: PrivacyBudget) -> GaussianCalibration:
    return amgm_calibrate(linear_map_sensitivity(W, C), budget)


def noisy_linear_projection(emb, W, C: float, budget: PrivacyBudget, stream: RandomStream) -> np.ndarray:
    """``emb @ W`` plus noise calibrated to ``C * sigma_max(W)``.

    ``emb`` must be row-wise normalized to ``C``.
    """
    emb = as_matrix(emb)
    W = as_matrix(W)
    if emb.shape[1] != W.shape[0]:
        raise DimensionError(f"cannot multiply {emb.shape} by {W.shape}")
    norms = row_norms(emb)
    if not np.allclose(norms, C, rtol=1e-9, atol=0.0):
        raise DomainError(f"embedding rows must have 2-norm {C:g}")
    calib = linear_projection_calibration(W, C, budget)
    return emb @ W + amgm_sample(calib, emb.shape[0], W.shape[1], stream)


def invert_nearest_neighbor(noisy, table: EmbeddingTable, clip: ClipSpec) -> TokenSequence:
    """Map each noisy row to the closest (row-clipped) vocabulary embedding.

    Only public data is used: the observation and the lookup table. Ties go
    to the lowest token index.
    """
    noisy = as_matrix(noisy)
    if noisy.shape[1] != table.dim:
        raise DimensionError(f"noisy rows have dim {noisy.shape[1]}, table has {table.dim}")
    ref = apply_clip(table.table, ClipSpec(clip.mode, PER_ROW, clip.C))
    # ||y - t||^2 up to the per-row constant ||y||^2
    scores = np.sum(ref * ref, axis=1)[None, :] - 2.0 * (noisy @ ref.T)
    return TokenSequence(tuple(np.argmin(scores, axis=1).tolist()))


def inversion_recall(predicted: TokenSequence, truth: TokenSequence) -> float:
    if len(predicted) != len(truth):
        raise DimensionError(f"length mismatch: {len(predicted)} vs {len(truth)}")
    hits = sum(p == t for p, t in zip(predicted.tokens, truth.tokens))
    return hits / len(truth)


# --------------------------------------------------------------------------
# Multi-seed demo
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RecallRow:
    epsilon: float
    mean_recall: float
    stderr: float
    n_seeds: int


def run_inversion_demo(
    vocab: int,
    dim: int,
    length: int,
    epsilons: Iterable[float],
    n_seeds: int,
    delta: float = 1e-5,
    C: float = 1.0,
    seed: int = 42,
) -> List[RecallRow]:
    """Mean nearest-neighbor recall per epsilon, rows sorted by descending epsilon.

    The table is drawn once from ``(seed, shard 0)``. Repetition ``r`` draws
    its tokens and standard-normal noise from ``(seed, shard r + 1)`` and
    reuses them at every epsilon, scaled by that epsilon's sigma;
    ``inf`` means no noise.
    """
    if not (1 <= vocab <= MAX_VOCAB and 1 <= dim <= MAX_DIM and 1 <= length <= MAX_LEN):
        raise DimensionError(
            f"demo limits: vocab <= {MAX_VOCAB}, dim <= {MAX_DIM}, len <= {MAX_LEN}; "
            f"got {vocab}, {dim}, {length}"
        )
    if n_seeds < 1:
        raise DomainError("need at least one seed")
    eps_list = sorted({float(e) for e in epsilons}, reverse=True)
    if not eps_list or any(not e > 0 for e in eps_list):
        raise DomainError("epsilons must be positive (use inf for no noise)")

    clip = ClipSpec(NORMALIZE, PER_ROW, C)
    sens = sensitivity_from_clip(clip)
    table = random_table(vocab, dim, RandomStream(seed, 0))
    sigmas = {
        e: 0.0 if math.isinf(e) else amgm_calibrate(sens, PrivacyBudget(e, delta)).sigma
        for e in eps_list
    }

    recalls = {e: [] for e in eps_list}
    for rep in range(n_seeds):
        stream = RandomStream(seed, rep + 1)
        truth = TokenSequence(tuple(stream.integers(0, vocab, size=length).tolist()))
        emb = embed(truth, table, clip)
        noise = stream.standard_normal(emb.shape)
        for e in eps_list:
            guess = invert_nearest_neighbor(emb + sigmas[e] * noise, table, clip)
            recalls[e].append(inversion_recall(guess, truth))

    rows = []
    for e in eps_list:
        vals = np.asarray(recalls[e])
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        rows.append(RecallRow(e, float(vals.mean()), se, n_seeds))
    return rows


def format_recall_table(rows: Sequence[RecallRow]) -> str:
    lines = ["# epsilon mean_recall stderr n_seeds"]
    for r in rows:
        lines.append(f"{r.epsilon:.12g} {r.mean_recall:.12g} {r.stderr:.12g} {r.n_seeds}")
    return "\n".join(lines) + "\n"
