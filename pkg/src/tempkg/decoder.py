"""Quadruple scoring, negative sampling, and the training objective.

Scoring works row-wise over equal-length batches of subject, relation, and
object embeddings. Three decoders:

    transe:   -||s + r - o||_1            (negated distance, higher is better)
    distmult: sum_k s_k r_k o_k
    complex:  Re<s, r, conj(o)> with [real | imaginary] half layout

The objective treats each positive against its sampled corruptions as a
softmax classification; summing object-query and subject-query terms gives
the total loss.
"""

from __future__ import annotations

import logging

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, constant
from .data import TrueTripleIndex

log = logging.getLogger("tempkg")

DECODERS = ("transe", "distmult", "complex")


def score_rows(s: Tensor, r: Tensor, o: Tensor, decoder: str) -> Tensor:
    """Scores for matched rows of subject/relation/object embeddings, as (m, 1)."""
    if decoder == "transe":
        return ad.mul(ad.reduce_sum(ad.absolute(ad.sub(ad.add(s, r), o)), axis=1), -1.0)
    if decoder == "distmult":
        return ad.reduce_sum(ad.mul(ad.mul(s, r), o), axis=1)
    if decoder == "complex":
        d = s.shape[-1]
        if d % 2:
            raise ValueError(f"complex decoder needs an even dimension, got {d}")
        half = d // 2
        pick_re = constant(np.vstack([np.eye(half), np.zeros((half, half))]))
        pick_im = constant(np.vstack([np.zeros((half, half)), np.eye(half)]))
        s_re, s_im = ad.matmul(s, pick_re), ad.matmul(s, pick_im)
        r_re, r_im = ad.matmul(r, pick_re), ad.matmul(r, pick_im)
        o_re, o_im = ad.matmul(o, pick_re), ad.matmul(o, pick_im)
        out = ad.reduce_sum(ad.mul(ad.mul(r_re, s_re), o_re), axis=1)
        out = ad.add(out, ad.reduce_sum(ad.mul(ad.mul(r_re, s_im), o_im), axis=1))
        out = ad.add(out, ad.reduce_sum(ad.mul(ad.mul(r_im, s_re), o_im), axis=1))
        return ad.sub(out, ad.reduce_sum(ad.mul(ad.mul(r_im, s_im), o_re), axis=1))
    raise ValueError(f"unknown decoder {decoder!r}")


def score_one(s: np.ndarray, r: np.ndarray, o: np.ndarray, decoder: str) -> float:
    """Convenience scalar score for a single triple of plain vectors."""
    rows = [constant(np.asarray(v, dtype=np.float64).reshape(1, -1)) for v in (s, r, o)]
    return float(score_rows(*rows, decoder).data[0, 0])


def sample_negatives(s: int, r: int, o: int, t: int, index: TrueTripleIndex,
                     k: int, rng: np.random.Generator, entity_count: int,
                     ) -> tuple[np.ndarray, np.ndarray]:
    """k uniform corruptions per slot, rejecting known-true completions at t.

    Returns (object_negatives, subject_negatives). When fewer than k distinct
    valid corruptions exist the draw still proceeds with replacement, with a
    warning; an empty valid set falls back to everything but the answer.
    """
    if k < 1:
        raise ValueError("negative count must be at least 1")
    out = []
    for true_set, answer in ((index.objects_for(s, r, t), o),
                             (index.subjects_for(r, o, t), s)):
        valid = np.setdiff1d(np.arange(entity_count, dtype=np.int64), true_set,
                             assume_unique=True)
        if valid.size == 0:
            log.warning("no valid corruption exists for (%d,%d,%d,%d); "
                        "sampling among known-true entities", s, r, o, t)
            valid = np.setdiff1d(np.arange(entity_count, dtype=np.int64),
                                 np.array([answer], dtype=np.int64))
        elif valid.size < k:
            log.warning("only %d valid corruptions for %d requested; sampling "
                        "with replacement", valid.size, k)
        out.append(valid[rng.integers(0, valid.size, size=k)])
    return out[0], out[1]


def query_loss(pos_scores: Tensor, neg_scores: list[Tensor], mode: str = "cross_entropy",
               ) -> Tensor:
    """Summed per-query loss of positives against their negative sets.

    ``pos_scores`` is (b, 1); each element of ``neg_scores`` is a (b, 1)
    column for one corruption slot. 'cross_entropy' is -log softmax of the
    positive within {positive} + negatives. 'prob_sum' keeps the softmax-free
    historical form: -exp(pos) / sum_neg exp(neg), summed over queries.
    """
    if not neg_scores:
        raise ValueError("loss needs at least one negative per query")
    width = len(neg_scores) + 1
    all_scores = ad.concat([pos_scores] + list(neg_scores), axis=1)
    beta = ad.masked_softmax(all_scores, np.ones(all_scores.shape, dtype=bool))
    pick_pos = constant(np.eye(width)[:, [0]])
    p = ad.matmul(beta, pick_pos)
    if mode == "cross_entropy":
        return ad.mul(ad.reduce_sum(ad.log(p)), -1.0)
    if mode == "prob_sum":
        # p/(1-p) = exp(pos) / sum_neg exp(neg)
        ratio = ad.mul(p, ad.exp(ad.mul(ad.log(ad.sub(constant(1.0), p)), -1.0)))
        return ad.mul(ad.reduce_sum(ratio), -1.0)
    raise ValueError(f"unknown loss mode {mode!r}")
