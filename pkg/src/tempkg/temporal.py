"""Temporal encoders: decay-weighted recurrence and masked self-attention.

Both integrate a window of per-step structural embeddings into one temporal
embedding per entity at the target step. Historical influence is
down-weighted by gamma = exp(-max(0, lambda * dt + b)) with learnable scalars
lambda and b, so gamma always lies in (0, 1] and never increases with
temporal distance while lambda >= 0.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, constant


def decay_weight(delta_t: float, lam: float, b: float) -> float:
    """Scalar decay weight in (0, 1] for a nonnegative step difference."""
    if delta_t < 0:
        raise ValueError("delta_t must be nonnegative")
    return float(np.exp(-max(0.0, lam * delta_t + b)))


def _broadcast_col(col: Tensor, dim: int) -> Tensor:
    """(n, 1) -> (n, dim) via multiplication with a constant row of ones."""
    return ad.matmul(col, constant(np.ones((1, dim))))


def decay_column(deltas: np.ndarray, lam: Tensor, b: Tensor) -> Tensor:
    """Per-entity decay weights gamma as an (n, 1) tensor on the tape."""
    d = constant(np.asarray(deltas, dtype=np.float64).reshape(-1, 1))
    return ad.exp(ad.mul(ad.relu(ad.add(ad.mul(d, lam), b)), -1.0))


def gru_cell(x: Tensor, h: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    """Standard gated recurrent cell: update/reset gates plus candidate state."""
    p = lambda k: params[f"{prefix}.{k}"]
    z = ad.sigmoid(ad.add(ad.add(ad.matmul(x, p("wz")), ad.matmul(h, p("uz"))), p("bz")))
    r = ad.sigmoid(ad.add(ad.add(ad.matmul(x, p("wr")), ad.matmul(h, p("ur"))), p("br")))
    hbar = ad.tanh(ad.add(ad.add(ad.matmul(x, p("wh")),
                                 ad.matmul(ad.mul(r, h), p("uh"))), p("bh")))
    return ad.add(ad.mul(z, h), ad.mul(ad.sub(constant(1.0), z), hbar))


def _decayed_hidden(h: Tensor, last_seen: np.ndarray, pos: int,
                    lam: Tensor, b: Tensor, dim: int) -> Tensor:
    """gamma(pos - last_seen) * h, zeroed for entities with no seen step."""
    has_prev = last_seen >= 0
    deltas = np.where(has_prev, pos - last_seen, 1).astype(np.float64)
    gamma = _broadcast_col(decay_column(deltas, lam, b), dim)
    mask = constant(np.broadcast_to(has_prev.astype(np.float64)[:, None],
                                    (len(last_seen), dim)))
    return ad.mul(ad.mul(h, gamma), mask)


def _chain(x_steps, active, positions, target_pos, params, prefix, lam, b, dim, n):
    """Run the recurrence over one direction and return the target-step output.

    ``positions`` are window indices ordered from far to near; the entity
    chain only advances on steps where the entity is active, so an inactive
    gap only grows the decay distance, never breaks the chain.
    """
    h = constant(np.zeros((n, dim)))
    last_seen = np.full(n, -1, dtype=np.int64)
    pos_rank = {p: i for i, p in enumerate(positions)}
    for pos in positions:
        act = active[pos]
        if not act.any():
            continue
        zhat = _decayed_hidden(h, last_seen, pos_rank[pos], lam, b, dim)
        h_new = gru_cell(x_steps[pos], zhat, params, prefix)
        m = constant(np.broadcast_to(act.astype(np.float64)[:, None], (n, dim)))
        h = ad.add(ad.mul(h_new, m), ad.mul(h, ad.sub(constant(1.0), m)))
        last_seen[act] = pos_rank[pos]
    zhat = _decayed_hidden(h, last_seen, len(positions), lam, b, dim)
    return gru_cell(x_steps[target_pos], zhat, params, prefix)


def encode_gru(x_steps: list[Tensor], active: list[np.ndarray], target_pos: int,
               params: dict[str, Tensor], *, bidirectional: bool = False) -> Tensor:
    """Temporal embeddings at the target step via decayed recurrence.

    ``x_steps[i]`` is the (n, d) structural embedding at window position i and
    ``active[i]`` the matching boolean activity row. Entities with no active
    step before the target see a zero hidden state, i.e. z = GRU(x_t, 0).
    Bidirectionally, an independently parameterized cell consumes the future
    side and the two outputs are summed.
    """
    n, dim = x_steps[target_pos].shape
    lam, b = params["decay.z.lam"], params["decay.z.b"]
    past = list(range(target_pos))
    z = _chain(x_steps, active, past, target_pos, params, "gru.f", lam, b, dim, n)
    if bidirectional:
        future = list(range(len(x_steps) - 1, target_pos, -1))
        z_b = _chain(x_steps, active, future, target_pos, params, "gru.b", lam, b, dim, n)
        z = ad.add(z, z_b)
    return z


def encode_sa(x_steps: list[Tensor], active: list[np.ndarray], target_pos: int,
              params: dict[str, Tensor], *, heads: int) -> Tensor:
    """Temporal embeddings via decay-penalized, activity-masked attention.

    Attention logits combine the scaled query-key product with a penalty
    max(0, lambda * |dt| + b); steps where the entity is inactive are masked
    out entirely. An entity inactive at every window step falls back to
    attending only to its own target-step representation, which equals the
    value projection of x_t.
    """
    n, dim = x_steps[target_pos].shape
    if dim % heads:
        raise ValueError(f"embedding dim {dim} not divisible by {heads} heads")
    width = len(x_steps)
    lam, b = params["decay.z.lam"], params["decay.z.b"]

    mask = np.stack([active[p] for p in range(width)], axis=1)
    degenerate = ~mask.any(axis=1)
    if degenerate.any():
        mask = mask.copy()
        mask[degenerate, target_pos] = True

    offsets = np.abs(np.arange(width) - target_pos).astype(np.float64).reshape(1, -1)
    penalty = ad.relu(ad.add(ad.mul(constant(offsets), lam), b))  # (1, width)

    dh = dim // heads
    scale = 1.0 / np.sqrt(dh)
    head_outputs = []
    onehots = [constant(np.eye(width)[:, [p]]) for p in range(width)]
    for k in range(heads):
        wq = params[f"sa.h{k}.wq"]
        wk = params[f"sa.h{k}.wk"]
        wv = params[f"sa.h{k}.wv"]
        q = ad.matmul(x_steps[target_pos], wq)
        cols = []
        for p in range(width):
            keyed = ad.matmul(x_steps[p], wk)
            cols.append(ad.mul(ad.reduce_sum(ad.mul(q, keyed), axis=1), scale))
        logits = ad.sub(ad.concat(cols, axis=1), penalty)
        beta = ad.masked_softmax(logits, mask)
        z_k = None
        for p in range(width):
            w_col = _broadcast_col(ad.matmul(beta, onehots[p]), dh)
            term = ad.mul(w_col, ad.matmul(x_steps[p], wv))
            z_k = term if z_k is None else ad.add(z_k, term)
        head_outputs.append(z_k)
    return ad.concat(head_outputs, axis=1) if heads > 1 else head_outputs[0]


def attention_weights(x_steps: list[np.ndarray], active: list[np.ndarray],
                      target_pos: int, params_np: dict[str, np.ndarray],
                      head: int = 0) -> np.ndarray:
    """Off-tape attention row weights for one head (diagnostics and tests)."""
    xs = [constant(x) for x in x_steps]
    n, dim = xs[target_pos].shape
    width = len(xs)
    lam = constant(params_np["decay.z.lam"])
    b = constant(params_np["decay.z.b"])
    mask = np.stack([active[p] for p in range(width)], axis=1)
    degenerate = ~mask.any(axis=1)
    if degenerate.any():
        mask = mask.copy()
        mask[degenerate, target_pos] = True
    offsets = np.abs(np.arange(width) - target_pos).astype(np.float64).reshape(1, -1)
    penalty = ad.relu(ad.add(ad.mul(constant(offsets), lam), b))
    wq = constant(params_np[f"sa.h{head}.wq"])
    wk = constant(params_np[f"sa.h{head}.wk"])
    dh = wq.shape[1]
    q = ad.matmul(xs[target_pos], wq)
    cols = [ad.mul(ad.reduce_sum(ad.mul(q, ad.matmul(xs[p], wk)), axis=1),
                   1.0 / np.sqrt(dh)) for p in range(width)]
    logits = ad.sub(ad.concat(cols, axis=1), penalty)
    return ad.masked_softmax(logits, mask).data


def add_positional(z: Tensor, positional: Tensor, t: int) -> Tensor:
    """Add the step-t positional vector to every entity's embedding."""
    if t >= positional.shape[0]:
        raise ValueError(f"time step {t} outside positional table of {positional.shape[0]}")
    return ad.add(z, ad.gather_rows(positional, np.array([t])))
