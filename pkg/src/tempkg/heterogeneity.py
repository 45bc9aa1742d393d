"""Temporal pattern frequencies, inactive-entity imputation, frequency gating.

A pattern is a non-empty subset of (s, r, o); its temporal frequency at step t
counts training facts matching the pattern inside a window policy. The seven
kinds are keyed 's', 'o', 'r', 'sr', 'ro', 'so', 'sro'. By construction a more
specific pattern never counts more than a less specific one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, constant
from .data import TkgDataset

PATTERN_KINDS = ("s", "o", "r", "sr", "ro", "so", "sro")

_EXTRACTORS = {
    "s": lambda s, r, o: (s,),
    "o": lambda s, r, o: (o,),
    "r": lambda s, r, o: (r,),
    "sr": lambda s, r, o: (s, r),
    "ro": lambda s, r, o: (r, o),
    "so": lambda s, r, o: (s, o),
    "sro": lambda s, r, o: (s, r, o),
}


@dataclass(frozen=True)
class WindowPolicy:
    """'full_history' counts t' <= t; 'strict_past' counts t' < t;
    'trailing' counts max(0, t - width + 1) <= t' <= t."""

    kind: str = "full_history"
    width: int | None = None

    def __post_init__(self):
        if self.kind not in ("full_history", "strict_past", "trailing"):
            raise ValueError(f"unknown window policy {self.kind!r}")
        if self.kind == "trailing" and (self.width is None or self.width <= 0):
            raise ValueError("trailing policy needs a positive width")


class TpfTable:
    """Pattern frequencies over the training split, queryable at any step.

    Internally stores, per pattern key, the sorted occurrence times with
    cumulative counts, so a lookup is a binary search.
    """

    def __init__(self, dataset: TkgDataset, policy: WindowPolicy = WindowPolicy()):
        if dataset.split_sizes()["train"] == 0:
            raise ValueError("pattern frequencies need a nonempty training split")
        self.policy = policy
        self._tables: dict[str, dict[tuple, tuple[np.ndarray, np.ndarray]]] = {}
        occurrences: dict[str, dict[tuple, list[int]]] = {k: {} for k in PATTERN_KINDS}
        for snap in dataset.splits["train"]:
            for s, r, o in snap.triples.tolist():
                for kind, extract in _EXTRACTORS.items():
                    occurrences[kind].setdefault(extract(s, r, o), []).append(snap.time)
        for kind, table in occurrences.items():
            packed = {}
            for key, times in table.items():
                times_arr = np.sort(np.asarray(times, dtype=np.int64))
                packed[key] = (times_arr, np.arange(1, len(times_arr) + 1, dtype=np.int64))
            self._tables[kind] = packed

    def _count_until(self, times: np.ndarray, cum: np.ndarray, t: int, side: str) -> int:
        pos = np.searchsorted(times, t, side=side)
        return int(cum[pos - 1]) if pos else 0

    def freq(self, kind: str, key: tuple, t: int) -> int:
        entry = self._tables[kind].get(tuple(key))
        if entry is None:
            return 0
        times, cum = entry
        if self.policy.kind == "full_history":
            return self._count_until(times, cum, t, "right")
        if self.policy.kind == "strict_past":
            return self._count_until(times, cum, t, "left")
        upper = self._count_until(times, cum, t, "right")
        lower = self._count_until(times, cum, t - self.policy.width, "right")
        return upper - lower

    def query_frequencies(self, s: int, r: int, o: int, t: int) -> dict[str, int]:
        """All seven frequencies for one quadruple."""
        return {kind: self.freq(kind, _EXTRACTORS[kind](s, r, o), t)
                for kind in PATTERN_KINDS}

    def subject_side(self, s: int, r: int, t: int) -> np.ndarray:
        """F observable for an object query (s, r, ?, t): [f_s, f_r, f_sr]."""
        return np.array([self.freq("s", (s,), t), self.freq("r", (r,), t),
                         self.freq("sr", (s, r), t)], dtype=np.float64)

    def object_side(self, o: int, r: int, t: int) -> np.ndarray:
        """F observable for a subject query (?, r, o, t): [f_o, f_r, f_ro]."""
        return np.array([self.freq("o", (o,), t), self.freq("r", (r,), t),
                         self.freq("ro", (r, o), t)], dtype=np.float64)

    def export_csv(self, path) -> None:
        """Rows of pattern_kind,key,els,time,count at each occurrence time."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pattern_kind", "key", "els", "time", "count"])
            for kind in PATTERN_KINDS:
                for key in sorted(self._tables[kind]):
                    times = self._tables[kind][key][0]
                    for t in np.unique(times).tolist():
                        writer.writerow([kind, "|".join(map(str, key)), len(key),
                                         t, self.freq(kind, key, t)])


def compute_tpf(dataset: TkgDataset, policy: WindowPolicy = WindowPolicy()) -> TpfTable:
    return TpfTable(dataset, policy)


# --- imputation ---------------------------------------------------------------

def impute(x_t: Tensor, x_past: Tensor | None, delta_t: int,
           lam: Tensor, b: Tensor) -> Tensor:
    """Blend a stale representation into the current one for an inactive entity.

    gamma = exp(-max(0, lam*dt + b)); result = gamma * x_past + (1-gamma) * x_t.
    With no past representation in the window the result is x_t unchanged.
    """
    if x_past is None:
        return x_t
    gamma = _decay_scalar(delta_t, lam, b)
    return ad.add(ad.mul(gamma, x_past), ad.mul(ad.sub(constant(1.0), gamma), x_t))


def impute_bidirectional(x_t: Tensor, x_past: Tensor | None, x_future: Tensor | None,
                         delta_past: int, delta_future: int,
                         lam: Tensor, b: Tensor) -> Tensor:
    """Two-sided blend with halved, renormalized decay coefficients.

    Coefficients (g-/2, g+/2, 1 - g-/2 - g+/2) are nonnegative and sum to one.
    Absent neighbors contribute weight zero.
    """
    if x_past is None and x_future is None:
        return x_t
    half = constant(0.5)
    zero = constant(0.0)
    g_past = ad.mul(_decay_scalar(delta_past, lam, b), half) if x_past is not None else zero
    g_fut = ad.mul(_decay_scalar(delta_future, lam, b), half) if x_future is not None else zero
    rest = ad.sub(ad.sub(constant(1.0), g_past), g_fut)
    out = ad.mul(rest, x_t)
    if x_past is not None:
        out = ad.add(out, ad.mul(g_past, x_past))
    if x_future is not None:
        out = ad.add(out, ad.mul(g_fut, x_future))
    return out


def _decay_scalar(delta_t: int, lam: Tensor, b: Tensor) -> Tensor:
    d = constant(float(delta_t))
    return ad.exp(ad.mul(ad.relu(ad.add(ad.mul(lam, d), b)), -1.0))


def impute_window(x_t: Tensor, x_stale: Tensor, deltas: np.ndarray,
                  has_stale: np.ndarray, inactive: np.ndarray,
                  lam: Tensor, b: Tensor) -> Tensor:
    """Batched one-sided imputation across all entities.

    Rows where ``inactive & has_stale`` become the decayed blend of their
    stale representation (x_stale, the entity's row at its nearest active
    step) and x_t; every other row passes through unchanged.
    """
    n, dim = x_t.shape
    apply_mask = (inactive & has_stale).astype(np.float64)[:, None]
    gamma_col = _decay_col(np.where(has_stale, deltas, 1).astype(np.float64), lam, b)
    gamma = ad.matmul(ad.mul(gamma_col, constant(apply_mask)), constant(np.ones((1, dim))))
    return ad.add(ad.mul(gamma, x_stale), ad.mul(ad.sub(constant(1.0), gamma), x_t))


def impute_window_bidirectional(x_t: Tensor, x_past: Tensor, x_future: Tensor,
                                deltas_past: np.ndarray, deltas_future: np.ndarray,
                                has_past: np.ndarray, has_future: np.ndarray,
                                inactive: np.ndarray, lam: Tensor, b: Tensor) -> Tensor:
    n, dim = x_t.shape
    ones_row = constant(np.ones((1, dim)))
    use_p = (inactive & has_past).astype(np.float64)[:, None]
    use_f = (inactive & has_future).astype(np.float64)[:, None]
    g_p = ad.mul(_decay_col(np.where(has_past, deltas_past, 1).astype(np.float64), lam, b), 0.5)
    g_f = ad.mul(_decay_col(np.where(has_future, deltas_future, 1).astype(np.float64),
                            lam, b), 0.5)
    g_p = ad.matmul(ad.mul(g_p, constant(use_p)), ones_row)
    g_f = ad.matmul(ad.mul(g_f, constant(use_f)), ones_row)
    rest = ad.sub(ad.sub(constant(1.0), g_p), g_f)
    return ad.add(ad.add(ad.mul(rest, x_t), ad.mul(g_p, x_past)), ad.mul(g_f, x_future))


def _decay_col(deltas: np.ndarray, lam: Tensor, b: Tensor) -> Tensor:
    d = constant(deltas.reshape(-1, 1))
    return ad.exp(ad.mul(ad.relu(ad.add(ad.mul(d, lam), b)), -1.0))


# --- frequency-based gating ----------------------------------------------------

GATE_NAMES = ("os", "oo", "ss", "so")


def transform_frequencies(freqs: np.ndarray, transform: str = "log1p") -> np.ndarray:
    """Compress heavy-tailed counts before the gate network (or pass raw)."""
    freqs = np.asarray(freqs, dtype=np.float64)
    if transform == "log1p":
        return np.log1p(freqs)
    if transform == "raw":
        return freqs
    raise ValueError(f"unknown frequency transform {transform!r}")


def gate_alpha(freq_rows: np.ndarray, params: dict[str, Tensor], gate: str) -> Tensor:
    """Gate coefficient in [0, 1] per query row from a (b, 3) frequency matrix."""
    if gate not in GATE_NAMES:
        raise ValueError(f"unknown gate {gate!r}")
    hidden = ad.relu(ad.add(ad.matmul(constant(freq_rows), params[f"gate.{gate}.w1"]),
                            params[f"gate.{gate}.b1"]))
    return ad.sigmoid(ad.add(ad.matmul(hidden, params[f"gate.{gate}.w2"]),
                             params[f"gate.{gate}.b2"]))


def blend(alpha: Tensor, x: Tensor, z: Tensor) -> Tensor:
    """alpha * x + (1 - alpha) * z with alpha either scalar or (n, 1)."""
    if alpha.shape not in ((), (1,), (1, 1)):
        dim = x.shape[1]
        alpha = ad.matmul(alpha, constant(np.ones((1, dim))))
    return ad.add(ad.mul(alpha, x), ad.mul(ad.sub(constant(1.0), alpha), z))


def gate_object_query(x_s: Tensor, z_s: Tensor, x_all: Tensor, z_all: Tensor,
                      freqs_subject_side: np.ndarray, params: dict[str, Tensor],
                      transform: str = "log1p") -> tuple[Tensor, Tensor]:
    """Gated embeddings for one object query (s, r, ?, t).

    Only subject-side frequencies [f_s, f_r, f_sr] are consulted; the same
    candidate coefficient applies uniformly to every entity.
    """
    f = transform_frequencies(freqs_subject_side, transform).reshape(1, 3)
    a_s = gate_alpha(f, params, "os")
    a_o = gate_alpha(f, params, "oo")
    return blend(a_s, x_s, z_s), blend(a_o, x_all, z_all)


def gate_subject_query(x_all: Tensor, z_all: Tensor, x_o: Tensor, z_o: Tensor,
                       freqs_object_side: np.ndarray, params: dict[str, Tensor],
                       transform: str = "log1p") -> tuple[Tensor, Tensor]:
    """Mirror of gate_object_query for (?, r, o, t), driven by [f_o, f_r, f_ro]."""
    f = transform_frequencies(freqs_object_side, transform).reshape(1, 3)
    a_s = gate_alpha(f, params, "ss")
    a_o = gate_alpha(f, params, "so")
    return blend(a_s, x_all, z_all), blend(a_o, x_o, z_o)
