"""Iterative variable subset partition driven by sparse slow features."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .data import StandardizedMatrix, second_moment
from .errors import NumericalError
from .sfa import fit_sfa
from .ssfa import SsfaConfig, first_sparse_loading

EXACT_MAX_N = 25


@dataclass(frozen=True)
class TestRecord:
    candidate: tuple[int, ...]
    p_value: float | None
    accepted: bool


@dataclass
class SubsetPartition:
    sdl: list[tuple[int, ...]]
    sdnl: tuple[int, ...]
    trace: list[TestRecord] = field(default_factory=list)

    def check(self, n_vars: int) -> None:
        seen = [j for s in self.sdl for j in s] + list(self.sdnl)
        if sorted(seen) != list(range(n_vars)) or any(len(s) == 0 for s in self.sdl):
            raise AssertionError(f"partition {self.sdl} / {self.sdnl} is not exhaustive and disjoint")

    def to_dict(self, names=None) -> dict:
        def named(idx):
            return [names[i] for i in idx] if names is not None else None
        return {
            "sdl": [{"indices": list(s), "names": named(s)} for s in self.sdl],
            "sdnl": {"indices": list(self.sdnl), "names": named(self.sdnl)},
            "trace": [{"candidate": list(t.candidate), "p_value": t.p_value,
                       "accepted": t.accepted} for t in self.trace],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubsetPartition":
        return cls([tuple(s["indices"]) for s in d["sdl"]], tuple(d["sdnl"]["indices"]),
                   [TestRecord(tuple(t["candidate"]), t["p_value"], t["accepted"])
                    for t in d.get("trace", [])])


def slowness_vector(S: np.ndarray, Sdot: np.ndarray) -> np.ndarray:
    """Per-sample ratio ``ṡ_n' Ξ̇^{-1} ṡ_n / s_{n+1}' Ξ^{-1} s_{n+1}``.

    ``Sdot[n] = S[n+1] - S[n]``, so each difference is paired with the later
    of its two samples; the result has ``len(S) - 1`` entries.
    """
    S = np.atleast_2d(np.asarray(S, float).T).T
    Sdot = np.atleast_2d(np.asarray(Sdot, float).T).T
    if Sdot.shape[0] != S.shape[0] - 1:
        raise ValueError("Sdot must have one row fewer than S")
    Xi = np.atleast_2d(np.cov(S, rowvar=False))
    Xi_dot = second_moment(Sdot)
    try:
        num = np.sum(Sdot * np.linalg.solve(Xi_dot, Sdot.T).T, axis=1)
        cur = S[1:]
        den = np.sum(cur * np.linalg.solve(Xi, cur.T).T, axis=1)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular feature covariance: {exc}") from exc
    return num / np.maximum(den, np.finfo(float).tiny)


def _average_ranks(a: np.ndarray) -> np.ndarray:
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(len(a))
    sa = a[order]
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and sa[j + 1] == sa[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_tail_probs(doubled_ranks: np.ndarray, w2: int) -> tuple[float, float]:
    """``P(T <= w)`` and ``P(T >= w)`` for the signed-rank sum of positives.

    Works on doubled ranks so tied (half-integer) ranks stay integral.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled_ranks.astype(int):
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    counts /= counts.sum()
    return float(counts[:w2 + 1].sum()), float(counts[w2:].sum())


def signed_rank_test(a, b, alpha: float = 0.05) -> tuple[float, bool]:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped and tied magnitudes get average ranks. The
    exact null distribution is used for up to 25 nonzero pairs, otherwise a
    normal approximation with tie and continuity corrections.

    Returns ``(p_value, same)`` where ``same`` is ``p_value >= alpha``.
    """
    d = np.asarray(a, float) - np.asarray(b, float)
    if d.ndim != 1:
        raise ValueError("paired samples must be 1-D")
    d = d[d != 0]
    n = d.size
    if n == 0:
        return 1.0, True
    ranks = _average_ranks(np.abs(d))
    t_plus = float(ranks[d > 0].sum())
    if n <= EXACT_MAX_N:
        lo, hi = _exact_tail_probs(2 * ranks, int(round(2 * t_plus)))
        p = min(1.0, 2.0 * min(lo, hi))
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(tie_counts ** 3 - tie_counts) / 48.0
        z = (abs(t_plus - mean) - 0.5) / math.sqrt(var)
        p = min(1.0, 2.0 * float(ndtr(-max(z, 0.0))))
    return p, p >= alpha


def subset_slowness_vector(data: StandardizedMatrix, idx) -> np.ndarray:
    sub = data.columns(idx)
    model = fit_sfa(sub)
    S = sub.X @ model.W
    Sdot = sub.Xdot @ model.W
    return slowness_vector(S, Sdot)


def partition_variables(data: StandardizedMatrix, cfg: SsfaConfig | None = None,
                        alpha: float = 0.05) -> SubsetPartition:
    """Split variables into linear slow subsets plus one remainder set.

    Each round takes the support of the first sparse loading on the variables
    still unassigned. The first candidate is accepted outright; later ones
    must pass a signed-rank comparison of their slowness vector against the
    previously accepted subset. The first rejection ends the loop.
    """
    cfg = cfg or SsfaConfig()
    J = data.X.shape[1]
    if J == 1:
        return SubsetPartition([(0,)], (), [TestRecord((0,), None, True)])
    remaining = list(range(J))
    sdl: list[tuple[int, ...]] = []
    trace: list[TestRecord] = []
    reference = None
    while len(remaining) >= 2:
        _, support = first_sparse_loading(data.columns(remaining), cfg)
        cand = tuple(sorted(remaining[i] for i in support))
        sl = subset_slowness_vector(data, cand)
        if reference is None:
            trace.append(TestRecord(cand, None, True))
        else:
            p, same = signed_rank_test(sl, reference, alpha)
            trace.append(TestRecord(cand, p, same))
            if not same:
                break
        sdl.append(cand)
        reference = sl
        remaining = [j for j in remaining if j not in cand]
    part = SubsetPartition(sdl, tuple(remaining), trace)
    part.check(J)
    return part
