"""Sparse slow feature analysis.

Slow feature extraction is recast as a regression: with the temporally
whitened data ``X* = X P L^{-1/2}`` (``OmegaDot = P L P'``) the slowest
features are the principal directions of ``X*``, and each loading ``w_j``
is the elastic-net regression of the target ``X* v_j`` on ``X``. The
orthonormal ``V*`` and the sparse ``W`` are updated in turn: ``W`` by the
generalized elastic net, ``V*`` by a reduced-rank Procrustes rotation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import StandardizedMatrix, covariances
from .errors import DegenerateLoadingError, NumericalError
from .larsen import (ElasticNetProblem, Lambda1Rule, augment, lars_en_path,
                     select_breakpoint)
from .sfa import generalized_slow_directions, slowness_index


@dataclass(frozen=True)
class SsfaConfig:
    lam: float = 1.5
    lambda1_rule: Lambda1Rule = field(default_factory=Lambda1Rule)
    max_iter: int = 200
    tol: float = 1e-6
    max_support: int | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class SsfaModel:
    W: np.ndarray
    slowness: np.ndarray
    supports: list[np.ndarray]
    iterations: int
    converged: bool
    lambda1: np.ndarray
    objective_trace: list[float]


@dataclass(frozen=True)
class TransformedProblem:
    Xstar: np.ndarray
    A: np.ndarray
    factor: np.ndarray  # symmetric square root P L^{1/2} P'


def transform_problem(X: np.ndarray, OmegaDot: np.ndarray) -> TransformedProblem:
    """Factor ``OmegaDot = A A'`` with ``A = P L^{1/2}`` and whiten ``X`` by it.

    ``Xstar = X A^{-T}`` has identity temporal covariance.
    """
    try:
        L, P = np.linalg.eigh(0.5 * (OmegaDot + OmegaDot.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    if not np.all(L > 0):
        raise NumericalError("temporal covariance is not positive definite")
    root = np.sqrt(L)
    A = P * root
    return TransformedProblem(X @ (P / root), A, (P * root) @ P.T)


def procrustes_update(Xstar: np.ndarray, X: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Orthonormal ``V*`` minimising ``||X* V* - X W||``."""
    M = Xstar.T @ (X @ W)
    try:
        Q, _, Rt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed: {exc}") from exc
    return Q @ Rt


def ssfa_objective(tp: TransformedProblem, X: np.ndarray, V: np.ndarray, W: np.ndarray,
                   lam: float, lambda1: np.ndarray) -> float:
    R = tp.Xstar @ V - X @ W
    FW = tp.factor @ W
    return float(np.sum(R * R) + lam * np.sum(FW * FW)
                 + np.sum(np.asarray(lambda1) * np.abs(W).sum(axis=0)))


def _initial_directions(tp: TransformedProblem, k: int) -> np.ndarray:
    # SFA of X*: its temporal covariance is I, so the slow directions are the
    # leading static principal axes; orthonormalise to start the Procrustes loop
    Xs = tp.Xstar
    Om = np.atleast_2d(np.cov(Xs, rowvar=False))
    _, U = generalized_slow_directions(Om, np.eye(Xs.shape[1]))
    U = U[:, :k]
    Q, _, Rt = np.linalg.svd(U, full_matrices=False)
    return Q @ Rt


def _solve_column(problem: ElasticNetProblem, rule: Lambda1Rule, max_support):
    design_hat, target_hat, scale = augment(problem)
    path = lars_en_path(design_hat, target_hat, max_active=max_support)
    if rule.kind == "fixed":
        if math.isinf(rule.value):
            raise DegenerateLoadingError("lambda1 = inf shrinks the loading to zero")
        lam1 = float(rule.value)
        w = path.coef_at(lam1 / scale) / scale
        if np.any(w):
            return w, lam1
        # retry at the next-smaller breakpoint that has a nonzero coefficient
        for bp in path:
            if bp.lambda1 * scale < lam1 and np.any(bp.coef):
                return bp.coef / scale, bp.lambda1 * scale
        raise DegenerateLoadingError("loading is all zeros on the whole path")
    i = select_breakpoint(path, rule, problem, scale, max_support)
    bp = path.breakpoints[i]
    if not np.any(bp.coef):
        raise DegenerateLoadingError("loading is all zeros on the whole path")
    return bp.coef / scale, bp.lambda1 * scale


def fit_ssfa(data: StandardizedMatrix, k: int | None = None,
             cfg: SsfaConfig | None = None) -> SsfaModel:
    """Alternate elastic-net and Procrustes updates for ``k`` sparse loadings."""
    cfg = cfg or SsfaConfig()
    X, Xdot = data.X, data.Xdot
    N, J = X.shape
    k = J if k is None else int(k)
    if not 1 <= k <= J:
        raise ValueError(f"k must be in 1..{J}")
    if N <= J:
        raise NumericalError(f"SSFA needs more samples than variables ({N} <= {J})")
    max_support = J if cfg.max_support is None else min(cfg.max_support, J)

    Omega, OmegaDot = covariances(data)
    tp = transform_problem(X, OmegaDot)
    V = _initial_directions(tp, k)

    W = np.zeros((J, k))
    lambda1 = np.zeros(k)
    trace: list[float] = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        W_prev = W.copy()
        for j in range(k):
            prob = ElasticNetProblem(X, tp.Xstar @ V[:, j], cfg.lam, tp.factor, Xdot)
            # the rule picks lambda1 on the first pass; it is then held fixed so
            # the alternating steps descend one objective
            rule = cfg.lambda1_rule if it == 1 else Lambda1Rule("fixed", float(lambda1[j]))
            W[:, j], lambda1[j] = _solve_column(prob, rule, max_support)
        V = procrustes_update(tp.Xstar, X, W)
        trace.append(ssfa_objective(tp, X, V, W, cfg.lam, lambda1))
        if np.max(np.abs(W - W_prev)) < cfg.tol:
            converged = True
            break

    # unit-variance features
    var = np.einsum("ij,ik,kj->j", W, Omega, W)
    W = W / np.sqrt(var)
    S, Sdot = X @ W, Xdot @ W
    sl = np.array([slowness_index(S[:, j], Sdot[:, j]) for j in range(k)])
    order = np.argsort(sl, kind="stable")
    W, sl, lambda1 = W[:, order], sl[order], lambda1[order]
    supports = [np.flatnonzero(W[:, j]) for j in range(k)]
    return SsfaModel(W, sl, supports, it, converged, lambda1, trace)


def first_sparse_loading(data: StandardizedMatrix, cfg: SsfaConfig | None = None
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Slowest sparse loading and its support (nonzero variable indices)."""
    model = fit_ssfa(data, 1, cfg)
    return model.W[:, 0], model.supports[0]
