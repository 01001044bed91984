"""Kernel slow feature analysis on super samples.

Features live in the span of the centred training feature maps,
``s = K~ a``. The dual coefficients minimise the temporal variation
``a' (D K~)' (D K~) a`` under the regularised variance constraint
``a' (K~ K~ + eps N I) a = const``, where ``D`` takes first differences.
The problem is solved in the eigenbasis of ``K~``; directions outside its
range only add regulariser cost and never change a feature.

Only the leading kernel principal directions are kept. Whatever part of a
centred feature map lies outside that subspace is the kernel residual; its
squared norm follows from the kernel alone and joins the residual statistics.
Without it, a sample far from every training point maps onto the training
centre (all kernel values vanish) and no static statistic could flag it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist, pdist

from .data import second_moment, temporal_ridge
from .errors import DegenerateSplitError, NumericalError
from .sfa import FeaturePair, SfaModel, _batch_mahalanobis, slowness_index

RIDGE = 1e-6
RANK_TOL = 1e-10


@dataclass(frozen=True)
class KsfaConfig:
    gamma: float | None = None  # None: median heuristic
    ridge: float = RIDGE
    energy: float = 0.95  # kernel PCA energy kept; 1 keeps the full range
    max_features: int | None = None

    def __post_init__(self):
        if not 0 < self.energy <= 1:
            raise ValueError("energy must lie in (0, 1]")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")


@dataclass(frozen=True)
class KsfaModel:
    train: np.ndarray          # N x d super samples
    gamma: float
    row_means: np.ndarray      # column means of the raw training kernel
    total_mean: float
    alphas: np.ndarray         # N x m dual coefficients, slowest first
    slowness: np.ndarray
    M: int
    omega_dot_s: np.ndarray
    omega_dot_f: np.ndarray
    basis: np.ndarray          # N x r, U diag(ev^-1/2): kernel PCA scores are K~ basis
    res_mean_t: float          # training mean of the kernel residual
    res_mean_d: float          # training mean of its temporal counterpart
    ridge: float = RIDGE

    @property
    def n_features(self) -> int:
        return self.alphas.shape[1]

    def to_dict(self) -> dict:
        return {"train": self.train.tolist(), "gamma": self.gamma,
                "row_means": self.row_means.tolist(), "total_mean": self.total_mean,
                "alphas": self.alphas.tolist(), "slowness": self.slowness.tolist(),
                "M": self.M, "omega_dot_s": self.omega_dot_s.tolist(),
                "omega_dot_f": self.omega_dot_f.tolist(), "basis": self.basis.tolist(),
                "res_mean_t": self.res_mean_t, "res_mean_d": self.res_mean_d,
                "ridge": self.ridge}

    @classmethod
    def from_dict(cls, d: dict) -> "KsfaModel":
        m = len(d["slowness"])
        M = int(d["M"])
        train = np.asarray(d["train"], float)
        N = len(d["row_means"])
        return cls(train.reshape(N, -1), float(d["gamma"]), np.asarray(d["row_means"], float),
                   float(d["total_mean"]), np.asarray(d["alphas"], float).reshape(N, m),
                   np.asarray(d["slowness"], float), M,
                   np.asarray(d["omega_dot_s"], float).reshape(M, M),
                   np.asarray(d["omega_dot_f"], float).reshape(m - M, m - M),
                   np.asarray(d["basis"], float).reshape(N, -1), float(d["res_mean_t"]),
                   float(d["res_mean_d"]), float(d.get("ridge", RIDGE)))


def build_super_samples(partition, subset_models: list[SfaModel], X: np.ndarray) -> np.ndarray:
    """System features of each S&DL subset followed by the S&DNL columns."""
    X = np.atleast_2d(np.asarray(X, float))
    if len(partition.sdl) != len(subset_models):
        raise ValueError("one SFA model is needed per S&DL subset")
    blocks = []
    for idx, model in zip(partition.sdl, subset_models):
        if model.n_vars != len(idx):
            raise ValueError("subset model does not match its variable set")
        blocks.append(X[:, list(idx)] @ model.W[:, :model.M])
    blocks.append(X[:, list(partition.sdnl)])
    return np.hstack(blocks)


def median_gamma(Z: np.ndarray) -> float:
    """``1 / (2 median^2)`` of the pairwise distances between rows."""
    d = pdist(np.asarray(Z, float))
    med = float(np.median(d)) if d.size else 0.0
    if not med > 0:
        raise NumericalError("super samples have no spread; kernel bandwidth undefined")
    return 1.0 / (2.0 * med * med)


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * cdist(A, B, "sqeuclidean"))


def _center(K: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    col = K.mean(axis=0)
    total = float(col.mean())
    Kt = K - col[None, :] - col[:, None] + total
    return 0.5 * (Kt + Kt.T), col, total


def centered_kernel(Z: np.ndarray, gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Double-centred kernel ``K~`` and the differenced kernel ``D K~ D'``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    K = rbf_kernel(Z, Z, gamma)
    Kt, _, _ = _center(K)
    if np.max(np.abs(Kt)) < 1e-12:
        warnings.warn("kernel bandwidth is degenerate: centred kernel is ~0", RuntimeWarning)
    DK = np.diff(Kt, axis=0)
    Kdt = np.diff(DK, axis=1)
    return Kt, 0.5 * (Kdt + Kdt.T)


def split_threshold(Kt: np.ndarray, Kdt: np.ndarray) -> float:
    """Largest ratio ``Kdot~_jj / K~_jj`` over samples with nonzero ``K~_jj``."""
    kd = np.diag(Kdt)
    kk = np.diag(Kt)[: kd.size]
    ok = kk > 1e-12 * max(float(np.max(np.diag(Kt))), np.finfo(float).tiny)
    if not ok.any():
        return 0.0
    return float(np.max(kd[ok] / kk[ok]))


def fit_ksfa(Z: np.ndarray, cfg: KsfaConfig | None = None) -> KsfaModel:
    cfg = cfg or KsfaConfig()
    Z = np.atleast_2d(np.asarray(Z, float))
    N = Z.shape[0]
    if N < 10:
        raise ValueError("kernel SFA needs at least 10 samples")
    if Z.shape[1] == 0:
        raise DegenerateSplitError("super samples have no columns")
    gamma = cfg.gamma if cfg.gamma is not None else median_gamma(Z)
    K = rbf_kernel(Z, Z, gamma)
    Kt, col, total = _center(K)

    try:
        ev, U = np.linalg.eigh(Kt)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"kernel eigendecomposition failed: {exc}") from exc
    keep = ev > RANK_TOL * ev[-1]
    ev, U = ev[keep], U[:, keep]
    # the centred kernel always has the constant vector in its null space
    r = min(ev.size, N - 1)
    ev, U = ev[-r:], U[:, -r:]
    # small kernel PCA directions interpolate the training record and do not
    # generalise; keep the leading ones holding `energy` of the variance
    frac = np.cumsum(ev[::-1]) / ev.sum()
    r = min(r, int(np.searchsorted(frac, cfg.energy * (1 - 1e-12))) + 1)
    if cfg.max_features is not None:
        r = min(r, int(cfg.max_features))
    ev, U = ev[-r:], U[:, -r:]

    # with s = U g: variance term g'(I + eps N / ev^2) g, temporal term g' U'D'D U g
    DU = np.diff(U, axis=0)
    A_t = DU.T @ DU
    B_t = np.diag(1.0 + cfg.ridge * N / ev ** 2)
    try:
        lam, G = scipy.linalg.eigh(0.5 * (A_t + A_t.T), B_t)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"kernel SFA eigenproblem failed: {exc}") from exc

    S = U @ G
    S = S / S.std(axis=0, ddof=1)
    Sdot = np.diff(S, axis=0)
    sl = np.array([slowness_index(S[:, j], Sdot[:, j]) for j in range(S.shape[1])])
    order = np.argsort(sl, kind="stable")
    S, Sdot, sl = S[:, order], Sdot[:, order], sl[order]
    # S = K~ a with a = U diag(1/ev) U' S
    alphas = U @ ((U.T @ S) / ev[:, None])

    _, Kdt = centered_kernel(Z, gamma)
    thresh = split_threshold(Kt, Kdt)
    M = int(np.searchsorted(sl, thresh * (1.0 + 1e-9), side="right"))
    if M == 0:
        raise DegenerateSplitError("no super feature is slower than the kernel threshold")
    basis = U / np.sqrt(ev)[None, :]
    # training kernel residuals: K~_ii minus the kept kernel PCA energy
    P = U * np.sqrt(ev)[None, :]
    rt = np.clip(np.diag(Kt) - np.sum(P ** 2, axis=1), 0.0, None)
    rd = 2.0 - 2.0 * np.diag(K, 1)
    return KsfaModel(Z.copy(), float(gamma), col, total, alphas, sl, M,
                     _temporal_cov(Sdot[:, :M]), _temporal_cov(Sdot[:, M:]), basis,
                     _scale(rt), _scale(rd), cfg.ridge)


def _scale(r: np.ndarray) -> float:
    m = float(np.mean(r))
    return m if m > 1e-12 else 1.0


def _temporal_cov(Sdot: np.ndarray) -> np.ndarray:
    m = Sdot.shape[1]
    if m == 0:
        return np.zeros((0, 0))
    C = second_moment(Sdot)
    return C + temporal_ridge(C) * np.eye(m)


def _kernel_terms(model: KsfaModel, Z: np.ndarray):
    Z = np.atleast_2d(np.asarray(Z, float))
    if Z.shape[1] != model.train.shape[1]:
        raise ValueError(f"super sample width {Z.shape[1]} != {model.train.shape[1]}")
    k = rbf_kernel(Z, model.train, model.gamma)
    kt = k - k.mean(axis=1, keepdims=True) - model.row_means[None, :] + model.total_mean
    # squared norm of each centred feature map; k(x, x) = 1 for the RBF kernel
    self_norm = 1.0 - 2.0 * k.mean(axis=1) + model.total_mean
    return Z, kt, self_norm


def transform(model: KsfaModel, Z: np.ndarray) -> np.ndarray:
    """Super features for each row of ``Z`` (centred against training)."""
    _, kt, _ = _kernel_terms(model, Z)
    return kt @ model.alphas


def _features_and_residuals(model: KsfaModel, Z: np.ndarray):
    Z, kt, self_norm = _kernel_terms(model, Z)
    P = kt @ model.basis
    rt = np.clip(self_norm - np.sum(P ** 2, axis=1), 0.0, None)
    # consecutive maps: |phi(a) - phi(b)|^2 = 2 - 2 k(a, b), centring cancels
    dphi = 2.0 - 2.0 * np.exp(-model.gamma * np.sum(np.diff(Z, axis=0) ** 2, axis=1))
    return kt @ model.alphas, rt, dphi


def kernel_residual(model: KsfaModel, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Residual energy per row and between consecutive rows (length N-1)."""
    _, rt, rd = _features_and_residuals(model, Z)
    return rt, rd


def batch_statistics_super(model: KsfaModel, Z: np.ndarray) -> dict[str, np.ndarray]:
    """All four global statistics for consecutive super samples; D² starts at row 1."""
    S, rt, rd = _features_and_residuals(model, Z)
    Sdot = np.diff(S, axis=0)
    M = model.M
    return {"T2s": np.sum(S[:, :M] ** 2, axis=1),
            "T2f": np.sum(S[:, M:] ** 2, axis=1) + rt / model.res_mean_t,
            "D2s": _batch_mahalanobis(Sdot[:, :M], model.omega_dot_s),
            "D2f": _batch_mahalanobis(Sdot[:, M:], model.omega_dot_f) + rd / model.res_mean_d}


def project_super(model: KsfaModel, x_sp, x_sp_prev=None) -> tuple[FeaturePair, FeaturePair]:
    """System and residual super features of one sample (without the kernel residual)."""
    s = transform(model, np.asarray(x_sp, float)[None, :])[0]
    sdot = None
    if x_sp_prev is not None:
        sdot = s - transform(model, np.asarray(x_sp_prev, float)[None, :])[0]
    M = model.M
    return (FeaturePair(s[:M], None if sdot is None else sdot[:M]),
            FeaturePair(s[M:], None if sdot is None else sdot[M:]))


def statistics_super(model: KsfaModel, x_sp, x_sp_prev=None):
    """``(T2s, T2f, D2s, D2f)`` of one super sample; D² is ``None`` without a predecessor."""
    if x_sp_prev is None:
        st = batch_statistics_super(model, np.asarray(x_sp, float)[None, :])
        return float(st["T2s"][0]), float(st["T2f"][0]), None, None
    st = batch_statistics_super(model, np.vstack([x_sp_prev, x_sp]))
    return tuple(float(st[k][-1]) for k in ("T2s", "T2f", "D2s", "D2f"))


def out_of_fold_statistics(Z: np.ndarray, cfg: KsfaConfig, folds: int = 5
                           ) -> dict[str, np.ndarray]:
    """Global statistics of each contiguous block under a model fitted without it.

    In-sample kernel statistics are optimistic (every training point lies in
    the span of its own feature map), so limits drawn from them alarm too
    often on new data. ``cfg.gamma`` should be fixed so every fold shares the
    bandwidth of the full model.
    """
    Z = np.atleast_2d(np.asarray(Z, float))
    edges = np.linspace(0, Z.shape[0], folds + 1).astype(int)
    out: dict[str, list] = {k: [] for k in ("T2s", "T2f", "D2s", "D2f")}
    for a, b in zip(edges[:-1], edges[1:]):
        rest = np.vstack([Z[:a], Z[b:]])
        st = batch_statistics_super(fit_ksfa(rest, cfg), Z[a:b])
        for k in out:
            out[k].append(st[k])
    return {k: np.concatenate(v) for k, v in out.items()}
