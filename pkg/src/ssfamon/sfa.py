"""Linear slow feature analysis for one variable subset."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .data import StandardizedMatrix, covariances, second_moment, temporal_ridge
from .errors import DataError, NumericalError

# static directions with variance below this fraction of the largest are dropped
RANK_TOL = 1e-10


@dataclass(frozen=True)
class FeaturePair:
    s: np.ndarray
    sdot: np.ndarray | None = None


@dataclass(frozen=True)
class SfaModel:
    """Loadings (columns, slowest first) and the system/residual split.

    ``W`` is J x r where r is the numerical rank of the static covariance
    (r = J unless variables are exactly collinear).
    """

    W: np.ndarray
    slowness: np.ndarray
    M: int
    omega_dot_s: np.ndarray
    omega_dot_f: np.ndarray

    @property
    def n_vars(self) -> int:
        return self.W.shape[0]

    @property
    def n_features(self) -> int:
        return self.W.shape[1]

    def to_dict(self) -> dict:
        return {"W": self.W.tolist(), "slowness": self.slowness.tolist(), "M": self.M,
                "omega_dot_s": self.omega_dot_s.tolist(),
                "omega_dot_f": self.omega_dot_f.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SfaModel":
        W = np.asarray(d["W"], float).reshape(-1, len(d["slowness"]))
        M = int(d["M"])
        r = W.shape[1]
        return cls(W, np.asarray(d["slowness"], float), M,
                   np.asarray(d["omega_dot_s"], float).reshape(M, M),
                   np.asarray(d["omega_dot_f"], float).reshape(r - M, r - M))


def sign_normalize(W: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    W = W.copy()
    for j in range(W.shape[1]):
        k = int(np.argmax(np.abs(W[:, j])))
        if W[k, j] < 0:
            W[:, j] = -W[:, j]
    return W


def generalized_slow_directions(Omega: np.ndarray, OmegaDot: np.ndarray
                                ) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``OmegaDot w = lam Omega w`` with ``w' Omega w = 1``, ascending.

    Directions in the numerical null space of ``Omega`` are discarded first.
    """
    try:
        evals, U = np.linalg.eigh(Omega)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    top = evals[-1]
    if not top > 0:
        raise NumericalError("static covariance has no positive variance")
    keep = evals > RANK_TOL * top
    B = U[:, keep] / np.sqrt(evals[keep])
    Z = B.T @ OmegaDot @ B
    lam, R = np.linalg.eigh(0.5 * (Z + Z.T))
    return lam, B @ R


def slowness_index(s: np.ndarray, sdot: np.ndarray) -> float:
    """``ṡ'ṡ / s's`` for a feature series ``s`` (centred here) and its differences."""
    s = np.asarray(s, float)
    s = s - s.mean()
    den = float(s @ s)
    if not den > 0:
        raise DataError("zero-variance series has no slowness")
    sdot = np.asarray(sdot, float)
    return float(sdot @ sdot) / den


def variable_slowness(data: StandardizedMatrix) -> np.ndarray:
    return np.array([slowness_index(data.X[:, j], data.Xdot[:, j])
                     for j in range(data.X.shape[1])])


def select_system_count(S: np.ndarray, Sdot: np.ndarray, X: np.ndarray, Xdot: np.ndarray,
                        rtol: float = 1e-9) -> int:
    """Number of features at most as fast as the fastest measured variable.

    Features must be sorted slowest first; the retained set is a prefix.
    """
    thresh = max(slowness_index(X[:, j], Xdot[:, j]) for j in range(X.shape[1]))
    sl = [slowness_index(S[:, j], Sdot[:, j]) for j in range(S.shape[1])]
    M = 0
    for v in sl:
        if v <= thresh * (1.0 + rtol):
            M += 1
        else:
            break
    return M


def fit_sfa(data: StandardizedMatrix) -> SfaModel:
    X, Xdot = data.X, data.Xdot
    N, J = X.shape
    if N <= J:
        raise DataError(f"SFA needs more samples than variables ({N} <= {J})")
    Omega, OmegaDot = covariances(data)
    _, W = generalized_slow_directions(Omega, OmegaDot)
    W = sign_normalize(W)
    S, Sdot = X @ W, Xdot @ W
    slowness = np.array([slowness_index(S[:, j], Sdot[:, j]) for j in range(W.shape[1])])
    M = select_system_count(S, Sdot, X, Xdot)
    return SfaModel(W, slowness, M, _temporal_cov(Sdot[:, :M]), _temporal_cov(Sdot[:, M:]))


def _temporal_cov(Sdot: np.ndarray) -> np.ndarray:
    m = Sdot.shape[1]
    if m == 0:
        return np.zeros((0, 0))
    C = second_moment(Sdot)
    return C + temporal_ridge(C) * np.eye(m)


def project(model: SfaModel, x: np.ndarray, x_prev: np.ndarray | None = None
            ) -> tuple[FeaturePair, FeaturePair]:
    x = np.asarray(x, float)
    if x.shape != (model.n_vars,):
        raise DataError(f"sample has shape {x.shape}, model expects ({model.n_vars},)")
    s = model.W.T @ x
    sdot = None
    if x_prev is not None:
        x_prev = np.asarray(x_prev, float)
        if x_prev.shape != x.shape:
            raise DataError("previous sample has the wrong shape")
        sdot = model.W.T @ (x - x_prev)
    M = model.M
    return (FeaturePair(s[:M], None if sdot is None else sdot[:M]),
            FeaturePair(s[M:], None if sdot is None else sdot[M:]))


def quadratic_stats(system: FeaturePair, residual: FeaturePair,
                    omega_dot_s: np.ndarray, omega_dot_f: np.ndarray):
    """``(T2s, T2f, D2s, D2f)``; D² entries are ``None`` without ``sdot``."""
    T2s = float(system.s @ system.s)
    T2f = float(residual.s @ residual.s)
    D2s = D2f = None
    if system.sdot is not None:
        D2s = _mahalanobis(system.sdot, omega_dot_s)
    if residual.sdot is not None:
        D2f = _mahalanobis(residual.sdot, omega_dot_f)
    return T2s, T2f, D2s, D2f


def _mahalanobis(v: np.ndarray, C: np.ndarray) -> float:
    if v.size == 0:
        return 0.0
    return float(v @ scipy.linalg.solve(C, v, assume_a="pos"))


def statistics(model: SfaModel, system: FeaturePair, residual: FeaturePair):
    return quadratic_stats(system, residual, model.omega_dot_s, model.omega_dot_f)


def batch_statistics(model: SfaModel, data: StandardizedMatrix) -> dict[str, np.ndarray]:
    """All four statistics for every training row; D² rows start at sample 1."""
    S = data.X @ model.W
    Sdot = data.Xdot @ model.W
    M = model.M
    out = {"T2s": np.sum(S[:, :M] ** 2, axis=1), "T2f": np.sum(S[:, M:] ** 2, axis=1)}
    out["D2s"] = _batch_mahalanobis(Sdot[:, :M], model.omega_dot_s)
    out["D2f"] = _batch_mahalanobis(Sdot[:, M:], model.omega_dot_f)
    return out


def _batch_mahalanobis(V: np.ndarray, C: np.ndarray) -> np.ndarray:
    if V.shape[1] == 0:
        return np.zeros(V.shape[0])
    return np.sum(V * scipy.linalg.solve(C, V.T, assume_a="pos").T, axis=1)
