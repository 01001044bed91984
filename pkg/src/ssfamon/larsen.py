"""Generalized elastic net via data augmentation and a LARS-lasso path.

The penalised problem solved for one loading is::

    min_w ||y - X w||^2 + lam * w' OmegaDot w + lam1 * ||w||_1

Stacking ``X`` on top of ``sqrt(lam) * F'`` (``F F' = OmegaDot``), scaling by
``(1 + lam) ** -0.5`` and substituting ``w_hat = sqrt(1 + lam) * w`` turns it
into an ordinary lasso with penalty ``lam1 / sqrt(1 + lam)``, whose whole
solution path is traced by the homotopy below.

Lasso convention throughout: objective ``||y - X b||^2 + lam1 * ||b||_1``,
so at a solution the correlations ``c = X'(y - X b)`` satisfy
``c_j = lam1/2 * sign(b_j)`` on the support and ``|c_j| <= lam1/2`` off it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError

_COND_MAX = 1e12


@dataclass(frozen=True)
class ElasticNetProblem:
    design: np.ndarray
    target: np.ndarray
    lam: float
    omega_dot_factor: np.ndarray
    # first differences of the design rows; only needed by the min-slowness rule
    design_dot: np.ndarray | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")

    def objective(self, w: np.ndarray, lam1: float) -> float:
        r = self.target - self.design @ w
        Fw = self.omega_dot_factor.T @ w
        return float(r @ r + self.lam * Fw @ Fw + lam1 * np.abs(w).sum())


@dataclass(frozen=True)
class Breakpoint:
    lambda1: float
    coef: np.ndarray
    fit_error: float

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.coef)


@dataclass
class LarsPath:
    breakpoints: list[Breakpoint] = field(default_factory=list)

    def __len__(self):
        return len(self.breakpoints)

    def __iter__(self):
        return iter(self.breakpoints)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([b.lambda1 for b in self.breakpoints])

    def coef_at(self, lambda1: float) -> np.ndarray:
        """Exact lasso solution at ``lambda1`` by interpolating the path."""
        bps = self.breakpoints
        if lambda1 >= bps[0].lambda1:
            return np.zeros_like(bps[0].coef)
        for a, b in zip(bps, bps[1:]):
            if a.lambda1 >= lambda1 >= b.lambda1:
                span = a.lambda1 - b.lambda1
                if span <= 0:
                    return b.coef.copy()
                t = (a.lambda1 - lambda1) / span
                return (1 - t) * a.coef + t * b.coef
        # below the end of a truncated path
        return bps[-1].coef.copy()


@dataclass(frozen=True)
class Lambda1Rule:
    """How a single penalty value is picked off the path.

    ``kind`` is one of ``"fixed"``, ``"best-fit-error"`` or ``"min-slowness"``.
    For ``min-slowness`` the path is walked from the sparse end and the last
    breakpoint that makes the feature slower than every earlier one by more
    than the fraction ``tol`` is kept. Later entries that buy less than that
    are treated as noise. ``tol = 0`` gives the slowest breakpoint.
    """

    kind: str = "min-slowness"
    value: float = 0.0
    tol: float = 0.05

    def __post_init__(self):
        if self.kind not in ("fixed", "best-fit-error", "min-slowness"):
            raise ValueError(f"unknown lambda1 rule {self.kind!r}")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")

    @classmethod
    def parse(cls, text: str) -> "Lambda1Rule":
        text = text.strip()
        if text.startswith("fixed(") and text.endswith(")"):
            return cls("fixed", float(text[6:-1]))
        if text.startswith("min-slowness(") and text.endswith(")"):
            return cls("min-slowness", tol=float(text[13:-1]))
        return cls(text)

    def __str__(self):
        if self.kind == "fixed":
            return f"fixed({self.value!r})"
        if self.kind == "min-slowness":
            return f"min-slowness({self.tol!r})"
        return self.kind


def augment(problem: ElasticNetProblem) -> tuple[np.ndarray, np.ndarray, float]:
    """Build the lasso data set equivalent to ``problem``.

    Returns ``(design_hat, target_hat, scale)`` where the original loading is
    recovered as ``w = w_hat / scale`` and penalties map as
    ``lambda1_hat = lambda1 / scale``.
    """
    lam = float(problem.lam)
    scale = math.sqrt(1.0 + lam)
    X = np.asarray(problem.design, float)
    J = X.shape[1]
    F = np.asarray(problem.omega_dot_factor, float)
    # F F' = OmegaDot, so the penalty w' OmegaDot w is |F' w|^2
    design_hat = np.vstack([X, math.sqrt(lam) * F.T]) / scale
    target_hat = np.concatenate([np.asarray(problem.target, float), np.zeros(J)])
    return design_hat, target_hat, scale


def lars_en_path(design: np.ndarray, target: np.ndarray, max_active: int | None = None,
                 eps: float = 1e-12) -> LarsPath:
    """Piecewise-linear lasso path with variable entry and drop events.

    Breakpoints are ordered by strictly decreasing ``lambda1``. The path ends
    when ``lambda1`` reaches zero, or at the entry event that would exceed
    ``max_active`` variables.
    """
    X = np.asarray(design, float)
    y = np.asarray(target, float)
    n, J = X.shape
    if not np.any(X):
        raise NumericalError("design matrix is all zeros")
    rank_cap = min(J, n)
    max_active = J if max_active is None else max(1, min(int(max_active), J))

    beta = np.zeros(J)
    c = X.T @ y
    C = float(np.max(np.abs(c)))
    scale = max(C, 1.0)
    path = LarsPath()

    def record(C_now):
        r = y - X @ beta
        path.breakpoints.append(Breakpoint(2.0 * max(C_now, 0.0), beta.copy(), float(r @ r)))

    if C <= eps * max(1.0, float(np.abs(y).max(initial=0.0))):
        record(0.0)
        return path

    active: list[int] = []
    just_dropped: int | None = None
    record(C)
    while True:
        # ties: everything already at the active correlation level enters now
        if len(active) < min(rank_cap, max_active):
            inactive = [j for j in range(J) if j not in active and j != just_dropped]
            for j in inactive:
                if abs(c[j]) >= C - 1e-10 * scale and len(active) < min(rank_cap, max_active):
                    active.append(j)
        if not active:
            break
        A = np.array(active)
        s = np.sign(c[A])
        XA = X[:, A]
        G = XA.T @ XA
        if np.linalg.cond(G) > _COND_MAX:
            raise NumericalError("active-set Gram matrix is singular")
        d = np.linalg.solve(G, s)
        a = X.T @ (XA @ d)

        gamma, event, who = C, "end", -1
        if len(active) < rank_cap:
            for j in range(J):
                if j in active:
                    continue
                # a variable dropped at this breakpoint must not re-enter at once
                floor = 1e-9 * C if j == just_dropped else eps
                for num, den in ((C - c[j], 1.0 - a[j]), (C + c[j], 1.0 + a[j])):
                    if den > eps:
                        g = num / den
                        if floor < g < gamma:
                            gamma, event, who = g, "enter", j
        for k, j in enumerate(active):
            if d[k] != 0.0:
                g = -beta[j] / d[k]
                if eps < g < gamma:
                    gamma, event, who = g, "drop", j

        if event == "enter" and len(active) >= max_active:
            # stepping to the entry point keeps KKT valid; then stop
            beta[A] += gamma * d
            _refresh_zero(beta, active)
            c = X.T @ (y - X @ beta)
            C = float(np.mean(np.abs(c[A])))
            record(C)
            break

        beta[A] += gamma * d
        just_dropped = None
        if event == "drop":
            beta[who] = 0.0
            active.remove(who)
            just_dropped = who
        c = X.T @ (y - X @ beta)
        if event == "end":
            record(0.0)
            break
        C = float(np.mean(np.abs(c[np.array(active)]))) if active else C - gamma
        if event == "enter":
            active.append(who)
        record(C)
        if C <= eps * scale:
            break
    return path


def _refresh_zero(beta, active):
    for j in range(beta.shape[0]):
        if j not in active:
            beta[j] = 0.0


def feature_slowness(Xs: np.ndarray, Xdot: np.ndarray, w: np.ndarray) -> float:
    """Slowness ``ṡ'ṡ / s's`` of the centred feature ``X w``."""
    s = Xs @ w
    s = s - s.mean()
    den = float(s @ s)
    if den <= 0:
        return math.inf
    sd = Xdot @ w
    return float(sd @ sd) / den


def select_breakpoint(path: LarsPath, rule: Lambda1Rule, problem: ElasticNetProblem,
                      scale: float, max_active: int | None = None) -> int:
    """Index of the breakpoint chosen by ``rule`` (non-fixed rules only)."""
    cap = np.inf if max_active is None else max_active
    cands = [i for i, b in enumerate(path) if 0 < b.support.size <= cap]
    if not cands:
        return len(path) - 1
    if rule.kind == "best-fit-error":
        return min(cands, key=lambda i: (path.breakpoints[i].fit_error, i))
    if rule.kind == "min-slowness":
        if problem.design_dot is None:
            raise ValueError("min-slowness rule needs design_dot")
        best, pick = math.inf, cands[0]
        for i in cands:
            v = feature_slowness(problem.design, problem.design_dot,
                                 path.breakpoints[i].coef / scale)
            if v < best * (1.0 - rule.tol):
                pick = i
            best = min(best, v)
        return pick
    raise ValueError(f"rule {rule.kind!r} does not select a breakpoint")


def solve_gen_elastic_net(problem: ElasticNetProblem, rule: Lambda1Rule,
                          max_active: int | None = None,
                          path: LarsPath | None = None) -> tuple[np.ndarray, float]:
    """Solve one generalized elastic net; returns ``(w, lambda1_used)``.

    ``lambda1_used`` is expressed for the original (un-augmented) objective.
    """
    design_hat, target_hat, scale = augment(problem)
    if path is None:
        path = lars_en_path(design_hat, target_hat, max_active=max_active)
    if rule.kind == "fixed":
        if math.isinf(rule.value):
            return np.zeros(design_hat.shape[1]), math.inf
        w_hat = path.coef_at(rule.value / scale)
        return w_hat / scale, float(rule.value)
    i = select_breakpoint(path, rule, problem, scale, max_active)
    bp = path.breakpoints[i]
    return bp.coef / scale, bp.lambda1 * scale


def kkt_violation(design: np.ndarray, target: np.ndarray, bp: Breakpoint) -> float:
    """Largest violation of the lasso optimality conditions at a breakpoint."""
    c = design.T @ (target - design @ bp.coef)
    half = bp.lambda1 / 2.0
    on = bp.coef != 0
    viol = 0.0
    if on.any():
        viol = float(np.max(np.abs(c[on] - half * np.sign(bp.coef[on]))))
    if (~on).any():
        viol = max(viol, float(np.max(np.abs(c[~on]) - half)))
    return max(viol, 0.0)
