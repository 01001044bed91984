"""Control limits from a Gaussian kernel density estimate of training statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DataError

MIN_SAMPLES = 30


@dataclass(frozen=True)
class ControlLimit:
    value: float
    alpha: float
    bandwidth: float  # 0 when the empirical quantile was used

    def to_dict(self) -> dict:
        return {"value": self.value, "alpha": self.alpha, "bandwidth": self.bandwidth}

    @classmethod
    def from_dict(cls, d: dict) -> "ControlLimit":
        return cls(float(d["value"]), float(d["alpha"]), float(d["bandwidth"]))


def silverman_bandwidth(x: np.ndarray) -> float:
    return 1.06 * float(np.std(x, ddof=1)) * x.size ** (-0.2)


def kde_cdf(c: float, x: np.ndarray, h: float) -> float:
    return float(np.mean(ndtr((c - x) / h)))


def kde_limit(samples, alpha: float = 0.95) -> ControlLimit:
    """Smallest ``c`` with KDE ``CDF(c) >= alpha``.

    Samples with (near) zero spread fall back to the empirical quantile and
    report ``bandwidth = 0``.
    """
    if not 0.5 < alpha < 1.0:
        raise ValueError("alpha must lie in (0.5, 1)")
    x = np.asarray(samples, float).ravel()
    if x.size < MIN_SAMPLES:
        raise DataError(f"need at least {MIN_SAMPLES} samples for a control limit, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DataError("control-limit samples must be finite")
    scale = max(1.0, float(np.max(np.abs(x))))
    sd = float(np.std(x, ddof=1))
    if sd <= 1e-12 * scale:
        return ControlLimit(float(np.quantile(x, alpha, method="inverted_cdf")), alpha, 0.0)
    h = silverman_bandwidth(x)
    lo, hi = float(x.min()) - 3 * h, float(x.max()) + 3 * h
    # the CDF at hi is at least Phi(3) > 0.998; extend for alpha beyond that
    while kde_cdf(hi, x, h) < alpha:
        hi += 3 * h
    tol = 1e-6 * max(hi - lo, np.finfo(float).tiny)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if kde_cdf(mid, x, h) >= alpha:
            hi = mid
        else:
            lo = mid
    return ControlLimit(hi, alpha, h)


def evaluate(stat: float | None, limit: ControlLimit) -> bool | None:
    if stat is None or (isinstance(stat, float) and math.isnan(stat)):
        return None
    return bool(stat > limit.value)
