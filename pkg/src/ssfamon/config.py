"""Run configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import DataError
from .larsen import Lambda1Rule

# file keys, in the order they are written
KEYS = ("lambda", "lambda1Rule", "maxSupport", "alpha", "limitAlpha", "kernelGamma",
        "kernelEnergy", "policyWindow", "clearWindow", "maxIter", "tol", "seed")


@dataclass(frozen=True)
class RunConfig:
    lam: float = 1.5
    lambda1_rule: str = "min-slowness(0.05)"
    max_support: int | None = None
    alpha: float = 0.05          # significance of the signed-rank test
    limit_alpha: float = 0.95    # confidence level of the control limits
    kernel_gamma: float | None = None  # None: median heuristic
    kernel_energy: float = 0.95  # kernel PCA energy kept before kernel SFA
    policy_window: int = 10
    clear_window: int = 20
    max_iter: int = 200
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        Lambda1Rule.parse(self.lambda1_rule)
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.max_support is not None and self.max_support < 1:
            raise ValueError("maxSupport must be at least 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.5 < self.limit_alpha < 1:
            raise ValueError("limitAlpha must lie in (0.5, 1)")
        if self.kernel_gamma is not None and not self.kernel_gamma > 0:
            raise ValueError("kernelGamma must be positive or 'median'")
        if not 0 < self.kernel_energy <= 1:
            raise ValueError("kernelEnergy must lie in (0, 1]")
        if self.policy_window < 1 or self.clear_window < 1:
            raise ValueError("policyWindow and clearWindow must be at least 1")
        if self.max_iter < 1 or not self.tol > 0:
            raise ValueError("maxIter must be >= 1 and tol > 0")

    @property
    def rule(self) -> Lambda1Rule:
        return Lambda1Rule.parse(self.lambda1_rule)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: d[f.name] for k, f in zip(KEYS, fields(self))}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(KEYS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        names = {k: f.name for k, f in zip(KEYS, fields(cls))}
        return cls(**{names[k]: v for k, v in d.items()})

    def to_text(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            if v is None:
                v = "median" if k == "kernelGamma" else "none"
            lines.append(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")
        return "\n".join(lines) + "\n"


_INT = {"maxSupport", "policyWindow", "clearWindow", "maxIter", "seed"}
_FLOAT = {"lambda", "alpha", "limitAlpha", "kernelEnergy", "tol"}


def _coerce(key: str, raw: str):
    if key == "lambda1Rule":
        return raw
    if key == "kernelGamma":
        return None if raw == "median" else float(raw)
    if key == "maxSupport" and raw.lower() == "none":
        return None
    if key in _INT:
        return int(raw)
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError(f"{key} must be finite")
    return value


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Raises ``ValueError`` for unknown keys, duplicates or bad values.
    """
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            raise ValueError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in values:
            raise ValueError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _coerce(key, raw)
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return RunConfig.from_dict(values)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read config {p}: {exc}") from exc
    return parse_config(text, str(p))
