"""Synthetic closed-loop process data with known ground truth.

Each block is a first-order plant ``y(n+1) = a y(n) + b (u(n) + d(n))``
under a discrete PI controller with actuator limits. ``d`` is a slowly
varying unmeasured load. Independent white-noise variables are appended.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import RawDataset, write_csv

SCENARIOS = ("normal", "setpoint", "fault")

PLANT_POLE = 0.9
PLANT_GAIN = 0.5
KP = 0.8
KI = 0.1
U_MAX = 2.0
MEAS_SIGMA = 0.05

# one load time constant per block, cycled; distinct so blocks stay separable
LOAD_PHIS = (0.85, 0.7)
LOAD_SD = 0.15  # stationary load standard deviation
SETPOINT_STEP = 5.0
FAULT_LOAD = 3.0
FAULT_SWING = 1.5
FAULT_PERIOD = 40
WARMUP = 200


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "normal"
    samples: int = 1000
    seed: int = 0
    blocks: int = 2
    noise_vars: int = 4
    change_at: int | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.samples < 200:
            raise ValueError("samples must be at least 200")
        if self.blocks < 1 or self.noise_vars < 0:
            raise ValueError("need at least one block and a nonnegative noise count")
        if not 0 <= self.onset < self.samples:
            raise ValueError("change_at must lie inside the record")

    @property
    def onset(self) -> int:
        return self.samples // 4 if self.change_at is None else self.change_at


@dataclass(frozen=True)
class GroundTruth:
    scenario: str
    change_at: int
    affected_block: str | None
    block_variable_map: dict[str, list[str]]

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps({"scenario": d["scenario"], "changeAt": d["change_at"],
                           "affectedBlock": d["affected_block"],
                           "blockVariableMap": d["block_variable_map"]}, indent=2)


def _pi_block(n_total, rng, setpoint, extra_load, load_phi):
    y = 0.0
    integ = 0.0
    d = 0.0
    out = np.empty((n_total, 4))
    sigma = LOAD_SD * np.sqrt(1.0 - load_phi ** 2)
    for n in range(n_total):
        d = load_phi * d + sigma * rng.standard_normal()
        y_meas = y + MEAS_SIGMA * rng.standard_normal()  # sensor seen by the controller
        y_out = y + MEAS_SIGMA * rng.standard_normal()   # independent logged sensor
        e = setpoint[n] - y_meas
        u_raw = KP * e + integ + KI * e
        u = min(max(u_raw, -U_MAX), U_MAX)
        if u == u_raw:
            integ += KI * e  # conditional integration stops windup
        load = d + extra_load[n]
        aux = 0.6 * y + 1.5 * u + MEAS_SIGMA * rng.standard_normal()
        out[n] = (e, y_out, u + MEAS_SIGMA * rng.standard_normal(), aux)
        y = PLANT_POLE * y + PLANT_GAIN * (u + load)
    return out


def simulate(cfg: ScenarioConfig) -> tuple[RawDataset, GroundTruth]:
    rng = np.random.default_rng(cfg.seed)
    n_total = cfg.samples + WARMUP
    onset = WARMUP + cfg.onset
    cols, names, bmap = [], [], {}
    for b in range(cfg.blocks):
        sp = np.zeros(n_total)
        load = np.zeros(n_total)
        if b == 0 and cfg.scenario == "setpoint":
            sp[onset:] = SETPOINT_STEP
        if b == 0 and cfg.scenario == "fault":
            k = np.arange(n_total - onset)
            load[onset:] = FAULT_LOAD + FAULT_SWING * np.sin(2 * np.pi * k / FAULT_PERIOD)
        cols.append(_pi_block(n_total, rng, sp, load, LOAD_PHIS[b % len(LOAD_PHIS)]))
        tag = f"b{b + 1}"
        bnames = [f"{tag}_err", f"{tag}_out", f"{tag}_ctl", f"{tag}_aux"]
        names += bnames
        bmap[f"block{b + 1}"] = bnames
    if cfg.noise_vars:
        cols.append(rng.standard_normal((n_total, cfg.noise_vars)))
        nn = [f"noise{i + 1}" for i in range(cfg.noise_vars)]
        names += nn
        bmap["noise"] = nn
    values = np.hstack(cols)[WARMUP:]
    affected = None if cfg.scenario == "normal" else "block1"
    return RawDataset(tuple(names), values), GroundTruth(cfg.scenario, cfg.onset, affected, bmap)


def write_scenario(cfg: ScenarioConfig, out) -> Path:
    """Write the CSV and its ground-truth sidecar; returns the sidecar path."""
    data, truth = simulate(cfg)
    out = Path(out)
    write_csv(out, data)
    sidecar = truth_path(out)
    sidecar.write_text(truth.to_json() + "\n", encoding="utf-8")
    return sidecar


def truth_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".truth.json")


def planted_blocks(samples: int = 1000, block_sizes=(3, 3), noise_vars: int = 4,
                   seed: int = 0, phis=(0.9, 0.8), noise_sigma: float = 0.5) -> RawDataset:
    """Independent blocks of variables sharing one smooth driver each, plus noise.

    Block ``k`` follows a unit-variance AR(1) driver with coefficient
    ``phis[k]``; every variable is ``±driver`` plus white noise of size
    ``noise_sigma``. Columns are ordered block by block, noise last.
    """
    rng = np.random.default_rng(seed)
    n_total = samples + WARMUP
    cols = []
    for size, phi in zip(block_sizes, phis):
        z = np.zeros(n_total)
        e = rng.standard_normal(n_total) * np.sqrt(1 - phi ** 2)
        for n in range(1, n_total):
            z[n] = phi * z[n - 1] + e[n]
        gains = rng.choice([-1.0, 1.0], size)
        cols.append(z[:, None] * gains + noise_sigma * rng.standard_normal((n_total, size)))
    cols.append(rng.standard_normal((n_total, noise_vars)))
    values = np.hstack(cols)[WARMUP:]
    names = [f"x{i + 1}" for i in range(values.shape[1])]
    return RawDataset(tuple(names), values)
