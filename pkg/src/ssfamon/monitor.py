"""Two-level model building, online monitoring and the verdict policy."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data import RawDataset, Standardizer, fit_standardizer, standardize
from .errors import DataError
from .ksfa import (KsfaConfig, KsfaModel, batch_statistics_super, build_super_samples,
                   fit_ksfa, out_of_fold_statistics, statistics_super)
from .limits import ControlLimit, evaluate, kde_limit
from .partition import SubsetPartition, partition_variables
from .sfa import SfaModel, batch_statistics, fit_sfa, project, statistics
from .ssfa import SsfaConfig

MODEL_VERSION = "1"
STATS = ("T2s", "T2f", "D2s", "D2f")
STATUSES = ("normal", "condition-change", "fault", "transient")


@dataclass(frozen=True)
class TwoLevelModel:
    names: tuple[str, ...]
    standardizer: Standardizer
    partition: SubsetPartition
    subset_models: list[SfaModel]
    subset_limits: list[dict[str, ControlLimit]]
    global_model: KsfaModel
    global_limits: dict[str, ControlLimit]
    config: RunConfig
    training_alarm_rates: dict[str, float] = field(default_factory=dict)

    @property
    def n_subsets(self) -> int:
        return len(self.subset_models)

    def level_names(self) -> list[str]:
        return [str(k + 1) for k in range(self.n_subsets)] + ["g"]

    def limits_by_name(self) -> dict[str, ControlLimit]:
        out = {}
        for tag, lims in zip(self.level_names(), self.subset_limits + [self.global_limits]):
            for s in STATS:
                out[f"{s}_{tag}"] = lims[s]
        return out

    def to_dict(self) -> dict:
        def lims(d):
            return {k: v.to_dict() for k, v in d.items()}
        return {
            "version": MODEL_VERSION,
            "standardizer": {**self.standardizer.to_dict(), "names": list(self.names)},
            "partition": self.partition.to_dict(list(self.names)),
            "subsets": [m.to_dict() for m in self.subset_models],
            "global": self.global_model.to_dict(),
            "limits": {"subsets": [lims(d) for d in self.subset_limits],
                       "global": lims(self.global_limits),
                       "trainingAlarmRates": self.training_alarm_rates},
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TwoLevelModel":
        if d.get("version") != MODEL_VERSION:
            raise DataError(f"unsupported model version {d.get('version')!r}")
        try:
            def lims(x):
                return {k: ControlLimit.from_dict(v) for k, v in x.items()}
            std = dict(d["standardizer"])
            names = tuple(std.pop("names"))
            return cls(names, Standardizer.from_dict(std),
                       SubsetPartition.from_dict(d["partition"]),
                       [SfaModel.from_dict(m) for m in d["subsets"]],
                       [lims(x) for x in d["limits"]["subsets"]],
                       KsfaModel.from_dict(d["global"]), lims(d["limits"]["global"]),
                       RunConfig.from_dict(d["config"]),
                       dict(d["limits"].get("trainingAlarmRates", {})))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed model document: {exc}") from exc


def save_model(model: TwoLevelModel, path) -> None:
    # json writes floats with repr, which round-trips exactly
    Path(path).write_text(json.dumps(model.to_dict()) + "\n", encoding="utf-8")


def load_model(path) -> TwoLevelModel:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read model {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{p}: not valid JSON: {exc}") from exc
    return TwoLevelModel.from_dict(doc)


def build_model(train: RawDataset, cfg: RunConfig | None = None) -> TwoLevelModel:
    """Standardize, partition, fit per-subset SFA and global kernel SFA, set limits."""
    cfg = cfg or RunConfig()
    N, J = train.values.shape
    if N <= J:
        raise DataError(f"training data needs more samples than variables ({N} <= {J})")
    std = fit_standardizer(train)
    X = standardize(train, std)
    ssfa_cfg = SsfaConfig(lam=cfg.lam, lambda1_rule=cfg.rule, max_iter=cfg.max_iter,
                          tol=cfg.tol, max_support=cfg.max_support)
    part = partition_variables(X, ssfa_cfg, cfg.alpha)
    models = [fit_sfa(X.columns(list(idx))) for idx in part.sdl]
    Z = build_super_samples(part, models, X.X)
    gmodel = fit_ksfa(Z, KsfaConfig(gamma=cfg.kernel_gamma, energy=cfg.kernel_energy))
    fold_cfg = KsfaConfig(gamma=gmodel.gamma, energy=cfg.kernel_energy)

    batches = [batch_statistics(m, X.columns(list(idx))) for m, idx in zip(models, part.sdl)]
    fitted = batches + [batch_statistics_super(gmodel, Z)]
    # kernel statistics are optimistic in-sample; global limits use held-out folds
    batches.append(out_of_fold_statistics(Z, fold_cfg))
    tags = [str(k + 1) for k in range(len(models))] + ["g"]
    sub_limits, rates = [], {}
    for tag, stats, own in zip(tags, batches, fitted):
        lims = {s: kde_limit(stats[s], cfg.limit_alpha) for s in STATS}
        for s in STATS:
            rates[f"{s}_{tag}"] = float(np.mean(own[s] > lims[s].value))
        sub_limits.append(lims)
    global_limits = sub_limits.pop()
    return TwoLevelModel(train.names, std, part, models, sub_limits, gmodel, global_limits,
                         cfg, rates)


# ---------------------------------------------------------------- policy

def _alarming(flags, w: int) -> bool:
    recent = flags[-w:]
    return sum(1 for f in recent if f) >= math.ceil(w / 2)


def status_from(t_alarming: bool, d_alarming: bool, d_cleared: bool) -> str:
    if t_alarming and d_alarming:
        return "fault"
    if t_alarming and d_cleared:
        return "condition-change"
    if t_alarming:
        return "transient"
    return "normal"


@dataclass
class PolicyState:
    """Incremental form of :func:`classify_status` for one level."""

    w: int
    q: int
    t_flags: list = field(default_factory=list)
    d_flags: list = field(default_factory=list)
    seen_d_alarming: bool = False
    quiet: int = 0  # consecutive samples without D-alarming

    def push(self, t_flag, d_flag) -> str:
        self.t_flags = (self.t_flags + [bool(t_flag)])[-self.w:]
        self.d_flags = (self.d_flags + [bool(d_flag)])[-self.w:]
        t_al = _alarming(self.t_flags, self.w)
        d_al = _alarming(self.d_flags, self.w)
        if d_al:
            self.seen_d_alarming = True
            self.quiet = 0
        else:
            self.quiet += 1
        cleared = self.seen_d_alarming and not d_al and self.quiet >= self.q
        return status_from(t_al, d_al, cleared)


def classify_status(t_flags, d_flags, w: int = 10, q: int = 20) -> str:
    """Status at the last index of two flag series (``None`` counts as no alarm).

    T-alarming and D-alarming mean at least ``ceil(w/2)`` alarms among the
    last ``w`` flags of the group. D-cleared means D-alarming has been off
    for the last ``q`` samples after having been on at some earlier sample.
    """
    if w < 1 or q < 1:
        raise ValueError("windows must be at least 1")
    if len(t_flags) != len(d_flags):
        raise ValueError("flag series must have equal length")
    state = PolicyState(w, q)
    status = "normal"
    for t, d in zip(t_flags, d_flags):
        status = state.push(t, d)
    return status


# ---------------------------------------------------------------- online

@dataclass(frozen=True)
class LevelResult:
    stats: dict[str, float | None]
    alarms: dict[str, bool | None]

    @property
    def t_alarm(self) -> bool:
        return bool(self.alarms["T2s"]) or bool(self.alarms["T2f"])

    @property
    def d_alarm(self) -> bool | None:
        if self.alarms["D2s"] is None and self.alarms["D2f"] is None:
            return None
        return bool(self.alarms["D2s"]) or bool(self.alarms["D2f"])


@dataclass(frozen=True)
class SampleVerdict:
    index: int
    per_subset: list[LevelResult]
    global_: LevelResult
    local_status: list[str]
    global_status: str
    local_context: str


@dataclass
class MonitorState:
    prev_x: np.ndarray | None = None
    prev_sp: np.ndarray | None = None
    policies: list[PolicyState] = field(default_factory=list)
    index: int = 0


def new_state(model: TwoLevelModel, policy_window: int | None = None,
              clear_window: int | None = None) -> MonitorState:
    w = model.config.policy_window if policy_window is None else int(policy_window)
    q = model.config.clear_window if clear_window is None else int(clear_window)
    if w < 1 or q < 1:
        raise ValueError("windows must be at least 1")
    return MonitorState(policies=[PolicyState(w, q) for _ in range(model.n_subsets + 1)])


def _level(stats, limits) -> LevelResult:
    d = dict(zip(STATS, stats))
    return LevelResult(d, {s: evaluate(d[s], limits[s]) for s in STATS})


def monitor_sample(model: TwoLevelModel, x, state: MonitorState
                   ) -> tuple[SampleVerdict, MonitorState]:
    x = np.asarray(x, float)
    if x.shape != (len(model.names),):
        raise DataError(f"sample has {x.size} values, model expects {len(model.names)}")
    z = (x - model.standardizer.mean) / model.standardizer.std
    subsets = []
    for idx, m, lims in zip(model.partition.sdl, model.subset_models, model.subset_limits):
        prev = None if state.prev_x is None else state.prev_x[list(idx)]
        sysf, resf = project(m, z[list(idx)], prev)
        subsets.append(_level(statistics(m, sysf, resf), lims))
    sp = build_super_samples(model.partition, model.subset_models, z[None, :])[0]
    glob = _level(statistics_super(model.global_model, sp, state.prev_sp), model.global_limits)

    levels = subsets + [glob]
    statuses = [pol.push(lv.t_alarm, lv.d_alarm) for pol, lv in zip(state.policies, levels)]
    local = statuses[:-1]
    context = "local-affected" if any(s != "normal" for s in local) else "local-unaffected"
    verdict = SampleVerdict(state.index, subsets, glob, local, statuses[-1], context)
    state.prev_x, state.prev_sp = z, sp
    state.index += 1
    return verdict, state


@dataclass
class MonitorReport:
    verdicts: list[SampleVerdict]
    stat_names: list[str]
    summary: dict
    policy_window: int = 10
    clear_window: int = 20

    def __len__(self):
        return len(self.verdicts)


def _summarize(model: TwoLevelModel, verdicts: list[SampleVerdict]) -> dict:
    rates, first = {}, {}
    for tag, k in zip(model.level_names(), range(model.n_subsets + 1)):
        for s in STATS:
            flags = [(v.per_subset[k] if k < model.n_subsets else v.global_).alarms[s]
                     for v in verdicts]
            seen = [f for f in flags if f is not None]
            rates[f"{s}_{tag}"] = float(np.mean(seen)) if seen else 0.0
            hit = next((i for i, f in enumerate(flags) if f), None)
            first[f"{s}_{tag}"] = None if hit is None else verdicts[hit].index
    last = verdicts[-1] if verdicts else None
    return {
        "samples": len(verdicts),
        "alarmRates": rates,
        "firstAlarm": first,
        "finalLocalStatus": list(last.local_status) if last else [],
        "finalGlobalStatus": last.global_status if last else None,
        "finalLocalContext": last.local_context if last else None,
    }


def run_monitoring(model: TwoLevelModel, test: RawDataset, policy_window: int | None = None,
                   clear_window: int | None = None) -> MonitorReport:
    """Monitor every row of ``test`` in order; windows default to the model config."""
    if tuple(test.names) != tuple(model.names):
        if len(test.names) != len(model.names):
            raise DataError(f"test data has {len(test.names)} variables, "
                            f"model expects {len(model.names)}")
        raise DataError("test variable names differ from the training names")
    state = new_state(model, policy_window, clear_window)
    verdicts = []
    for row in test.values:
        v, state = monitor_sample(model, row, state)
        verdicts.append(v)
    w, q = state.policies[0].w, state.policies[0].q
    return MonitorReport(verdicts, list(model.limits_by_name()), _summarize(model, verdicts),
                         w, q)


# ---------------------------------------------------------------- report file

def report_columns(n_subsets: int) -> list[str]:
    cols = ["index"]
    for tag in [str(k + 1) for k in range(n_subsets)] + ["g"]:
        cols += [f"{s}_{tag}" for s in STATS] + [f"a_T_{tag}", f"a_D_{tag}"]
    cols += [f"localStatus_{k + 1}" for k in range(n_subsets)]
    cols += ["globalStatus", "localContext"]
    return cols


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report(report: MonitorReport, model: TwoLevelModel, path) -> Path:
    """Write the report CSV and a JSON sidecar with limits and the summary."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(report_columns(model.n_subsets))
        for v in report.verdicts:
            row = [v.index]
            for lv in v.per_subset + [v.global_]:
                row += [lv.stats[s] for s in STATS] + [lv.t_alarm, lv.d_alarm]
            row += v.local_status + [v.global_status, v.local_context]
            w.writerow([_cell(c) for c in row])
    side = {
        "nSubsets": model.n_subsets,
        "policyWindow": report.policy_window,
        "clearWindow": report.clear_window,
        "limits": {k: lim.to_dict() for k, lim in model.limits_by_name().items()},
        "summary": report.summary,
    }
    sidecar_path(path).write_text(json.dumps(side, indent=2) + "\n", encoding="utf-8")
    return path


def sidecar_path(report_path) -> Path:
    p = Path(report_path)
    return p.with_name(p.stem + ".meta.json")


@dataclass(frozen=True)
class ReportTable:
    columns: list[str]
    rows: list[dict[str, str]]
    meta: dict

    @property
    def n_subsets(self) -> int:
        return int(self.meta["nSubsets"])

    def flags(self, name: str) -> list[bool | None]:
        return [None if r[name] == "" else r[name] == "1" for r in self.rows]

    def values(self, name: str) -> list[float | None]:
        return [None if r[name] == "" else float(r[name]) for r in self.rows]


def read_report(path) -> ReportTable:
    """Load a report CSV and its sidecar; ``DataError`` on anything malformed."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
            columns = list(reader.fieldnames or [])
        meta = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read report {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"report sidecar is not valid JSON: {exc}") from exc
    if not columns or not rows:
        raise DataError(f"{path} holds no monitored samples")
    try:
        expected = report_columns(int(meta["nSubsets"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"report sidecar is malformed: {exc}") from exc
    if columns != expected:
        raise DataError(f"{path}: unexpected report columns")
    return ReportTable(columns, rows, meta)


def replay_statuses(table: ReportTable) -> tuple[list[list[str]], list[str]]:
    """Recompute per-sample local and global statuses from the alarm flags alone."""
    w, q = int(table.meta["policyWindow"]), int(table.meta["clearWindow"])
    tags = [str(k + 1) for k in range(table.n_subsets)] + ["g"]
    series = []
    for tag in tags:
        pol = PolicyState(w, q)
        series.append([pol.push(t, d) for t, d in
                       zip(table.flags(f"a_T_{tag}"), table.flags(f"a_D_{tag}"))])
    local = [list(col) for col in zip(*series[:-1])] if table.n_subsets else \
        [[] for _ in table.rows]
    return local, series[-1]
