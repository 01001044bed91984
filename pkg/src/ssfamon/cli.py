"""Command-line entry point: ``ssfamon {fit,monitor,simulate,report,partition}``.

Exit codes: 0 success, 1 usage, 2 data error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .data import fit_standardizer, load_csv, standardize
from .errors import DataError, NumericalError
from .monitor import (STATS, build_model, load_model, read_report, run_monitoring, save_model,
                      write_report)
from .partition import partition_variables
from .simgen import SCENARIOS, ScenarioConfig, write_scenario
from .ssfa import SsfaConfig

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

# what an alarm on each statistic indicates, per level
MEANING = {
    "T2s": ("static deviation of the subset's system variations",
            "plant-wide static deviation of the nonlinear system variations"),
    "T2f": ("static deviation of the subset's residual correlations",
            "plant-wide deviation of the nonlinear residual correlations"),
    "D2s": ("abnormal control action in the subset's system dynamics",
            "abnormal overall control action in the system dynamics"),
    "D2f": ("abnormal control action in the subset's residual dynamics",
            "abnormal overall control action in the residual dynamics"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        return load_config(path)
    except DataError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_fit(args) -> int:
    cfg = _config(args.config)
    train = load_csv(args.train)
    model = build_model(train, cfg)
    save_model(model, args.model_out)
    names = model.names
    for k, idx in enumerate(model.partition.sdl, 1):
        print(f"subset {k}: {', '.join(names[i] for i in idx)}")
    print(f"sdnl: {', '.join(names[i] for i in model.partition.sdnl) or '-'}")
    print("training alarm rates:")
    for key, rate in model.training_alarm_rates.items():
        print(f"  {key}: {rate:.4f}")
    return EXIT_OK


def cmd_monitor(args) -> int:
    model = load_model(args.model)
    test = load_csv(args.test)
    report = run_monitoring(model, test, args.policy_window, args.clear_window)
    write_report(report, model, args.out)
    for k, status in enumerate(report.summary["finalLocalStatus"], 1):
        print(f"local {k}: {status}")
    print(f"global: {report.summary['finalGlobalStatus']}")
    print(f"context: {report.summary['finalLocalContext']}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        cfg = ScenarioConfig(args.scenario, args.samples, args.seed, args.blocks,
                             args.noise_vars, args.change_at)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    sidecar = write_scenario(cfg, args.out)
    print(f"wrote {args.out} and {sidecar}")
    return EXIT_OK


def cmd_report(args) -> int:
    table = read_report(args.monitor)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    limits = table.meta["limits"]
    tags = [str(k + 1) for k in range(table.n_subsets)] + ["g"]
    index = [r["index"] for r in table.rows]
    for tag in tags:
        for s in STATS:
            name = f"{s}_{tag}"
            lim = float(limits[name]["value"])
            with (out / f"{name}.csv").open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["index", "value", "limit", "alarm"])
                for i, v in zip(index, table.values(name)):
                    w.writerow([i, "" if v is None else repr(v), repr(lim),
                                "" if v is None else int(v > lim)])

    last = table.rows[-1]
    first = table.meta.get("summary", {}).get("firstAlarm", {})
    lines = [f"samples: {len(table.rows)}"]
    for tag in tags:
        level = 1 if tag == "g" else 0
        lines.append("global level:" if tag == "g" else f"subset {tag}:")
        for s in STATS:
            hit = first.get(f"{s}_{tag}")
            where = "never" if hit is None else f"first alarm at {hit}"
            lines.append(f"  {s}: {where} ({MEANING[s][level]})")
        key = "globalStatus" if tag == "g" else f"localStatus_{tag}"
        lines.append(f"  final status: {last[key]}")
    lines.append(f"context: {last['localContext']}")
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_partition(args) -> int:
    cfg = _config(args.config)
    data = load_csv(args.data)
    X = standardize(data, fit_standardizer(data))
    part = partition_variables(X, SsfaConfig(lam=cfg.lam, lambda1_rule=cfg.rule,
                                             max_iter=cfg.max_iter, tol=cfg.tol,
                                             max_support=cfg.max_support), cfg.alpha)
    print(json.dumps(part.to_dict(list(data.names)), indent=2))
    return EXIT_OK


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ssfamon", description="Distributed slow-feature process monitoring.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="build a two-level model from normal training data")
    f.add_argument("--train", required=True)
    f.add_argument("--config")
    f.add_argument("--model-out", required=True)
    f.set_defaults(func=cmd_fit)

    m = sub.add_parser("monitor", help="monitor a test record and write a report CSV")
    m.add_argument("--model", required=True)
    m.add_argument("--test", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--policy-window", type=_positive)
    m.add_argument("--clear-window", type=_positive)
    m.set_defaults(func=cmd_monitor)

    s = sub.add_parser("simulate", help="write a synthetic closed-loop scenario")
    s.add_argument("--scenario", choices=SCENARIOS, required=True)
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--blocks", type=int, default=2)
    s.add_argument("--noise-vars", type=int, default=4)
    s.add_argument("--change-at", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="plot-ready CSVs and a text summary from a report")
    r.add_argument("--monitor", required=True)
    r.add_argument("--out-dir", required=True)
    r.set_defaults(func=cmd_report)

    q = sub.add_parser("partition", help="print the variable partition as JSON")
    q.add_argument("--data", required=True)
    q.add_argument("--config")
    q.set_defaults(func=cmd_partition)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
