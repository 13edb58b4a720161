"""Command-line entry point: ``clora {synth,run,eval,netscore,pareto}``.

Exit codes: 0 ok, 1 usage or config error, 2 data error, 3 non-finite numbers.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .continual.engine import evaluate, run_experiment
from .data import SegDataset, load_checkpoint
from .data.synth import SynthSpec, class_histogram, class_names, generate
from .errors import CloraError, ConfigError, DataError
from .metrics import (ConfusionMatrix, MetricsReport, NetScoreInput, miou, netscore,
                      parse_range, pareto_front, per_class_iou)

log = logging.getLogger("clora")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"{path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def cmd_synth(args) -> int:
    raw = _read_json(args.config) if args.config else {}
    if args.seed is not None:
        raw["seed"] = args.seed
    spec = SynthSpec.from_dict(raw)
    root = generate(spec, args.out)
    data = SegDataset.load(root)
    hist = class_histogram(data.labels, data.num_classes)
    print(f"wrote {len(data)} samples to {root}")
    for cid, (name, n) in enumerate(zip(class_names(spec), hist)):
        print(f"{cid:3d} {name:<16s} {int(n):9d}")
    return 0


def _load_run_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.rank is not None:
        cfg.rank = args.rank
    if args.mode is not None:
        cfg.mode = args.mode
    if args.out is not None:
        cfg.out = args.out
    cfg.check()
    return cfg


def cmd_run(args) -> int:
    cfg = _load_run_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root_log = logging.getLogger("clora")
    root_log.addHandler(handler)
    root_log.setLevel(logging.INFO)
    try:
        log.info("clora %s run start: mode=%s schedule=%s seed=%d", __version__, cfg.mode, cfg.schedule, cfg.seed)
        started = time.monotonic()
        datasets = [SegDataset.load(p) for p in cfg.datasets]
        result = run_experiment(
            cfg.mode_enum(), cfg.schedule, datasets, cfg.train_config(),
            seed=cfg.seed, model_spec=cfg.model_spec(), dataset_ids=cfg.dataset_ids,
            ranges=cfg.ranges, jt_miou_all=cfg.jt_miou_all, out_dir=out, config_echo=cfg.echo(),
        )
        report = result.report
        (out / "report.json").write_text(report.to_json())
        (out / "report.csv").write_text(report.to_csv())
        log.info("run finished in %.1f s", time.monotonic() - started)
    finally:
        root_log.removeHandler(handler)
        handler.close()
    all_ = report.miou_all
    print(f"{report.mode} {report.schedule} seed={report.seed}: mIoU(All)="
          f"{'n/a' if all_ is None else f'{all_:.2f}'} FS={_fmt(report.fs)} "
          f"trainable={report.trainable_fraction:.4f} -> {out}")
    return 0


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.2f}"


def cmd_eval(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    data = SegDataset.load(args.dataset)
    if model.spec.num_classes > data.num_classes:
        raise DataError(f"checkpoint predicts {model.spec.num_classes} classes, dataset has {data.num_classes}")
    idx = data.split(args.split) if args.split != "all" else np.arange(len(data))
    cm: ConfusionMatrix = evaluate(model, data, idx)
    names = args.ranges.split(",") if args.ranges else ["All"]
    ranges = {r: miou(cm, parse_range(r, data.num_classes)) for r in names}
    iou = per_class_iou(cm)
    report = {
        "checkpoint": str(args.checkpoint),
        "dataset": str(args.dataset),
        "split": args.split,
        "ranges": ranges,
        "per_class_iou": [None if np.isnan(v) else float(100 * v) for v in iou],
        "confusion": cm.counts.tolist(),
    }
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def _load_reports(paths) -> list[tuple[str, MetricsReport]]:
    out = []
    for p in paths:
        try:
            out.append((str(p), MetricsReport.from_dict(_read_json(p))))
        except (TypeError, KeyError) as exc:
            raise DataError(f"{p}: not a report ({exc})") from None
    return out


def _label(r: MetricsReport) -> str:
    rank = f"-r{r.rank}" if r.rank is not None else ""
    return f"{r.mode}{rank}/{r.schedule}/seed{r.seed}"


def _emit(rows, header, out_path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if out_path:
        Path(out_path).write_text(buf.getvalue())
    sys.stdout.write(buf.getvalue())


def cmd_netscore(args) -> int:
    reports = _load_reports(args.reports)
    units = {json.dumps(r.units, sort_keys=True) for _, r in reports}
    exps = {json.dumps(r.netscore_exponents, sort_keys=True) for _, r in reports}
    if len(units) > 1 or len(exps) > 1:
        print("warning: unit mismatch across reports; NetScore values are not comparable", file=sys.stderr)
    consistent = len(units) == 1 and len(exps) == 1
    rows = []
    for path, r in reports:
        if r.miou_all is None or r.miou_all <= 0:
            raise DataError(f"{path}: mIoU(All) missing or zero")
        e = r.netscore_exponents
        score = netscore(NetScoreInput(r.miou_all, r.p_n_millions, r.m_n_millions, e["alpha"], e["beta"], e["gamma"]))
        rows.append([_label(r), r.miou_all, r.p_n_millions, r.m_n_millions, score, consistent, path])
    rows.sort(key=lambda row: -row[4])
    _emit(rows, ["label", "a_n", "p_n_millions", "m_n_millions", "netscore", "units_consistent", "report"], args.out)
    return 0


def cmd_pareto(args) -> int:
    reports = _load_reports(args.reports)
    points = [(r.p_n_millions, r.miou_all, _label(r)) for _, r in reports if r.miou_all is not None]
    front = pareto_front(points)
    _emit([list(p) for p in front], ["p_n_millions", "miou_all", "label"], args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="clora", description="Continual semantic segmentation with low-rank adapters.")
    p.add_argument("--version", action="version", version=f"clora {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic segmentation dataset")
    s.add_argument("--config", help="dataset spec JSON (defaults if omitted)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("run", help="train a schedule and write a report")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--rank", type=int)
    r.add_argument("--mode")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--ranges", help="comma separated, e.g. 0-3,4-5,All")
    e.add_argument("--split", default="val", choices=["train", "val", "all"])
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    n = sub.add_parser("netscore", help="tabulate NetScore of reports")
    n.add_argument("reports", nargs="+")
    n.add_argument("--out")
    n.set_defaults(func=cmd_netscore)

    f = sub.add_parser("pareto", help="params vs mIoU Pareto front of reports")
    f.add_argument("reports", nargs="+")
    f.add_argument("--out")
    f.set_defaults(func=cmd_pareto)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.INFO if args.verbose else logging.WARNING)
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logging.getLogger("clora").addHandler(console)
    try:
        return args.func(args)
    except CloraError as exc:
        print(f"clora {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"clora {args.command}: {exc}", file=sys.stderr)
        return DataError.exit_code
    finally:
        logging.getLogger("clora").removeHandler(console)


if __name__ == "__main__":
    sys.exit(main())
