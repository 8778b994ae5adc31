"""Command-line entry points.

The staged commands share a work directory and recompute the dataset and
split deterministically from ``--config`` and ``--seed``::

    ltu train-original --config exp.toml --seed 0 --workdir w
    ltu train-mi       --config exp.toml --seed 0 --workdir w
    ltu retrain-gold   --config exp.toml --seed 0 --workdir w
    ltu unlearn ltu    --config exp.toml --seed 0 --workdir w
    ltu evaluate       --config exp.toml --seed 0 --workdir w
    ltu report w

``run-all`` runs the whole pipeline for every seed in the config.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from .data import save_csv
from .metrics import MetricsReport, compute_metrics, delta_report, format_delta_table
from .mi import MiEnsemble


def _load_cfg(args) -> ex.ExperimentConfig:
    return ex.load_config(args.config) if args.config else ex.ExperimentConfig()


class _Stage:
    """Everything a staged command derives from one (config, seed) pair."""

    def __init__(self, args):
        self.cfg = _load_cfg(args)
        self.seed = args.seed
        self.workdir = Path(args.workdir)
        self.workdir.mkdir(parents=True, exist_ok=True)
        self.ds = ex.build_dataset(self.cfg)
        self.split = ex.seed_split(self.cfg, self.ds, self.seed)
        self.spec = self.cfg.model_spec(self.ds.dim, self.ds.n_classes)

    def path(self, name: str) -> Path:
        return self.workdir / name

    def load_params(self, name: str) -> np.ndarray:
        p = self.path(f"{name}.npy")
        if not p.exists():
            raise FileNotFoundError(f"{p} not found; run the stage that produces it first")
        return np.load(p)

    def save_params(self, name: str, params, seconds: float, extra=None) -> None:
        np.save(self.path(f"{name}.npy"), params)
        meta = {"seed": self.seed, "config_hash": self.cfg.config_hash(), "ut_seconds": seconds}
        if extra:
            meta.update(extra)
        self.path(f"{name}.json").write_text(json.dumps(meta, indent=2))

    def ensemble(self) -> MiEnsemble:
        p = self.path("mi.json")
        if not p.exists():
            raise FileNotFoundError(f"{p} not found; run train-mi first")
        return MiEnsemble.load(p)


def cmd_gen_data(args) -> int:
    cfg = _load_cfg(args)
    ds = ex.build_dataset(cfg)
    save_csv(ds, args.out, header=args.header)
    print(f"wrote {len(ds)} rows ({ds.dim} features, {ds.n_classes} classes) to {args.out}")
    return 0


def cmd_train_original(args) -> int:
    st = _Stage(args)
    params = ex.seed_original(st.cfg, st.spec, st.split, st.seed)
    st.save_params("original", params, 0.0)
    print(f"original model saved to {st.path('original.npy')}")
    return 0


def cmd_train_mi(args) -> int:
    st = _Stage(args)
    ens = ex.seed_ensemble(st.cfg, st.spec, st.split, st.load_params("original"), st.seed)
    ens.save(st.path("mi.json"))
    print(f"{ens.K} guidance attackers + 1 eval attacker saved to {st.path('mi.json')}")
    return 0


def cmd_retrain_gold(args) -> int:
    st = _Stage(args)
    params, seconds = ex.seed_gold(st.cfg, st.spec, st.split, st.seed)
    st.save_params("gold", params, seconds)
    print(f"gold model retrained in {seconds:.2f}s")
    return 0


def cmd_unlearn(args) -> int:
    st = _Stage(args)
    ens = st.ensemble()
    params, seconds, traj = ex.run_method(
        st.cfg, st.spec, st.load_params("original"), st.split, ens, st.seed, args.method
    )
    st.save_params(args.method, params, seconds, {"trajectory": ex.summarize_trajectory(traj)})
    print(f"{args.method} finished in {seconds:.2f}s")
    return 0


def cmd_evaluate(args) -> int:
    st = _Stage(args)
    ens = st.ensemble()

    def report(name):
        meta = json.loads(st.path(f"{name}.json").read_text())
        return compute_metrics(st.spec, st.load_params(name), st.split, ens, meta["ut_seconds"])

    gold = report("gold")
    out = {"gold": gold.to_dict(), "methods": {}}
    for name in ex.METHODS:
        if st.path(f"{name}.npy").exists():
            out["methods"][name] = delta_report(report(name), gold).to_dict()
    st.path("metrics.json").write_text(json.dumps(out, indent=2))
    print(_render_metrics(out), end="")
    return 0


def _render_metrics(d: dict) -> str:
    gold = MetricsReport.from_dict(d["gold"])
    rows = {
        name: delta_report(MetricsReport.from_dict(r["method"]), gold) for name, r in d["methods"].items()
    }
    return format_delta_table(rows, gold)


def cmd_report(args) -> int:
    target = Path(args.path)
    if (target / "metrics.json").exists():
        print(_render_metrics(json.loads((target / "metrics.json").read_text())), end="")
    elif list(target.glob("*/result.json")):
        ex.write_summaries(target)
        print((target / "table.txt").read_text(), end="")
    else:
        print(f"error: {target} holds neither metrics.json nor per-seed results", file=sys.stderr)
        return 2
    return 0


def cmd_run_all(args) -> int:
    cfg = ex.load_config(args.config)
    try:
        run_dir = ex.run_experiment(cfg, out_dir=args.out)
    except ex.ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print((run_dir / "table.txt").read_text(), end="")
    print(f"results in {run_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ltu", description="Desk-scale machine unlearning experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def staged(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="TOML experiment config (defaults used if omitted)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workdir", default="work")
        sp.set_defaults(fn=fn)
        return sp

    g = sub.add_parser("gen-data", help="write the configured dataset as CSV")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.add_argument("--header", action="store_true")
    g.set_defaults(fn=cmd_gen_data)

    staged("train-original", cmd_train_original, "train the original model on D_f and D_r")
    staged("train-mi", cmd_train_mi, "train the membership-inference ensemble")
    staged("retrain-gold", cmd_retrain_gold, "retrain from scratch on D_r only")
    u = staged("unlearn", cmd_unlearn, "run one unlearning method")
    u.add_argument("method", choices=ex.METHODS)
    staged("evaluate", cmd_evaluate, "score every model in the workdir against gold")

    r = sub.add_parser("report", help="render a workdir or a run directory as a table")
    r.add_argument("path")
    r.set_defaults(fn=cmd_report)

    a = sub.add_parser("run-all", help="run the full pipeline for every configured seed")
    a.add_argument("config")
    a.add_argument("--out", help="override runs.out_dir")
    a.set_defaults(fn=cmd_run_all)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ex.ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
