"""Experiment configuration, the per-seed pipeline, and result persistence.

A run directory looks like::

    <out_dir>/<config hash>/<seed>/result.json
    <out_dir>/<config hash>/aggregate.csv
    <out_dir>/<config hash>/table.txt
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
import traceback
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ._rng import child_seeds
from .data import Dataset, UnlearnSplit, gen_blobs, gen_moons, load_csv, make_split
from .diffnum import ModelSpec
from .engine import (
    ABLATIONS,
    LtuConfig,
    TrainConfig,
    ablation,
    finetune_baseline,
    ga_baseline,
    ltu_unlearn,
    randlabel_baseline,
    retrain_gold,
    train_original,
)
from .metrics import METRICS, MetricsReport, compute_metrics, delta_report
from .mi import MiEnsemble, train_mi_ensemble

BASELINES = ("ft", "randl", "ga")
METHODS = tuple(ABLATIONS) + BASELINES


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "blobs"
    n_per_class: int = 313
    n_classes: int = 8
    dim: int = 2
    spread: float = 0.3
    n: int = 2500
    noise: float = 0.2
    path: str = ""
    seed: int = 0
    n_test: int = 500
    n_train: int = 2000


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple = (32, 32)
    activation: str = "tanh"
    epochs: int = 100
    lr: float = 0.1
    batch_size: int = 32
    momentum: float = 0.9
    loss_tol: float = 0.0

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.lr, self.batch_size, self.momentum, self.loss_tol)


@dataclass(frozen=True)
class SplitConfig:
    forget_ratio: float = 0.1
    rho: float = 0.3


@dataclass(frozen=True)
class BaselineConfig:
    methods: tuple = ("ltu", "ft", "randl", "ga")
    ft_epochs: int = 5
    ft_lr: float = 0.01
    randl_epochs: int = 5
    randl_lr: float = 0.01
    ga_steps: int = 5
    ga_lr: float = 0.05


@dataclass(frozen=True)
class RunsConfig:
    seeds: tuple = (0,)
    out_dir: str = "runs"
    mi_max_steps: int = 500


# [ltu] maps onto LtuConfig minus the fields owned elsewhere
_LTU_OWNED_ELSEWHERE = ("rho", "seed")

SECTIONS = {
    "dataset": DatasetConfig,
    "model": ModelConfig,
    "split": SplitConfig,
    "ltu": LtuConfig,
    "baselines": BaselineConfig,
    "runs": RunsConfig,
}


def _section_keys(name: str) -> set[str]:
    keys = {f.name for f in fields(SECTIONS[name])}
    if name == "ltu":
        keys -= set(_LTU_OWNED_ELSEWHERE)
    return keys


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    ltu: LtuConfig = field(default_factory=LtuConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    runs: RunsConfig = field(default_factory=RunsConfig)
    base_dir: str = "."

    def __post_init__(self):
        d = self.dataset
        if d.kind not in ("blobs", "moons", "csv"):
            raise ConfigError(f"dataset.kind must be blobs, moons or csv, got {d.kind!r}")
        if d.kind == "csv":
            if not d.path:
                raise ConfigError("dataset.path is required for kind = 'csv'")
            if not self.dataset_path().exists():
                raise ConfigError(f"dataset.path {self.dataset_path()} does not exist")
        if self.model.activation not in ("tanh", "relu"):
            raise ConfigError(f"model.activation must be tanh or relu, got {self.model.activation!r}")
        for m in self.baselines.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {list(METHODS)}")
        if not self.runs.seeds:
            raise ConfigError("runs.seeds must list at least one seed")

    def dataset_path(self) -> Path:
        p = Path(self.dataset.path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def model_spec(self, dim: int, n_classes: int) -> ModelSpec:
        return ModelSpec((dim, *self.model.hidden, n_classes), self.model.activation)

    def ltu_config(self, seed: int) -> LtuConfig:
        return LtuConfig(**{**asdict(self.ltu), "rho": self.split.rho, "seed": seed})

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            sec = asdict(getattr(self, name))
            if name == "ltu":
                for k in _LTU_OWNED_ELSEWHERE:
                    sec.pop(k)
            out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in sec.items()}
        return out

    def config_hash(self) -> str:
        """Stable digest of everything that affects results (not the output location)."""
        d = self.to_dict()
        d["runs"] = {k: v for k, v in d["runs"].items() if k != "out_dir"}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def config_from_dict(raw: dict, base_dir=".") -> ExperimentConfig:
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    kwargs = {}
    for name, cls in SECTIONS.items():
        sec = raw.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table")
        bad = set(sec) - _section_keys(name)
        if bad:
            raise ConfigError(f"unknown key(s) in [{name}]: {sorted(bad)}")
        sec = {k: tuple(v) if isinstance(v, list) else v for k, v in sec.items()}
        try:
            kwargs[name] = cls(**sec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}]: {exc}") from None
    return ExperimentConfig(**kwargs, base_dir=str(base_dir))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    with open(path, "rb") as f:
        try:
            raw = tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw, base_dir=path.parent)


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    d = cfg.dataset
    if d.kind == "blobs":
        return gen_blobs(d.n_per_class, d.n_classes, d.dim, d.spread, d.seed)
    if d.kind == "moons":
        return gen_moons(d.n, d.noise, d.seed)
    return load_csv(cfg.dataset_path())


def build_split(cfg: ExperimentConfig, ds: Dataset, seed: int) -> UnlearnSplit:
    d = cfg.dataset
    return make_split(
        ds, cfg.split.forget_ratio, cfg.split.rho, seed, n_test=d.n_test or None, n_train=d.n_train or None
    )


@dataclass
class SeedContext:
    """Everything shared by the methods of one seed."""

    seed: int
    spec: ModelSpec
    split: UnlearnSplit
    original: np.ndarray
    ensemble: MiEnsemble
    gold: np.ndarray
    gold_seconds: float


def _stage_seeds(seed: int):
    # split, original, gold, MI ensemble, methods
    return child_seeds(seed, 5)


def seed_split(cfg: ExperimentConfig, ds: Dataset, seed: int) -> UnlearnSplit:
    return build_split(cfg, ds, _stage_seeds(seed)[0])


def seed_original(cfg: ExperimentConfig, spec: ModelSpec, split: UnlearnSplit, seed: int) -> np.ndarray:
    return train_original(spec, split.forget.concat(split.remain), cfg.model.train_config(), _stage_seeds(seed)[1])


def seed_gold(cfg: ExperimentConfig, spec: ModelSpec, split: UnlearnSplit, seed: int) -> tuple[np.ndarray, float]:
    t0 = time.perf_counter()
    gold = retrain_gold(spec, split, cfg.model.train_config(), _stage_seeds(seed)[2])
    return gold, time.perf_counter() - t0


def seed_ensemble(cfg: ExperimentConfig, spec: ModelSpec, split: UnlearnSplit, original, seed: int) -> MiEnsemble:
    # members come from D_r, non-members from the test set; D_f stays unseen
    return train_mi_ensemble(
        spec, original, split.remain, split.test, K=cfg.ltu.K, seed=_stage_seeds(seed)[3],
        max_steps=cfg.runs.mi_max_steps,
    )


def prepare_seed(cfg: ExperimentConfig, seed: int, ds: Dataset | None = None) -> SeedContext:
    ds = build_dataset(cfg) if ds is None else ds
    split = seed_split(cfg, ds, seed)
    spec = cfg.model_spec(ds.dim, ds.n_classes)
    original = seed_original(cfg, spec, split, seed)
    gold, gold_seconds = seed_gold(cfg, spec, split, seed)
    ensemble = seed_ensemble(cfg, spec, split, original, seed)
    return SeedContext(seed, spec, split, original, ensemble, gold, gold_seconds)


def run_method(cfg: ExperimentConfig, spec, original, split, ensemble, seed: int, method: str):
    """Unlearn with ``method``; returns ``(params, seconds, trajectory or None)``."""
    b = cfg.baselines
    method_seed = int(_stage_seeds(seed)[4].generate_state(1)[0])
    if method in ABLATIONS:
        lcfg = ablation(cfg.ltu_config(method_seed), method)
        res = ltu_unlearn(spec, original, split, ensemble, lcfg)
        return res.final_params, res.wall_time_seconds, res.trajectory_dicts()
    t0 = time.perf_counter()
    if method == "ft":
        params = finetune_baseline(spec, original, split.remain, b.ft_epochs, b.ft_lr, method_seed)
    elif method == "randl":
        params = randlabel_baseline(spec, original, split, b.randl_epochs, b.randl_lr, method_seed)
    elif method == "ga":
        params = ga_baseline(spec, original, split.forget, b.ga_steps, b.ga_lr)
    else:
        raise ValueError(f"unknown method {method!r}; choose from {list(METHODS)}")
    return params, time.perf_counter() - t0, None


def summarize_trajectory(traj: list[dict] | None) -> dict | None:
    if not traj:
        return None
    cos = [r["cosine"] for r in traj if r["cosine"] is not None]
    ucr = [r["update_cosine_remember"] for r in traj if r["update_cosine_remember"] is not None]
    rl = [r["remember_loss"] for r in traj if r["remember_loss"] is not None]
    fl = [r["forget_loss"] for r in traj if r["forget_loss"] is not None]
    return {
        "iterations": len(traj),
        "conflict_fraction": float(np.mean([c < 0 for c in cos])) if cos else None,
        "min_update_cosine_remember": float(min(ucr)) if ucr else None,
        "remember_loss_first_last": [rl[0], rl[-1]] if rl else None,
        "forget_loss_first_last": [fl[0], fl[-1]] if fl else None,
        "mean_update_norm": float(np.mean([r["update_norm"] for r in traj])),
    }


def method_record(cfg, ctx: SeedContext, method: str, gold_report: MetricsReport) -> dict:
    params, seconds, traj = run_method(cfg, ctx.spec, ctx.original, ctx.split, ctx.ensemble, ctx.seed, method)
    report = compute_metrics(ctx.spec, params, ctx.split, ctx.ensemble, seconds)
    return {
        "config_hash": cfg.config_hash(),
        "seed": ctx.seed,
        "method": method,
        "metrics": report.to_dict(),
        "delta": delta_report(report, gold_report).to_dict(),
        "trajectory": summarize_trajectory(traj),
    }


def _write_json(path: Path, obj) -> None:
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True))
    tmp.replace(path)


def run_seed(cfg: ExperimentConfig, seed: int, seed_dir: Path, ds: Dataset | None = None) -> dict:
    """Run every configured method for one seed, rewriting result.json after each step."""
    seed_dir.mkdir(parents=True, exist_ok=True)
    result = {"config_hash": cfg.config_hash(), "seed": seed, "status": "running", "gold": None, "methods": []}
    path = seed_dir / "result.json"
    try:
        ctx = prepare_seed(cfg, seed, ds)
        gold = compute_metrics(ctx.spec, ctx.gold, ctx.split, ctx.ensemble, ctx.gold_seconds)
        result["gold"] = gold.to_dict()
        _write_json(path, result)
        for m in cfg.baselines.methods:
            result["methods"].append(method_record(cfg, ctx, m, gold))
            _write_json(path, result)
        result["status"] = "ok"
    except Exception as exc:
        result["status"] = "failed"
        result["error"] = "".join(traceback.format_exception_only(type(exc), exc)).strip()
        _write_json(path, result)
        raise
    _write_json(path, result)
    return result


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


def _std(xs) -> float:
    return float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0


AGG_FIELDS = ["method", "n_seeds"]
for _m in (*METRICS, "ut_seconds"):
    AGG_FIELDS += [f"{_m}_mean", f"{_m}_std"]
for _m in METRICS:
    AGG_FIELDS += [f"delta_{_m}_mean", f"delta_{_m}_std"]
AGG_FIELDS += ["mean_delta"]


def aggregate(results: list[dict]) -> list[dict]:
    """Mean and sample std per metric per method, gold first. Fractions, not percent."""
    groups: dict[str, list[dict]] = {}
    for res in results:
        if res.get("gold") is not None:
            groups.setdefault("gold", []).append({"metrics": res["gold"], "delta": None})
        for rec in res.get("methods", []):
            groups.setdefault(rec["method"], []).append(rec)
    rows = []
    for method, recs in groups.items():
        row = {"method": method, "n_seeds": len(recs)}
        for m in (*METRICS, "ut_seconds"):
            xs = [r["metrics"][m] for r in recs]
            row[f"{m}_mean"], row[f"{m}_std"] = float(np.mean(xs)), _std(xs)
        deltas = []
        for m in METRICS:
            if method == "gold":
                xs = [0.0] * len(recs)
            else:
                xs = [r["delta"]["deltas"][m] for r in recs]
            deltas.append(float(np.mean(xs)))
            row[f"delta_{m}_mean"], row[f"delta_{m}_std"] = deltas[-1], _std(xs)
        row["mean_delta"] = float(np.mean(deltas))
        rows.append(row)
    return rows


def write_aggregate_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=AGG_FIELDS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in r.items()})


def read_aggregate_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return [
            {k: (v if k == "method" else int(v) if k == "n_seeds" else float(v)) for k, v in r.items()}
            for r in csv.DictReader(f)
        ]


def render_table(rows: list[dict]) -> str:
    """Percent ``mean±std`` per metric with the mean delta to gold in parentheses."""
    header = f"{'method':<12}" + "".join(f"{m.upper():>24}" for m in METRICS) + f"{'UT(s)':>16}"
    lines = [header, "-" * len(header)]
    for r in rows:
        cells = []
        for m in METRICS:
            cell = f"{100 * r[f'{m}_mean']:.2f}±{100 * r[f'{m}_std']:.2f}"
            if r["method"] != "gold":
                cell += f" ({100 * r[f'delta_{m}_mean']:.2f})"
            cells.append(f"{cell:>24}")
        ut = f"{r['ut_seconds_mean']:.3f}±{r['ut_seconds_std']:.3f}"
        lines.append(f"{r['method']:<12}" + "".join(cells) + f"{ut:>16}")
    return "\n".join(lines) + "\n"


def load_results(run_dir) -> list[dict]:
    out = []
    for p in sorted(Path(run_dir).glob("*/result.json"), key=lambda p: p.parent.name):
        out.append(json.loads(p.read_text()))
    return out


def write_summaries(run_dir) -> list[dict]:
    run_dir = Path(run_dir)
    rows = aggregate(load_results(run_dir))
    write_aggregate_csv(rows, run_dir / "aggregate.csv")
    (run_dir / "table.txt").write_text(render_table(rows))
    return rows


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> Path:
    """Run all seeds and write the aggregate; raises :class:`ExperimentError` if any seed failed.

    Seeds that fail leave a ``result.json`` with ``status = "failed"`` and
    whatever records were finished; the aggregate covers the finished records.
    """
    out_dir = Path(cfg.runs.out_dir if out_dir is None else out_dir)
    if not out_dir.is_absolute() and out_dir == Path(cfg.runs.out_dir):
        out_dir = Path(cfg.base_dir) / out_dir
    run_dir = out_dir / cfg.config_hash()
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    ds = build_dataset(cfg)
    failures = []
    for seed in cfg.runs.seeds:
        try:
            run_seed(cfg, int(seed), run_dir / str(seed), ds)
        except Exception as exc:
            failures.append(f"seed {seed}: {exc}")
    write_summaries(run_dir)
    if failures:
        raise ExperimentError(f"{len(failures)} seed(s) failed ({'; '.join(failures)}); partial results in {run_dir}")
    return run_dir


def strip_timing(obj):
    """Copy of a result record with wall-time fields zeroed, for determinism checks."""
    if isinstance(obj, dict):
        return {k: (0.0 if k == "ut_seconds" else strip_timing(v)) for k, v in obj.items()}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj
