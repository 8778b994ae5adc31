"""Unlearning metrics, deltas against the gold model, and table rendering."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import UnlearnSplit
from .diffnum import ModelSpec, accuracy
from .mi import MiEnsemble, MiModel, mi_accuracy

METRICS = ("ua", "ra", "ta", "mi")


@dataclass(frozen=True)
class MetricsReport:
    """Metrics stored as fractions in [0, 1]; ``ut_seconds`` is wall time."""

    ua: float
    ra: float
    ta: float
    mi: float
    ut_seconds: float = 0.0

    def __post_init__(self):
        for name in METRICS:
            v = getattr(self, name)
            if not (np.isfinite(v) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not (np.isfinite(self.ut_seconds) and self.ut_seconds >= 0.0):
            raise ValueError(f"ut_seconds must be non-negative, got {self.ut_seconds}")

    def as_percent(self) -> dict[str, float]:
        return {name: 100.0 * getattr(self, name) for name in METRICS}

    def render(self) -> str:
        return " / ".join(f"{v:.2f}" for v in self.as_percent().values())

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**{k: float(d[k]) for k in (*METRICS, "ut_seconds")})

    @classmethod
    def from_percent(cls, ua, ra, ta, mi, ut_seconds=0.0) -> "MetricsReport":
        return cls(ua / 100.0, ra / 100.0, ta / 100.0, mi / 100.0, ut_seconds)


@dataclass(frozen=True)
class DeltaReport:
    method: MetricsReport
    gold: MetricsReport

    @property
    def deltas(self) -> dict[str, float]:
        return {name: abs(getattr(self.method, name) - getattr(self.gold, name)) for name in METRICS}

    @property
    def mean_delta(self) -> float:
        return float(np.mean(list(self.deltas.values())))

    def render(self) -> str:
        """``value (delta)`` per metric in percent, then the raw UT."""
        m = self.method.as_percent()
        cells = [f"{m[k]:.2f} ({100.0 * d:.2f})" for k, d in self.deltas.items()]
        return " / ".join(cells) + f" | UT {self.method.ut_seconds:.2f}s"

    def to_dict(self) -> dict:
        return {"method": self.method.to_dict(), "gold": self.gold.to_dict(), "deltas": self.deltas}


def delta_report(method: MetricsReport, gold: MetricsReport) -> DeltaReport:
    return DeltaReport(method, gold)


def _eval_model(eval_mi) -> MiModel:
    if isinstance(eval_mi, MiEnsemble):
        return eval_mi.eval_model
    return eval_mi


def compute_metrics(
    spec: ModelSpec, params, split: UnlearnSplit, eval_mi, ut_seconds: float = 0.0, guidance=()
) -> MetricsReport:
    """UA, RA, TA and MI of ``params`` on ``split``.

    ``eval_mi`` may be the ensemble itself, in which case its held-out
    attacker is used. Passing the guidance attackers lets the caller assert
    that the evaluator is not one of them.
    """
    model = _eval_model(eval_mi)
    if isinstance(eval_mi, MiEnsemble):
        guidance = eval_mi.guidance
    if any(g is model for g in guidance):
        raise ValueError("MI must be scored by the held-out attacker, not a guidance attacker")
    for name in ("forget", "remain", "test"):
        if len(getattr(split, name)) == 0:
            raise ValueError(f"split component {name!r} is empty")
    f, r, t = split.forget, split.remain, split.test
    return MetricsReport(
        ua=1.0 - accuracy(spec, params, f.X, f.y),
        ra=accuracy(spec, params, r.X, r.y),
        ta=accuracy(spec, params, t.X, t.y),
        mi=mi_accuracy(model, spec, params, f),
        ut_seconds=float(ut_seconds),
    )


def parse_row(text: str) -> MetricsReport:
    """Inverse of :meth:`MetricsReport.render`: ``"5.24 / 100.00 / 94.26 / 12.88"``."""
    parts = [p.strip() for p in text.split("/")]
    if len(parts) != 4:
        raise ValueError(f"expected four '/'-separated percentages, got {text!r}")
    return MetricsReport.from_percent(*(float(p) for p in parts))


def format_delta_table(rows: dict[str, DeltaReport], gold: MetricsReport | None = None) -> str:
    header = f"{'method':<14} {'UA':>15} {'RA':>15} {'TA':>15} {'MI':>15} {'UT(s)':>9}"
    lines = [header, "-" * len(header)]
    if gold is not None:
        g = gold.as_percent()
        lines.append(
            f"{'gold':<14} " + " ".join(f"{g[k]:>15.2f}" for k in METRICS) + f" {gold.ut_seconds:>9.2f}"
        )
    for name, rep in rows.items():
        m = rep.method.as_percent()
        cells = [f"{m[k]:.2f} ({100.0 * d:.2f})" for k, d in rep.deltas.items()]
        lines.append(f"{name:<14} " + " ".join(f"{c:>15}" for c in cells) + f" {rep.method.ut_seconds:>9.2f}")
    return "\n".join(lines) + "\n"
