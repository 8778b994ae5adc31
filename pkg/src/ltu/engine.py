"""The unlearning loop and the comparison baselines."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._rng import child_seeds
from .data import (
    Dataset,
    FeatureExtractor,
    OneHotVectorizer,
    UnlearnSplit,
    build_query_bundle,
    build_support,
)
from .diffnum import CrossEntropyLoss, ModelSpec, check_params, init_params
from .harmonize import combine, cosine, harmonize
from .meta import MetaConfig, MetaTask, meta_value_and_gradient
from .mi import AuditSet, ForgettingLoss, MiEnsemble, audit_set

COMBINE_POLICIES = ("project", "add", "alternate")


# ---------------------------------------------------------------------------
# plain supervised training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 60
    lr: float = 0.1
    batch_size: int = 32
    momentum: float = 0.9
    loss_tol: float = 0.0  # stop early once the full-data loss drops below this


def train_classifier(
    spec: ModelSpec, params: np.ndarray, data: Dataset, cfg: TrainConfig, seed
) -> np.ndarray:
    """Mini-batch SGD with heavy-ball momentum on mean cross-entropy."""
    params = np.array(check_params(spec, params), dtype=np.float64)
    if cfg.epochs == 0:
        return params
    rng = np.random.default_rng(seed)
    n = len(data)
    vel = np.zeros_like(params)
    full = CrossEntropyLoss(spec, data.X, data.y) if cfg.loss_tol > 0 else None
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            g = CrossEntropyLoss(spec, data.X[idx], data.y[idx]).grad(params)
            vel = cfg.momentum * vel - cfg.lr * g
            params = params + vel
        if full is not None and full.loss(params) < cfg.loss_tol:
            break
    return params


def train_original(spec: ModelSpec, train: Dataset, cfg: TrainConfig, seed) -> np.ndarray:
    init_seed, order_seed = child_seeds(seed, 2)
    return train_classifier(spec, init_params(spec, init_seed), train, cfg, order_seed)


def retrain_gold(spec: ModelSpec, split: UnlearnSplit, cfg: TrainConfig, seed) -> np.ndarray:
    """Exact unlearning: fresh initialisation trained on the remain set only."""
    return train_original(spec, split.remain, cfg, seed)


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------


def finetune_baseline(
    spec: ModelSpec, original_params, retained: Dataset, epochs: int, lr: float, seed=0, batch_size: int = 32
) -> np.ndarray:
    """Continue training the original model on retained data only."""
    cfg = TrainConfig(epochs=epochs, lr=lr, batch_size=batch_size, momentum=0.0)
    return train_classifier(spec, original_params, retained, cfg, seed)


def randlabel_baseline(
    spec: ModelSpec, original_params, split: UnlearnSplit, epochs: int, lr: float, seed=0, batch_size: int = 32
) -> np.ndarray:
    """Fine-tune on the remain subset plus the forget set under random wrong labels."""
    label_seed, order_seed = child_seeds(seed, 2)
    relabelled = build_support(split.forget, label_seed).as_dataset()
    data = split.remain_subset.concat(relabelled)
    cfg = TrainConfig(epochs=epochs, lr=lr, batch_size=batch_size, momentum=0.0)
    return train_classifier(spec, original_params, data, cfg, order_seed)


def ga_baseline(spec: ModelSpec, original_params, forget: Dataset, steps: int, lr: float) -> np.ndarray:
    """Full-batch gradient ascent on the forget-set cross-entropy."""
    params = np.array(check_params(spec, original_params), dtype=np.float64)
    loss = CrossEntropyLoss(spec, forget.X, forget.y)
    for _ in range(steps):
        params = params + lr * loss.grad(params)
    return params


# ---------------------------------------------------------------------------
# LTU
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LtuConfig:
    alpha: float = 0.05
    beta: float = 0.05
    iterations: int = 300
    batch_support: int = 32
    batch_query: int = 32
    k: int = 64
    rho: float = 0.3
    K: int = 3
    mi_eval_seed: int = 0
    remember_feedback: bool = True
    forget_feedback: bool = True
    meta_opt: bool = True
    combine_policy: str = "project"
    meta_mode: str = "exact"
    hvp_method: str = "fd"
    seed: int = 0

    def __post_init__(self):
        if self.combine_policy not in COMBINE_POLICIES:
            raise ValueError(f"combine_policy must be one of {COMBINE_POLICIES}")
        if self.combine_policy == "alternate" and not (self.remember_feedback and self.forget_feedback):
            raise ValueError("the alternate policy needs both feedback channels")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if min(self.batch_support, self.batch_query, self.k) < 1:
            raise ValueError("batch sizes and k must be positive")
        if not 0 < self.rho < 1:
            raise ValueError("rho must be in (0, 1)")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative")

    def meta_config(self) -> MetaConfig:
        # without meta optimisation both channels reduce to plain summed gradients
        alpha = self.alpha if self.meta_opt else 0.0
        return MetaConfig(alpha=alpha, mode=self.meta_mode, hvp_method=self.hvp_method)

    def to_dict(self) -> dict:
        return asdict(self)


ABLATIONS = {
    "ltu": {},
    "wo_forfeed": {"forget_feedback": False},
    "wo_remfeed": {"remember_feedback": False},
    "wo_metaopt": {"meta_opt": False},
    "gradadd": {"combine_policy": "add"},
    "alternate": {"combine_policy": "alternate"},
}


def ablation(cfg: LtuConfig, name: str) -> LtuConfig:
    try:
        return replace(cfg, **ABLATIONS[name])
    except KeyError:
        raise ValueError(f"unknown LTU variant {name!r}; choose from {sorted(ABLATIONS)}") from None


@dataclass
class TrajectoryRecord:
    iter: int
    remember_loss: float | None
    forget_loss: float | None
    cosine: float | None
    update_norm: float
    update_cosine_remember: float | None  # cos(G, g_r)


@dataclass
class UnlearnResult:
    final_params: np.ndarray
    trajectory: list[TrajectoryRecord] = field(default_factory=list)
    wall_time_seconds: float = 0.0

    def trajectory_dicts(self) -> list[dict]:
        return [asdict(r) for r in self.trajectory]


def _batch(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    if size >= n:
        return np.arange(n)
    return rng.choice(n, size=size, replace=False)


def ltu_unlearn(
    spec: ModelSpec,
    original_params,
    split: UnlearnSplit,
    ensemble: MiEnsemble | None,
    cfg: LtuConfig,
    extractor=None,
    vectorizer=None,
) -> UnlearnResult:
    """Meta-optimised unlearning with remembering and forgetting feedback.

    Each iteration builds a remembering meta task (randomly relabelled forget
    batch as support, one batch per query set as queries) and a forgetting
    meta task (forgetting loss on an audit batch under guidance attacker ``i``
    as support, under attacker ``j != i`` as query), takes their meta gradients ``g_r`` and
    ``g_f``, combines them according to ``cfg.combine_policy`` and steps by
    ``beta``. A disabled channel contributes a zero vector and is never
    evaluated.
    """
    t0 = time.perf_counter()
    params = np.array(check_params(spec, original_params), dtype=np.float64)
    if cfg.forget_feedback and (ensemble is None or ensemble.K < 2):
        raise ValueError("forgetting feedback needs an ensemble of at least two guidance attackers")
    mcfg = cfg.meta_config()
    support_seed, query_seed, loop_seed = child_seeds(cfg.seed, 3)
    rng = np.random.default_rng(loop_seed)

    if cfg.remember_feedback:
        support = build_support(split.forget, support_seed)
        if extractor is None:
            extractor = FeatureExtractor(spec, params)
        if vectorizer is None:
            vectorizer = OneHotVectorizer(split.n_classes)
        k = min(cfg.k, len(split.remain_subset))
        bundle = build_query_bundle(split, extractor, vectorizer, k, query_seed)
    if cfg.forget_feedback:
        audit = audit_set(split.forget)

    zero = np.zeros_like(params)
    trajectory = []
    for it in range(cfg.iterations):
        alternate = cfg.combine_policy == "alternate"
        use_r = cfg.remember_feedback and (not alternate or it % 2 == 0)
        use_f = cfg.forget_feedback and (not alternate or it % 2 == 1)

        g_r, r_loss = zero, None
        if use_r:
            sb = _batch(len(support), cfg.batch_support, rng)
            s_eval = CrossEntropyLoss(spec, support.X[sb], support.assigned[sb])
            q_evals = []
            for q in bundle.query_sets:
                qb = _batch(len(q), cfg.batch_query, rng)
                q_evals.append(CrossEntropyLoss(spec, q.X[qb], q.y[qb]))
            r_loss, g_r = meta_value_and_gradient(params, MetaTask(s_eval, q_evals), mcfg)

        g_f, f_loss = zero, None
        if use_f:
            i, j = rng.choice(ensemble.K, size=2, replace=False)
            ab = _batch(len(audit), cfg.batch_support, rng)
            batch = AuditSet(audit.X[ab], audit.ids[ab], audit.membership_target[ab])
            f_task = MetaTask(
                ForgettingLoss(spec, ensemble.guidance[i], batch),
                [ForgettingLoss(spec, ensemble.guidance[j], batch)],
            )
            f_loss, g_f = meta_value_and_gradient(params, f_task, mcfg)

        if alternate:
            G = g_r if use_r else g_f
            cos_rf = None
        elif cfg.combine_policy == "project":
            G = combine(g_r, harmonize(g_r, g_f))
            cos_rf = cosine(g_r, g_f)
        else:
            G = combine(g_r, g_f)
            cos_rf = cosine(g_r, g_f)

        params = params - cfg.beta * G
        trajectory.append(
            TrajectoryRecord(
                iter=it,
                remember_loss=r_loss,
                forget_loss=f_loss,
                cosine=cos_rf,
                update_norm=float(np.linalg.norm(G)),
                update_cosine_remember=cosine(G, g_r) if use_r else None,
            )
        )
    return UnlearnResult(params, trajectory, time.perf_counter() - t0)
