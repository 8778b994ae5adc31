"""Differentiable membership-inference attackers.

An attacker is a small MLP with a single logit output that reads the
target model's softmax vector sorted in descending order (so class order
does not matter) and predicts "member". A guidance ensemble of such
attackers supplies the forgetting signal during unlearning; one extra
attacker, never used for guidance, scores the MI metric.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from ._rng import child_seeds
from .data import Dataset
from .diffnum import (
    BinaryCrossEntropyLoss,
    ModelSpec,
    bce,
    bce_logit_grad,
    check_params,
    forward,
    forward_tape,
    init_params,
    sigmoid,
    softmax,
)

HIDDEN_LAYOUTS = [(8,), (16, 8), (4, 4)]


@dataclass(eq=False)
class MiModel:
    spec: ModelSpec
    params: np.ndarray
    arch_tag: str
    seed: int | None = None

    def __post_init__(self):
        if self.spec.n_outputs != 1:
            raise ValueError("an attacker has exactly one output logit")
        self.params = np.array(check_params(self.spec, self.params), dtype=np.float64)

    @property
    def n_classes(self) -> int:
        return self.spec.n_inputs

    def logit(self, features) -> np.ndarray:
        return forward(self.spec, self.params, features)[:, 0]

    def member_prob(self, features) -> np.ndarray:
        return sigmoid(self.logit(features))

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "params": self.params.tolist(),
            "arch_tag": self.arch_tag,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MiModel":
        return cls(ModelSpec.from_dict(d["spec"]), np.asarray(d["params"]), d["arch_tag"], d.get("seed"))


@dataclass(eq=False)
class MiEnsemble:
    guidance: list[MiModel]
    eval_model: MiModel

    def __post_init__(self):
        if len(self.guidance) < 2:
            raise ValueError("the guidance ensemble needs at least two attackers")
        if any(m is self.eval_model for m in self.guidance):
            raise ValueError("the evaluation attacker must not be part of the guidance ensemble")

    @property
    def K(self) -> int:
        return len(self.guidance)

    def to_json(self) -> str:
        return json.dumps(
            {"guidance": [m.to_dict() for m in self.guidance], "eval_model": self.eval_model.to_dict()}
        )

    @classmethod
    def from_json(cls, text: str) -> "MiEnsemble":
        d = json.loads(text)
        return cls([MiModel.from_dict(m) for m in d["guidance"]], MiModel.from_dict(d["eval_model"]))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "MiEnsemble":
        return cls.from_json(Path(path).read_text())


def attack_features(target_spec: ModelSpec, target_params: np.ndarray, X) -> np.ndarray:
    p = softmax(forward(target_spec, target_params, X))
    return -np.sort(-p, axis=1)


def train_attacker(
    spec: ModelSpec,
    features: np.ndarray,
    targets: np.ndarray,
    seed,
    max_steps: int = 500,
    lr: float = 0.5,
    momentum: float = 0.9,
    tol: float = 1e-7,
    arch_tag: str = "",
) -> MiModel:
    """Full-batch heavy-ball gradient descent on BCE.

    Stops after ``max_steps`` or once the loss improves by less than ``tol``
    over 25 consecutive steps.
    """
    rng = np.random.default_rng(seed)
    params = init_params(spec, rng)
    loss = BinaryCrossEntropyLoss(spec, features, targets)
    vel = np.zeros_like(params)
    best = np.inf
    stale = 0
    for _ in range(max_steps):
        value, g = loss.value_and_grad(params)
        if value < best - tol:
            best = value
            stale = 0
        else:
            stale += 1
            if stale >= 25:
                break
        vel = momentum * vel - lr * g
        params = params + vel
    seed_int = None if isinstance(seed, np.random.SeedSequence) else seed
    return MiModel(spec, params, arch_tag or "-".join(map(str, spec.layer_widths)), seed_int)


def train_mi_ensemble(
    target_spec: ModelSpec,
    target_params: np.ndarray,
    member_pool: Dataset,
    nonmember_pool: Dataset,
    K: int = 3,
    seed=0,
    max_steps: int = 500,
) -> MiEnsemble:
    """Train ``K`` guidance attackers plus one evaluation attacker.

    Architectures cycle through ``C-8-1``, ``C-16-8-1`` and ``C-4-4-1``. Each
    attacker gets its own seed, which drives its initialisation and the
    balanced subsample of members/non-members it is trained on.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    if len(member_pool) == 0 or len(nonmember_pool) == 0:
        raise ValueError("member and non-member pools must be non-empty")
    if np.intersect1d(member_pool.ids, nonmember_pool.ids).size:
        raise ValueError("member and non-member pools overlap")
    C = target_spec.n_outputs
    fm = attack_features(target_spec, target_params, member_pool.X)
    fn = attack_features(target_spec, target_params, nonmember_pool.X)
    n = min(len(fm), len(fn))

    models = []
    for i, ss in enumerate(child_seeds(seed, K + 1)):
        hidden = HIDDEN_LAYOUTS[i % len(HIDDEN_LAYOUTS)]
        spec = ModelSpec((C, *hidden, 1), "tanh")
        sub_seed, init_seed = child_seeds(ss, 2)
        rng = np.random.default_rng(sub_seed)
        im = rng.choice(len(fm), size=n, replace=False)
        inn = rng.choice(len(fn), size=n, replace=False)
        feats = np.vstack([fm[im], fn[inn]])
        targets = np.concatenate([np.ones(n), np.zeros(n)])
        tag = f"mi{i}:" + "-".join(map(str, spec.layer_widths))
        models.append(train_attacker(spec, feats, targets, init_seed, max_steps=max_steps, arch_tag=tag))
    return MiEnsemble(models[:-1], models[-1])


@dataclass
class AuditSet:
    X: np.ndarray
    ids: np.ndarray
    membership_target: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.membership_target is None:
            self.membership_target = np.zeros(self.X.shape[0])

    def __len__(self) -> int:
        return self.X.shape[0]


def audit_set(forget: Dataset) -> AuditSet:
    """Every forget input, labelled non-member."""
    if len(forget) == 0:
        raise ValueError("forget set is empty")
    return AuditSet(forget.X.copy(), forget.ids.copy())


class ForgettingLoss:
    """Mean BCE of a frozen attacker's membership score on the audit set.

    Differentiable in the *target* parameters; the attacker is held fixed.
    Descending on this loss pushes audit samples toward "non-member".
    """

    def __init__(self, target_spec: ModelSpec, mi: MiModel, audit: AuditSet):
        if mi.n_classes != target_spec.n_outputs:
            raise ValueError(
                f"attacker reads {mi.n_classes} probabilities, target has {target_spec.n_outputs} classes"
            )
        self.spec = target_spec
        self.mi = mi
        self.X = np.ascontiguousarray(audit.X, dtype=np.float64)
        self.t = np.asarray(audit.membership_target, dtype=np.float64)

    def _forward(self, params):
        tape = forward_tape(self.spec, params, self.X)
        p = softmax(tape[-1, :, : self.spec.n_outputs])
        order = np.argsort(-p, axis=1, kind="stable")
        feats = np.ascontiguousarray(np.take_along_axis(p, order, axis=1))
        mtape = forward_tape(self.mi.spec, self.mi.params, feats)
        return tape, p, order, mtape

    def loss(self, params) -> float:
        _, _, _, mtape = self._forward(params)
        return float(bce(sigmoid(mtape[-1, :, 0]), self.t).mean())

    def value_and_grad(self, params):
        params = np.ascontiguousarray(params, dtype=np.float64)
        tape, p, order, mtape = self._forward(params)
        m = mtape[-1, :, 0]
        n = self.X.shape[0]
        value = float(bce(sigmoid(m), self.t).mean())
        dm = np.ascontiguousarray((bce_logit_grad(m, self.t) / n)[:, None])
        mspec = self.mi.spec
        _, dfeats = _kernels.backward(self.mi.params, mspec.widths_array, mspec.act_code, mtape, dm)
        dp = np.zeros_like(p)
        np.put_along_axis(dp, order, dfeats, axis=1)
        dz = np.ascontiguousarray(p * (dp - (dp * p).sum(axis=1, keepdims=True)))
        g, _ = _kernels.backward(params, self.spec.widths_array, self.spec.act_code, tape, dz)
        return value, g

    def grad(self, params) -> np.ndarray:
        return self.value_and_grad(params)[1]


def forgetting_loss(target_spec, target_params, mi: MiModel, audit: AuditSet) -> float:
    return ForgettingLoss(target_spec, mi, audit).loss(target_params)


def mi_accuracy(eval_model: MiModel, target_spec, target_params, members: Dataset, nonmembers=None) -> float:
    """Fraction of ``members`` the attacker flags as member (score >= 0.5).

    ``nonmembers`` is accepted for symmetry with :func:`attack_accuracy` and
    does not affect the result.
    """
    if len(members) == 0:
        raise ValueError("empty member set")
    probs = eval_model.member_prob(attack_features(target_spec, target_params, members.X))
    return float(np.mean(probs >= 0.5))


def attack_accuracy(model: MiModel, target_spec, target_params, members: Dataset, nonmembers: Dataset) -> float:
    """Balanced accuracy of an attacker on labelled member/non-member sets."""
    pm = model.member_prob(attack_features(target_spec, target_params, members.X))
    pn = model.member_prob(attack_features(target_spec, target_params, nonmembers.X))
    return 0.5 * (float(np.mean(pm >= 0.5)) + float(np.mean(pn < 0.5)))
