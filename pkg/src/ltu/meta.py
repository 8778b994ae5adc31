"""One-step meta-optimisation: tune on a support loss, test on query losses.

The meta objective is

    J(theta) = S(theta) + sum_i Q_i(theta - alpha * grad S(theta))

and its exact gradient is

    grad S(theta) + sum_i (I - alpha * H_S(theta)) q_i,   q_i = grad Q_i(theta_tau)

where ``H_S`` is the Hessian of the support loss. Because the Hessian term is
linear, the query gradients are summed first and a single Hessian-vector
product is taken. ``first_order`` mode drops the Hessian term.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .diffnum import NonFiniteError, gradient, hvp, sgd_step


class LossEvaluator(Protocol):
    def loss(self, params: np.ndarray) -> float: ...

    def grad(self, params: np.ndarray) -> np.ndarray: ...


@dataclass
class MetaTask:
    support: LossEvaluator
    queries: Sequence[LossEvaluator]

    def __post_init__(self):
        if len(self.queries) < 1:
            raise ValueError("a meta task needs at least one query evaluator")


@dataclass(frozen=True)
class MetaConfig:
    alpha: float = 0.05
    mode: str = "exact"
    hvp_method: str = "fd"

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise ValueError(f"alpha must be finite and non-negative, got {self.alpha}")
        if self.mode not in ("exact", "first_order"):
            raise ValueError(f"unknown meta mode {self.mode!r}")


def _support_value_and_grad(task: MetaTask, params):
    vg = getattr(task.support, "value_and_grad", None)
    if vg is not None:
        value, g = vg(params)
    else:
        value, g = task.support.loss(params), task.support.grad(params)
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("non-finite support gradient")
    return float(value), np.asarray(g, dtype=np.float64)


def meta_tune(params: np.ndarray, task: MetaTask, cfg: MetaConfig) -> np.ndarray:
    """The temporary parameters after one support step of size ``alpha``."""
    g = gradient(task.support, params)
    return sgd_step(params, g, cfg.alpha)


def meta_test_losses(temp_params: np.ndarray, task: MetaTask) -> list[float]:
    return [float(q.loss(temp_params)) for q in task.queries]


def meta_objective(params: np.ndarray, task: MetaTask, cfg: MetaConfig) -> float:
    return float(task.support.loss(params)) + sum(meta_test_losses(meta_tune(params, task, cfg), task))


def meta_value_and_gradient(params: np.ndarray, task: MetaTask, cfg: MetaConfig) -> tuple[float, np.ndarray]:
    """Meta objective and its gradient, sharing the support-gradient pass."""
    params = np.asarray(params, dtype=np.float64)
    s_val, s_grad = _support_value_and_grad(task, params)
    temp = sgd_step(params, s_grad, cfg.alpha)
    q_val = 0.0
    q_sum = np.zeros_like(params)
    # fixed index order keeps the sum bitwise reproducible
    for q in task.queries:
        vg = getattr(q, "value_and_grad", None)
        if vg is not None:
            v, g = vg(temp)
        else:
            v, g = q.loss(temp), q.grad(temp)
        q_val += float(v)
        q_sum += g
    total = s_grad + q_sum
    if cfg.mode == "exact" and cfg.alpha != 0.0:
        total = total - cfg.alpha * hvp(task.support, params, q_sum, method=cfg.hvp_method)
    if not np.all(np.isfinite(total)):
        raise NonFiniteError("non-finite meta gradient")
    return s_val + q_val, total


def meta_gradient(params: np.ndarray, task: MetaTask, cfg: MetaConfig) -> np.ndarray:
    return meta_value_and_gradient(params, task, cfg)[1]
