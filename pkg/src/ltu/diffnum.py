"""Small differentiable classifiers: dense MLPs with exact gradients and HVPs.

Parameters are always a flat float64 vector; :class:`ModelSpec` knows how to
slice it into per-layer weights and biases. Loss objects (cross-entropy,
binary cross-entropy, quadratics) expose ``loss(params)`` and
``grad(params)``; the cross-entropy loss additionally has an exact
Hessian-vector product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

EPS = 1e-12

_ACTIVATIONS = {"tanh": _kernels.TANH, "relu": _kernels.RELU}


class ShapeError(ValueError):
    """Raised when arrays do not fit the model they are used with."""


class NonFiniteError(ArithmeticError):
    """Raised when a NaN or inf shows up in a computation."""


@dataclass(frozen=True)
class ModelSpec:
    layer_widths: tuple[int, ...]
    activation: str = "tanh"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("a model needs at least an input and an output width")
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_inputs(self) -> int:
        return self.layer_widths[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def n_params(self) -> int:
        w = self.layer_widths
        return sum(w[i] * w[i + 1] + w[i + 1] for i in range(len(w) - 1))

    @property
    def widths_array(self) -> np.ndarray:
        return np.asarray(self.layer_widths, dtype=np.int64)

    @property
    def act_code(self) -> int:
        return _ACTIVATIONS[self.activation]

    def unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Split a flat vector into ``[(W, b), ...]`` views."""
        check_params(self, params)
        out = []
        off = 0
        w = self.layer_widths
        for i in range(self.n_layers):
            fi, fo = w[i], w[i + 1]
            W = params[off : off + fi * fo].reshape(fi, fo)
            off += fi * fo
            out.append((W, params[off : off + fo]))
            off += fo
        return out

    def to_dict(self) -> dict:
        return {"layer_widths": list(self.layer_widths), "activation": self.activation}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(tuple(d["layer_widths"]), d.get("activation", "tanh"))


def check_params(spec: ModelSpec, params: np.ndarray) -> np.ndarray:
    params = np.asarray(params)
    if params.ndim != 1 or params.shape[0] != spec.n_params:
        raise ShapeError(
            f"parameter vector has shape {params.shape}, model needs ({spec.n_params},)"
        )
    if not np.all(np.isfinite(params)):
        raise NonFiniteError("parameter vector contains non-finite entries")
    return params


def init_params(spec: ModelSpec, rng: np.random.Generator | int) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(rng)
    chunks = []
    w = spec.layer_widths
    for i in range(spec.n_layers):
        fi, fo = w[i], w[i + 1]
        limit = np.sqrt(6.0 / (fi + fo))
        chunks.append(rng.uniform(-limit, limit, size=fi * fo))
        chunks.append(np.zeros(fo))
    return np.concatenate(chunks)


def _as_features(spec: ModelSpec, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != spec.n_inputs:
        raise ShapeError(
            f"layer 0 expects inputs of width {spec.n_inputs}, got array of shape {X.shape}"
        )
    return X


def forward_tape(spec: ModelSpec, params: np.ndarray, X) -> np.ndarray:
    params = np.ascontiguousarray(check_params(spec, params), dtype=np.float64)
    X = _as_features(spec, X)
    return _kernels.forward_tape(params, spec.widths_array, spec.act_code, X)


def forward(spec: ModelSpec, params: np.ndarray, X) -> np.ndarray:
    """Logits of shape ``(n, n_outputs)``."""
    tape = forward_tape(spec, params, X)
    return tape[-1, :, : spec.n_outputs].copy()


def embed(spec: ModelSpec, params: np.ndarray, X) -> np.ndarray:
    """Penultimate-layer activations (the input itself for a single-layer model)."""
    tape = forward_tape(spec, params, X)
    return tape[-2, :, : spec.layer_widths[-2]].copy()


def _check_tape(tape: np.ndarray) -> None:
    for l in range(tape.shape[0]):
        if not np.all(np.isfinite(tape[l])):
            raise NonFiniteError(f"non-finite values in layer {l} activations")


# ---------------------------------------------------------------------------
# pointwise functions
# ---------------------------------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    return labels


def cross_entropy(logits: np.ndarray, labels) -> float:
    """Mean softmax cross-entropy."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = _check_labels(labels, logits.shape[1])
    if labels.shape[0] != logits.shape[0]:
        raise ShapeError(f"{logits.shape[0]} logit rows but {labels.shape[0]} labels")
    lp = log_softmax(logits)
    return float(-lp[np.arange(labels.shape[0]), labels].mean())


def bce(prob, target):
    """Binary cross-entropy with the probability clamped to ``[EPS, 1 - EPS]``.

    Works elementwise; returns a float for scalar input.
    """
    p = np.clip(np.asarray(prob, dtype=np.float64), EPS, 1.0 - EPS)
    t = np.asarray(target, dtype=np.float64)
    out = -(t * np.log(p) + (1.0 - t) * np.log1p(-p))
    return float(out) if out.ndim == 0 else out


def bce_logit_grad(logit: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d bce(sigmoid(logit), target) / d logit, zero where the clamp is active."""
    p = sigmoid(logit)
    g = p - target
    g[(p <= EPS) | (p >= 1.0 - EPS)] = 0.0
    return g


# ---------------------------------------------------------------------------
# losses over a fixed batch
# ---------------------------------------------------------------------------


class CrossEntropyLoss:
    """Mean cross-entropy of an MLP over a captured batch."""

    def __init__(self, spec: ModelSpec, X, y):
        self.spec = spec
        self.X = _as_features(spec, X)
        self.y = _check_labels(y, spec.n_outputs)
        if self.y.shape[0] != self.X.shape[0]:
            raise ShapeError(f"{self.X.shape[0]} rows but {self.y.shape[0]} labels")
        if self.X.shape[0] < 1:
            raise ShapeError("empty batch")

    def _tape(self, params):
        tape = forward_tape(self.spec, params, self.X)
        _check_tape(tape)
        return tape

    def loss(self, params: np.ndarray) -> float:
        tape = self._tape(params)
        return cross_entropy(tape[-1, :, : self.spec.n_outputs], self.y)

    def _dlogits(self, logits):
        n = self.X.shape[0]
        d = softmax(logits)
        d[np.arange(n), self.y] -= 1.0
        return d / n

    def value_and_grad(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        params = np.ascontiguousarray(params, dtype=np.float64)
        tape = self._tape(params)
        logits = tape[-1, :, : self.spec.n_outputs]
        dout = np.ascontiguousarray(self._dlogits(logits))
        g, _ = _kernels.backward(params, self.spec.widths_array, self.spec.act_code, tape, dout)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient")
        return cross_entropy(logits, self.y), g

    def grad(self, params: np.ndarray) -> np.ndarray:
        return self.value_and_grad(params)[1]

    def hvp(self, params: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Exact Hessian-vector product by forward-over-reverse (R-operator)."""
        spec = self.spec
        layers = spec.unpack(np.asarray(params, dtype=np.float64))
        vlayers = spec.unpack(np.asarray(v, dtype=np.float64))
        tanh = spec.activation == "tanh"
        n = self.X.shape[0]

        # acts/racts: post-activation values and their R-values; rzs: R of pre-activations
        acts, racts, rzs = [self.X], [np.zeros_like(self.X)], [None]
        for i, ((W, b), (V, vb)) in enumerate(zip(layers, vlayers)):
            a, ra = acts[-1], racts[-1]
            z = a @ W + b
            rz = ra @ W + a @ V + vb
            rzs.append(rz)
            if i < len(layers) - 1:
                if tanh:
                    z = np.tanh(z)
                    rz = (1.0 - z * z) * rz
                else:
                    rz = (z > 0) * rz
                    z = np.maximum(z, 0.0)
            acts.append(z)
            racts.append(rz)

        p = softmax(acts[-1])
        rlog = racts[-1]
        delta = self._dlogits(acts[-1])
        rdelta = p * (rlog - (p * rlog).sum(axis=1, keepdims=True)) / n

        out = []
        for i in range(len(layers) - 1, -1, -1):
            W, _ = layers[i]
            V, _ = vlayers[i]
            a, ra = acts[i], racts[i]
            out.append((ra.T @ delta + a.T @ rdelta, rdelta.sum(axis=0)))
            if i == 0:
                break
            da = delta @ W.T
            rda = rdelta @ W.T + delta @ V.T
            if tanh:
                d1 = 1.0 - a * a
                d2 = -2.0 * a * d1
                delta, rdelta = da * d1, rda * d1 + da * d2 * rzs[i]
            else:
                mask = a > 0
                delta, rdelta = da * mask, rda * mask
        chunks = []
        for gW, gb in reversed(out):
            chunks.append(gW.ravel())
            chunks.append(gb)
        return np.concatenate(chunks)


class BinaryCrossEntropyLoss:
    """Mean clamped BCE of a single-logit MLP head against 0/1 targets."""

    def __init__(self, spec: ModelSpec, X, targets):
        if spec.n_outputs != 1:
            raise ShapeError("binary head must have exactly one output")
        self.spec = spec
        self.X = _as_features(spec, X)
        self.t = np.asarray(targets, dtype=np.float64).ravel()
        if self.t.shape[0] != self.X.shape[0]:
            raise ShapeError(f"{self.X.shape[0]} rows but {self.t.shape[0]} targets")

    def value_and_grad(self, params):
        params = np.ascontiguousarray(params, dtype=np.float64)
        tape = forward_tape(self.spec, params, self.X)
        _check_tape(tape)
        logit = tape[-1, :, 0]
        n = self.X.shape[0]
        value = float(bce(sigmoid(logit), self.t).mean())
        dout = np.ascontiguousarray((bce_logit_grad(logit, self.t) / n)[:, None])
        g, _ = _kernels.backward(params, self.spec.widths_array, self.spec.act_code, tape, dout)
        return value, g

    def loss(self, params):
        logit = forward(self.spec, params, self.X)[:, 0]
        return float(bce(sigmoid(logit), self.t).mean())

    def grad(self, params):
        return self.value_and_grad(params)[1]


class QuadraticLoss:
    """``0.5 * sum(c * (theta - center)**2)``; exact gradient and HVP."""

    def __init__(self, coef, center=0.0):
        self.coef = np.asarray(coef, dtype=np.float64)
        self.center = np.asarray(center, dtype=np.float64)

    def loss(self, params):
        d = np.asarray(params, dtype=np.float64) - self.center
        return float(0.5 * np.sum(self.coef * d * d))

    def grad(self, params):
        return self.coef * (np.asarray(params, dtype=np.float64) - self.center)

    def hvp(self, params, v):
        return self.coef * np.asarray(v, dtype=np.float64)


class LinearLoss:
    """``a . theta``: constant gradient, zero Hessian."""

    def __init__(self, a):
        self.a = np.asarray(a, dtype=np.float64)

    def loss(self, params):
        return float(self.a @ np.asarray(params, dtype=np.float64))

    def grad(self, params):
        return self.a.copy()

    def hvp(self, params, v):
        return np.zeros_like(self.a)


# ---------------------------------------------------------------------------
# gradient-level operations
# ---------------------------------------------------------------------------


def gradient(loss, params: np.ndarray) -> np.ndarray:
    g = np.asarray(loss.grad(params), dtype=np.float64)
    if g.shape != np.shape(params):
        raise ShapeError(f"gradient shape {g.shape} != parameter shape {np.shape(params)}")
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("non-finite gradient")
    return g


def hvp(loss, params: np.ndarray, v: np.ndarray, method: str = "fd") -> np.ndarray:
    """Hessian of ``loss`` at ``params`` times ``v``.

    ``method="fd"`` takes central differences of the exact gradient along
    ``v`` with step ``1e-4 / |v|``; ``method="exact"`` uses the loss's own
    ``hvp`` (available for :class:`CrossEntropyLoss` and the toy losses).
    """
    params = np.asarray(params, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != params.shape:
        raise ShapeError(f"direction shape {v.shape} != parameter shape {params.shape}")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return np.zeros_like(params)
    if method == "exact":
        return np.asarray(loss.hvp(params, v), dtype=np.float64)
    if method != "fd":
        raise ValueError(f"unknown hvp method {method!r}")
    h = 1e-4 / norm
    return (loss.grad(params + h * v) - loss.grad(params - h * v)) / (2.0 * h)


def sgd_step(params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    if not np.isfinite(lr):
        raise ValueError(f"learning rate must be finite, got {lr}")
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise ShapeError(f"parameter shape {params.shape} != gradient shape {grad.shape}")
    return params - lr * grad


def predict(spec: ModelSpec, params: np.ndarray, X) -> np.ndarray:
    return np.argmax(forward(spec, params, X), axis=1)


def accuracy(spec: ModelSpec, params: np.ndarray, X, y) -> float:
    y = np.asarray(y)
    if y.shape[0] == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean(predict(spec, params, X) == y))
