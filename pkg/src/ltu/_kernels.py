"""Hot loops: dense MLP forward/backward and brute-force distance scans.

Every kernel exists twice, a numba ``@njit`` loop version and a vectorised
numpy version with the same signature. The module-level names
(``forward_tape``, ``backward``, ``pairwise_sqdist``, ``nearest_index``) are
bound to the numba versions unless ``LTU_DISABLE_NUMBA`` is set to a truthy
value or numba cannot be imported.

Parameter layout for a network with widths ``w_0 .. w_L``: for each layer,
the weight matrix of shape ``(w_l, w_{l+1})`` in row-major order followed by
the bias of length ``w_{l+1}``.

A *tape* is a ``(L + 1, n, max(w))`` array: slot 0 holds the input, slots
``1..L-1`` the post-activation hidden values, slot ``L`` the output logits.
Unused columns are zero.
"""

from __future__ import annotations

import math
import os

import numpy as np

TANH = 0
RELU = 1

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def _flag_set(name: str) -> bool:
    return os.environ.get(name, "").strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAVE_NUMBA and not _flag_set("LTU_DISABLE_NUMBA")


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------


def _forward_numpy(params, widths, act, X):
    n = X.shape[0]
    L = widths.shape[0] - 1
    tape = np.zeros((L + 1, n, int(widths.max())))
    tape[0, :, : widths[0]] = X
    a = X
    off = 0
    for l in range(L):
        fi, fo = widths[l], widths[l + 1]
        W = params[off : off + fi * fo].reshape(fi, fo)
        off += fi * fo
        b = params[off : off + fo]
        off += fo
        z = a @ W + b
        if l < L - 1:
            z = np.tanh(z) if act == TANH else np.maximum(z, 0.0)
        tape[l + 1, :, :fo] = z
        a = z
    return tape


def _backward_numpy(params, widths, act, tape, dout):
    L = widths.shape[0] - 1
    offs = np.zeros(L, dtype=np.int64)
    for l in range(1, L):
        offs[l] = offs[l - 1] + widths[l - 1] * widths[l] + widths[l]
    grad = np.zeros(params.shape[0])
    delta = dout
    dX = None
    for l in range(L - 1, -1, -1):
        fi, fo = widths[l], widths[l + 1]
        woff = offs[l]
        boff = woff + fi * fo
        a_prev = tape[l, :, :fi]
        W = params[woff:boff].reshape(fi, fo)
        grad[woff:boff] = (a_prev.T @ delta).ravel()
        grad[boff : boff + fo] = delta.sum(axis=0)
        da = delta @ W.T
        if l > 0:
            if act == TANH:
                delta = da * (1.0 - a_prev * a_prev)
            else:
                delta = da * (a_prev > 0.0)
        else:
            dX = da
    return grad, dX


def _pairwise_sqdist_numpy(A, B):
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _nearest_index_numpy(A, B):
    # argmin returns the first minimum, i.e. the lowest index on ties
    return np.argmin(_pairwise_sqdist_numpy(A, B), axis=1)


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------


@njit(fastmath=True, cache=True)
def _tanh_inplace(z):
    # exp-based tanh: fastmath lets the exp loop vectorise, scalar math.tanh does not
    n, m = z.shape
    for i in range(n):
        for j in range(m):
            x = z[i, j]
            e = math.exp(-2.0 * abs(x))
            t = (1.0 - e) / (1.0 + e)
            z[i, j] = t if x >= 0.0 else -t


@njit(cache=True)
def _forward_numba(params, widths, act, X):
    n = X.shape[0]
    L = widths.shape[0] - 1
    tape = np.zeros((L + 1, n, widths.max()))
    tape[0, :, : widths[0]] = X
    a = np.ascontiguousarray(X)
    off = 0
    for l in range(L):
        fi = widths[l]
        fo = widths[l + 1]
        W = params[off : off + fi * fo].reshape(fi, fo)
        b = params[off + fi * fo : off + fi * fo + fo]
        off += fi * fo + fo
        z = np.dot(a, W)
        for i in range(n):
            for o in range(fo):
                z[i, o] += b[o]
        if l < L - 1:
            if act == 0:
                _tanh_inplace(z)
            else:
                for i in range(n):
                    for o in range(fo):
                        if z[i, o] < 0.0:
                            z[i, o] = 0.0
        tape[l + 1, :, :fo] = z
        a = z
    return tape


@njit(cache=True)
def _backward_numba(params, widths, act, tape, dout):
    L = widths.shape[0] - 1
    n = dout.shape[0]
    offs = np.zeros(L, dtype=np.int64)
    for l in range(1, L):
        offs[l] = offs[l - 1] + widths[l - 1] * widths[l] + widths[l]
    grad = np.zeros(params.shape[0])
    delta = np.ascontiguousarray(dout)
    dX = np.zeros((n, widths[0]))
    for l in range(L - 1, -1, -1):
        fi = widths[l]
        fo = widths[l + 1]
        woff = offs[l]
        boff = woff + fi * fo
        a = np.ascontiguousarray(tape[l, :, :fi])
        W = params[woff:boff].reshape(fi, fo)
        grad[woff:boff] = np.dot(a.T, delta).ravel()
        for i in range(n):
            for o in range(fo):
                grad[boff + o] += delta[i, o]
        da = np.dot(delta, W.T)
        if l > 0:
            for i in range(n):
                for k in range(fi):
                    if act == 0:
                        da[i, k] *= 1.0 - a[i, k] * a[i, k]
                    elif a[i, k] <= 0.0:
                        da[i, k] = 0.0
            delta = da
        else:
            dX = da
    return grad, dX


@njit(cache=True)
def _pairwise_sqdist_numba(A, B):
    n, d = A.shape
    m = B.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(d):
                t = A[i, k] - B[j, k]
                s += t * t
            out[i, j] = s
    return out


@njit(cache=True)
def _nearest_index_numba(A, B):
    n, d = A.shape
    m = B.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        best = np.inf
        arg = 0
        for j in range(m):
            s = 0.0
            for k in range(d):
                t = A[i, k] - B[j, k]
                s += t * t
            if s < best:
                best = s
                arg = j
        out[i] = arg
    return out


BACKENDS = {
    "numpy": {
        "forward_tape": _forward_numpy,
        "backward": _backward_numpy,
        "pairwise_sqdist": _pairwise_sqdist_numpy,
        "nearest_index": _nearest_index_numpy,
    },
    "numba": {
        "forward_tape": _forward_numba,
        "backward": _backward_numba,
        "pairwise_sqdist": _pairwise_sqdist_numba,
        "nearest_index": _nearest_index_numba,
    },
}

BACKEND = "numba" if USE_NUMBA else "numpy"

forward_tape = BACKENDS[BACKEND]["forward_tape"]
backward = BACKENDS[BACKEND]["backward"]
pairwise_sqdist = BACKENDS[BACKEND]["pairwise_sqdist"]
nearest_index = BACKENDS[BACKEND]["nearest_index"]
