"""Conflict-aware combination of a remembering and a forgetting gradient."""

from __future__ import annotations

import numpy as np

NORM_FLOOR = 1e-12


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"gradient shapes differ: {a.shape} vs {b.shape}")
    return a, b


def cosine(a, b) -> float:
    """Cosine similarity; 0 when either vector has norm below 1e-12."""
    a, b = _pair(a, b)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na < NORM_FLOOR or nb < NORM_FLOOR:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def harmonize(g_r, g_f) -> np.ndarray:
    """Project ``g_f`` onto the complement of ``g_r`` if the two conflict.

    Only a strictly negative cosine counts as a conflict; otherwise a copy
    of ``g_f`` is returned unchanged. ``g_r`` itself is never modified.
    """
    g_r, g_f = _pair(g_r, g_f)
    if cosine(g_r, g_f) < 0.0:
        return g_f - (g_f @ g_r) / (g_r @ g_r) * g_r
    return g_f.copy()


def combine(g_r, g_f_prime) -> np.ndarray:
    g_r, g_f_prime = _pair(g_r, g_f_prime)
    return g_r + g_f_prime
