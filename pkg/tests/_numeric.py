"""Finite-difference helpers shared by the gradient tests."""

import numpy as np


def central_diff(fn, x, h=1e-5):
    x = np.array(x, dtype=float)
    out = np.empty_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        up = fn(x)
        x[i] = old - h
        down = fn(x)
        x[i] = old
        out[i] = (up - down) / (2 * h)
    return out


def max_rel_error(analytic, numeric, floor=1e-8):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def separated_scores(gen, R, q_th, gap=1e-3, lo=0.01, hi=0.99):
    """Scores in (lo, hi) with pairwise gaps and distance from q_th at least ``gap``."""
    while True:
        q = gen.uniform(lo, hi, R)
        pts = np.sort(np.append(q, q_th))
        if np.min(np.diff(pts)) >= gap:
            return q
