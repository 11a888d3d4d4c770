"""Compiled per-pair SGNS + lazy Adam loops.

Each pair is scored against the current tables, then both of its rows take
one Adam step before the next pair is read. The parallel variant runs pairs
concurrently without locks; overlapping rows are last-write-wins.
"""
import math

import numpy as np

try:
    from numba import njit, prange
except ImportError:  # pragma: no cover - pure-Python fallback, slow but correct
    prange = range

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

# No fast-math: it bought nothing measurable here and lets LLVM fold away the
# isfinite checks that catch diverging pairs.


@njit(cache=True, inline="always")
def _adam_row(vec, m, v, steps, row, grad, lr, b1, b2, eps):
    steps[row] += 1
    t = steps[row]
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    # lr * (m / bc1) / (sqrt(v / bc2) + eps), with the bias corrections folded
    # into one step size
    root = math.sqrt(bc2)
    alpha = lr * root / bc1
    eps_hat = eps * root
    for d in range(vec.shape[1]):
        g = grad[d]
        md = b1 * m[row, d] + (1.0 - b1) * g
        vd = b2 * v[row, d] + (1.0 - b2) * g * g
        m[row, d] = md
        v[row, d] = vd
        vec[row, d] -= alpha * md / (math.sqrt(vd) + eps_hat)


@njit(cache=True, inline="always")
def _one_pair(av, am, avv, ast, tv, tm, tvv, tst, a, t, y, lr, b1, b2, eps, floor, ga, gt):
    dim = av.shape[1]
    s = 0.0
    for d in range(dim):
        s += av[a, d] * tv[t, d]
    if not math.isfinite(s):
        # the log floor would hide this; report it before any row is touched
        return math.nan
    if s >= 0:
        p = 1.0 / (1.0 + math.exp(-s))
    else:
        e = math.exp(s)
        p = e / (1.0 + e)
    loss = -(y * math.log(max(p, floor)) + (1.0 - y) * math.log(max(1.0 - p, floor)))
    c = p - y
    for d in range(dim):
        ga[d] = c * tv[t, d]
        gt[d] = c * av[a, d]
    _adam_row(av, am, avv, ast, a, ga, lr, b1, b2, eps)
    _adam_row(tv, tm, tvv, tst, t, gt, lr, b1, b2, eps)
    return loss


@njit(cache=True)
def train_pairs(av, am, avv, ast, tv, tm, tvv, tst, anchors, targets, labels,
                lr, b1, b2, eps, floor, losses):
    """Sequential pass; returns the index of the first non-finite loss or -1."""
    dim = av.shape[1]
    ga = np.empty(dim)
    gt = np.empty(dim)
    for n in range(labels.shape[0]):
        loss = _one_pair(av, am, avv, ast, tv, tm, tvv, tst, anchors[n], targets[n],
                         float(labels[n]), lr, b1, b2, eps, floor, ga, gt)
        if not math.isfinite(loss):
            return n
        losses[n] = loss
    return -1


@njit(cache=True, parallel=True)
def train_pairs_parallel(av, am, avv, ast, tv, tm, tvv, tst, anchors, targets, labels,
                         lr, b1, b2, eps, floor, losses):
    dim = av.shape[1]
    for n in prange(labels.shape[0]):
        ga = np.empty(dim)
        gt = np.empty(dim)
        losses[n] = _one_pair(av, am, avv, ast, tv, tm, tvv, tst, anchors[n], targets[n],
                              float(labels[n]), lr, b1, b2, eps, floor, ga, gt)
    for n in range(labels.shape[0]):
        if not math.isfinite(losses[n]):
            return n
    return -1
