"""Independent reference implementations used as test oracles.

Everything here is deliberately naive (Python loops, full sorts, lists) and
shares no code with the package under test.
"""
import math
from collections import deque

import numpy as np


def loop_infonce(z1, z2, tau):
    n = len(z1)
    acc = 0.0
    for i in range(n):
        logits = [sum(a * b for a, b in zip(z1[i], z2[k])) / tau for k in range(n)]
        m = max(logits)
        denom = sum(math.exp(x - m) for x in logits)
        acc += -(logits[i] - m - math.log(denom))
    return acc / n


def brute_nearest(keys, query):
    """Index of the first (oldest) key with the largest inner product."""
    best, best_i = -math.inf, -1
    for i, k in enumerate(keys):
        s = sum(a * b for a, b in zip(k, query))
        if s > best:
            best, best_i = s, i
    return best_i, best


class ListFifo:
    def __init__(self, capacity):
        self.items = deque(maxlen=capacity)

    def push_batch(self, z1, z2, ids):
        for a, b, i in zip(z1, z2, ids):
            self.items.append((tuple(a), tuple(b), int(i)))


def full_sort_recall(m, k):
    """Stable descending sort per row; ties keep ascending gallery order."""
    m = np.asarray(m)
    hits = 0
    for i, row in enumerate(m.tolist()):
        order = sorted(range(len(row)), key=lambda j: (-row[j], j))
        hits += i in order[:k]
    return hits / len(m)


def central_difference(f, x, step=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        up, down = x.copy(), x.copy()
        up[idx] += step
        down[idx] -= step
        g[idx] = (f(up) - f(down)) / (2 * step)
    return g


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))
