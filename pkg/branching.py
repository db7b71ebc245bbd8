"""
Exact law of the root cluster of bond percolation on a ball of the d-regular
tree, by generating-function recursion over depth. Used as the oracle for the
Monte Carlo estimators.

A vertex at depth j < r has d - 1 children, the root has d, leaves none.
Vertex count: Q_r = x, Q_j = x (1 - p + p Q_{j+1})^{d-1}, root x (1 - p + p Q_1)^d.
Touched edges: a tree cluster K has |E(K)| = 1 + sum_{v in K} (deg v - 1), so
the same recursion with per-vertex weight z^{deg v - 1} and one extra z.
"""
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from config import PreconditionError
from graphs import tree_ball_size


@dataclass
class TreeDistribution:
    """probs[k] = Pr(X = k) for k <= max_size; truncated_mass = Pr(X > max_size)."""
    probs: np.ndarray
    truncated_mass: float
    quantity: str
    degree: int
    radius: int
    p: float

    @property
    def max_size(self):
        return len(self.probs) - 1

    def pmf(self, k):
        return float(self.probs[k]) if 0 <= k <= self.max_size else 0.0

    def tail(self, n):
        """Pr(X >= n)."""
        n = int(n)
        if n <= 0:
            return 1.0
        if n > self.max_size + 1:
            raise PreconditionError(f"tail({n}) is beyond the truncation at {self.max_size}")
        return max(0.0, 1.0 - float(self.probs[:n].sum()))

    def expect(self, f):
        """sum_k f(k) Pr(X = k) over the untruncated range."""
        ks = np.arange(1, len(self.probs))
        return float(np.dot(f(ks.astype(np.float64)), self.probs[1:]))


def _mul(a, b, size):
    out = fftconvolve(a, b)[:size]
    # fft round-off shows up as tiny negative coefficients
    return np.clip(out, 0.0, None)


def _pow(a, e, size):
    out = np.zeros(size)
    out[0] = 1.0
    for _ in range(e):
        out = _mul(out, a, size)
    return out


def _shift(a, by, size):
    out = np.zeros(size)
    if by < size:
        out[by:] = a[:size - by]
    return out


def _recursion(d, r, p, size, weight_inner, weight_leaf, weight_root, extra):
    if d < 3 or r < 1:
        raise PreconditionError("tree needs degree >= 3 and radius >= 1")
    if not 0.0 <= p <= 1.0:
        raise PreconditionError("p must be in [0, 1]")
    q = _shift(np.eye(1, size)[0], weight_leaf, size)
    for _ in range(r - 1):
        branch = p * q
        branch[0] += 1 - p
        q = _shift(_pow(branch, d - 1, size), weight_inner, size)
    branch = p * q
    branch[0] += 1 - p
    return _shift(_pow(branch, d, size), weight_root + extra, size)


def _finish(probs, quantity, d, r, p):
    total = float(probs.sum())
    return TreeDistribution(probs=probs, truncated_mass=max(0.0, 1.0 - total),
                            quantity=quantity, degree=d, radius=r, p=float(p))


def tree_cluster_distribution(d, r, p, max_size=None):
    """Law of |K_root| on tree_ball(d, r)."""
    full = tree_ball_size(d, r)
    size = (full if max_size is None else min(full, int(max_size))) + 1
    probs = _recursion(int(d), int(r), p, size, 1, 1, 1, 0)
    return _finish(probs, 'vertices', d, r, p)


def tree_touch_distribution(d, r, p, max_size=None):
    """Law of |E(K_root)| on tree_ball(d, r)."""
    edges = tree_ball_size(d, r) - 1
    size = (edges if max_size is None else min(edges, int(max_size))) + 1
    probs = _recursion(int(d), int(r), p, size, d - 1, 0, d - 1, 1)
    return _finish(probs, 'touched_edges', d, r, p)


def bootstrap_exact(d, r, p, beta, max_size=None):
    """E exp[log^beta |K_root|] from the exact law (beta = 0 gives e)."""
    dist = tree_cluster_distribution(d, r, p, max_size)
    return dist.expect(lambda k: np.exp(np.log(k) ** beta)), dist.truncated_mass
