"""
Seeded Monte Carlo plumbing shared by the walk and percolation modules.

Every sample i of a stream gets its own seed, stream_seed XOR (i * golden gamma),
so results do not depend on how samples are split across replicas or workers.
"""
import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, asdict
from functools import partial

import numpy as np
from scipy import stats

from config import DEFAULT_CONFIDENCE, GOLDEN_GAMMA, MASK64, PreconditionError

_G = np.uint64(GOLDEN_GAMMA)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / (1 << 53)


def mix64(x):
    """SplitMix64 finaliser, vectorised over uint64 arrays."""
    z = np.atleast_1d(np.asarray(x, dtype=np.uint64)).copy()
    with np.errstate(over='ignore'):
        z ^= z >> np.uint64(30)
        z *= _M1
        z ^= z >> np.uint64(27)
        z *= _M2
        z ^= z >> np.uint64(31)
    return z


def counter_uniforms(key, counters):
    """
    Counter-based uniforms in [0, 1): draw number `c` under `key` depends on
    (key, c) only, so any subset of draws can be regenerated in any order.
    """
    k = mix64(np.uint64(int(key) & MASK64))[0]
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over='ignore'):
        state = k + (c + np.uint64(1)) * _G
    return (mix64(state) >> np.uint64(11)).astype(np.float64) * _INV53


def stream_seed(master_seed, tag):
    """Seed of an independent sample pool, e.g. the three pools of the surgery check."""
    code = int.from_bytes(hashlib.sha256(str(tag).encode()).digest()[:8], 'little')
    return int(mix64(np.uint64((int(master_seed) ^ code) & MASK64))[0])


def sample_seed(seed, i):
    return (int(seed) ^ ((int(i) * GOLDEN_GAMMA) & MASK64)) & MASK64


def _run_chunk(sample_fn, seed, start, stop):
    rows = [np.atleast_1d(np.asarray(sample_fn(sample_seed(seed, i)), dtype=np.float64))
            for i in range(start, stop)]
    return start, np.vstack(rows) if rows else None


def run_samples(sample_fn, n_samples, seed, replicas=1, workers=1, verbose=False):
    """
    Evaluates sample_fn(seed_i) for i < n_samples and returns the rows stacked
    in sample order. sample_fn must be picklable when workers > 1.
    """
    n_samples = int(n_samples)
    if n_samples < 1:
        raise PreconditionError("n_samples must be >= 1")
    replicas = max(1, min(int(replicas), n_samples))
    bounds = np.linspace(0, n_samples, replicas + 1).astype(int)
    chunks = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if verbose:
        print(f"Sampling {n_samples} configurations in {len(chunks)} replica(s)...")

    parts = {}
    workers = workers or os.cpu_count() or 1
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_run_chunk, sample_fn, seed, a, b) for a, b in chunks]
            for future in as_completed(futures):
                start, block = future.result()
                parts[start] = block
    else:
        for a, b in chunks:
            start, block = _run_chunk(sample_fn, seed, a, b)
            parts[start] = block
    # fixed combination order, whatever finished first
    return np.vstack([parts[a] for a, _ in chunks])


def bind(fn, *args, **kwargs):
    return partial(fn, *args, **kwargs)


def _z(confidence):
    return stats.norm.ppf(0.5 + confidence / 2)


def wilson_interval(successes, n, confidence=DEFAULT_CONFIDENCE):
    if n <= 0:
        raise PreconditionError("Wilson interval needs at least one sample")
    z = _z(confidence)
    phat = successes / n
    denom = 1 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, min(centre - half, phat)), min(1.0, max(centre + half, phat))


@dataclass
class Estimate:
    n_samples: int
    value_sum: float
    mean: float
    ci_low: float
    ci_high: float
    confidence: float
    kind: str = 'proportion'
    sq_sum: float = 0.0

    @classmethod
    def proportion(cls, hits, confidence=DEFAULT_CONFIDENCE):
        hits = np.asarray(hits, dtype=bool)
        n, k = len(hits), int(hits.sum())
        low, high = wilson_interval(k, n, confidence)
        return cls(n, float(k), k / n, low, high, confidence, 'proportion')

    @classmethod
    def sample_mean(cls, values, confidence=DEFAULT_CONFIDENCE):
        values = np.asarray(values, dtype=np.float64)
        n = len(values)
        if n == 0:
            raise PreconditionError("mean estimate needs at least one sample")
        total = float(np.sum(values))
        mean = total / n
        if n < 2:
            return cls(n, total, mean, mean, mean, confidence, 'mean', float(np.sum(values ** 2)))
        sem = float(np.std(values, ddof=1)) / math.sqrt(n)
        half = stats.t.ppf(0.5 + confidence / 2, n - 1) * sem
        return cls(n, total, mean, mean - half, mean + half, confidence, 'mean',
                   float(np.sum(values ** 2)))

    def _two_sided_for(self, one_sided):
        # a one-sided bound at level c is one end of the two-sided 2c-1 interval
        level = 2 * one_sided - 1
        if self.kind == 'proportion':
            return wilson_interval(self.value_sum, self.n_samples, level)
        if self.n_samples < 2:
            return self.mean, self.mean
        var = (self.sq_sum - self.n_samples * self.mean ** 2) / (self.n_samples - 1)
        sem = math.sqrt(max(var, 0.0) / self.n_samples)
        half = stats.t.ppf(0.5 + level / 2, self.n_samples - 1) * sem
        return self.mean - half, self.mean + half

    def lower_bound(self, one_sided=DEFAULT_CONFIDENCE):
        return self._two_sided_for(one_sided)[0]

    def upper_bound(self, one_sided=DEFAULT_CONFIDENCE):
        return self._two_sided_for(one_sided)[1]

    def to_dict(self):
        return asdict(self)
