"""
Bernoulli bond percolation: whole configurations (union-find), lazy cluster
exploration, Monte Carlo estimators and the percolation inequality checks.

Edge e of sample seed s is open iff U(s, e) < p, with U the counter-based
uniform of montecarlo.py. A full configuration and a lazy exploration with the
same seed therefore see the same open edges, and raising p only opens edges.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import shortest_path

from config import (DEFAULT_CONFIDENCE, DENSE_MAX_VERTICES, MIN_CHECK_SAMPLES, MTP_TOL,
                    THEOREM_SLACK, PreconditionError)
from graphs import (TRANSITIVE_FAMILIES, ball, distances_from, edge_id, gather_slots,
                    interior_radius, representative_edge, transitive_degree)
from montecarlo import Estimate, bind, counter_uniforms, run_samples, stream_seed
from report import inputs_digest
from walks import delta, evolve

GHOST_CONSTANT = 82
QUANTITIES = ('edges', 'vertices')


class UnionFind:
    """Disjoint sets over 0..n-1 with union by rank and path compression."""

    def __init__(self, n):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x, y):
        x_root, y_root = self.find(x), self.find(y)
        if x_root == y_root:
            return x_root
        if self.rank[x_root] < self.rank[y_root]:
            x_root, y_root = y_root, x_root
        self.parent[y_root] = x_root
        if self.rank[x_root] == self.rank[y_root]:
            self.rank[x_root] += 1
        return x_root

    def labels(self):
        return np.array([self.find(i) for i in range(len(self.parent))], dtype=np.int64)


@dataclass(eq=False)
class PercConfig:
    """
    One percolation configuration. Cluster ids are union-find roots;
    cluster_sizes / cluster_edge_counts are indexed by id (zero for non-roots).
    """
    open_edges: np.ndarray
    cluster_labels: np.ndarray
    cluster_sizes: np.ndarray
    cluster_edge_counts: np.ndarray
    seed: int
    p: float
    graph: object = field(repr=False, default=None)

    def cluster(self, v):
        return np.flatnonzero(self.cluster_labels == self.cluster_labels[v])

    def size(self, v):
        return int(self.cluster_sizes[self.cluster_labels[v]])

    def touched(self, v):
        return int(self.cluster_edge_counts[self.cluster_labels[v]])

    def connected(self, u, v):
        return bool(self.cluster_labels[u] == self.cluster_labels[v])


def _check_p(p, low_open=False, high_open=False):
    p = float(p)
    if not 0.0 <= p <= 1.0 or (low_open and p == 0.0) or (high_open and p == 1.0):
        raise PreconditionError(f"p = {p} outside the allowed range")
    return p


def edge_uniforms(g, seed):
    return counter_uniforms(seed, np.arange(g.edge_count))


def configuration(g, open_edges, p=None, seed=0):
    """PercConfig for a given boolean open-edge mask (edge-list order)."""
    open_edges = np.asarray(open_edges, dtype=bool)
    if open_edges.shape != (g.edge_count,):
        raise PreconditionError(f"open_edges needs {g.edge_count} entries")
    uf = UnionFind(g.vertex_count)
    for u, v in g.edges[open_edges].tolist():
        uf.union(u, v)
    labels = uf.labels()

    sizes = np.bincount(labels, minlength=g.vertex_count)
    # second pass: every edge touches the cluster(s) of its endpoints, once each
    a, b = labels[g.edges[:, 0]], labels[g.edges[:, 1]]
    counts = np.bincount(a, minlength=g.vertex_count)
    counts += np.bincount(b[a != b], minlength=g.vertex_count)
    return PercConfig(open_edges=open_edges, cluster_labels=labels, cluster_sizes=sizes,
                      cluster_edge_counts=counts, seed=int(seed), p=p, graph=g)


def sample(g, p, seed):
    """Full configuration: one uniform per edge in edge-list order."""
    p = _check_p(p)
    return configuration(g, edge_uniforms(g, seed) < p, p, seed)


@dataclass(eq=False)
class ClusterView:
    members: np.ndarray
    touched: int
    mask: np.ndarray = field(repr=False)

    @property
    def size(self):
        return len(self.members)

    def __contains__(self, v):
        return bool(self.mask[v])


def explore_cluster(g, v, p, seed):
    """K_v of the configuration with this seed, reading only the edges it touches."""
    visited = np.zeros(g.vertex_count, dtype=bool)
    visited[v] = True
    frontier = np.array([v], dtype=np.int64)
    layers = [frontier]
    while len(frontier):
        slots = gather_slots(g.indptr, frontier)
        nbrs = g.indices[slots]
        fresh = ~visited[nbrs]
        if not fresh.any():
            break
        slots, nbrs = slots[fresh], nbrs[fresh]
        is_open = counter_uniforms(seed, g.slot_edges[slots]) < p
        frontier = np.unique(nbrs[is_open])
        visited[frontier] = True
        layers.append(frontier)
    members = np.sort(np.concatenate(layers))
    slots = gather_slots(g.indptr, members)
    internal = int(visited[g.indices[slots]].sum()) // 2
    touched = int(g.degrees[members].sum()) - internal
    return ClusterView(members=members, touched=touched, mask=visited)


# --- per-sample functions (module level so they pickle for worker processes) ---

def _cluster_stats_sample(g, v, p, seed):
    k = explore_cluster(g, v, p, seed)
    return [k.size, k.touched]


def _membership_sample(g, v, targets, p, seed):
    return explore_cluster(g, v, p, seed).mask[targets]


def _ghost_sample(g, u, v, eid, p, seed):
    if counter_uniforms(seed, [eid])[0] < p:
        return [0.0, 0.0]
    ku = explore_cluster(g, u, p, seed)
    if v in ku:
        return [0.0, 0.0]
    kv = explore_cluster(g, v, p, seed)
    return [1.0, min(ku.touched, kv.touched)]


def _walk_in_cluster_sample(g, v, walk_law, beta, p, seed):
    k = explore_cluster(g, v, p, seed)
    return [float(walk_law[k.members].sum()), math.exp(math.log(k.size) ** beta)]


def _chain_sample(g, u, v, targets, walk_law, p, seed):
    ku = explore_cluster(g, u, p, seed)
    kv = explore_cluster(g, v, p, seed)
    head = [ku.size, ku.touched, kv.touched, float(walk_law[ku.members].sum())]
    return np.concatenate([head, ku.mask[targets]])


# --- estimators ---

def _sampling(n_samples, replicas, workers):
    n_samples = int(n_samples)
    if n_samples < 1:
        raise PreconditionError("n_samples must be >= 1")
    return n_samples, replicas, workers


def cluster_stats(g, v, p, n_samples, seed, replicas=1, workers=1):
    """Per-sample (|K_v|, |E(K_v)|), shape (n_samples, 2)."""
    p = _check_p(p)
    n_samples, replicas, workers = _sampling(n_samples, replicas, workers)
    return run_samples(bind(_cluster_stats_sample, g, int(v), p), n_samples, seed,
                       replicas, workers)


def tau_hat(g, u, v, p, n_samples, seed, replicas=1, workers=1, confidence=DEFAULT_CONFIDENCE):
    p = _check_p(p)
    n_samples, replicas, workers = _sampling(n_samples, replicas, workers)
    if u == v:
        return Estimate.proportion(np.ones(n_samples, dtype=bool), confidence)
    rows = run_samples(bind(_membership_sample, g, int(u), np.array([int(v)]), p),
                       n_samples, seed, replicas, workers)
    return Estimate.proportion(rows[:, 0] > 0.5, confidence)


def _pair_estimates(g, base, k, p, n_samples, seed, replicas, workers, confidence):
    """tau_hat(base, w) for every w in ball(base, k), from one exploration per sample."""
    targets = ball(g, base, k).members
    dist = distances_from(g, [base], radius=k)[targets]
    rows = run_samples(bind(_membership_sample, g, int(base), targets, p),
                       n_samples, seed, replicas, workers)
    ests = [Estimate.proportion(rows[:, j] > 0.5, confidence) for j in range(len(targets))]
    return targets, dist, ests


def kappa_hat(g, base_vertex, p, k, n_samples, seed, replicas=1, workers=1,
              confidence=DEFAULT_CONFIDENCE):
    """min over w in ball(base, k) of tau_hat(base, w); base is the orbit representative."""
    p = _check_p(p)
    n_samples, replicas, workers = _sampling(n_samples, replicas, workers)
    if int(k) < 0:
        raise PreconditionError("k must be >= 0")
    _, _, ests = _pair_estimates(g, base_vertex, int(k), p, n_samples, seed, replicas,
                                 workers, confidence)
    return min(ests, key=lambda e: e.mean)


def check_quantity(quantity):
    if quantity not in QUANTITIES:
        raise PreconditionError(f"quantity must be one of {QUANTITIES}, got {quantity!r}")
    return quantity


def cluster_tail_hat(g, v, p, n, n_samples, seed, replicas=1, workers=1,
                     confidence=DEFAULT_CONFIDENCE, quantity='edges'):
    """Pr(|E(K_v)| >= n), or Pr(|K_v| >= n) with quantity='vertices'."""
    check_quantity(quantity)
    if int(n) < 1:
        raise PreconditionError("n must be >= 1")
    stats = cluster_stats(g, v, p, n_samples, seed, replicas, workers)
    col = 1 if quantity == 'edges' else 0
    return Estimate.proportion(stats[:, col] >= int(n), confidence)


def bootstrap_functional(g, v, p, beta, n_samples, seed, replicas=1, workers=1,
                         confidence=DEFAULT_CONFIDENCE):
    """Sample mean of exp[log^beta |K_v|] with a t-interval."""
    beta = float(beta)
    if not 0.0 <= beta < 1.0:
        raise PreconditionError("beta must be in [0, 1)")
    stats = cluster_stats(g, v, p, n_samples, seed, replicas, workers)
    return Estimate.sample_mean(np.exp(np.log(stats[:, 0]) ** beta), confidence)


def implied_c6(c5):
    """E <= C5 (1 + E)^{1/2} rearranges to E <= C6."""
    c5 = float(c5)
    return (c5 ** 2 + math.sqrt(c5 ** 4 + 4 * c5 ** 2)) / 2


def _overlap(a, b):
    return a.ci_low <= b.ci_high and b.ci_low <= a.ci_high


def bootstrap_report(g, v, p, beta, n_samples, seed, c5=None, replicas=1, workers=1,
                     confidence=DEFAULT_CONFIDENCE):
    """bootstrap_functional plus stability over sample prefixes and the implied C6."""
    beta = float(beta)
    if not 0.0 <= beta < 1.0:
        raise PreconditionError("beta must be in [0, 1)")
    stats = cluster_stats(g, v, p, n_samples, seed, replicas, workers)
    values = np.exp(np.log(stats[:, 0]) ** beta)
    n = len(values)
    prefixes = sorted({max(1, n // 4), max(1, n // 2), n})
    ests = [Estimate.sample_mean(values[:m], confidence) for m in prefixes]
    stable = all(_overlap(a, b) for a in ests for b in ests)
    est = ests[-1]
    out = _perc_report('bootstrap', g, p, seed, n, inputs=(v, beta, c5),
                       lhs=est.mean, rhs=None, passed=stable, slack=None,
                       estimates=ests, stable=stable, beta=beta, conditional=c5 is not None)
    if c5 is not None:
        c6 = implied_c6(c5)
        out.update(rhs=c6, slack=c6 - est.lower_bound(confidence), c5=float(c5), c6=c6,
                   **{'pass': stable and est.lower_bound(confidence) <= c6})
    return out


# --- checks ---

def _perc_report(check, g, p, seed, n_samples, inputs, lhs, rhs, passed, slack, **extra):
    out = {
        'check': check,
        'graph': g.describe(),
        'inputs_digest': inputs_digest(g.describe(), p, seed, n_samples, *inputs),
        'p': p,
        'seed': int(seed),
        'n_samples': int(n_samples),
        'lhs': lhs,
        'rhs': rhs,
        'pass': bool(passed),
        'slack': slack,
    }
    if 'estimates' in extra:
        extra['estimates'] = [e.to_dict() for e in extra['estimates']]
    out.update(extra)
    return out


def _require_samples(n_samples):
    if int(n_samples) < MIN_CHECK_SAMPLES:
        raise PreconditionError(f"need at least {MIN_CHECK_SAMPLES} samples for a confidence check")


def insertion_tolerance_check(g, u, v, p, estimate, confidence=DEFAULT_CONFIDENCE):
    """tau(u, v) >= p^{d(u, v)}: fails only if the one-sided upper bound is below it."""
    p = _check_p(p)
    _require_samples(estimate.n_samples)
    d = int(distances_from(g, [u])[v])
    bound = p ** d
    high = estimate.upper_bound(confidence)
    return {
        'check': 'insertion_tolerance',
        'inputs_digest': inputs_digest(g.describe(), u, v, p, estimate.to_dict()),
        'distance': d,
        'lhs': estimate.mean,
        'rhs': bound,
        'pass': bool(high >= bound - THEOREM_SLACK),
        'slack': high - bound,
        'estimates': [estimate.to_dict()],
    }


def two_ghost_event(cfg, e, n):
    """e closed, endpoints in distinct clusters, both touching >= n edges."""
    g = cfg.graph
    eid = int(e) if np.isscalar(e) else edge_id(g, *e)
    u, v = (int(x) for x in g.edges[eid])
    if cfg.open_edges[eid] or cfg.connected(u, v):
        return False
    return cfg.touched(u) >= n and cfg.touched(v) >= n


def ghost_bound(d, p, n):
    return GHOST_CONSTANT * d * math.sqrt((1 - p) / (p * n))


def _require_transitive(g):
    d = transitive_degree(g)
    if d is None:
        raise PreconditionError(f"{g.family_tag} is not a vertex-transitive family")
    return d


def _ghost_rows(g, p, n_samples, seed, replicas, workers):
    u, v = representative_edge(g)
    eid = edge_id(g, u, v)
    return run_samples(bind(_ghost_sample, g, u, v, eid, p), n_samples, seed, replicas, workers)


def two_ghost_sweep(g, p, ns, n_samples, seed, replicas=1, workers=1,
                    confidence=DEFAULT_CONFIDENCE):
    """Two-ghost bound at each n in `ns`, all from the same samples."""
    p = _check_p(p, low_open=True)
    d = _require_transitive(g)
    _require_samples(n_samples)
    rows = _ghost_rows(g, p, n_samples, seed, replicas, workers)
    reports = []
    for n in ns:
        n = int(n)
        if n < 1:
            raise PreconditionError("n must be >= 1")
        est = Estimate.proportion((rows[:, 0] > 0.5) & (rows[:, 1] >= n), confidence)
        bound = ghost_bound(d, p, n)
        low = est.lower_bound(confidence)
        reports.append(_perc_report(
            'two_ghost', g, p, seed, n_samples, inputs=(n,), lhs=est.mean, rhs=bound,
            passed=low <= bound, slack=bound - low, n=n, bound=bound, estimates=[est],
            vacuous=bound >= 1, edge=list(representative_edge(g)),
            interior_radius=interior_radius(g, representative_edge(g)[0])))
    return reports


def two_ghost_check(g, p, n, n_samples, seed, replicas=1, workers=1,
                    confidence=DEFAULT_CONFIDENCE):
    return two_ghost_sweep(g, p, [n], n_samples, seed, replicas, workers, confidence)[0]


def surgery_sweep(g, p, ns, ks, n_samples, seed, replicas=1, workers=1,
                  confidence=DEFAULT_CONFIDENCE):
    """
    P_p(n)^2 - kappa_p(k) <= [sum_{i<k} p^-i] sup_e P_p(S_{e,n}) for every n, k.
    P, kappa and the ghost probability come from three independent pools.
    `literal_lhs` carries the weighted left side [sum p^-i][P^2 - kappa].
    """
    p = _check_p(p, low_open=True, high_open=True)
    _require_transitive(g)
    _require_samples(n_samples)
    ks = [int(k) for k in ks]
    if min(ks) < 1:
        raise PreconditionError("k must be >= 1")
    base, _ = representative_edge(g)

    tails = cluster_stats(g, base, p, n_samples, stream_seed(seed, 'surgery/tail'),
                          replicas, workers)[:, 1]
    _, dist, pair_ests = _pair_estimates(g, base, max(ks), p, n_samples,
                                         stream_seed(seed, 'surgery/kappa'),
                                         replicas, workers, confidence)
    ghosts = _ghost_rows(g, p, n_samples, stream_seed(seed, 'surgery/ghost'), replicas, workers)

    reports = []
    for n in ns:
        n = int(n)
        tail = Estimate.proportion(tails >= n, confidence)
        ghost = Estimate.proportion((ghosts[:, 0] > 0.5) & (ghosts[:, 1] >= n), confidence)
        for k in ks:
            near = [e for e, dd in zip(pair_ests, dist) if dd <= k]
            kappa = min(near, key=lambda e: e.mean)
            kappa_high = min(e.upper_bound(confidence) for e in near)
            weight = sum(p ** (-i) for i in range(k))
            lhs = tail.mean ** 2 - kappa.mean
            lhs_low = tail.lower_bound(confidence) ** 2 - kappa_high
            rhs_high = weight * ghost.upper_bound(confidence)
            reports.append(_perc_report(
                'surgery', g, p, seed, n_samples, inputs=(n, k), lhs=lhs,
                rhs=weight * ghost.mean, passed=lhs_low <= rhs_high,
                slack=rhs_high - lhs_low, n=n, k=k, weight=weight, lhs_low=lhs_low,
                rhs_high=rhs_high, literal_lhs=weight * lhs, vacuous=lhs_low <= 0,
                estimates=[tail, kappa, ghost]))
    return reports


def surgery_check(g, p, n, k, n_samples, seed, replicas=1, workers=1,
                  confidence=DEFAULT_CONFIDENCE):
    return surgery_sweep(g, p, [n], [k], n_samples, seed, replicas, workers, confidence)[0]


def _all_distances(g):
    if g.vertex_count > DENSE_MAX_VERTICES:
        raise PreconditionError(f"mass-transport checks are limited to {DENSE_MAX_VERTICES} vertices")
    return shortest_path(g.adjacency, unweighted=True, directed=False).astype(np.int64)


def mtp_distance_check(g, r=1, weight='none'):
    """
    sum_v F(rho, v) = sum_v F(v, rho) for F(u, v) = w(u) 1(d(u, v) = r), with w
    constant or the degree. Per root on transitive families; averaged otherwise.
    """
    if weight not in ('none', 'degree'):
        raise PreconditionError("weight must be 'none' or 'degree'")
    dist = _all_distances(g)
    w = np.ones(g.vertex_count) if weight == 'none' else g.pi
    F = w[:, None] * (dist == int(r))
    sent, received = F.sum(axis=1), F.sum(axis=0)
    transitive = g.family_tag in TRANSITIVE_FAMILIES
    if transitive:
        residual = float(np.max(np.abs(sent - received)))
    else:
        residual = abs(float(sent.mean() - received.mean()))
    return {
        'check': 'mtp_distance',
        'inputs_digest': inputs_digest(g.describe(), r, weight),
        'lhs': float(sent.mean()),
        'rhs': float(received.mean()),
        'pass': residual <= MTP_TOL,
        'slack': MTP_TOL - residual,
        'transitive': transitive,
        'r': int(r),
    }


def _walk_laws(g, ks):
    if g.vertex_count > DENSE_MAX_VERTICES:
        raise PreconditionError(f"mass-transport checks are limited to {DENSE_MAX_VERTICES} vertices")
    P = g.transition.toarray()
    return [np.linalg.matrix_power(P, int(k)) for k in ks]


def _mtp_sample(g, laws, p, seed):
    cfg = sample(g, p, seed)
    labels = cfg.cluster_labels
    same = labels[:, None] == labels[None, :]
    out = []
    for Pk in laws:
        # f(rho) = P_rho(X_k in K_rho)
        f = np.where(same, Pk, 0.0).sum(axis=1)
        lhs = f.sum()
        cluster_mean = np.bincount(labels, weights=f, minlength=g.vertex_count) / np.maximum(
            cfg.cluster_sizes, 1)
        rhs = sum(cluster_mean[labels[rho]] for rho in range(g.vertex_count))
        out.extend([abs(lhs - rhs), lhs / g.vertex_count])
    return out


def mtp_check(g, p, ks, n_samples, seed, replicas=1, workers=1):
    """
    Per configuration: sum_rho P_rho(X_k in K_rho)
    == sum_rho |K_rho|^-1 sum_{u in K_rho} P_u(X_k in K_u), both sides by exact evolution.
    """
    p = _check_p(p)
    ks = [int(k) for k in ks]
    laws = _walk_laws(g, ks)
    rows = run_samples(bind(_mtp_sample, g, laws, p), n_samples, seed, replicas, workers)
    residuals = rows[:, 0::2]
    worst = float(residuals.max())
    return _perc_report('mtp', g, p, seed, n_samples, inputs=tuple(ks),
                        lhs=float(rows[:, 1::2].mean()), rhs=None,
                        passed=worst <= MTP_TOL, slack=MTP_TOL - worst, ks=ks,
                        max_residual=worst,
                        per_k={str(k): float(residuals[:, j].max()) for j, k in enumerate(ks)},
                        transitive=g.family_tag in TRANSITIVE_FAMILIES)


def optimum_check(alpha, beta, c1, k, step=1e-4, upper=50.0):
    """
    min over s = log x in (0, upper] of s^beta + c1 k s^-alpha, by grid search,
    against the closed form s* = (alpha c1 k / beta)^{1/(alpha+beta)}.
    """
    if not 0 < beta <= 1 or alpha < 0 or c1 <= 0 or k < 0:
        raise PreconditionError("need beta in (0, 1], alpha >= 0, c1 > 0, k >= 0")
    s = np.arange(1, int(round(upper / step)) + 1) * step
    f = s ** beta + c1 * k * s ** (-alpha)
    grid_min = float(f.min())
    if alpha == 0:
        # infimum c1 k approached as s -> 0
        s_star, closed = 0.0, c1 * k
        tol = step ** beta + 1e-3 * max(closed, 1e-300)
    else:
        s_star = (alpha * c1 * k / beta) ** (1 / (alpha + beta))
        closed = s_star ** beta + c1 * k * s_star ** (-alpha) if s_star > 0 else math.inf
        tol = 1e-3 * closed
    flags = ['optimum outside grid'] if s_star > upper else []
    return {
        'check': 'optimum',
        'inputs_digest': inputs_digest(alpha, beta, c1, k, step, upper),
        'lhs': grid_min,
        'rhs': closed,
        's_star': s_star,
        's_grid': float(s[np.argmin(f)]),
        'pass': abs(grid_min - closed) <= tol or bool(flags),
        'slack': tol - abs(grid_min - closed),
        'flags': flags,
    }


def kappapk_bound_check(g, p, k, beta, alpha, c2, n_samples, seed, c1=1.0, base=None,
                        replicas=1, workers=1, confidence=DEFAULT_CONFIDENCE):
    """
    E_p[P_rho(X_k in K_rho)] <= ratio^{1/2} (1 + E exp[log^beta |K|]) exp[-c2 k^{beta/(alpha+beta)}].
    Conditional on the user-supplied c2.
    """
    p = _check_p(p)
    beta = float(beta)
    if not 0 < beta <= 1:
        raise PreconditionError("beta must be in (0, 1]")
    if alpha < 0 or c2 <= 0 or int(k) < 0:
        raise PreconditionError("need alpha >= 0, c2 > 0, k >= 0")
    k = int(k)
    base = representative_edge(g)[0] if base is None else int(base)
    ratio = 1.0 if transitive_degree(g) is not None else float(g.pi.max() / g.pi.min())

    law = evolve(g, delta(g, base), k)
    rows = run_samples(bind(_walk_in_cluster_sample, g, base, law, beta, p),
                       n_samples, seed, replicas, workers)
    lhs = Estimate.sample_mean(rows[:, 0], confidence)
    functional = Estimate.sample_mean(rows[:, 1], confidence)
    decay = math.exp(-c2 * k ** (beta / (alpha + beta)))
    rhs = math.sqrt(ratio) * (1 + functional.mean) * decay
    low = lhs.lower_bound(confidence)
    out = _perc_report('kappapk', g, p, seed, n_samples, inputs=(k, beta, alpha, c2, base),
                       lhs=lhs.mean, rhs=rhs, passed=low <= rhs * (1 + THEOREM_SLACK),
                       slack=rhs - low, k=k, beta=beta, alpha=alpha, c2=c2,
                       conditional=True, estimates=[lhs, functional])
    out['optimum'] = optimum_check(alpha, beta, c1, k) if k > 0 else None
    return out


def theorem_chain_check(g, u, v, p, n, k, n_samples, seed, replicas=1, workers=1,
                        confidence=DEFAULT_CONFIDENCE):
    """
    Links used to close the bootstrap, each with one-sided slack:
      kappa(k) <= E[P_u(X_k in K_u)]
      Pr(|K_u| >= n) <= Pr(|E(K_u)| >= n)           (min degree >= 2)
      Pr(|E(K_u)| >= n) >= p^{d(u,v)} Pr(|E(K_v)| >= n)
    and reports the elementary p_c >= 1 / (max deg - 1).
    """
    p = _check_p(p)
    _require_samples(n_samples)
    n, k = int(n), int(k)
    targets = ball(g, u, k).members
    law = evolve(g, delta(g, u), k)
    rows = run_samples(bind(_chain_sample, g, int(u), int(v), targets, law, p),
                       n_samples, seed, replicas, workers)

    links = {}
    walk = Estimate.sample_mean(rows[:, 3], confidence)
    pairs = [Estimate.proportion(rows[:, 4 + j] > 0.5, confidence) for j in range(len(targets))]
    kappa_low = min(e.lower_bound(confidence) for e in pairs)
    links['kappa_le_walk'] = kappa_low <= walk.upper_bound(confidence) + THEOREM_SLACK

    vertex_tail = Estimate.proportion(rows[:, 0] >= n, confidence)
    edge_tail_u = Estimate.proportion(rows[:, 1] >= n, confidence)
    flags = []
    if g.degrees.min() >= 2:
        links['vertex_tail_le_edge_tail'] = bool(np.all(rows[:, 0] <= rows[:, 1]))
    else:
        flags.append('min degree 1: vertex/edge tail comparison not asserted')

    d_uv = int(distances_from(g, [u])[v])
    edge_tail_v = Estimate.proportion(rows[:, 2] >= n, confidence)
    links['insertion_tail'] = (edge_tail_u.upper_bound(confidence)
                               >= p ** d_uv * edge_tail_v.lower_bound(confidence) - THEOREM_SLACK)

    max_deg = int(g.degrees.max())
    return _perc_report('theorem_chain', g, p, seed, n_samples, inputs=(u, v, n, k),
                        lhs=min(e.mean for e in pairs), rhs=walk.mean,
                        passed=all(links.values()), slack=None, n=n, k=k, links=links,
                        flags=flags, distance=d_uv,
                        pc_lower_bound=1 / (max_deg - 1) if max_deg > 1 else 1.0,
                        estimates=[walk, vertex_tail, edge_tail_u, edge_tail_v])


def monotone_in_p(g, v, ps, n_samples, seed):
    """Per-sample cluster statistics are non-decreasing along an increasing p grid."""
    ps = sorted(float(p) for p in ps)
    stats = [cluster_stats(g, v, p, n_samples, seed) for p in ps]
    return all(np.all(a <= b) for a, b in zip(stats, stats[1:]))
