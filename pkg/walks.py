"""
Simple random walk on a Graph: exact distribution evolution (free and killed),
return probabilities, escape probabilities, sampled paths and a heat-kernel fit.

Measures (mu, nu) evolve on the right, mu -> mu P; functions (phi) on the left,
phi -> P phi. Both are plain float64 arrays indexed by vertex id.
"""
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from config import HK_GAMMA_GRID, REVERSIBILITY_RTOL, PreconditionError
from graphs import check_interior, make_domain, set_ball
from montecarlo import Estimate, bind, counter_uniforms, run_samples


# --- MassVector helpers ---

def as_mass(g, values):
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (g.vertex_count,):
        raise PreconditionError(f"mass vector must have length {g.vertex_count}")
    if not np.all(np.isfinite(values)):
        raise PreconditionError("mass vector must be finite")
    return values


def delta(g, v):
    mu = np.zeros(g.vertex_count)
    mu[v] = 1.0
    return mu


def uniform_on(g, D):
    D = make_domain(g, D)
    mu = np.zeros(g.vertex_count)
    mu[D.members] = 1.0 / len(D)
    return mu


def pi_on(g, D):
    D = make_domain(g, D)
    mu = np.zeros(g.vertex_count)
    mu[D.members] = g.pi[D.members] / g.pi[D.members].sum()
    return mu


def inner_pi(g, phi, psi):
    return float(np.dot(g.pi * phi, psi))


def inner_inv_pi(g, mu, nu):
    return float(np.dot(mu / g.pi, nu))


def norm_2_pi(g, phi):
    return math.sqrt(inner_pi(g, phi, phi))


def norm_1_pi(g, phi):
    return float(np.dot(g.pi, np.abs(phi)))


def norm_2_inv_pi(g, mu):
    return math.sqrt(inner_inv_pi(g, mu, mu))


# --- one-step operators ---

def step(g, mu):
    """mu P; preserves total (signed) mass."""
    mu = as_mass(g, mu)
    return g.adjacency @ (mu / g.pi)


def killed_step(g, A, mu):
    """mu P_A with P_A(u, v) = P(u, v) 1(u, v in A)."""
    A = make_domain(g, A)
    mu = as_mass(g, mu)
    return (g.adjacency @ np.where(A.mask, mu / g.pi, 0.0)) * A.mask


def apply_P(g, phi, A=None):
    """P phi, or P_A phi when a domain is given."""
    if A is None:
        return (g.adjacency @ phi) / g.pi
    A = make_domain(g, A)
    return np.where(A.mask, (g.adjacency @ (phi * A.mask)) / g.pi, 0.0)


def evolve(g, mu, steps, A=None):
    mu = as_mass(g, mu)
    for _ in range(int(steps)):
        mu = step(g, mu) if A is None else killed_step(g, A, mu)
    return mu


def local_operator(g, members):
    """P restricted to `members` (killed outside), as a sparse |B| x |B| matrix."""
    members = np.asarray(members)
    return g.transition[members][:, members].tocsr()


# --- exact probabilities ---

def return_probabilities(g, v, n_max, check_validity=True):
    """p_n(v, v) for n = 0..n_max, computed on ball(v, ceil(n_max/2))."""
    n_max = int(n_max)
    if n_max < 0:
        raise PreconditionError("n must be >= 0")
    if check_validity:
        check_interior(g, [v], n_max)
    B = set_ball(g, [v], math.ceil(n_max / 2))
    K = local_operator(g, B.members).T.tocsr()
    i = int(np.searchsorted(B.members, v))
    mu = np.zeros(len(B))
    mu[i] = 1.0
    out = [1.0]
    for _ in range(n_max):
        mu = K @ mu
        out.append(float(mu[i]))
    return np.array(out)


def return_probability(g, v, n, check_validity=True):
    return float(return_probabilities(g, v, n, check_validity)[-1])


def reversibility_check(g, A, mu, nu, t):
    """<mu P_A^t, nu>_{1/pi} == <mu, nu P_A^t>_{1/pi}."""
    t = int(t)
    if t < 0:
        raise PreconditionError("t must be >= 0")
    A = make_domain(g, A)
    lhs = inner_inv_pi(g, evolve(g, mu, t, A), nu)
    rhs = inner_inv_pi(g, mu, evolve(g, nu, t, A))
    scale = max(abs(lhs), abs(rhs), 1e-300)
    residual = abs(lhs - rhs)
    return {
        'check': 'reversibility',
        'lhs': lhs,
        'rhs': rhs,
        'slack': REVERSIBILITY_RTOL * scale - residual,
        'residual': residual,
        'pass': residual <= REVERSIBILITY_RTOL * scale,
    }


START_MEASURES = ('uniform_on_D', 'pi_on_D')


def escape_probability(g, D, k, start='uniform_on_D', claim_infinite=True):
    """Pr(X_k in D) for the walk started from mu_D or pi_D."""
    D = make_domain(g, D)
    k = int(k)
    if len(D) == 0:
        raise PreconditionError("D must be nonempty")
    if start not in START_MEASURES:
        raise PreconditionError(f"start must be one of {START_MEASURES}")
    if k < 0:
        raise PreconditionError("k must be >= 0")
    if k == 0:
        return 1.0
    if claim_infinite:
        check_interior(g, D.members, k)
    # a path from D back to D in k steps never gets further than k/2 from D
    B = set_ball(g, D.members, math.ceil(k / 2))
    K = local_operator(g, B.members).T.tocsr()
    idx = np.searchsorted(B.members, D.members)
    weights = np.ones(len(D)) if start == 'uniform_on_D' else g.pi[D.members]
    mu = np.zeros(len(B))
    mu[idx] = weights / weights.sum()
    for _ in range(k):
        mu = K @ mu
    return float(mu[idx].sum())


# --- sampled walks ---

@dataclass
class WalkPath:
    vertices: list
    seed: int


def sample_walk(g, v, k, seed):
    """Reproducible path X_0..X_k; draw i uses counter i under `seed`."""
    u = counter_uniforms(seed, np.arange(int(k)))
    x = int(v)
    path = [x]
    for i in range(int(k)):
        deg = g.indptr[x + 1] - g.indptr[x]
        x = int(g.indices[g.indptr[x] + min(int(u[i] * deg), deg - 1)])
        path.append(x)
    return WalkPath(vertices=path, seed=int(seed))


def _returned(g, v, n, seed):
    return [sample_walk(g, v, n, seed).vertices[-1] == v]


def walk_return_hat(g, v, n, n_samples, seed, replicas=1, workers=1):
    """Monte Carlo estimate of p_n(v, v), a cross-check of the exact value."""
    hits = run_samples(bind(_returned, g, int(v), int(n)), n_samples, seed, replicas, workers)
    return Estimate.proportion(hits[:, 0] > 0.5)


# --- heat-kernel fit ---

def alpha_from_gamma(gamma):
    return (1 - gamma) / gamma


def hk_fit_sequence(ns, ps, gamma_grid=HK_GAMMA_GRID):
    """
    Fits -log p_n ~ a + c n^gamma over a gamma grid (least squares per gamma).
    Exploratory only: the window and grid are configuration, not guarantees.
    """
    ns = np.asarray(ns, dtype=np.float64)
    ps = np.asarray(ps, dtype=np.float64)
    usable = (ps > 0) & (ns >= 1)
    if usable.sum() < 4:
        raise PreconditionError(f"hk_fit needs at least 4 positive p_n values, got {int(usable.sum())}")
    n, y = ns[usable], -np.log(ps[usable])

    best = None
    for gamma in gamma_grid:
        X = np.column_stack([np.ones_like(n), n ** gamma])
        coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
        sse = float(np.sum((X @ coef - y) ** 2))
        if best is None or sse < best[0] - 1e-15:
            best = (sse, gamma, float(coef[0]), float(coef[1]))
    sse, gamma, intercept, c = best

    X = np.column_stack([np.ones_like(n), np.log(n)])
    coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    poly_sse = float(np.sum((X @ coef - y) ** 2))

    flags = []
    # n^gamma with gamma this small is indistinguishable from log n
    if poly_sse <= sse or gamma <= 0.1 or c <= 0:
        flags.append('no stretched-exponential regime')
    return {
        'gamma': gamma,
        'c': c,
        'intercept': intercept,
        'alpha': alpha_from_gamma(gamma),
        'sse': sse,
        'polynomial_sse': poly_sse,
        'polynomial_exponent': float(coef[1]),
        'n_used': int(usable.sum()),
        'flags': flags,
    }


def hk_fit(g, v, n_max, check_validity=True):
    ps = return_probabilities(g, v, n_max, check_validity)
    fit = hk_fit_sequence(np.arange(len(ps)), ps)
    fit['n_max'] = int(n_max)
    return fit


def radial_return_probabilities(d, n_max):
    """
    p_n(root, root) on the infinite d-regular tree via the distance chain
    (0 -> 1 surely; j -> j-1 w.p. 1/d, j -> j+1 otherwise). Oracle for tree balls.
    """
    n_max = int(n_max)
    dist = np.zeros(n_max + 2)
    dist[0] = 1.0
    out = [1.0]
    for _ in range(n_max):
        nxt = np.zeros_like(dist)
        nxt[1] += dist[0]
        nxt[:-2] += dist[1:-1] / d
        nxt[2:] += dist[1:-1] * (d - 1) / d
        dist = nxt
        out.append(float(dist[0]))
    return np.array(out)


def pn_table(g, v, n_max, check_validity=True):
    ps = return_probabilities(g, v, n_max, check_validity)
    with np.errstate(divide='ignore'):
        logs = np.log(ps)
    return pd.DataFrame({'n': np.arange(len(ps)), 'p_n': ps, 'log_p_n': logs})
