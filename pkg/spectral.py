"""
Killed-walk spectral machinery: Dirichlet forms, the killed gap lambda(A),
spectral and isoperimetric profiles, and checks of the escape bounds built on
them (key lemma, L2 decay, escape thresholds, Cheeger sandwich).

lambda(A) is the smallest eigenvalue of I_A - P_A^2, i.e. 1 - rho(P_A)^2.
On a finite connected graph lambda(V) = 0, so exhaustive profiles vanish for
L >= pi(V) and thresholds built on them become infinite ("vacuous").
"""
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg

from config import (BALL_FAMILY_MAX_CONNECTED, EXHAUSTIVE_MAX_VERTICES, POWER_MAX_ITER,
                    POWER_TOL, THEOREM_SLACK, ConvergenceError, PreconditionError)
from graphs import TRANSITIVE_FAMILIES, ball, eccentricity, make_domain
from montecarlo import counter_uniforms, sample_seed
from report import inputs_digest
from walks import (apply_P, as_mass, evolve, escape_probability, local_operator,
                   norm_1_pi, norm_2_inv_pi, norm_2_pi)

LOG4 = math.log(4)


def _supported_on(g, A, phi):
    phi = as_mass(g, phi)
    if np.any(phi[~A.mask] != 0):
        raise PreconditionError("function must be supported on A")
    return phi


def dirichlet_form(g, A, phi):
    """E_A(phi) = <(I_A - P_A^2) phi, phi>_pi = ||phi||^2 - ||P_A phi||^2."""
    A = make_domain(g, A)
    phi = _supported_on(g, A, phi)
    return norm_2_pi(g, phi) ** 2 - norm_2_pi(g, apply_P(g, phi, A)) ** 2


def _symmetrised(g, members):
    """pi^{1/2} P_A pi^{-1/2}, a dense symmetric matrix."""
    members = np.asarray(members)
    sub = g.adjacency[members][:, members].toarray()
    s = 1.0 / np.sqrt(g.pi[members])
    return sub * s[:, None] * s[None, :]


def _dense_gap(g, members):
    if len(members) == 0:
        raise PreconditionError("A must be nonempty")
    eig = scipy.linalg.eigh(_symmetrised(g, members), eigvals_only=True)
    rho = max(abs(eig[0]), abs(eig[-1]))
    return 1.0 - rho * rho


def killed_ground_state(g, A):
    """(lambda(A), phi) with phi >= 0 the principal eigenfunction of P_A^2 on A."""
    A = make_domain(g, A)
    # Perron-Frobenius: the largest eigenvalue is the spectral radius
    vals, vecs = scipy.linalg.eigh(_symmetrised(g, A.members))
    phi = np.zeros(g.vertex_count)
    phi[A.members] = np.abs(vecs[:, -1]) / np.sqrt(g.pi[A.members])
    return 1.0 - vals[-1] ** 2, phi


def _power_gap(g, members, tol, max_iter, seed):
    K = local_operator(g, members)
    w_pi = g.pi[members]
    psi = 0.5 + counter_uniforms(seed, np.arange(len(members)))
    psi /= math.sqrt(np.dot(w_pi * psi, psi))
    r = 0.0
    for it in range(1, max_iter + 1):
        w = K @ (K @ psi)
        r = float(np.dot(w_pi * w, psi))
        if r <= 0.0:
            # no internal edges: P_A = 0
            return 1.0
        residual = math.sqrt(np.dot(w_pi * (w - r * psi), w - r * psi))
        if residual <= tol * r:
            return 1.0 - r
        psi = w / math.sqrt(np.dot(w_pi * w, w))
    support = psi > 0
    w = K @ (K @ psi)
    upper = float(np.max(w[support] / psi[support])) if support.any() else r
    raise ConvergenceError(f"power iteration did not converge after {max_iter} iterations",
                           bracket=(1.0 - upper, 1.0 - r), iterations=max_iter)


def lambda_A(g, A, method='power', tol=POWER_TOL, max_iter=POWER_MAX_ITER, seed=0):
    """
    Smallest eigenvalue of I_A - P_A^2. `power` iterates P_A^2 in the pi inner
    product from a positive start; `dense` diagonalises the symmetrised matrix.
    """
    A = make_domain(g, A)
    if len(A) == 0:
        raise PreconditionError("A must be nonempty")
    if method == 'dense':
        return _dense_gap(g, A.members)
    if method != 'power':
        raise PreconditionError(f"unknown method {method!r}")
    return _power_gap(g, A.members, tol, max_iter, seed)


def rayleigh_quotient(g, A, phi):
    A = make_domain(g, A)
    phi = _supported_on(g, A, phi)
    if np.any(phi < 0) or not np.any(phi > 0):
        raise PreconditionError("phi must be nonnegative and not identically zero")
    return dirichlet_form(g, A, phi) / norm_2_pi(g, phi) ** 2


def boundary_ratio(g, A):
    """(1/pi(A)) sum_{a in A, b not in A} pi(a) P(a, b) = |dA| / pi(A)."""
    A = make_domain(g, A)
    u, v = g.edges[:, 0], g.edges[:, 1]
    boundary = int(np.sum(A.mask[u] != A.mask[v]))
    return boundary / float(g.pi[A.members].sum())


# --- profiles ---

@dataclass
class ProfileModel:
    """Lambda_lb(x) = c log^-alpha(x / max pi) for x >= 2 max pi, else 1 (capped at 1)."""
    alpha: float
    c: float
    max_pi: float

    def __post_init__(self):
        if self.alpha < 0 or self.c <= 0 or self.max_pi <= 0:
            raise PreconditionError("profile model needs alpha >= 0, c > 0, max_pi > 0")

    def __call__(self, x):
        if x < 2 * self.max_pi:
            return 1.0
        return min(1.0, self.c * math.log(x / self.max_pi) ** (-self.alpha))


@dataclass
class SpectralProfile:
    points: list
    mode: str
    graph_ref: str
    rigorous_lower: bool
    min_pi: float = 1.0
    masses: np.ndarray = field(default=None, repr=False)
    running_min: np.ndarray = field(default=None, repr=False)
    model: ProfileModel = None

    def value(self, x):
        if self.model is not None:
            return self.model(x)
        if x < self.min_pi:
            return 1.0
        idx = int(np.searchsorted(self.masses, x, side='right')) - 1
        if idx < 0:
            return 1.0
        return float(self.running_min[idx])

    __call__ = value

    @property
    def is_upper_bound(self):
        return self.mode == 'ball_family' or (not self.rigorous_lower and self.model is None)

    def to_frame(self):
        return pd.DataFrame({'L': [p[0] for p in self.points],
                             'lambda': [p[1] for p in self.points],
                             'mode': self.mode})


def _graph_ref(g):
    return f"{g.family_tag}{g.family_params}"


def _subset_bits(n):
    codes = np.arange(1, 1 << n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(bool)


def _profile_from_sets(g, masses, values, thresholds, mode, rigorous):
    order = np.argsort(masses, kind='stable')
    masses, values = np.asarray(masses)[order], np.asarray(values)[order]
    prof = SpectralProfile(points=[], mode=mode, graph_ref=_graph_ref(g),
                           rigorous_lower=rigorous, min_pi=float(g.pi.min()),
                           masses=masses, running_min=np.minimum.accumulate(values))
    prof.points = [(float(L), prof.value(float(L))) for L in thresholds]
    return prof


def exhaustive_sets(g, within=None):
    """All nonempty subsets (of `within`, default V) as a bool matrix plus their masses."""
    pool = np.arange(g.vertex_count) if within is None else make_domain(g, within).members
    if len(pool) > EXHAUSTIVE_MAX_VERTICES:
        raise PreconditionError(f"exhaustive enumeration is limited to {EXHAUSTIVE_MAX_VERTICES} "
                                f"vertices, got {len(pool)}")
    bits = _subset_bits(len(pool))
    return pool, bits, bits.astype(np.float64) @ g.pi[pool]


def _connected_sets(g, roots, max_size):
    seen = set()
    frontier = [frozenset([int(r)]) for r in roots]
    seen.update(frontier)
    for _ in range(max_size - 1):
        grown = []
        for s in frontier:
            for v in s:
                for w in g.neighbors(v).tolist():
                    if w not in s:
                        t = s | {w}
                        if t not in seen:
                            seen.add(t)
                            grown.append(t)
        frontier = grown
    return seen


PROFILE_MODES = ('exhaustive', 'ball_family', 'analytic')


def spectral_profile(g, thresholds, mode='exhaustive', within=None, roots=None,
                     max_connected=BALL_FAMILY_MAX_CONNECTED, model=None):
    """
    exhaustive   exact Lambda over all subsets (<= 14 vertices); with `within`
                 the infimum runs over subsets of that set only (an upper bound)
    ball_family  upper bound from balls and small connected sets
    analytic     a user-supplied ProfileModel lower bound, recorded as trusted
    """
    if mode not in PROFILE_MODES:
        raise PreconditionError(f"unknown profile mode {mode!r}; expected one of {PROFILE_MODES}")
    thresholds = [float(L) for L in thresholds]
    if mode == 'analytic':
        if model is None:
            raise PreconditionError("analytic mode needs a ProfileModel")
        prof = SpectralProfile(points=[], mode='analytic', graph_ref=_graph_ref(g),
                               rigorous_lower=True, min_pi=float(g.pi.min()), model=model)
        prof.points = [(L, model(L)) for L in thresholds]
        return prof
    if mode == 'exhaustive':
        pool, bits, masses = exhaustive_sets(g, within)
        values = [_dense_gap(g, pool[row]) for row in bits]
        rigorous = within is None or len(make_domain(g, within)) == g.vertex_count
        return _profile_from_sets(g, masses, values, thresholds, 'exhaustive', rigorous)
    if mode == 'ball_family':
        top = max(thresholds) if thresholds else 0.0
        if roots is None:
            roots = [0] if g.family_tag in TRANSITIVE_FAMILIES else range(g.vertex_count)
        candidates = set()
        for v in roots:
            for r in range(eccentricity(g, v) + 1):
                B = ball(g, v, r)
                if g.pi[B.members].sum() > top:
                    break
                candidates.add(frozenset(B.members.tolist()))
        candidates |= _connected_sets(g, roots, max_connected)
        sets = [np.array(sorted(s)) for s in candidates]
        masses = [float(g.pi[s].sum()) for s in sets]
        values = [_dense_gap(g, s) for s in sets]
        return _profile_from_sets(g, masses, values, thresholds, 'ball_family', False)


def iso_profile(g, thresholds, within=None):
    """Phi_*(x) = min over pi(A) <= x of |dA| / pi(A), exhaustive; 1 below min pi."""
    pool, bits, masses = exhaustive_sets(g, within)
    full = np.zeros((len(bits), g.vertex_count), dtype=bool)
    full[:, pool] = bits
    u, v = g.edges[:, 0], g.edges[:, 1]
    boundary = np.sum(full[:, u] != full[:, v], axis=1)
    ratios = boundary / masses
    return _profile_from_sets(g, masses, ratios, [float(x) for x in thresholds],
                              'exhaustive', within is None)


def _require_certified(profile, diagnostic):
    if profile.is_upper_bound or not profile.rigorous_lower:
        if not diagnostic:
            raise PreconditionError(f"{profile.mode} profile is not a certified lower bound; "
                                    "use diagnostic mode")
        return False
    return True


def _report(check, lhs, rhs, passed, slack, inputs, **extra):
    out = {'check': check, 'inputs_digest': inputs_digest(*inputs), 'lhs': lhs, 'rhs': rhs,
           'pass': bool(passed), 'slack': slack}
    out.update(extra)
    return out


def cheeger_check(g, thresholds=None, subsets=None):
    """
    Profile-level sandwich 1/4 Phi*(x)^2 <= Lambda(x) <= 1 - (1 - Phi*(x))^2.
    The literal upper bound Lambda <= Phi* is also evaluated and its failures
    counted; it does not hold for the I - P_A^2 normalisation (cycle[8], x=4).
    """
    if g.vertex_count > EXHAUSTIVE_MAX_VERTICES:
        raise PreconditionError("the sandwich needs exhaustive profiles (<= 14 vertices)")
    if thresholds is None:
        _, _, masses = exhaustive_sets(g)
        thresholds = sorted(set(masses.tolist()) | {float(g.pi.min()) - 0.5})
    lam = spectral_profile(g, thresholds, 'exhaustive')
    phi = iso_profile(g, thresholds)
    points, violations, literal = [], 0, 0
    worst = math.inf
    for (x, L), (_, F) in zip(lam.points, phi.points):
        lower, upper = 0.25 * F * F, 1 - (1 - F) ** 2
        ok = lower - THEOREM_SLACK <= L <= upper + THEOREM_SLACK
        violations += not ok
        literal += L > F + THEOREM_SLACK
        worst = min(worst, L - lower, upper - L)
        points.append({'x': x, 'Lambda': L, 'Phi': F, 'lower': lower, 'upper': upper, 'pass': ok})
    per_set = []
    for A in subsets or []:
        A = make_domain(g, A)
        per_set.append({'members': A.members.tolist(), 'phi': boundary_ratio(g, A),
                        'lambda': lambda_A(g, A, method='dense')})
    return _report('cheeger', None, None, violations == 0, worst, (_graph_ref(g), thresholds),
                   points=points, violations=violations, literal_upper_violations=literal,
                   per_set=per_set)


def key_lemma_check(g, A, phi, profile):
    """E_A(phi)/||phi||^2 >= 1/2 Lambda(4 ||phi||_1^2 / ||phi||_2^2)."""
    if profile.mode != 'exhaustive' or not profile.rigorous_lower:
        raise PreconditionError("key lemma check needs an exhaustive profile of the whole graph")
    A = make_domain(g, A)
    lhs = rayleigh_quotient(g, A, phi)
    arg = 4 * norm_1_pi(g, phi) ** 2 / norm_2_pi(g, phi) ** 2
    rhs = 0.5 * profile.value(arg)
    return _report('key_lemma', lhs, rhs, lhs >= rhs - THEOREM_SLACK, lhs - rhs,
                   (_graph_ref(g), A.members, phi), argument=arg)


def decay_threshold(profile, arguments):
    """ell + 1 + sum_i 2 log 4 / Lambda(arg_i), rounded up; inf if any Lambda is 0."""
    total = len(arguments) + 1.0
    for x in arguments:
        lam = profile.value(x)
        if lam <= 0:
            return math.inf
        total += 2 * LOG4 / lam
    return math.ceil(total - 1e-12)


def l2_decay_check(g, mu, ell, profile, diagnostic=False):
    """||mu P^k||_{2,1/pi} <= 2^-ell ||mu||_{2,1/pi} at the threshold k*(ell)."""
    rigorous = _require_certified(profile, diagnostic)
    mu = as_mass(g, mu)
    ell = int(ell)
    if np.any(mu < 0) or mu.sum() > 1 + 1e-12 or ell < 0:
        raise PreconditionError("mu must be a nonnegative measure with mu(V) <= 1, ell >= 0")
    norm0 = norm_2_inv_pi(g, mu)
    if norm0 == 0:
        return _report('l2_decay', 0.0, 0.0, True, 0.0, (_graph_ref(g), mu, ell),
                       ell=ell, k_star=0, vacuous=True, rigorous=rigorous, profile_mode=profile.mode)
    args = [4 ** (i + 1) / norm0 ** 2 for i in range(1, ell + 1)]
    k_star = decay_threshold(profile, args)
    rhs = 2.0 ** (-ell) * norm0
    if math.isinf(k_star):
        return _report('l2_decay', None, rhs, True, None, (_graph_ref(g), mu, ell),
                       ell=ell, k_star=None, vacuous=True, rigorous=rigorous,
                       profile_mode=profile.mode)
    lhs = norm_2_inv_pi(g, evolve(g, mu, k_star))
    return _report('l2_decay', lhs, rhs, lhs <= rhs * (1 + THEOREM_SLACK), rhs - lhs,
                   (_graph_ref(g), mu, ell), ell=ell, k_star=k_star, vacuous=False,
                   rigorous=rigorous, profile_mode=profile.mode)


VARIANTS = ('uniform', 'pi')


def escape_threshold(g, D, ell, profile, variant='uniform', diagnostic=False):
    """Smallest k from the escape condition, and the check Pr(X_k in D) <= bound."""
    if variant not in VARIANTS:
        raise PreconditionError(f"variant must be one of {VARIANTS}")
    rigorous = _require_certified(profile, diagnostic)
    D = make_domain(g, D)
    ell = int(ell)
    if len(D) == 0 or ell < 0:
        raise PreconditionError("D must be nonempty and ell >= 0")
    pis = g.pi[D.members]
    if variant == 'uniform':
        scale = float(pis.max()) * len(D)
        bound = math.sqrt(pis.max() / pis.min()) * 2.0 ** (-ell)
        start = 'uniform_on_D'
    else:
        scale = float(pis.sum())
        bound = 2.0 ** (-ell)
        start = 'pi_on_D'
    k_star = decay_threshold(profile, [4 ** (i + 1) * scale for i in range(1, ell + 1)])
    inputs = (_graph_ref(g), D.members, ell, variant)
    if math.isinf(k_star):
        return _report('escape_threshold', None, bound, True, None, inputs, ell=ell,
                       k_star=None, variant=variant, vacuous=True, rigorous=rigorous,
                       profile_mode=profile.mode)
    prob = escape_probability(g, D, k_star, start, claim_infinite=False)
    return _report('escape_threshold', prob, bound, prob <= bound * (1 + THEOREM_SLACK),
                   bound - prob, inputs, ell=ell, k_star=k_star, variant=variant,
                   vacuous=False, rigorous=rigorous, profile_mode=profile.mode)


def escape_bound_rhs(D_size, k, alpha, c1, degree_ratio=1.0):
    """ratio^{1/2} exp[-c1 min{k / log^alpha |D|, k^{1/(1+alpha)}}]."""
    if D_size < 1 or k < 0 or c1 <= 0 or alpha < 0 or degree_ratio < 1:
        raise PreconditionError("need D_size >= 1, k >= 0, c1 > 0, alpha >= 0, ratio >= 1")
    log_d = math.log(D_size)
    if alpha == 0:
        first = float(k)
    elif log_d == 0:
        first = math.inf
    else:
        first = k / log_d ** alpha
    return math.sqrt(degree_ratio) * math.exp(-c1 * min(first, k ** (1 / (1 + alpha))))


def model_threshold(ell, D_size, alpha, c):
    """Threshold F(ell) with Lambda >= c log^-alpha plugged in, and its simplification."""
    ell = int(ell)
    f = ell + 1 + sum(2 * LOG4 / c * math.log(4 ** (i + 1) * D_size) ** alpha
                      for i in range(1, ell + 1))
    upper = (ell + 1) * (1 + 2 * LOG4 / c * math.log(4 ** (ell + 1) * D_size) ** alpha)
    return f, upper


def energy_identity_check(g, A, mu, k):
    """||mu_j||^2 - ||mu_{j+1}||^2 = E_A(phi_j) along the killed evolution, j < k."""
    A = make_domain(g, A)
    mu = np.where(A.mask, as_mass(g, mu), 0.0)
    phi = mu / g.pi
    worst = 0.0
    rows = []
    for j in range(int(k)):
        nxt = apply_P(g, phi, A)
        drop = norm_2_pi(g, phi) ** 2 - norm_2_pi(g, nxt) ** 2
        energy = dirichlet_form(g, A, phi)
        worst = max(worst, abs(drop - energy))
        rows.append({'j': j, 'drop': drop, 'energy': energy})
        phi = nxt
    return _report('energy_identity', None, None, worst <= 1e-10, 1e-10 - worst,
                   (_graph_ref(g), A.members, mu, k), steps=rows, max_residual=worst)


def key_lemma_trials(g, n_pairs, seed, profile=None):
    """key_lemma_check on random (A, phi >= 0) pairs; one summary report."""
    if profile is None:
        profile = spectral_profile(g, [], 'exhaustive')
    n = g.vertex_count
    worst, violations = math.inf, 0
    for i in range(int(n_pairs)):
        u = counter_uniforms(sample_seed(seed, i), np.arange(2 * n))
        mask = u[:n] < 0.5
        if not mask.any():
            mask[int(u[0] * n) % n] = True
        phi = np.where(mask, u[n:] + 1e-3, 0.0)
        rep = key_lemma_check(g, np.flatnonzero(mask), phi, profile)
        violations += not rep['pass']
        worst = min(worst, rep['slack'])
    return _report('key_lemma_trials', None, None, violations == 0, worst,
                   (_graph_ref(g), n_pairs, seed), trials=int(n_pairs), violations=violations)
