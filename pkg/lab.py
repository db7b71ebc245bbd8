"""
Experiment orchestration: a registry of named tasks over a Graph, `run` for one
ExperimentSpec and `sweep` over one numeric task parameter.

Tasks return either a pandas DataFrame (tables) or a list of check reports
(dicts). Outputs are written atomically; failures leave no output file and
print one JSON error record on stderr.
"""
import json
import sys
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd

import branching
import percolation
import spectral
import walks
from config import ConvergenceError, PerclabError, PreconditionError, SpecError
from graphs import ball, build_graph, distances_from, format_edge_list, make_domain
from montecarlo import Estimate, stream_seed
from report import (estimates_table, format_csv, format_json, render_dashboard,
                    reports_frame, status_of, to_jsonable, validate_report, write_atomic)

OUTPUT_FORMATS = ('csv', 'json', 'html')
_REQUIRED = object()


@dataclass
class Task:
    name: str
    group: str
    fn: object
    params: tuple = ()
    monotone_in_p: bool = False

    def check_params(self, params):
        unknown = sorted(set(params) - set(self.params))
        if unknown:
            raise PreconditionError(f"{self.name} does not take task.{unknown[0]}; "
                                    f"it takes {', '.join(self.params) or 'no parameters'}")


REGISTRY = {}


def task(name, group, params=(), monotone_in_p=False):
    def register(fn):
        REGISTRY[name] = Task(name, group, fn, tuple(params), monotone_in_p)
        return fn
    return register


# --- parameter access ---

def _get(params, key, default=_REQUIRED, cast=None):
    if key not in params:
        if default is _REQUIRED:
            raise SpecError(f"missing task.{key}")
        return default
    value = params[key]
    if cast is None or value is None:
        return value
    try:
        return cast(value)
    except (TypeError, ValueError) as e:
        raise SpecError(f"task.{key} = {value!r} is not a valid {cast.__name__}") from e


def _list(params, key, cast, default=_REQUIRED):
    value = _get(params, key, default)
    values = value if isinstance(value, list) else [value]
    try:
        return [cast(v) for v in values]
    except (TypeError, ValueError) as e:
        raise SpecError(f"task.{key} = {value!r} is not a list of {cast.__name__}") from e


DOMAIN = ('vertices', 'center', 'radius')
PROFILE = ('profile', 'alpha', 'c')


def _domain(g, params):
    if 'vertices' in params:
        return make_domain(g, _list(params, 'vertices', int))
    return ball(g, _get(params, 'center', 0, int), _get(params, 'radius', 0, int))


def _profile(g, params):
    mode = _get(params, 'profile', 'exhaustive', str)
    if mode == 'analytic':
        model = spectral.ProfileModel(_get(params, 'alpha', cast=float),
                                      _get(params, 'c', cast=float), float(g.pi.max()))
        return spectral.spectral_profile(g, [], 'analytic', model=model)
    if mode == 'ball_family':
        return spectral.spectral_profile(g, [float(g.pi.sum())], 'ball_family')
    return spectral.spectral_profile(g, [], mode)


def _sampling(spec):
    return dict(n_samples=spec.n_samples, seed=spec.master_seed, replicas=spec.replicas,
                workers=spec.workers)


def _estimate_row(est, **cols):
    row = dict(cols)
    row.update(estimate=est.mean, ci_low=est.ci_low, ci_high=est.ci_high,
               n_samples=est.n_samples)
    return row


# --- walk tasks ---

@task('return_probability', 'walk', ('v', 'n', 'check_validity'))
def _return_probability(g, P, spec):
    return walks.pn_table(g, _get(P, 'v', 0, int), _get(P, 'n', cast=int),
                          _get(P, 'check_validity', True, bool))


@task('hk_fit', 'walk', ('v', 'n_max', 'check_validity'))
def _hk_fit(g, P, spec):
    fit = walks.hk_fit(g, _get(P, 'v', 0, int), _get(P, 'n_max', cast=int),
                       _get(P, 'check_validity', True, bool))
    fit['flags'] = "; ".join(fit['flags'])
    return pd.DataFrame([fit])


@task('escape_probability', 'walk', DOMAIN + ('k', 'start', 'claim_infinite'))
def _escape_probability(g, P, spec):
    D = _domain(g, P)
    start = _get(P, 'start', 'uniform_on_D', str)
    rows = [{'k': k, 'start': start, 'D_size': len(D),
             'probability': walks.escape_probability(g, D, k, start,
                                                     _get(P, 'claim_infinite', True, bool))}
            for k in _list(P, 'k', int)]
    return pd.DataFrame(rows)


@task('walk_return_hat', 'walk', ('v', 'n'))
def _walk_return_hat(g, P, spec):
    v, n = _get(P, 'v', 0, int), _get(P, 'n', cast=int)
    est = walks.walk_return_hat(g, v, n, **_sampling(spec))
    return estimates_table([_estimate_row(est, n=n, bound=walks.return_probability(g, v, n))])


@task('reversibility', 'verify', DOMAIN + ('u', 'w', 't'))
def _reversibility(g, P, spec):
    A = _domain(g, P)
    mu = walks.delta(g, _get(P, 'u', 0, int))
    nu = walks.delta(g, _get(P, 'w', 0, int))
    return [walks.reversibility_check(g, A, mu, nu, _get(P, 't', cast=int))]


# --- spectral tasks ---

@task('lambda_A', 'spectral', DOMAIN + ('method',))
def _lambda(g, P, spec):
    A = _domain(g, P)
    method = _get(P, 'method', 'power', str)
    value = spectral.lambda_A(g, A, method=method, seed=spec.master_seed)
    return pd.DataFrame([{'size': len(A), 'mass': float(g.pi[A.members].sum()),
                          'method': method, 'lambda': value}])


@task('spectral_profile', 'spectral', ('thresholds', 'mode', 'alpha', 'c'))
def _spectral_profile(g, P, spec):
    thresholds = _list(P, 'thresholds', float)
    mode = _get(P, 'mode', 'exhaustive', str)
    model = None
    if mode == 'analytic':
        model = spectral.ProfileModel(_get(P, 'alpha', cast=float), _get(P, 'c', cast=float),
                                      float(g.pi.max()))
    return spectral.spectral_profile(g, thresholds, mode, model=model).to_frame()


@task('iso_profile', 'spectral', ('thresholds',))
def _iso_profile(g, P, spec):
    frame = spectral.iso_profile(g, _list(P, 'thresholds', float)).to_frame()
    return frame.rename(columns={'lambda': 'phi'})


@task('escape_bound_rhs', 'spectral', ('D_size', 'alpha', 'c1', 'degree_ratio', 'k'))
def _escape_bound_rhs(g, P, spec):
    D_size, alpha = _get(P, 'D_size', cast=int), _get(P, 'alpha', cast=float)
    c1, ratio = _get(P, 'c1', cast=float), _get(P, 'degree_ratio', 1.0, float)
    return pd.DataFrame([{'k': k, 'bound': spectral.escape_bound_rhs(D_size, k, alpha, c1, ratio)}
                         for k in _list(P, 'k', int)])


@task('model_threshold', 'spectral', ('D_size', 'alpha', 'c', 'ell'))
def _model_threshold(g, P, spec):
    D_size, alpha, c = (_get(P, 'D_size', cast=int), _get(P, 'alpha', cast=float),
                        _get(P, 'c', cast=float))
    rows = []
    for ell in _list(P, 'ell', int):
        f, upper = spectral.model_threshold(ell, D_size, alpha, c)
        rows.append({'ell': ell, 'F': f, 'F_upper': upper})
    return pd.DataFrame(rows)


@task('cheeger', 'verify', ('thresholds',))
def _cheeger(g, P, spec):
    thresholds = _list(P, 'thresholds', float, None) if 'thresholds' in P else None
    return [spectral.cheeger_check(g, thresholds)]


@task('key_lemma', 'verify', ('n_pairs',))
def _key_lemma(g, P, spec):
    return [spectral.key_lemma_trials(g, _get(P, 'n_pairs', 1000, int), spec.master_seed)]


@task('l2_decay', 'verify', DOMAIN + PROFILE + ('ell', 'diagnostic'))
def _l2_decay(g, P, spec):
    profile = _profile(g, P)
    diagnostic = _get(P, 'diagnostic', False, bool)
    mu = walks.uniform_on(g, _domain(g, P))
    return [spectral.l2_decay_check(g, mu, ell, profile, diagnostic)
            for ell in _list(P, 'ell', int)]


@task('escape_threshold', 'verify', DOMAIN + PROFILE + ('ell', 'variant', 'diagnostic'))
def _escape_threshold(g, P, spec):
    profile = _profile(g, P)
    D = _domain(g, P)
    return [spectral.escape_threshold(g, D, ell, profile, _get(P, 'variant', 'uniform', str),
                                      _get(P, 'diagnostic', False, bool))
            for ell in _list(P, 'ell', int)]


@task('energy_identity', 'verify', DOMAIN + ('k',))
def _energy_identity(g, P, spec):
    A = _domain(g, P)
    return [spectral.energy_identity_check(g, A, walks.uniform_on(g, A), _get(P, 'k', cast=int))]


# --- percolation tasks ---

@task('cluster_tail', 'perc', ('v', 'p', 'n', 'quantity'), monotone_in_p=True)
def _cluster_tail(g, P, spec):
    v, p = _get(P, 'v', 0, int), _get(P, 'p', cast=float)
    quantity = percolation.check_quantity(_get(P, 'quantity', 'edges', str))
    stats = percolation.cluster_stats(g, v, p, **_sampling(spec))
    col = 1 if quantity == 'edges' else 0
    rows = []
    for n in _list(P, 'n', int):
        if n < 1:
            raise PreconditionError("n must be >= 1")
        est = Estimate.proportion(stats[:, col] >= n, spec.confidence)
        rows.append(_estimate_row(est, p=p, n=n, quantity=quantity))
    return estimates_table(rows)


@task('tau', 'perc', ('u', 'v', 'p'), monotone_in_p=True)
def _tau(g, P, spec):
    u, v, p = _get(P, 'u', 0, int), _get(P, 'v', cast=int), _get(P, 'p', cast=float)
    est = percolation.tau_hat(g, u, v, p, confidence=spec.confidence, **_sampling(spec))
    d = int(distances_from(g, [u])[v])
    return estimates_table([_estimate_row(est, p=p, distance=d, bound=p ** d)])


@task('kappa', 'perc', ('base', 'p', 'k'), monotone_in_p=True)
def _kappa(g, P, spec):
    base, p = _get(P, 'base', 0, int), _get(P, 'p', cast=float)
    rows = []
    for k in _list(P, 'k', int):
        est = percolation.kappa_hat(g, base, p, k, confidence=spec.confidence, **_sampling(spec))
        rows.append(_estimate_row(est, p=p, k=k))
    return estimates_table(rows)


@task('bootstrap_functional', 'perc', ('v', 'p', 'beta'), monotone_in_p=True)
def _bootstrap_functional(g, P, spec):
    v, p, beta = _get(P, 'v', 0, int), _get(P, 'p', cast=float), _get(P, 'beta', cast=float)
    est = percolation.bootstrap_functional(g, v, p, beta, confidence=spec.confidence,
                                           **_sampling(spec))
    return estimates_table([_estimate_row(est, p=p, beta=beta)])


@task('tree_oracle', 'perc', ('p', 'n', 'quantity'))
def _tree_oracle(g, P, spec):
    if g.family_tag != 'tree_ball':
        raise PreconditionError("tree_oracle needs a tree_ball graph")
    d, r = g.family_params['degree'], g.family_params['radius']
    p = _get(P, 'p', cast=float)
    quantity = percolation.check_quantity(_get(P, 'quantity', 'edges', str))
    fn = (branching.tree_touch_distribution if quantity == 'edges'
          else branching.tree_cluster_distribution)
    dist = fn(d, r, p)
    return pd.DataFrame([{'p': p, 'n': n, 'quantity': quantity, 'tail': dist.tail(n)}
                         for n in _list(P, 'n', int)])


@task('insertion_tolerance', 'verify', ('u', 'v', 'p'))
def _insertion_tolerance(g, P, spec):
    u, v, p = _get(P, 'u', 0, int), _get(P, 'v', cast=int), _get(P, 'p', cast=float)
    est = percolation.tau_hat(g, u, v, p, confidence=spec.confidence, **_sampling(spec))
    return [percolation.insertion_tolerance_check(g, u, v, p, est, spec.confidence)]


@task('two_ghost', 'verify', ('p', 'n'))
def _two_ghost(g, P, spec):
    return percolation.two_ghost_sweep(g, _get(P, 'p', cast=float), _list(P, 'n', int),
                                       confidence=spec.confidence, **_sampling(spec))


@task('surgery', 'verify', ('p', 'n', 'k'))
def _surgery(g, P, spec):
    return percolation.surgery_sweep(g, _get(P, 'p', cast=float), _list(P, 'n', int),
                                     _list(P, 'k', int), confidence=spec.confidence,
                                     **_sampling(spec))


@task('mtp', 'verify', ('p', 'k'))
def _mtp(g, P, spec):
    return [percolation.mtp_check(g, _get(P, 'p', cast=float), _list(P, 'k', int),
                                  **_sampling(spec))]


@task('mtp_distance', 'verify', ('r', 'weight'))
def _mtp_distance(g, P, spec):
    return [percolation.mtp_distance_check(g, _get(P, 'r', 1, int), _get(P, 'weight', 'none', str))]


@task('kappapk', 'verify', ('p', 'k', 'beta', 'alpha', 'c2', 'c1'))
def _kappapk(g, P, spec):
    return [percolation.kappapk_bound_check(
        g, _get(P, 'p', cast=float), _get(P, 'k', cast=int), _get(P, 'beta', cast=float),
        _get(P, 'alpha', cast=float), _get(P, 'c2', cast=float), c1=_get(P, 'c1', 1.0, float),
        confidence=spec.confidence, **_sampling(spec))]


@task('theorem_chain', 'verify', ('u', 'v', 'p', 'n', 'k'))
def _theorem_chain(g, P, spec):
    return [percolation.theorem_chain_check(
        g, _get(P, 'u', 0, int), _get(P, 'v', cast=int), _get(P, 'p', cast=float),
        _get(P, 'n', cast=int), _get(P, 'k', cast=int), confidence=spec.confidence,
        **_sampling(spec))]


@task('bootstrap', 'verify', ('v', 'p', 'beta', 'c5'))
def _bootstrap(g, P, spec):
    return [percolation.bootstrap_report(g, _get(P, 'v', 0, int), _get(P, 'p', cast=float),
                                         _get(P, 'beta', cast=float), c5=_get(P, 'c5', None, float),
                                         confidence=spec.confidence, **_sampling(spec))]


# --- running ---

def tasks_in(group):
    return sorted(name for name, t in REGISTRY.items() if t.group == group)


def lookup(name):
    if name not in REGISTRY:
        raise SpecError(f"unknown task {name!r}; known tasks: {', '.join(sorted(REGISTRY))}")
    return REGISTRY[name]


def graph_from_params(graph_params):
    params = dict(graph_params)
    if 'family' not in params:
        raise SpecError("missing graph.family")
    family = params.pop('family')
    try:
        return build_graph(family, **params)
    except KeyError as e:
        raise SpecError(f"graph.{e.args[0]} is required for family {family}") from e


def load_graph(spec):
    return graph_from_params(spec.graph)


def execute(spec):
    """Run the task of `spec`; returns a DataFrame or a list of reports."""
    if spec.output_format not in OUTPUT_FORMATS:
        raise SpecError(f"output.format must be one of {OUTPUT_FORMATS}")
    t = lookup(spec.task)
    if spec.output_format == 'html' and t.group != 'verify':
        raise SpecError(f"html output is a dashboard of checks; {t.name} is a {t.group} table, "
                        f"use csv or json")
    t.check_params(spec.params)
    g = load_graph(spec)
    result = t.fn(g, dict(spec.params), spec)
    if isinstance(result, list):
        for rep in result:
            validate_report(rep)
    return result


def render(result, spec, title=None):
    if spec.output_format == 'json':
        if isinstance(result, pd.DataFrame):
            payload = result.to_dict(orient='records')
        else:
            payload = result
        return format_json({'task': spec.task, 'graph': spec.graph,
                            'seed': spec.master_seed, 'n_samples': spec.n_samples,
                            'results': payload})
    frame = result if isinstance(result, pd.DataFrame) else reports_frame(result)
    return format_csv(frame)


def summarize(spec, result, path):
    if isinstance(result, pd.DataFrame):
        status = f"{len(result)} rows"
    else:
        counts = {}
        for rep in result:
            counts[status_of(rep)] = counts.get(status_of(rep), 0) + 1
        status = ", ".join(f"{v} {k}" for k, v in sorted(counts.items()))
    return f"{spec.task} on {spec.graph.get('family')}: {status} -> {path or 'stdout'}"


def _emit(result, spec):
    if spec.output_format == 'html':
        if not spec.output_path:
            raise SpecError("html output needs output.path")
        if not isinstance(result, list):
            raise SpecError("html output needs check reports, not a table")
        render_dashboard(result, spec.output_path, title=f"perclab: {spec.task}",
                         seed=spec.master_seed)
        return
    text = render(result, spec)
    if spec.output_path:
        write_atomic(spec.output_path, text)
    else:
        sys.stdout.write(text)


def error_record(exc):
    if isinstance(exc, PerclabError):
        record = {'error': exc.kind, 'message': str(exc), 'exit_code': exc.exit_code}
        if isinstance(exc, ConvergenceError):
            record['bracket'] = exc.bracket
            record['iterations'] = exc.iterations
    else:
        record = {'error': 'runtime', 'message': f"{type(exc).__name__}: {exc}", 'exit_code': 4}
    return record


def _guarded(fn, *args):
    try:
        return fn(*args), 0
    except Exception as e:
        record = error_record(e)
        sys.stderr.write(json.dumps(to_jsonable(record)) + "\n")
        return None, record['exit_code']


def run(spec, verbose=False):
    """Execute one experiment; returns the process exit status."""
    def body():
        if verbose:
            print(f"Running {spec.task} on {spec.graph}...")
        result = execute(spec)
        _emit(result, spec)
        line = summarize(spec, result, spec.output_path)
        print(line, file=sys.stdout if spec.output_path else sys.stderr)
        return result

    _, code = _guarded(body)
    return code


def sweep_table(spec, axis, values):
    """
    One block of rows per value. A p axis keeps the master seed for every value
    (monotone coupling); any other axis derives a seed per value.
    """
    if not values:
        raise PreconditionError("sweep needs at least one value")
    t = lookup(spec.task)
    t.check_params(spec.params)
    if axis not in t.params:
        raise PreconditionError(f"sweep axis {axis!r} is not a parameter of {t.name}; "
                                f"it takes {', '.join(t.params)}")
    for value in values:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise PreconditionError(f"sweep axis {axis!r} needs numeric values, got {value!r}")
    g = load_graph(spec)
    frames = []
    for value in values:
        params = dict(spec.params)
        params[axis] = value
        seed = spec.master_seed if axis == 'p' else stream_seed(spec.master_seed, f"{axis}={value}")
        result = t.fn(g, params, replace(spec, master_seed=seed))
        if isinstance(result, list):
            for rep in result:
                validate_report(rep)
            result = reports_frame(result)
        result = result.copy()
        if axis in result.columns:
            result[axis] = value
        else:
            result.insert(0, axis, value)
        frames.append(result)
    table = pd.concat(frames, ignore_index=True)
    if axis == 'p' and t.monotone_in_p and 'estimate' in table:
        table = table.sort_values(['p'], kind='stable')
        keys = [c for c in ('n', 'k', 'quantity', 'beta') if c in table]
        grouped = table.groupby(keys, sort=False)['estimate'] if keys else [(None, table['estimate'])]
        flags = {}
        for _, col in grouped:
            ok = bool(np.all(np.diff(col.to_numpy(dtype=float)) >= 0))
            for idx in col.index:
                flags[idx] = ok
        table['monotone'] = pd.Series(flags)
        table = table.sort_index()
    return table


def sweep(spec, axis, values, verbose=False):
    def body():
        if verbose:
            print(f"Sweeping {spec.task} over {axis} = {values}...")
        table = sweep_table(spec, axis, values)
        out = replace(spec, output_format='csv' if spec.output_format == 'html'
                      else spec.output_format)
        _emit(table, out)
        print(summarize(spec, table, spec.output_path),
              file=sys.stdout if spec.output_path else sys.stderr)
        return table

    _, code = _guarded(body)
    return code


def build_graph_text(graph_params):
    """Edge-list text for the build-graph subcommand."""
    return format_edge_list(graph_from_params(graph_params))
