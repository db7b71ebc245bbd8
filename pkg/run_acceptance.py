"""
Full-size acceptance battery. Prints one status line per check and writes
acceptance.html (dashboard) and acceptance.json next to this file.

    python run_acceptance.py [--quick] [--workers N]

--quick divides the Monte Carlo sample counts by 100.
"""
import argparse
import filecmp
import math
import os
import sys
import tempfile
import time
from itertools import combinations

import numpy as np

import lab
import percolation
import spectral
from branching import bootstrap_exact, tree_cluster_distribution
from config import BASE_DIR, ExperimentSpec
from graphs import ball, build_custom, build_cycle, build_torus, build_tree_ball
from montecarlo import Estimate, stream_seed
from report import format_json, render_dashboard, write_atomic
from walks import delta, return_probabilities

MASTER_SEED = 20240611


def battery():
    graphs = {f"cycle[{n}]": build_cycle(n) for n in range(3, 11)}
    graphs["torus[3,3]"] = build_torus([3, 3])
    for n in range(2, 11):
        graphs[f"path[{n}]"] = build_custom(n, [(i, i + 1) for i in range(n - 1)])
    clique = list(combinations(range(6), 2))
    tail = [(5 + i, 6 + i) for i in range(6)]
    graphs["lollipop[6,6]"] = build_custom(12, clique + tail)
    return graphs


def _summary(check, worst, passed, **extra):
    out = {'check': check, 'lhs': None, 'rhs': None, 'pass': bool(passed), 'slack': worst}
    out.update(extra)
    return out


def exact_return_probabilities():
    reports = []
    g = build_cycle(256)
    ps = return_probabilities(g, 0, 30)
    err = max(abs(ps[2 * n] - math.comb(2 * n, n) / 4 ** n) / ps[2 * n] for n in range(16))
    reports.append(_summary('return_probability_cycle', 1e-12 - err, err <= 1e-12))
    g = build_torus([64, 64])
    ps = return_probabilities(g, 0, 20)
    err = max(abs(ps[2 * n] - (math.comb(2 * n, n) / 4 ** n) ** 2) / ps[2 * n] for n in range(11))
    reports.append(_summary('return_probability_torus', 1e-12 - err, err <= 1e-12))
    return reports


def killed_gap_closed_form():
    g = build_cycle(256)
    err = 0.0
    for k in range(1, 51):
        lam = spectral.lambda_A(g, range(k))
        err = max(err, abs(lam - math.sin(math.pi / (k + 1)) ** 2))
    single = spectral.lambda_A(g, [0])
    return [_summary('killed_gap_path', 1e-9 - err, err <= 1e-9 and single == 1.0)]


def _brute_force_gap(g, members):
    P = g.transition.toarray()[np.ix_(members, members)]
    return 1 - np.max(np.abs(np.linalg.eigvals(P))) ** 2


def exhaustive_profiles(graphs):
    reports = []
    for name, g in graphs.items():
        if g.vertex_count > 10:
            continue
        pool, bits, masses = spectral.exhaustive_sets(g)
        oracle = np.array([_brute_force_gap(g, pool[row]) for row in bits])
        thresholds = sorted(set(masses.tolist()))
        prof = spectral.spectral_profile(g, thresholds, 'exhaustive')
        err = max(abs(L_val - oracle[masses <= L + 1e-12].min()) for L, L_val in prof.points)
        reports.append(_summary('exhaustive_profile', 1e-9 - err, err <= 1e-9, graph_name=name))
    return reports


def key_lemma(graphs):
    return [dict(spectral.key_lemma_trials(g, 1000, MASTER_SEED), graph_name=name)
            for name, g in graphs.items()]


def decay_and_escape(graphs):
    reports = []
    for name, g in graphs.items():
        prof = spectral.spectral_profile(g, [], 'exhaustive')
        fails, vacuous, total = 0, 0, 0
        for v in range(g.vertex_count):
            for ell in range(6):
                checks = [spectral.l2_decay_check(g, delta(g, v), ell, prof)]
                for r in (0, 1):
                    D = ball(g, v, r)
                    for variant in spectral.VARIANTS:
                        checks.append(spectral.escape_threshold(g, D, ell, prof, variant))
                for rep in checks:
                    total += 1
                    fails += not rep['pass']
                    vacuous += bool(rep['vacuous'])
        reports.append(_summary('decay_and_escape', None, fails == 0, graph_name=name,
                                checks=total, vacuous_checks=vacuous, violations=fails))
    return reports


def cheeger(graphs):
    return [dict(spectral.cheeger_check(g), graph_name=name) for name, g in graphs.items()]


def mass_transport(workers):
    reports = []
    for g in (build_torus([5, 5]), build_tree_ball(3, 6)):
        for p in (0.2, 0.4, 0.6):
            reports.append(percolation.mtp_check(g, p, [1, 2, 3], 100,
                                                 stream_seed(MASTER_SEED, f"mtp/{p}"),
                                                 replicas=workers, workers=workers))
        reports.append(percolation.mtp_distance_check(g, 2, 'degree'))
    return reports


def tree_oracle(n_samples, workers):
    g = build_tree_ball(3, 14)
    stats = percolation.cluster_stats(g, 0, 0.5, n_samples, stream_seed(MASTER_SEED, 'tree'),
                                      replicas=workers, workers=workers)
    exact = tree_cluster_distribution(3, 14, 0.5)
    reports = []
    for n in (2, 4, 8, 16, 32):
        est = Estimate.proportion(stats[:, 0] >= n)
        truth = exact.tail(n)
        reports.append({'check': 'tree_tail', 'n': n, 'lhs': est.mean, 'rhs': truth,
                        'pass': est.ci_low <= truth <= est.ci_high,
                        'slack': min(truth - est.ci_low, est.ci_high - truth),
                        'estimates': [est.to_dict()]})
    mc = float(np.mean(np.exp(np.log(stats[:, 0]) ** 0.5)))
    truth, _ = bootstrap_exact(3, 14, 0.5, 0.5)
    rel = abs(mc - truth) / truth
    reports.append({'check': 'tree_bootstrap', 'lhs': mc, 'rhs': truth, 'pass': rel <= 0.02,
                    'slack': 0.02 - rel})
    return reports


def ghost_and_surgery(n_samples, workers):
    reports = []
    for g in (build_tree_ball(3, 12), build_torus([32, 32])):
        for p in (0.3, 0.45, 0.55):
            seed = stream_seed(MASTER_SEED, f"{g.family_tag}/{p}")
            reports.extend(percolation.two_ghost_sweep(g, p, [4, 16, 64], n_samples, seed,
                                                       replicas=workers, workers=workers))
            reports.extend(percolation.surgery_sweep(g, p, [4, 16, 64], [1, 2, 3], n_samples,
                                                     seed, replicas=workers, workers=workers))
    return reports


def determinism():
    sections = {
        'graph': {'family': 'tree_ball', 'degree': 3, 'radius': 8},
        'task': {'name': 'cluster_tail', 'p': 0.45, 'n': [2, 8, 32]},
        'sampling': {'n_samples': 2000, 'master_seed': MASTER_SEED, 'replicas': 1},
        'output': {'format': 'csv'},
    }
    with tempfile.TemporaryDirectory() as tmp:
        paths = []
        for i, replicas in enumerate((1, 1, 4)):
            sections['sampling']['replicas'] = replicas
            sections['output']['path'] = os.path.join(tmp, f"run{i}.csv")
            lab.run(ExperimentSpec.from_sections(sections))
            paths.append(sections['output']['path'])
        same = all(filecmp.cmp(paths[0], p, shallow=False) for p in paths[1:])
    return [_summary('determinism', None, same)]


def main():
    parser = argparse.ArgumentParser(description="perclab acceptance battery")
    parser.add_argument("--quick", action="store_true")
    parser.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    args = parser.parse_args()
    scale = 100 if args.quick else 1

    graphs = battery()
    steps = [
        ("exact return probabilities", exact_return_probabilities),
        ("killed gap closed form", killed_gap_closed_form),
        ("exhaustive profiles", lambda: exhaustive_profiles(graphs)),
        ("key lemma", lambda: key_lemma(graphs)),
        ("L2 decay and escape thresholds", lambda: decay_and_escape(graphs)),
        ("Cheeger sandwich", lambda: cheeger(graphs)),
        ("mass transport", lambda: mass_transport(args.workers)),
        ("tree branching oracle", lambda: tree_oracle(1_000_000 // scale, args.workers)),
        ("two-ghost and surgery", lambda: ghost_and_surgery(100_000 // scale, args.workers)),
        ("determinism", determinism),
    ]
    reports = []
    for title, step in steps:
        print(f"Running {title}...")
        start = time.time()
        try:
            batch = step()
        except Exception as e:
            print(f"  Error in {title}: {e}")
            batch = [_summary(title, None, False, flags=[str(e)])]
        failed = sum(not r['pass'] for r in batch)
        print(f"  {len(batch) - failed}/{len(batch)} passed in {time.time() - start:.1f}s")
        reports.extend(batch)

    json_path = os.path.join(BASE_DIR, 'acceptance.json')
    write_atomic(json_path, format_json(reports))
    print(f"Generated {json_path}")
    html_path = os.path.join(BASE_DIR, 'acceptance.html')
    render_dashboard(reports, html_path, title="perclab acceptance", seed=MASTER_SEED)
    print(f"Generated {html_path}")
    return 0 if all(r['pass'] for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
