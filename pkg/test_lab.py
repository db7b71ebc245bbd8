import io
import json

import pandas as pd
import pytest

import lab
from config import ExperimentSpec, parse_flat_config
from perclab import main

TORUS_16 = ["--set", "graph.family=torus", "--set", "graph.dims=16,16"]
TREE_5 = ["--set", "graph.family=tree_ball", "--set", "graph.degree=3", "--set", "graph.radius=5"]


def last_error(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


def test_return_probability_on_the_torus(tmp_path, capsys):
    out = tmp_path / "pn.csv"
    code = main(["walk", "return_probability", *TORUS_16, "--set", "task.n=4",
                 "--seed", "1", "--out", str(out)])
    assert code == 0
    df = pd.read_csv(out)
    assert list(df.columns) == ['n', 'p_n', 'log_p_n']
    assert df['p_n'].iloc[4] == pytest.approx(36 / 256, abs=1e-12)
    assert "return_probability on torus: 5 rows" in capsys.readouterr().out


def test_spectral_profile_csv(tmp_path):
    out = tmp_path / "profile.csv"
    code = main(["spectral", "spectral_profile", "--set", "graph.family=cycle", "--set", "graph.n=8",
                 "--set", "task.thresholds=1,2,4,8,16", "--seed", "1", "--out", str(out)])
    assert code == 0
    df = pd.read_csv(out).sort_values('L')
    assert list(df.columns) == ['L', 'lambda', 'mode']
    assert set(df['mode']) == {'exhaustive'}
    values = dict(zip(df['L'], df['lambda']))
    assert values[4] == pytest.approx(0.75, abs=1e-12)
    assert values[16] == pytest.approx(0.0, abs=1e-12)


def test_config_file_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "walk.cfg"
    cfg.write_text("graph.family = cycle\ngraph.n = 64\n"
                   "task.name = return_probability\ntask.n = 10\n"
                   "sampling.master_seed = 3\n")
    assert main(["walk", "--config", str(cfg)]) == 0
    df = pd.read_csv(io.StringIO(capsys.readouterr().out))
    assert len(df) == 11
    assert df['p_n'].iloc[2] == pytest.approx(0.5)

    assert main(["walk", "--config", str(cfg), "--set", "task.n=4"]) == 0
    assert len(pd.read_csv(io.StringIO(capsys.readouterr().out))) == 5


@pytest.mark.parametrize("argv", [
    ["walk", "no_such_task", *TORUS_16, "--seed", "1"],
    ["walk", "two_ghost", *TORUS_16, "--seed", "1"],
    ["walk", "return_probability", *TORUS_16, "--set", "task.n=4"],
    ["walk", "return_probability", "--set", "task.n=4", "--seed", "1"],
    ["walk", "return_probability", *TORUS_16, "--seed", "1"],
    ["walk", "return_probability", *TORUS_16, "--set", "task.n=4", "--seed", "1",
     "--set", "graph.dims.x=3"],
])
def test_spec_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert last_error(capsys)['error'] == 'parse'


def test_precondition_failure_writes_nothing(tmp_path, capsys):
    out = tmp_path / "ghost.json"
    code = main(["verify", "two_ghost", "--set", "graph.family=lamplighter_segment",
                 "--set", "graph.length=3", "--set", "task.p=0.5", "--set", "task.n=4",
                 "--seed", "1", "--format", "json", "--out", str(out)])
    assert code == 3
    record = last_error(capsys)
    assert record['error'] == 'precondition'
    assert record['exit_code'] == 3
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []


def test_validity_error_exits_3(capsys):
    code = main(["walk", "return_probability", "--set", "graph.family=cycle",
                 "--set", "graph.n=8", "--set", "task.n=10", "--seed", "1"])
    assert code == 3
    assert last_error(capsys)['error'] == 'validity'


@pytest.mark.parametrize("values", ["", "a,b", "0.2,x"])
def test_bad_sweep_values_exit_3(values, capsys):
    code = main(["sweep", "cluster_tail", *TREE_5, "--set", "task.n=2", "--seed", "1",
                 "--set", "sampling.n_samples=50", "--axis", "p", "--values", values])
    assert code == 3
    assert last_error(capsys)['error'] == 'precondition'


def test_sweep_axis_must_be_a_task_parameter(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code = main(["sweep", "cluster_tail", *TREE_5, "--set", "task.p=0.5", "--set", "task.n=2",
                 "--seed", "1", "--axis", "bogus", "--values", "1,2,3", "--out", str(out)])
    assert code == 3
    record = last_error(capsys)
    assert record['error'] == 'precondition'
    assert "bogus" in record['message']
    assert not out.exists()


@pytest.mark.parametrize("override", ["task.quantitty=vertices", "task.quantity=clusters"])
def test_unknown_task_parameters_exit_3(override, capsys):
    code = main(["perc", "cluster_tail", *TREE_5, "--set", "task.p=0.5", "--set", "task.n=2",
                 "--set", override, "--set", "sampling.n_samples=50", "--seed", "1"])
    assert code == 3
    assert last_error(capsys)['error'] == 'precondition'


def test_unknown_parameters_are_rejected_in_sweeps_too(capsys):
    code = main(["sweep", "cluster_tail", *TREE_5, "--set", "task.n=2", "--set", "task.qty=edges",
                 "--seed", "1", "--axis", "p", "--values", "0.2,0.4"])
    assert code == 3
    assert "task.qty" in last_error(capsys)['message']


def test_every_task_declares_its_parameters():
    for t in lab.REGISTRY.values():
        assert t.params, t.name
        assert len(set(t.params)) == len(t.params), t.name


def test_results_do_not_depend_on_replicas(tmp_path):
    outputs = []
    for replicas in ("1", "3"):
        out = tmp_path / f"tail-{replicas}.csv"
        code = main(["perc", "cluster_tail", *TREE_5, "--set", "task.p=0.4",
                     "--set", "task.n=2,4,8", "--set", "sampling.n_samples=500",
                     "--seed", "7", "--replicas", replicas, "--workers", "1", "--out", str(out)])
        assert code == 0
        outputs.append(out.read_text())
    assert outputs[0] == outputs[1]
    df = pd.read_csv(tmp_path / "tail-1.csv")
    assert list(df.columns[:6]) == ['p', 'n', 'estimate', 'ci_low', 'ci_high', 'bound']
    assert list(df['n']) == [2, 4, 8]
    assert df['estimate'].is_monotonic_decreasing


def test_verify_json_output(tmp_path):
    out = tmp_path / "ghost.json"
    code = main(["verify", "two_ghost", "--set", "graph.family=torus", "--set", "graph.dims=8,8",
                 "--set", "task.p=0.5", "--set", "task.n=4,16", "--set", "sampling.n_samples=200",
                 "--seed", "0x2a", "--format", "json", "--out", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload['task'] == 'two_ghost'
    assert payload['seed'] == 42
    assert [r['n'] for r in payload['results']] == [4, 16]
    assert all(r['pass'] for r in payload['results'])
    assert all(len(r['inputs_digest']) == 16 for r in payload['results'])


def test_verify_html_dashboard(tmp_path):
    out = tmp_path / "mtp.html"
    code = main(["verify", "mtp_distance", "--set", "graph.family=cycle", "--set", "graph.n=9",
                 "--set", "task.r=2", "--seed", "1", "--format", "html", "--out", str(out)])
    assert code == 0
    html = out.read_text()
    assert "mtp_distance" in html
    assert "1 pass" in html


def test_html_needs_an_output_path(capsys):
    code = main(["verify", "mtp_distance", "--set", "graph.family=cycle", "--set", "graph.n=9",
                 "--seed", "1", "--format", "html"])
    assert code == 2


def test_html_is_only_for_checks(tmp_path, capsys):
    out = tmp_path / "pn.html"
    code = main(["walk", "return_probability", *TORUS_16, "--set", "task.n=4", "--seed", "1",
                 "--format", "html", "--out", str(out)])
    assert code == 2
    assert "html" in last_error(capsys)['message']
    assert not out.exists()


def test_build_graph(tmp_path, capsys):
    assert main(["build-graph", "--set", "graph.family=torus", "--set", "graph.dims=3,3"]) == 0
    text = capsys.readouterr().out
    assert text.splitlines()[0] == "vertices 9"
    assert len(text.splitlines()) == 19

    out = tmp_path / "tree.txt"
    assert main(["build-graph", *TREE_5, "--out", str(out)]) == 0
    assert f"Generated {out}" in capsys.readouterr().out
    assert out.read_text().startswith("vertices 94\n")


def test_p_sweep_is_coupled_and_monotone(tmp_path):
    out = tmp_path / "sweep.csv"
    code = main(["sweep", "cluster_tail", *TREE_5, "--set", "task.n=2,4",
                 "--set", "sampling.n_samples=300", "--seed", "5",
                 "--axis", "p", "--values", "0.6,0.2,0.4", "--out", str(out)])
    assert code == 0
    df = pd.read_csv(out)
    assert list(df.columns).count('p') == 1
    assert len(df) == 6
    assert df['monotone'].all()
    assert list(df['p']) == [0.6, 0.6, 0.2, 0.2, 0.4, 0.4]


def test_sweep_over_a_check(tmp_path):
    out = tmp_path / "mtp.csv"
    code = main(["sweep", "mtp_distance", "--set", "graph.family=torus", "--set", "graph.dims=5,5",
                 "--seed", "1", "--axis", "r", "--values", "1,2,3", "--out", str(out)])
    assert code == 0
    df = pd.read_csv(out)
    assert list(df['r']) == [1, 2, 3]
    assert df['pass'].all()


def test_tree_oracle_task(capsys):
    code = main(["perc", "tree_oracle", "--set", "graph.family=tree_ball", "--set", "graph.degree=3",
                 "--set", "graph.radius=2", "--set", "task.p=0.5", "--set", "task.n=1,10",
                 "--set", "task.quantity=vertices", "--seed", "1"])
    assert code == 0
    df = pd.read_csv(io.StringIO(capsys.readouterr().out))
    assert df['tail'].iloc[0] == pytest.approx(1.0)
    assert df['tail'].iloc[1] == pytest.approx(0.5 ** 9)


def test_every_registered_task_has_a_known_group():
    assert set(t.group for t in lab.REGISTRY.values()) == {'walk', 'spectral', 'perc', 'verify'}
    assert 'surgery' in lab.tasks_in('verify')
    assert 'return_probability' in lab.tasks_in('walk')


def test_error_record_for_unexpected_exceptions():
    record = lab.error_record(ZeroDivisionError("boom"))
    assert record == {'error': 'runtime', 'message': "ZeroDivisionError: boom", 'exit_code': 4}


def test_sweep_table_derives_seeds_off_the_p_axis():
    spec = ExperimentSpec.from_sections(parse_flat_config(
        "graph.family = tree_ball\ngraph.degree = 3\ngraph.radius = 4\n"
        "task.name = cluster_tail\ntask.p = 0.5\nsampling.master_seed = 9\n"
        "sampling.n_samples = 200\n"))
    table = lab.sweep_table(spec, 'n', [2, 3])
    assert list(table['n']) == [2, 3]
    assert table['estimate'].between(0, 1).all()
