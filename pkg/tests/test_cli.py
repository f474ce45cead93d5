"""The command line: exit codes, artifacts, replay and flag validation."""
import json
import subprocess
import sys

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from forestlab import cli
from forestlab.io import grid_spec_dict, load_grid_spec


@pytest.fixture
def pair_file(tmp_path):
    p = tmp_path / "pair.json"
    p.write_text(json.dumps({"dimension": 2, "grids": [{"matrix": "identity"}, {"matrix": "identity"}]}))
    return str(p)


@pytest.fixture
def rotated_pair_file(tmp_path):
    import math
    c, s = math.cos(math.atan(1 / math.e)), math.sin(math.atan(1 / math.e))
    p = tmp_path / "rot.json"
    p.write_text(json.dumps({"dimension": 2, "grids": [
        {"matrix": "honeycomb"}, {"matrix": [[c, -s], [s, c]]}]}))
    return str(p)


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_check_identity_pair_exit_4(pair_file, capsys):
    code, out, _ = run(["check", "--grids", pair_file, "--height", "50"], capsys)
    assert code == 4
    data = json.loads(out)
    assert data["status"] == "not_dense_forest"
    assert data["witness"]["p"] == [[0, 1], [0, 1]]
    assert data["height"] == 50 and data["tolerance"] == 1e-9
    assert data["config"]["seed"] == 0 and data["config"]["command"] == "check"


def test_check_no_obstruction_exit_0(rotated_pair_file, capsys):
    code, out, _ = run(["check", "--grids", rotated_pair_file, "--height", "20"], capsys)
    assert code == 0 and json.loads(out)["status"] == "no_obstruction"


def test_sigma_prints_value(capsys):
    code, out, _ = run(["sigma", "--d", "2", "--k", "5"], capsys)
    assert code == 0 and out == "12\n"
    code, out, _ = run(["sigma", "--d", "1", "--k", "3", "--format", "json", "--lambda", "1.5"], capsys)
    data = json.loads(out)
    assert data["sigma"] == 1 and data["borel_cantelli"]["converges"]


def test_sigma_invalid_regime_exit_2(capsys):
    code, _, err = run(["sigma", "--d", "2", "--k", "4"], capsys)
    assert code == 2 and "k > d^2" in err


def test_flow_fill_golden(capsys):
    code, out, _ = run(["flow", "--u", "golden", "--delta", "0.05", "--mode", "fill"], capsys)
    assert code == 0
    T = json.loads(out)["filling_time"]
    from forestlab.torus import filling_time
    assert T == pytest.approx(filling_time([1.0, (1 + 5 ** 0.5) / 2], 0.05), rel=1e-2)
    assert run(["flow", "--u", "golden", "--delta", "0.05", "--mode", "fill"], capsys)[1] == out


def test_flow_axis_not_dense_exit_4(capsys):
    code, out, _ = run(["flow", "--u", "axis", "--delta", "0.49", "--T", "3"], capsys)
    assert code == 4 and json.loads(out)["farthest_point"][0] == pytest.approx(0.5)
    code, out, _ = run(["flow", "--u", "axis", "--delta", "0.25", "--mode", "fill"], capsys)
    assert code == 4 and json.loads(out)["infinite"]


def test_flow_discrete(capsys):
    code, out, _ = run(["flow", "--u", "1,2", "--delta", "0.25", "--S", "2", "--mode", "discrete"], capsys)
    assert code == 0 and json.loads(out)["dense"]


def test_visibility_single_query(capsys):
    code, out, _ = run(["visibility", "--grids", "identity", "--epsilon", "0.25",
                        "--anchor", "0,0.5", "--direction", "1,0", "--l-max", "100"], capsys)
    assert code == 4 and json.loads(out)["result"]["status"] == "blocked"
    code, out, _ = run(["visibility", "--grids", "identity", "--epsilon", "0.1",
                        "--anchor", "0,0", "--direction", "1,1"], capsys)
    assert code == 0 and json.loads(out)["result"]["length"] == 0.0


def test_visibility_profile_csv(rotated_pair_file, capsys):
    code, out, _ = run(["visibility", "--grids", rotated_pair_file, "--epsilon", "0.25",
                        "--epsilon", "0.125", "--anchors", "4", "--format", "csv"], capsys)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].startswith("epsilon,V_hat") and len(lines) == 3


def test_visibility_budget_exit_3(capsys):
    code, _, err = run(["visibility", "--grids", "identity", "--epsilon", "0.1", "--anchor", "0,0.5",
                        "--direction", "1,0.0000001", "--l-max", "1e8", "--budget", "100"], capsys)
    assert code == 3 and "budget" in err


def test_check_budget_exit_3(tmp_path, capsys):
    p = tmp_path / "three.json"
    p.write_text(json.dumps({"dimension": 2, "grids": [
        {"matrix": [[1.0, 0.1], [0.2, 1.0]]}, {"matrix": [[1.0, 0.3], [0.1, 1.0]]},
        {"matrix": [[0.9, 0.2], [0.4, 1.0]]}]}))
    code, _, _ = run(["check", "--grids", str(p), "--budget", "10"], capsys)
    assert code == 3


def test_cover_json_and_csv(capsys):
    code, out, _ = run(["cover", "--d", "2", "--eta", "0.3", "--verify-trials", "20000"], capsys)
    data = json.loads(out)
    assert code == 0 and data["valid"] and data["verified_gap"] < 0.3
    code, out, _ = run(["cover", "--d", "1", "--eta", "0.5", "--format", "csv", "--verify-trials", "0"], capsys)
    assert out.splitlines()[0] == "x0,x1" and len(out.splitlines()) == 1 + 4


def test_table_format(capsys):
    code, out, _ = run(["sigma", "--d", "1", "--k", "3", "--format", "table"], capsys)
    assert code == 0 and "sigma: 1.0" in out


def test_global_flags_before_or_after_subcommand(capsys):
    a = run(["--seed", "7", "cover", "--d", "1", "--eta", "0.4", "--verify-trials", "1000"], capsys)[1]
    b = run(["cover", "--d", "1", "--eta", "0.4", "--verify-trials", "1000", "--seed", "7"], capsys)[1]
    assert a == b and json.loads(a)["config"]["seed"] == 7


def test_threads_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("FORESTLAB_THREADS", "3")
    out = run(["sigma", "--d", "1", "--k", "3", "--format", "json"], capsys)[1]
    assert json.loads(out)["config"]["threads"] == 3
    out = run(["sigma", "--d", "1", "--k", "3", "--format", "json", "--threads", "2"], capsys)[1]
    assert json.loads(out)["config"]["threads"] == 2


def test_honeycomb_preset_in_artifact(capsys):
    out = run(["check", "--grids", "honeycomb"], capsys)[1]
    assert "0.8660254037844386" in out
    assert json.loads(out)["grids"] == json.loads(json.dumps(grid_spec_dict(load_grid_spec("honeycomb"))))


# determinism and replay

ARTIFACT_RUNS = [
    ["check", "--grids", "PAIR"],
    ["visibility", "--grids", "ROT", "--epsilon", "0.25", "--anchors", "4"],
    ["visibility", "--grids", "ROT", "--epsilon", "0.25", "--anchors", "4", "--format", "csv"],
    ["flow", "--u", "0.3,0.5,0.81", "--delta", "0.2", "--T", "4"],
    ["cover", "--d", "2", "--eta", "0.3", "--verify-trials", "5000", "--seed", "3"],
    ["sigma", "--d", "1", "--k", "4", "--lambda", "2", "--format", "json"],
]


def _subst(argv, pair, rot):
    return [pair if a == "PAIR" else rot if a == "ROT" else a for a in argv]


@pytest.mark.parametrize("argv", ARTIFACT_RUNS, ids=lambda a: a[0])
def test_artifacts_byte_identical(argv, pair_file, rotated_pair_file, tmp_path, capsys):
    argv = _subst(argv, pair_file, rotated_pair_file)
    outs = []
    for i in range(2):
        path = tmp_path / f"out{i}"
        run(argv + ["--out", str(path)], capsys)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1] and outs[0]


@pytest.mark.parametrize("argv", [a for a in ARTIFACT_RUNS if "csv" not in a], ids=lambda a: a[0])
def test_config_replay_reproduces_run(argv, pair_file, rotated_pair_file, tmp_path, capsys):
    argv = _subst(argv, pair_file, rotated_pair_file)
    first = tmp_path / "first.json"
    code1 = cli.main(argv + ["--out", str(first)])
    second = tmp_path / "second.json"
    code2 = cli.main(["--config", str(first), "--out", str(second)])
    capsys.readouterr()
    assert code1 == code2
    assert first.read_bytes() == second.read_bytes()


def test_experiment_artifacts_and_replay(tmp_path, capsys):
    man = tmp_path / "m.json"
    man.write_text(json.dumps({"d": 1, "k": 3, "levels": [3, 4, 5, 6], "samples": 1, "seed": 2,
                               "anchors": 4}))
    runs = []
    for name in ("a", "b"):
        code = cli.main(["experiment", "--manifest", str(man), "--out", str(tmp_path / name)])
        assert code == 0
        runs.append({f: (tmp_path / name / f).read_bytes() for f in ("raw.csv", "summary.json")})
    capsys.readouterr()
    assert runs[0] == runs[1]
    code = cli.main(["--config", str(tmp_path / "a" / "summary.json"), "--out", str(tmp_path / "c")])
    capsys.readouterr()
    assert code == 0
    assert (tmp_path / "c" / "raw.csv").read_bytes() == runs[0]["raw.csv"]


def test_console_script_runs():
    r = subprocess.run([sys.executable, "-m", "forestlab.cli", "sigma", "--d", "1", "--k", "3"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout == "1\n"


# invalid input never reaches computation

INVALID = [
    [],
    ["bogus"],
    ["check"],
    ["check", "--grids", "missing.json"],
    ["check", "--grids", "identity", "--height", "0"],
    ["check", "--grids", "identity", "--tol", "-1"],
    ["visibility", "--grids", "identity"],
    ["visibility", "--grids", "identity", "--epsilon", "0"],
    ["visibility", "--grids", "identity", "--epsilon", "0.1", "--anchor", "0,0"],
    ["visibility", "--grids", "identity", "--epsilon", "0.1", "--direction", "1,0"],
    ["visibility", "--grids", "identity", "--epsilon", "0.1", "--anchor", "0,0", "--direction", "1,0,0"],
    ["visibility", "--grids", "identity", "--epsilon", "0.1", "--epsilon", "0.2", "--anchor", "0,0",
     "--direction", "1,0"],
    ["visibility", "--grids", "identity", "--epsilon", "0.1", "--anchor", "0,0", "--direction", "0,0"],
    ["visibility", "--grids", "identity", "--epsilon", "0.1", "--anchor", "a,b", "--direction", "1,0"],
    ["flow", "--u", "golden"],
    ["flow", "--u", "golden", "--delta", "0.7", "--T", "1"],
    ["flow", "--u", "golden", "--delta", "0.1"],
    ["flow", "--u", "golden", "--delta", "0.1", "--mode", "discrete", "--T", "3"],
    ["flow", "--u", "golden", "--delta", "0.1", "--T", "-1"],
    ["flow", "--u", "golden", "--delta", "0.1", "--mode", "sideways"],
    ["cover", "--d", "4", "--eta", "0.3"],
    ["cover", "--d", "2", "--eta", "1.0"],
    ["cover", "--d", "2", "--eta", "0.3", "--verify-trials", "-5"],
    ["experiment"],
    ["experiment", "--manifest", "missing.json"],
    ["sigma", "--d", "1"],
    ["sigma", "--d", "0", "--k", "3"],
    ["sigma", "--d", "1", "--k", "3", "--lambda", "-1"],
    ["sigma", "--d", "1", "--k", "3", "--threads", "0"],
    ["sigma", "--d", "1", "--k", "3", "--seed", "x"],
    ["sigma", "--d", "1", "--k", "3", "--format", "xml"],
    ["--config", "missing.json"],
]


@pytest.fixture
def no_compute(monkeypatch):
    def boom(*a, **k):
        raise AssertionError("computation reached with invalid flags")
    for name in cli.COMMANDS:
        monkeypatch.setitem(cli.COMMANDS, name, boom)


@pytest.mark.parametrize("argv", INVALID, ids=lambda a: " ".join(a) or "empty")
def test_invalid_flags_exit_2(argv, no_compute, capsys):
    assert cli.main(argv) == 2
    capsys.readouterr()


_tokens = st.sampled_from([
    "--grids", "identity", "missing.json", "--epsilon", "0", "-1", "0.1", "--anchor", "--direction",
    "0,0", "1,0,0", "nan", "--delta", "0.9", "--T", "--S", "--mode", "fill", "discrete", "--d", "9",
    "--eta", "1.5", "--k", "--height", "--tol", "--threads", "--seed", "x", "--format", "xml",
    "--verify-trials", "--lambda", "--manifest", "--u",
])


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(cmd=st.sampled_from(list(cli.COMMANDS)), rest=st.lists(_tokens, max_size=8))
def test_fuzzed_flags_validated_before_compute(cmd, rest, monkeypatch):
    reached = []

    def record(args, cfg):
        reached.append(args)
        return 0
    for name in cli.COMMANDS:
        monkeypatch.setitem(cli.COMMANDS, name, record)
    code = cli.main([cmd] + rest)
    if reached:
        # anything that got through must be a self-consistent configuration
        args = reached[0]
        assert code == 0
        cli._validate(args)
    else:
        assert code in (0, 2)
