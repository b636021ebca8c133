import json
import subprocess
import sys

import pytest

from taxpolicy.cli import main
from taxpolicy.domains import BUILTIN_NAMES, domain_file_text


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def train_file(tmp_path, capsys):
    path = tmp_path / "train.jsonl"
    code, _, _ = run(
        ["gen-data", "--domain", "bw1", "--size", "3", "--trajectories", "5", "--horizon", "8", "--seed", "2", "-o", str(path)],
        capsys,
    )
    assert code == 0
    return path


def test_domains_listing(capsys):
    code, out, _ = run(["domains"], capsys)
    assert code == 0 and out.split() == list(BUILTIN_NAMES)
    code, out, _ = run(["domains", "pw2"], capsys)
    assert out == domain_file_text("pw2")
    assert run(["domains", "nope"], capsys)[0] == 2


def test_pipeline(tmp_path, train_file, capsys):
    meta = json.loads((tmp_path / "train.jsonl.meta.json").read_text())
    assert meta["instances"] == len(train_file.read_text().splitlines()) > 0
    pol = tmp_path / "policy.txt"
    code, _, _ = run(["learn", "--train", str(train_file), "--depth", "2", "--seed", "0", "-o", str(pol)], capsys)
    assert code == 0 and pol.read_text().startswith("(policy")
    code, out, _ = run(
        ["eval", "--policy", str(pol), "--domain", "bw1", "--size", "5", "--episodes", "20", "--horizon", "40", "--seed", "1"],
        capsys,
    )
    assert code == 0
    res = json.loads(out)
    assert set(res) == {"phi", "psi"} and 0 <= res["phi"] <= 1


def test_bagged_learning(tmp_path, train_file, capsys):
    pol = tmp_path / "bag.txt"
    argv = ["learn", "--train", str(train_file), "--depth", "2", "--bag", "3", "--sample", "10", "--seed", "4", "-o", str(pol)]
    assert run(argv, capsys)[0] == 0
    assert pol.read_text().startswith("(ensemble")
    assert run(["learn", "--train", str(train_file), "--sample", "10", "--seed", "4", "-o", "-"], capsys)[0] == 2
    # a file without trajectory tags can only be bagged per instance
    bare = tmp_path / "bare.jsonl"
    bare.write_text("".join(line.split(', "trajectories"')[0] + "}\n" for line in train_file.read_text().splitlines()))
    argv = ["learn", "--train", str(bare), "--domain", "bw1", "--depth", "2", "--bag", "3", "--seed", "4", "-o", "-"]
    assert run(argv, capsys)[0] == 2
    assert run(argv + ["--bag-unit", "instance"], capsys)[0] == 0


def test_seed_is_required(tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        main(["gen-data", "--domain", "bw1", "--size", "3", "--trajectories", "2", "--horizon", "5", "-o", str(tmp_path / "x")])
    assert err.value.code == 2


def test_bad_size_and_flags(tmp_path, capsys):
    base = ["gen-data", "--domain", "bw1", "--trajectories", "2", "--horizon", "5", "--seed", "0", "-o", str(tmp_path / "x")]
    assert run(base + ["--size", "2,2"], capsys)[0] == 2
    with pytest.raises(SystemExit):
        main(base + ["--size", "3", "--jobs", "0"])


def test_domain_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.dom"
    bad.write_text("(domain broken (predicates (p 1))")
    code, _, err = run(["inspect", str(bad)], capsys)
    assert code == 3 and "domain error" in err


def test_policy_parse_error(tmp_path, capsys):
    pol = tmp_path / "p.txt"
    pol.write_text("(policy (rule clear fly))")
    code, _, _ = run(["eval", "--policy", str(pol), "--domain", "bw1", "--size", "3", "--horizon", "5", "--seed", "0"], capsys)
    assert code == 6


def test_solver_budget_error(tmp_path, capsys):
    argv = ["gen-data", "--domain", "bw1", "--size", "6", "--trajectories", "1", "--horizon", "20", "--seed", "0",
            "--node-budget", "50", "-o", str(tmp_path / "x")]
    assert run(argv, capsys)[0] == 4


def test_empty_training_set(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    code, _, _ = run(["learn", "--train", str(empty), "--domain", "bw1", "--seed", "0", "-o", "-"], capsys)
    assert code == 5


def test_inspect_round_trips(tmp_path, train_file, capsys):
    dom = tmp_path / "bw2.dom"
    dom.write_text(domain_file_text("bw2"))
    code, out, _ = run(["inspect", str(dom)], capsys)
    assert code == 0
    again = tmp_path / "again.dom"
    again.write_text(out)
    assert run(["inspect", str(again)], capsys)[1] == out

    code, out, _ = run(["inspect", str(train_file), "--domain", "bw1"], capsys)
    assert code == 0 and out == train_file.read_text()

    pol = tmp_path / "p.txt"
    pol.write_text("(policy (rule (on gclear) unstack) (rule a-thing pick-up))")
    code, out, _ = run(["inspect", str(pol), "--domain", "bw1"], capsys)
    assert code == 0
    pol.write_text(out)
    assert run(["inspect", str(pol), "--domain", "bw1"], capsys)[1] == out


def test_derived_concepts_on_the_command_line(tmp_path, capsys):
    pol = tmp_path / "p.txt"
    pol.write_text("(policy (rule above-target unstack))")
    base = ["inspect", str(pol), "--domain", "bw1"]
    assert run(base, capsys)[0] == 6
    assert run(base + ["--derive", "above-target=(and ((star on) (on gclear)) clear)"], capsys)[0] == 0


def test_experiment_command(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        "domain = bw1\ntrain_size = 3\ntrajectories = 4\ntrain_horizon = 8\ntest_size = 4\neval_horizon = 30\n"
        "depth = 2\nwidth = 3\nbeam = 2\nepisodes = 5\ntrials = 3\nseed = 1\nlabel = tiny\n"
    )
    code, out, _ = run(["experiment", str(cfg), "--trials", "1", "--csv", "--out-dir", str(tmp_path / "out")], capsys)
    assert code == 0
    header, row = out.splitlines()
    assert header == "domain,setting,phi,psi,trials"
    assert row.startswith("bw1,tiny,") and row.endswith(",1")
    assert (tmp_path / "out" / "trial0-policy.txt").exists()
    bad = tmp_path / "bad.cfg"
    bad.write_text("domain = bw1\n")
    assert run(["experiment", str(bad)], capsys)[0] == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "taxpolicy", "domains"], capture_output=True, text=True, check=True)
    assert out.stdout.split() == list(BUILTIN_NAMES)
