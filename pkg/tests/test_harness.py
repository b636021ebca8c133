import random
from dataclasses import replace
from importlib import resources

import pytest

from taxpolicy.domains import GeneratorSpec, ProblemSize, builtin_domain, sample_problem
from taxpolicy.harness import (
    EvalConfig,
    ExperimentConfig,
    TrainConfig,
    aggregate,
    draw_test_states,
    evaluate,
    format_config,
    generate_training,
    parse_config,
    run_episode,
    run_experiment,
    summarize,
)
from taxpolicy.policy import DecisionList, Rule
from taxpolicy.pstrips import GroundAction, State, is_goal, legal_actions
from taxpolicy.seeds import stream
from taxpolicy.solver import SolverParams, SolverPolicy, optimal_actions, solve
from taxpolicy.taxonomy import A_THING, parse_class

from oracles import expectimax

CONFIG_DIR = resources.files("taxpolicy").joinpath("configs")


class Scripted:
    """A policy that replays a fixed action list, then gives up."""

    def __init__(self, actions):
        self.actions = list(actions)

    def act(self, q):
        return GroundAction.parse(self.actions.pop(0)) if self.actions else None


# --------------------------------------------------------------------------
# training data
# --------------------------------------------------------------------------


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_training_alpha_matches_expectimax(seed):
    h = 6
    ts = generate_training(TrainConfig("bw1", "3", 8, h, seed))
    assert ts.instances
    for f in ts.instances:
        _, oracle = expectimax(f.state.facts, h)
        assert {str(a) for a in f.optimal} == oracle


def test_single_solve_equals_fresh_solves():
    h = 8
    cfg = TrainConfig("bw1", "4", 6, h, 3)
    for f in generate_training(cfg).instances:
        fresh = optimal_actions(f.state, solve(f.state, SolverParams(h)))
        assert f.optimal == fresh


def test_trajectories_follow_optimal_actions():
    cfg = TrainConfig("bw1", "3", 5, 10, 4)
    ts = generate_training(cfg)
    assert ts.recorded >= len(ts.instances)
    states = {f.state for f in ts.instances}
    assert len(states) == len(ts.instances)
    for f in ts.instances:
        assert not is_goal(f.state)
        assert f.optimal and f.optimal <= set(legal_actions(f.state))


def test_trajectory_groups():
    ts = generate_training(TrainConfig("bw1", "3", 8, 10, 6))
    assert len(ts.groups) == 8
    assert sorted({k for g in ts.groups for k in g}) == list(range(len(ts.instances)))
    assert all(len(set(g)) == len(g) for g in ts.groups)
    assert sum(len(g) for g in ts.groups) <= ts.recorded


def test_unreachable_goals_are_skipped():
    # a horizon of one step rarely suffices for three blocks
    ts = generate_training(TrainConfig("bw1", "3", 20, 1, 0))
    assert ts.skipped > 0
    assert ts.skipped + ts.already_goal <= 20


def test_training_is_deterministic_and_independent_of_jobs():
    cfg = TrainConfig("bw1", "3", 6, 6, 9)
    a = generate_training(cfg).instances
    assert generate_training(cfg).instances == a
    assert generate_training(cfg, jobs=3).instances == a
    assert generate_training(replace(cfg, seed=10)).instances != a


def test_bad_train_config():
    with pytest.raises(ValueError):
        TrainConfig("bw1", "3", 0, 5, 0)
    with pytest.raises(ValueError):
        TrainConfig("bw1", "3", 5, 0, 0)


# --------------------------------------------------------------------------
# episodes and evaluation
# --------------------------------------------------------------------------


def test_episode_already_at_goal(bw1):
    q = State(["a"], [("on-table", "a"), ("clear", "a"), ("arm-empty",), ("gon-table", "a")], bw1)
    assert run_episode(Scripted([]), q, 5, random.Random(0)) == (True, 0)


def test_episode_counts_steps(q1):
    assert run_episode(Scripted(["unstack(b)"]), q1, 5, random.Random(0)) == (True, 1)


def test_episode_gives_up_without_action(q2):
    assert run_episode(Scripted(["pick-up(a)"]), q2, 5, random.Random(0)) == (False, 1)


def test_episode_horizon_is_exact(q2):
    plan = ["pick-up(b)", "stack(a)"]
    assert run_episode(Scripted(plan), q2, 2, random.Random(0)) == (True, 2)
    assert run_episode(Scripted(plan), q2, 1, random.Random(0)) == (False, 1)
    with pytest.raises(ValueError):
        run_episode(Scripted(plan), q2, 0, random.Random(0))


def test_summarize():
    r = summarize([(True, 4), (False, 9), (True, 6), (False, 9)])
    assert r.phi == 0.5 and r.psi == 5.0
    assert summarize([(False, 3)]).psi is None


def test_solver_policy_always_succeeds_on_small_problems():
    cfg = EvalConfig("bw1", "2", episodes=40, horizon=60, seed=2)
    res = evaluate(SolverPolicy(SolverParams(8)), cfg)
    assert res.phi == 1.0
    assert res.psi is not None and res.psi > 0


def test_evaluation_is_deterministic_and_independent_of_jobs(bw1):
    pol = DecisionList((Rule(parse_class("(gon a-thing)", bw1), "faststack"), Rule(A_THING, "unstack")))
    cfg = EvalConfig("bw1", "4", episodes=30, horizon=40, seed=7)
    a = evaluate(pol, cfg)
    assert evaluate(pol, cfg).episodes == a.episodes
    assert evaluate(pol, cfg, jobs=4).episodes == a.episodes


def test_fixed_test_states(bw1):
    cfg = EvalConfig("bw1", "4", episodes=10, horizon=30, seed=3)
    tests = draw_test_states(cfg)
    assert tests == draw_test_states(cfg)
    assert tests == [sample_problem(GeneratorSpec("bw1", ProblemSize.parse(4)), stream(3, "test", i)) for i in range(10)]
    pol = DecisionList((Rule(A_THING, "unstack"),))
    assert evaluate(pol, cfg, tests=tests).episodes == evaluate(pol, cfg).episodes
    with pytest.raises(ValueError):
        evaluate(pol, cfg, tests=tests[:3])


# --------------------------------------------------------------------------
# experiments and config files
# --------------------------------------------------------------------------


def small_experiment(**kw):
    base = dict(
        domain="bw1", train_size="3", trajectories=6, train_horizon=8, test_size="4", eval_horizon=30,
        depth=2, width=3, beam=2, episodes=10, trials=2, seed=5,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_experiment_runs_and_is_reproducible():
    exp = small_experiment()
    row = run_experiment(exp)
    assert row.trials == 2 and 0 <= row.phi <= 1
    assert run_experiment(exp).to_json() == row.to_json()
    bagged = run_experiment(replace(exp, bag_size=3, bag_sample=5))
    assert bagged.trials == 2
    per_instance = run_experiment(replace(exp, bag_size=3, bag_sample=10, bag_unit="instance"))
    assert per_instance.trials == 2
    with pytest.raises(ValueError):
        replace(exp, bag_unit="state")


def test_aggregate_without_successes():
    exp = small_experiment()
    row = aggregate([{"phi": 0.0, "psi": None}, {"phi": 0.0, "psi": None}], exp)
    assert row.phi == 0.0 and row.psi is None
    assert row.csv_row() == "bw1,,0.000,,2\n"
    row = aggregate([{"phi": 1.0, "psi": 10.0}, {"phi": 0.5, "psi": None}], exp)
    assert row.phi == 0.75 and row.psi == 10.0


def test_config_round_trip():
    exp = small_experiment(derived=(("top", "(and clear (not cclear))"),), expected_phi=0.5, label="demo")
    assert parse_config(format_config(exp)) == exp


@pytest.mark.parametrize(
    "text",
    ["domain = bw1\n", "domain bw1\n", "bogus = 1\n" + format_config(small_experiment()), "trials = x\n"],
)
def test_bad_configs(text):
    with pytest.raises(ValueError):
        parse_config(text)


def test_shipped_configs_parse():
    names = sorted(p.name for p in CONFIG_DIR.iterdir() if p.name.endswith(".cfg"))
    assert len(names) == 17
    for name in names:
        exp = parse_config(CONFIG_DIR.joinpath(name).read_text())
        assert exp.expected_phi is not None and exp.expected_psi is not None
        dom = builtin_domain(exp.domain)
        ProblemSize.parse(exp.train_size).check(exp.domain)
        ProblemSize.parse(exp.test_size).check(exp.domain)
        assert exp.domain == dom.name
