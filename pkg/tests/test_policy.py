import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taxpolicy.domains import GeneratorSpec, ProblemSize, builtin_domain, sample_problem
from taxpolicy.policy import (
    DecisionList,
    Ensemble,
    Rule,
    TrainingInstance,
    correctly_covers,
    covers,
    dl_act,
    dl_suggest,
    ensemble_act,
    format_policy,
    parse_policy,
    rule_consistent,
    suggest,
)
from taxpolicy.pstrips import GroundAction, State, legal_actions, parse_state, sample_transition
from taxpolicy.sexpr import ParseError
from taxpolicy.taxonomy import A_THING, parse_class

from oracles import random_class


def rule(text, action, dom):
    return Rule(parse_class(text, dom), action)


def acts(*texts):
    return frozenset(GroundAction.parse(t) for t in texts)


def test_suggest_examples(bw1, q1):
    assert suggest(rule("(on gclear)", "unstack", bw1), q1) == acts("unstack(b)")
    assert suggest(rule("gclear", "unstack", bw1), q1) == frozenset()
    assert suggest(rule("a-thing", "put-down", bw1), q1) == frozenset()


def test_first_rule_wins(bw1, q1):
    L = DecisionList((rule("gclear", "unstack", bw1), rule("(on gclear)", "unstack", bw1)))
    assert dl_suggest(L, q1) == (acts("unstack(b)"), 1)
    assert dl_act(L, q1) == GroundAction.parse("unstack(b)")
    assert dl_suggest(DecisionList(), q1) == (frozenset(), None)


def test_two_action_suggestion(bw1):
    q = parse_state(
        "(state (objects a b c d) (facts (on-table a) (on-table c) (on b a) (on d c) (clear b) (clear d)"
        " (arm-empty) (gclear a) (gclear c)))",
        bw1,
    )
    L = DecisionList((rule("(and clear ((star on) (on gclear)))", "unstack", bw1),))
    assert dl_suggest(L, q) == (acts("unstack(b)", "unstack(d)"), 0)
    assert dl_act(L, q) == GroundAction.parse("unstack(b)")


def test_empty_list_falls_back_to_least_legal(q1):
    assert dl_act(DecisionList(), q1) == GroundAction.parse("unstack(b)")


def test_dead_end(bw1):
    q = State(["a"], [("on-table", "a")], bw1)
    assert legal_actions(q) == []
    assert dl_act(DecisionList((Rule(A_THING, "pick-up"),)), q) is None
    assert ensemble_act(Ensemble((DecisionList(),)), q) is None


def test_ensemble_votes(bw1):
    q = parse_state("(state (objects x y) (facts (on-table x) (on-table y) (clear x) (clear y) (arm-empty)))", bw1)
    x = DecisionList((rule("con-table", "pick-up", bw1),))
    qx = q.with_facts(add=[("gon-table", "x")])
    y_list = DecisionList((rule("(not con-table)", "pick-up", bw1),))
    # x-list suggests pick-up(x), y-list suggests pick-up(y)
    assert ensemble_act(Ensemble((x, x, y_list)), qx) == GroundAction.parse("pick-up(x)")
    assert ensemble_act(Ensemble((y_list, y_list, x)), qx) == GroundAction.parse("pick-up(y)")
    assert ensemble_act(Ensemble((y_list, x)), qx) == GroundAction.parse("pick-up(x)")
    none = DecisionList((rule("holding", "pick-up", bw1),))
    assert ensemble_act(Ensemble((none, none)), qx) == GroundAction.parse("pick-up(x)")
    with pytest.raises(ValueError):
        Ensemble(())


def test_multi_action_members_vote_for_each(bw1):
    q = parse_state("(state (objects x y z) (facts (on-table x) (on-table y) (on-table z) (clear x) (clear y) (clear z) (arm-empty)))", bw1)
    both = DecisionList((rule("(not (gon a-thing))", "pick-up", bw1),))
    z = DecisionList((rule("(gon a-thing)", "pick-up", bw1),))
    qz = q.with_facts(add=[("gon", "z", "x")])
    # both suggests {x, y}, z suggests {z}: x has one vote, so does z; least wins
    assert ensemble_act(Ensemble((both, z)), qz) == GroundAction.parse("pick-up(x)")
    assert ensemble_act(Ensemble((both, z, z)), qz) == GroundAction.parse("pick-up(z)")


def test_covers(bw1, q1, micro):
    good = DecisionList((rule("(on gclear)", "unstack", bw1),))
    assert covers(good, micro[0]) and correctly_covers(good, micro[0])
    assert not covers(good, micro[1])
    wrong = TrainingInstance(q1, acts("unstack(a)"))
    assert covers(good, wrong) and not correctly_covers(good, wrong)
    assert rule_consistent(rule("(on gclear)", "unstack", bw1), micro)


def test_policy_round_trip(bw1):
    L = DecisionList((rule("(on gclear)", "unstack", bw1), Rule(A_THING, "pick-up")))
    assert parse_policy(format_policy(L), bw1) == L
    E = Ensemble((L, DecisionList()))
    assert parse_policy(format_policy(E), bw1) == E
    assert format_policy(parse_policy(format_policy(E), bw1)) == format_policy(E)


@pytest.mark.parametrize(
    "text",
    [
        "(policy (rule clear fly))",
        "(policy (rule clear))",
        "(policy (rule (bad thing) unstack))",
        "(ensemble)",
        "(rules)",
        "(policy (rule clear unstack)",
    ],
)
def test_malformed_policies(bw1, text):
    with pytest.raises(ParseError):
        parse_policy(text, bw1)


def test_rules_need_unary_actions():
    from taxpolicy.pstrips import parse_domain

    dom = parse_domain(
        "(domain d (predicates (p 1) (r 2))"
        " (action one (params X) (pre (p X)) (case (guard) (outcome 1 (add) (del))))"
        " (action two (params X Y) (pre (r X Y)) (case (guard) (outcome 1 (add) (del)))))"
    )
    assert parse_policy("(policy (rule p one))", dom)
    with pytest.raises(ParseError, match="arity"):
        parse_policy("(policy (rule p two))", dom)


# --------------------------------------------------------------------------
# properties
# --------------------------------------------------------------------------

ACTIONS = ["pick-up", "put-down", "unstack", "stack", "faststack"]


def random_list(rng, dom, n):
    return DecisionList(tuple(Rule(random_class(rng, 3), rng.choice(ACTIONS)) for _ in range(n)))


def random_reachable(rng):
    q = sample_problem(GeneratorSpec("bw1", ProblemSize.parse(rng.randint(2, 5))), rng)
    for _ in range(rng.randint(0, 6)):
        legal = legal_actions(q)
        if not legal:
            break
        q = sample_transition(q, rng.choice(legal), rng)
    return q


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_policy_properties(seed):
    rng = random.Random(seed)
    dom = builtin_domain("bw1")
    q = random_reachable(rng)
    L = random_list(rng, dom, rng.randint(0, 4))
    legal = set(legal_actions(q))
    for r in L.rules:
        s = suggest(r, q)
        assert s <= legal
        assert all(a.name == r.action for a in s)
    a = dl_act(L, q)
    assert (a in legal) if legal else a is None
    s, i = dl_suggest(L, q)
    longer = L.extend(Rule(random_class(rng, 2), rng.choice(ACTIONS)))
    if i is not None:
        assert dl_suggest(longer, q) == (s, i)
    members = [random_list(rng, dom, 2) for _ in range(rng.randint(1, 4))]
    shuffled = members[:]
    rng.shuffle(shuffled)
    assert ensemble_act(Ensemble(members), q) == ensemble_act(Ensemble(shuffled), q)
