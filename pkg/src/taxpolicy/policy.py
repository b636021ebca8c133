"""Decision-list policies over taxonomic rules, and voting ensembles of them."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple, Union

from .pstrips import DomainDef, GroundAction, State, least_action, legal_actions
from .sexpr import ParseError, expect_list, expect_symbol, parse_one, where
from .taxonomy import ClassExpr, class_from_sexpr, class_mask, state_model


@dataclass(frozen=True)
class Rule:
    """``concept : action`` -- apply the action type to any legal object in the concept."""

    concept: ClassExpr
    action: str

    def __str__(self) -> str:
        return f"(rule {self.concept.key} {self.action})"


@dataclass(frozen=True)
class TrainingInstance:
    state: State
    optimal: FrozenSet[GroundAction]

    def __post_init__(self):
        object.__setattr__(self, "optimal", frozenset(self.optimal))


def legal_by_type(q: State) -> Dict[str, Tuple[int, Dict[int, GroundAction]]]:
    """Legal single-argument actions of ``q``: type -> (object bitmask, bit -> action)."""
    m = state_model(q)
    table = m.legal
    if table is None:
        pos = {o: i for i, o in enumerate(q.objects)}
        table = {}
        for a in legal_actions(q):
            if len(a.args) == 1:
                i = pos[a.args[0]]
                mask, acts = table.get(a.name, (0, {}))
                acts[i] = a
                table[a.name] = (mask | 1 << i, acts)
        m.legal = table
    return table


def suggest(rule: Rule, q: State) -> FrozenSet[GroundAction]:
    """Legal actions ``a(o)`` with ``o`` in the rule's concept."""
    entry = legal_by_type(q).get(rule.action)
    if entry is None:
        return frozenset()
    legal_mask, acts = entry
    hit = class_mask(rule.concept, state_model(q)) & legal_mask
    if not hit:
        return frozenset()
    return frozenset(a for i, a in acts.items() if hit >> i & 1)


@dataclass(frozen=True)
class DecisionList:
    rules: Tuple[Rule, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))

    def __len__(self) -> int:
        return len(self.rules)

    def suggest(self, q: State) -> Tuple[FrozenSet[GroundAction], Optional[int]]:
        return dl_suggest(self, q)

    def act(self, q: State) -> Optional[GroundAction]:
        return dl_act(self, q)

    def extend(self, rule: Rule) -> "DecisionList":
        return DecisionList(self.rules + (rule,))


@dataclass(frozen=True)
class Ensemble:
    members: Tuple[DecisionList, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ValueError("an ensemble needs at least one member")

    def __len__(self) -> int:
        return len(self.members)

    def act(self, q: State) -> Optional[GroundAction]:
        return ensemble_act(self, q)


Policy = Union[DecisionList, Ensemble]


def dl_suggest(L: DecisionList, q: State) -> Tuple[FrozenSet[GroundAction], Optional[int]]:
    """Suggestions of the first rule that suggests anything, with its index."""
    for i, rule in enumerate(L.rules):
        s = suggest(rule, q)
        if s:
            return s, i
    return frozenset(), None


def dl_act(L: DecisionList, q: State) -> Optional[GroundAction]:
    """Least suggested action, else least legal action; None at a dead end."""
    s, _ = dl_suggest(L, q)
    if s:
        return least_action(s)
    return least_action(legal_actions(q))


def ensemble_act(E: Ensemble, q: State) -> Optional[GroundAction]:
    """One vote per (member, suggested action); ties go to the least action."""
    votes: Counter = Counter()
    for member in E.members:
        s, _ = dl_suggest(member, q)
        votes.update(s)
    if votes:
        top = max(votes.values())
        return least_action(a for a, v in votes.items() if v == top)
    return least_action(legal_actions(q))


def covers(L: DecisionList, inst: TrainingInstance) -> bool:
    return bool(dl_suggest(L, inst.state)[0])


def correctly_covers(L: DecisionList, inst: TrainingInstance) -> bool:
    s, _ = dl_suggest(L, inst.state)
    return bool(s) and s <= inst.optimal


def rule_covers(rule: Rule, inst: TrainingInstance) -> bool:
    return bool(suggest(rule, inst.state))


def rule_consistent(rule: Rule, instances: Iterable[TrainingInstance]) -> bool:
    """Every instance the rule covers is covered correctly."""
    for inst in instances:
        s = suggest(rule, inst.state)
        if s and not s <= inst.optimal:
            return False
    return True


# --------------------------------------------------------------------------
# Policy files
# --------------------------------------------------------------------------


def _check_rule_action(action: str, dom: DomainDef, expr) -> None:
    arity = dom.action_arity.get(action)
    if arity is None:
        raise ParseError(f"unknown action type {action!r}", *where(expr))
    if arity != 1:
        raise ParseError(f"rules need single-argument action types; {action!r} has arity {arity}", *where(expr))


def _list_from_sexpr(expr, dom: DomainDef) -> DecisionList:
    lst = expect_list(expr, "policy")
    rules: List[Rule] = []
    for item in lst[1:]:
        r = expect_list(item, "rule")
        if len(r) != 3:
            raise ParseError("expected (rule CONCEPT ACTION-TYPE)", *where(r))
        action = str(expect_symbol(r[2]))
        _check_rule_action(action, dom, r[2])
        rules.append(Rule(class_from_sexpr(r[1], dom), action))
    return DecisionList(tuple(rules))


def parse_policy(text: str, dom: DomainDef) -> Policy:
    """Read ``(policy (rule C a)...)`` or ``(ensemble (policy ...)...)``."""
    expr = parse_one(text)
    lst = expect_list(expr, min_len=1)
    if lst[0] == "policy":
        return _list_from_sexpr(lst, dom)
    if lst[0] == "ensemble":
        if len(lst) < 2:
            raise ParseError("an ensemble needs at least one policy", *where(lst))
        return Ensemble(tuple(_list_from_sexpr(p, dom) for p in lst[1:]))
    raise ParseError("expected (policy ...) or (ensemble ...)", *where(lst))


def _format_list(L: DecisionList, indent: str) -> str:
    if not L.rules:
        return f"{indent}(policy)"
    body = "\n".join(f"{indent}  {r}" for r in L.rules)
    return f"{indent}(policy\n{body})"


def format_policy(p: Policy) -> str:
    if isinstance(p, Ensemble):
        return "(ensemble\n" + "\n".join(_format_list(m, "  ") for m in p.members) + ")\n"
    return _format_list(p, "") + "\n"
