"""Probabilistic STRIPS: predicates, states, action schemas, grounding and transitions.

Atoms are plain tuples ``(predicate, arg1, ...)``; a state is a set of true
ground atoms over a finite object set.  Goal predicates are the ``g``-prefixed
twins of world predicates and are never touched by actions.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

from .sexpr import ParseError, expect_list, expect_symbol, parse_all, parse_one, where

Atom = Tuple[str, ...]

PROB_TOLERANCE = 1e-9


class DomainError(ValueError):
    """A domain, schema or state that violates a structural invariant."""


class IllegalActionError(ValueError):
    pass


_NAT_RE = re.compile(r"(\d+)")


@lru_cache(maxsize=65536)
def natural_key(name: str) -> tuple:
    """Order object names so that ``b2 < b10``; total on distinct names."""
    return tuple((1, int(p), "") if p.isdigit() else (0, 0, p) for p in _NAT_RE.split(name) if p)


def atom_str(atom: Atom) -> str:
    if len(atom) == 1:
        return atom[0]
    return f"{atom[0]}({','.join(atom[1:])})"


def parse_atom_str(text: str) -> Atom:
    text = text.strip()
    if "(" not in text:
        return (text,)
    if not text.endswith(")"):
        raise ParseError(f"malformed atom {text!r}")
    head, rest = text.split("(", 1)
    args = [a.strip() for a in rest[:-1].split(",")] if rest[:-1].strip() else []
    return (head.strip(), *args)


# --------------------------------------------------------------------------
# Predicates and domains
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PredicateDecl:
    name: str
    arity: int
    role: str = "world"  # "world" or "goal"


@dataclass(frozen=True)
class Literal:
    pred: str
    args: Tuple[str, ...] = ()
    positive: bool = True

    def __str__(self) -> str:
        atom = "(" + " ".join((self.pred, *self.args)) + ")"
        return atom if self.positive else f"(not {atom})"


@dataclass(frozen=True)
class Outcome:
    probability: float
    add: Tuple[Literal, ...] = ()
    delete: Tuple[Literal, ...] = ()


@dataclass(frozen=True)
class Case:
    guard: Tuple[Literal, ...]
    outcomes: Tuple[Outcome, ...]


@dataclass(frozen=True)
class ActionSchema:
    """One variant of an action type.

    ``params`` are the action variables named in the ground action; ``aux``
    variables are existentially bound by matching the positive preconditions.
    Cases are tried in order and the first guard that holds selects the
    outcome distribution.
    """

    name: str
    params: Tuple[str, ...]
    aux: Tuple[str, ...] = ()
    pre: Tuple[Literal, ...] = ()
    cases: Tuple[Case, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.params)

    @cached_property
    def _plan(self):
        # arity-0 atoms first, then greedily the atom sharing most bound vars
        positives = [l for l in self.pre if l.positive]
        negatives = [l for l in self.pre if not l.positive]
        bound: set = set()
        order = sorted((l for l in positives if not l.args), key=str)
        rest = [l for l in positives if l.args]
        while rest:
            best = max(rest, key=lambda l: (sum(a in bound for a in l.args), -len(l.args)))
            rest.remove(best)
            order.append(best)
            bound.update(best.args)
        free = tuple(v for v in self.params if v not in bound)
        return tuple(order), tuple(negatives), free


@dataclass(frozen=True)
class DomainDef:
    name: str
    predicates: Tuple[PredicateDecl, ...]
    actions: Tuple[ActionSchema, ...]
    # name -> class expression, evaluated as a depth-one primitive class
    derived: Tuple[Tuple[str, object], ...] = ()

    @cached_property
    def pred_map(self) -> Dict[str, PredicateDecl]:
        return {p.name: p for p in self.predicates}

    @cached_property
    def goal_twin(self) -> Dict[str, str]:
        """Goal predicate name -> world predicate name."""
        return {p.name: p.name[1:] for p in self.predicates if p.role == "goal"}

    @cached_property
    def world_predicates(self) -> Tuple[PredicateDecl, ...]:
        return tuple(p for p in self.predicates if p.role == "world")

    @cached_property
    def action_types(self) -> Tuple[str, ...]:
        return tuple(sorted({a.name for a in self.actions}))

    @cached_property
    def variants(self) -> Dict[str, Tuple[ActionSchema, ...]]:
        out: Dict[str, List[ActionSchema]] = {}
        for a in self.actions:
            out.setdefault(a.name, []).append(a)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def action_arity(self) -> Dict[str, int]:
        return {a.name: a.arity for a in self.actions}

    @cached_property
    def derived_map(self) -> Dict[str, object]:
        return dict(self.derived)

    def with_derived(self, name: str, expr) -> "DomainDef":
        """Register a named class expression usable as a primitive class."""
        if name in self.pred_map or name in self.derived_map:
            raise DomainError(f"derived predicate {name!r} clashes with an existing name")
        return DomainDef(self.name, self.predicates, self.actions, self.derived + ((name, expr),))

    def validate(self) -> "DomainDef":
        _validate_domain(self)
        return self


def _validate_domain(dom: DomainDef) -> None:
    seen = set()
    for p in dom.predicates:
        if p.name in seen:
            raise DomainError(f"predicate {p.name!r} declared twice")
        seen.add(p.name)
        if p.arity not in (0, 1, 2):
            raise DomainError(f"predicate {p.name!r} has arity {p.arity}; only 0, 1, 2 supported")
    preds = dom.pred_map
    for p in dom.predicates:
        if p.role == "world":
            twin = preds.get("g" + p.name)
            if twin is None or twin.role != "goal" or twin.arity != p.arity:
                raise DomainError(f"world predicate {p.name!r} lacks a goal twin of equal arity")
            if p.arity and ("c" + p.name) in preds:
                raise DomainError(f"predicate name {'c' + p.name!r} collides with a comparison predicate")
        elif p.role == "goal":
            w = preds.get(p.name[1:])
            if not p.name.startswith("g") or w is None or w.role != "world":
                raise DomainError(f"goal predicate {p.name!r} has no world twin")
        else:
            raise DomainError(f"unknown predicate role {p.role!r}")
    for a in dom.actions:
        _validate_schema(a, preds)
    arities: Dict[str, int] = {}
    for a in dom.actions:
        if arities.setdefault(a.name, a.arity) != a.arity:
            raise DomainError(f"variants of action {a.name!r} disagree on arity")


def _check_literal(lit: Literal, preds, variables, where_: str) -> None:
    decl = preds.get(lit.pred)
    if decl is None:
        raise DomainError(f"unknown predicate {lit.pred!r} in {where_}")
    if decl.arity != len(lit.args):
        raise DomainError(
            f"arity mismatch: {lit.pred!r} takes {decl.arity} arguments, got {len(lit.args)} in {where_}"
        )
    for v in lit.args:
        if v not in variables:
            raise DomainError(f"unbound variable {v!r} in {where_}")


def _validate_schema(a: ActionSchema, preds) -> None:
    variables = set(a.params) | set(a.aux)
    if len(variables) != len(a.params) + len(a.aux):
        raise DomainError(f"action {a.name!r}: duplicate variable names")
    for lit in a.pre:
        _check_literal(lit, preds, variables, f"precondition of {a.name!r}")
    positive_vars = {v for l in a.pre if l.positive for v in l.args}
    for v in a.aux:
        if v not in positive_vars:
            raise DomainError(f"action {a.name!r}: aux variable {v!r} not bound by a positive precondition")
    if not a.cases:
        raise DomainError(f"action {a.name!r} has no outcome cases")
    for case in a.cases:
        for lit in case.guard:
            _check_literal(lit, preds, variables, f"guard of {a.name!r}")
        if not case.outcomes:
            raise DomainError(f"action {a.name!r}: case with no outcomes")
        total = 0.0
        for o in case.outcomes:
            if not 0.0 <= o.probability <= 1.0:
                raise DomainError(f"action {a.name!r}: probability {o.probability} outside [0, 1]")
            total += o.probability
            for lit in o.add + o.delete:
                _check_literal(lit, preds, variables, f"outcome of {a.name!r}")
                if not lit.positive:
                    raise DomainError(f"action {a.name!r}: negated atom in add/delete list")
                if preds[lit.pred].role != "world":
                    raise DomainError(f"action {a.name!r}: outcome modifies goal predicate {lit.pred!r}")
        if abs(total - 1.0) > PROB_TOLERANCE:
            raise DomainError(f"action {a.name!r}: outcome probabilities sum to {total:g}, not 1")


def with_goal_twins(predicates: Iterable[PredicateDecl]) -> Tuple[PredicateDecl, ...]:
    """Complete a predicate list with the goal twin of every world predicate."""
    preds = list(predicates)
    names = {p.name for p in preds}
    out = []
    for p in preds:
        out.append(p)
    for p in preds:
        if p.role == "world" and ("g" + p.name) not in names:
            out.append(PredicateDecl("g" + p.name, p.arity, "goal"))
    return tuple(out)


# --------------------------------------------------------------------------
# States and ground actions
# --------------------------------------------------------------------------


class State:
    """A finite first-order model: objects plus the true ground facts.

    Objects are kept sorted by :func:`natural_key`; the position of an object
    in ``objects`` is its number.  Equality and hashing ignore ``domain``.
    """

    __slots__ = ("objects", "facts", "domain", "_hash", "_index", "_model", "_legal", "__weakref__")

    def __init__(self, objects: Iterable[str], facts: Iterable[Atom], domain: Optional[DomainDef] = None):
        objs = tuple(sorted(set(objects), key=natural_key))
        self.objects = objs
        self.facts = frozenset(tuple(f) for f in facts)
        self.domain = domain
        self._hash = None
        self._index = None
        self._model = None
        self._legal = None

    @classmethod
    def _derive(cls, base: "State", facts: frozenset) -> "State":
        s = cls.__new__(cls)
        s.objects = base.objects
        s.facts = facts
        s.domain = base.domain
        s._hash = None
        s._index = None
        s._model = None
        s._legal = None
        return s

    def __eq__(self, other) -> bool:
        if self is other:
            return True
        if not isinstance(other, State):
            return NotImplemented
        return self.objects == other.objects and self.facts == other.facts

    def __hash__(self) -> int:
        h = self._hash
        if h is None:
            h = self._hash = hash((self.objects, self.facts))
        return h

    def __getstate__(self):
        return (self.objects, self.facts, self.domain)

    def __setstate__(self, st):
        self.objects, self.facts, self.domain = st
        self._hash = self._index = self._model = self._legal = None

    def __repr__(self) -> str:
        return f"State({list(self.objects)}, {sorted(atom_str(f) for f in self.facts)})"

    @property
    def index(self) -> Dict[str, List[Tuple[str, ...]]]:
        idx = self._index
        if idx is None:
            idx = {}
            for f in self.facts:
                idx.setdefault(f[0], []).append(f[1:])
            self._index = idx
        return idx

    def holds(self, atom: Atom) -> bool:
        return atom in self.facts

    def sorted_facts(self) -> List[Atom]:
        return sorted(self.facts, key=lambda f: (f[0], tuple(natural_key(a) for a in f[1:])))

    def validate(self, domain: Optional[DomainDef] = None) -> "State":
        dom = domain or self.domain
        if dom is None:
            raise DomainError("cannot validate a state without a domain")
        objs = set(self.objects)
        preds = dom.pred_map
        for f in self.facts:
            decl = preds.get(f[0])
            if decl is None:
                raise DomainError(f"unknown predicate in fact {atom_str(f)}")
            if decl.arity != len(f) - 1:
                raise DomainError(f"arity mismatch in fact {atom_str(f)}")
            for a in f[1:]:
                if a not in objs:
                    raise DomainError(f"fact {atom_str(f)} mentions unknown object {a!r}")
        return self

    def with_facts(self, add: Iterable[Atom] = (), delete: Iterable[Atom] = ()) -> "State":
        return State._derive(self, (self.facts - frozenset(delete)) | frozenset(add))


@dataclass(frozen=True)
class GroundAction:
    """An action type applied to objects.  Identity is (name, args) only."""

    name: str
    args: Tuple[str, ...]
    binding: Tuple[Tuple[str, str], ...] = field(default=(), compare=False, repr=False)
    variant: int = field(default=0, compare=False, repr=False)

    @cached_property
    def sort_key(self) -> tuple:
        return (self.name, tuple(natural_key(a) for a in self.args))

    def __str__(self) -> str:
        return f"{self.name}({','.join(self.args)})"

    @classmethod
    def parse(cls, text: str) -> "GroundAction":
        atom = parse_atom_str(text)
        return cls(atom[0], tuple(atom[1:]))


def action_less(a1: GroundAction, a2: GroundAction) -> bool:
    """Strict total order: action-type name, then argument object numbers."""
    return a1.sort_key < a2.sort_key


def least_action(actions: Iterable[GroundAction]) -> Optional[GroundAction]:
    return min(actions, key=lambda a: a.sort_key, default=None)


# --------------------------------------------------------------------------
# Grounding
# --------------------------------------------------------------------------


def _holds(lit: Literal, binding: Mapping[str, str], facts: frozenset) -> bool:
    atom = (lit.pred, *(binding[v] for v in lit.args))
    return (atom in facts) == lit.positive


def _match(order, i, binding, state: State) -> Iterator[dict]:
    if i == len(order):
        yield binding
        return
    lit = order[i]
    args = lit.args
    if all(a in binding for a in args):
        if (lit.pred, *(binding[a] for a in args)) in state.facts:
            yield from _match(order, i + 1, binding, state)
        return
    for tup in state.index.get(lit.pred, ()):
        b = binding
        ok = True
        for var, val in zip(args, tup):
            cur = b.get(var)
            if cur is None:
                if b is binding:
                    b = dict(binding)
                b[var] = val
            elif cur != val:
                ok = False
                break
        if ok:
            yield from _match(order, i + 1, b, state)


def _schema_bindings(schema: ActionSchema, state: State, fixed: Optional[dict] = None) -> Iterator[dict]:
    order, negatives, free = schema._plan
    for b in _match(order, 0, dict(fixed or {}), state):
        unbound = [v for v in free if v not in b]
        choices = itertools.product(state.objects, repeat=len(unbound)) if unbound else [()]
        for vals in choices:
            full = dict(b, **dict(zip(unbound, vals))) if unbound else b
            if all(_holds(l, full, state.facts) for l in negatives):
                yield full


def _binding_key(schema: ActionSchema, b: Mapping[str, str]) -> tuple:
    return tuple(natural_key(b[v]) for v in schema.params + schema.aux)


def _variant_actions(schema: ActionSchema, variant: int, state: State, fixed=None) -> Dict[tuple, GroundAction]:
    best: Dict[tuple, tuple] = {}
    for b in _schema_bindings(schema, state, fixed):
        args = tuple(b[v] for v in schema.params)
        key = _binding_key(schema, b)
        cur = best.get(args)
        if cur is None or key < cur[0]:
            best[args] = (key, b)
    names = schema.params + schema.aux
    return {
        args: GroundAction(schema.name, args, tuple((v, b[v]) for v in names), variant)
        for args, (_, b) in best.items()
    }


def legal_actions(q: State, dom: Optional[DomainDef] = None) -> List[GroundAction]:
    """All legal ground actions in ``q``, sorted by :func:`action_less`, one per (type, args)."""
    if dom is None or dom is q.domain:
        cached = q._legal
        if cached is None:
            cached = q._legal = _legal_actions(q, q.domain)
        return list(cached)
    return _legal_actions(q, dom)


def _legal_actions(q: State, dom: DomainDef) -> List[GroundAction]:
    out: Dict[tuple, GroundAction] = {}
    for name in dom.action_types:
        for vi, schema in enumerate(dom.variants[name]):
            for args, act in _variant_actions(schema, vi, q).items():
                out.setdefault((name, args), act)
    return sorted(out.values(), key=lambda a: a.sort_key)


def ground(q: State, name: str, args: Sequence[str], dom: Optional[DomainDef] = None) -> Optional[GroundAction]:
    """The legal ground action ``name(args)`` in ``q`` with its binding, or None."""
    dom = dom or q.domain
    for vi, schema in enumerate(dom.variants.get(name, ())):
        if len(args) != schema.arity:
            continue
        found = _variant_actions(schema, vi, q, dict(zip(schema.params, args)))
        act = found.get(tuple(args))
        if act is not None:
            return act
    return None


def _resolve(q: State, act: GroundAction, dom: DomainDef) -> Tuple[ActionSchema, dict]:
    g = ground(q, act.name, act.args, dom)
    if g is None:
        raise IllegalActionError(f"{act} is not legal in this state")
    return dom.variants[act.name][g.variant], dict(g.binding)


def applicable_case(q: State, act: GroundAction, dom: Optional[DomainDef] = None) -> int:
    dom = dom or q.domain
    schema, binding = _resolve(q, act, dom)
    return _case_index(schema, binding, q)


def _case_index(schema: ActionSchema, binding, q: State) -> int:
    for ci, case in enumerate(schema.cases):
        if all(_holds(l, binding, q.facts) for l in case.guard):
            return ci
    raise DomainError(f"no outcome case of {schema.name!r} applies")


def _apply(q: State, outcome: Outcome, binding) -> State:
    dels = frozenset((l.pred, *(binding[v] for v in l.args)) for l in outcome.delete)
    adds = frozenset((l.pred, *(binding[v] for v in l.args)) for l in outcome.add)
    if not dels and not adds:
        return q
    return State._derive(q, (q.facts - dels) | adds)


def apply_outcome(
    q: State, act: GroundAction, case_index: int, outcome_index: int, dom: Optional[DomainDef] = None
) -> State:
    """The next state for a chosen outcome: delete list removed, add list added."""
    dom = dom or q.domain
    schema, binding = _resolve(q, act, dom)
    if not 0 <= case_index < len(schema.cases):
        raise IndexError(f"case index {case_index} out of range for {act.name!r}")
    outcomes = schema.cases[case_index].outcomes
    if not 0 <= outcome_index < len(outcomes):
        raise IndexError(f"outcome index {outcome_index} out of range for {act.name!r}")
    return _apply(q, outcomes[outcome_index], binding)


def sample_transition(q: State, act: GroundAction, rng, dom: Optional[DomainDef] = None) -> State:
    """Draw a successor; consumes exactly one ``rng.random()``."""
    dom = dom or q.domain
    schema, binding = _resolve(q, act, dom)
    case = schema.cases[_case_index(schema, binding, q)]
    u = rng.random()
    acc = 0.0
    chosen = case.outcomes[-1]
    for o in case.outcomes:
        acc += o.probability
        if u < acc:
            chosen = o
            break
    return _apply(q, chosen, binding)


def transitions(q: State, act: GroundAction, dom: Optional[DomainDef] = None) -> List[Tuple[float, State]]:
    """The successor distribution of a legal action; equal successors are merged in outcome order."""
    dom = dom or q.domain
    if act.binding:
        schema, binding = dom.variants[act.name][act.variant], dict(act.binding)
    else:
        schema, binding = _resolve(q, act, dom)
    case = schema.cases[_case_index(schema, binding, q)]
    merged: Dict[State, float] = {}
    for o in case.outcomes:
        if o.probability == 0.0:
            continue
        nxt = _apply(q, o, binding)
        merged[nxt] = merged.get(nxt, 0.0) + o.probability
    return [(p, s) for s, p in merged.items()]


def is_goal(q: State) -> bool:
    """True iff every goal fact's world twin holds."""
    if q.domain is None:
        raise DomainError("is_goal needs a state bound to a domain")
    twins = q.domain.goal_twin
    facts = q.facts
    for f in facts:
        world = twins.get(f[0])
        if world is not None and (world, *f[1:]) not in facts:
            return False
    return True


def goal_facts(q: State) -> List[Atom]:
    twins = q.domain.goal_twin
    return [f for f in q.facts if f[0] in twins]


# --------------------------------------------------------------------------
# Surface syntax
# --------------------------------------------------------------------------


def _parse_atom(expr, allow_not: bool) -> Literal:
    lst = expect_list(expr, min_len=1)
    if lst[0] == "not":
        if not allow_not or len(lst) != 2:
            raise ParseError("negation not allowed here", *where(expr))
        inner = _parse_atom(lst[1], False)
        return Literal(inner.pred, inner.args, False)
    return Literal(str(expect_symbol(lst[0])), tuple(str(expect_symbol(a)) for a in lst[1:]))


def _parse_prob(sym) -> float:
    try:
        p = float(str(sym))
    except ValueError:
        raise ParseError(f"expected a probability, got {sym!r}", *where(sym)) from None
    return p


def _parse_action(expr) -> ActionSchema:
    lst = expect_list(expr, "action", 2)
    name = str(expect_symbol(lst[1]))
    params: tuple = ()
    aux: tuple = ()
    pre: tuple = ()
    cases = []
    for part in lst[2:]:
        p = expect_list(part, min_len=1)
        head = p[0]
        if head == "params":
            params = tuple(str(expect_symbol(v)) for v in p[1:])
        elif head == "aux":
            aux = tuple(str(expect_symbol(v)) for v in p[1:])
        elif head == "pre":
            pre = tuple(_parse_atom(a, True) for a in p[1:])
        elif head == "case":
            guard: tuple = ()
            outcomes = []
            for item in p[1:]:
                it = expect_list(item, min_len=1)
                if it[0] == "guard":
                    guard = tuple(_parse_atom(a, True) for a in it[1:])
                elif it[0] == "outcome":
                    if len(it) < 2:
                        raise ParseError("outcome needs a probability", *where(it))
                    add: tuple = ()
                    dele: tuple = ()
                    for eff in it[2:]:
                        e = expect_list(eff, min_len=1)
                        if e[0] == "add":
                            add = tuple(_parse_atom(a, False) for a in e[1:])
                        elif e[0] == "del":
                            dele = tuple(_parse_atom(a, False) for a in e[1:])
                        else:
                            raise ParseError(f"unexpected {e[0]!r} in outcome", *where(e))
                    outcomes.append(Outcome(_parse_prob(it[1]), add, dele))
                else:
                    raise ParseError(f"unexpected {it[0]!r} in case", *where(it))
            cases.append(Case(guard, tuple(outcomes)))
        else:
            raise ParseError(f"unexpected section {head!r} in action {name!r}", *where(p))
    return ActionSchema(name, params, aux, pre, tuple(cases))


def parse_domain(text: str) -> DomainDef:
    """Parse and validate a domain file.  Goal twins are added when not declared."""
    expr = parse_one(text)
    lst = expect_list(expr, "domain", 2)
    name = str(expect_symbol(lst[1]))
    decls: List[PredicateDecl] = []
    actions: List[ActionSchema] = []
    derived_src = []
    for part in lst[2:]:
        p = expect_list(part, min_len=1)
        if p[0] == "predicates":
            for d in p[1:]:
                dl = expect_list(d, min_len=2)
                try:
                    arity = int(str(dl[1]))
                except ValueError:
                    raise ParseError(f"bad arity {dl[1]!r}", *where(dl[1])) from None
                decls.append(PredicateDecl(str(expect_symbol(dl[0])), arity))
        elif p[0] == "action":
            actions.append(_parse_action(p))
        elif p[0] == "derived":
            if len(p) != 3:
                raise ParseError("expected (derived NAME CONCEPT)", *where(p))
            derived_src.append((str(expect_symbol(p[1])), p[2]))
        else:
            raise ParseError(f"unexpected section {p[0]!r}", *where(p))
    names = {d.name for d in decls}
    decls = [
        PredicateDecl(d.name, d.arity, "goal" if d.name.startswith("g") and d.name[1:] in names else "world")
        for d in decls
    ]
    dom = DomainDef(name, with_goal_twins(decls), tuple(actions)).validate()
    if derived_src:
        from .taxonomy import class_from_sexpr

        for dname, src in derived_src:
            dom = dom.with_derived(dname, class_from_sexpr(src, dom))
    return dom


def format_domain(dom: DomainDef) -> str:
    """Print a domain in the file syntax; goal twins are left implicit."""
    lines = [f"(domain {dom.name}"]
    world = [p for p in dom.predicates if p.role == "world"]
    lines.append("  (predicates " + " ".join(f"({p.name} {p.arity})" for p in world) + ")")
    for a in dom.actions:
        lines.append(f"  (action {a.name}")
        lines.append("    (params " + " ".join(a.params) + ")" if a.params else "    (params)")
        if a.aux:
            lines.append("    (aux " + " ".join(a.aux) + ")")
        lines.append("    (pre " + " ".join(str(l) for l in a.pre) + ")" if a.pre else "    (pre)")
        for c in a.cases:
            lines.append("    (case (guard" + "".join(" " + str(l) for l in c.guard) + ")")
            for o in c.outcomes:
                add = "(add" + "".join(" " + str(l) for l in o.add) + ")"
                dele = "(del" + "".join(" " + str(l) for l in o.delete) + ")"
                lines.append(f"      (outcome {o.probability!r} {add} {dele})")
            lines[-1] += ")"
        lines[-1] += ")"
    if dom.derived:
        from .taxonomy import format_class

        for dname, expr in dom.derived:
            lines.append(f"  (derived {dname} {format_class(expr)})")
    lines[-1] += ")"
    return "\n".join(lines) + "\n"


def _parse_ground_atom(expr) -> Atom:
    lst = expect_list(expr, min_len=1)
    return tuple(str(expect_symbol(x)) for x in lst)


def parse_state(text: str, dom: DomainDef) -> State:
    return state_from_sexpr(parse_one(text), dom)


def state_from_sexpr(expr, dom: DomainDef) -> State:
    lst = expect_list(expr, "state")
    objects: List[str] = []
    facts: List[Atom] = []
    for part in lst[1:]:
        p = expect_list(part, min_len=1)
        if p[0] == "objects":
            objects = [str(expect_symbol(o)) for o in p[1:]]
        elif p[0] == "facts":
            facts = [_parse_ground_atom(f) for f in p[1:]]
        else:
            raise ParseError(f"unexpected section {p[0]!r} in state", *where(p))
    return State(objects, facts, dom).validate()


def format_state(q: State) -> str:
    facts = " ".join("(" + " ".join(f) + ")" for f in q.sorted_facts())
    return f"(state (objects {' '.join(q.objects)}) (facts {facts}))"


def state_to_json(q: State) -> dict:
    return {"objects": list(q.objects), "facts": [atom_str(f) for f in q.sorted_facts()]}


def state_from_json(obj: Mapping, dom: DomainDef) -> State:
    return State(obj["objects"], [parse_atom_str(f) for f in obj["facts"]], dom).validate()


def parse_states(text: str, dom: DomainDef) -> List[State]:
    return [state_from_sexpr(e, dom) for e in parse_all(text)]
