"""Built-in benchmark MDPs and their problem-instance generators.

The schemas live in two forms that must stay identical: the Python builders
below and the ``data/*.dom`` files shipped alongside (checked by the tests).

Probabilities not fixed by the benchmark descriptions are module constants:
``PW_STACK_HELD`` and ``PW2_DEST_FACTOR``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from importlib import resources
from typing import List, Optional, Sequence, Tuple

from ..pstrips import (
    ActionSchema,
    Case,
    DomainDef,
    Literal,
    Outcome,
    PredicateDecl,
    State,
    natural_key,
    with_goal_twins,
)

BUILTIN_NAMES = ("bw1", "bw2", "pw1", "pw2", "lw1", "lw2", "bwdet")

FASTSTACK_SUCCESS = {"black": 0.8, "gold": 0.2}
BW1_FASTSTACK_SUCCESS = 0.8
# stack success in the paint worlds by held-block colour (not given numerically)
PW_STACK_HELD = {"black": 0.8, "gold": 0.2}
# extra factor by destination colour in PW2
PW2_DEST_FACTOR = {"black": 1.0, "gold": 0.5}
PAINT_FLIP = 0.5
DRIVE_SUCCESS = {"car": 0.9, "truck": 0.2}
DRIVE_SUCCESS_RAIN = {"car": 0.9, "truck": 0.8}


def _l(pred: str, *args: str) -> Literal:
    return Literal(pred, tuple(args))


def _n(pred: str, *args: str) -> Literal:
    return Literal(pred, tuple(args), False)


def _det(add=(), delete=()) -> Tuple[Case, ...]:
    return (Case((), (Outcome(1.0, tuple(add), tuple(delete)),)),)


def _coin(p: float, add=(), delete=()) -> Tuple[Outcome, ...]:
    if p >= 1.0:
        return (Outcome(1.0, tuple(add), tuple(delete)),)
    return (Outcome(p, tuple(add), tuple(delete)), Outcome(round(1.0 - p, 12)))


def _preds(*spec: Tuple[str, int]) -> Tuple[PredicateDecl, ...]:
    return with_goal_twins(PredicateDecl(n, a) for n, a in spec)


def _bw_core() -> List[ActionSchema]:
    return [
        ActionSchema(
            "pick-up",
            ("X",),
            (),
            (_l("on-table", "X"), _l("clear", "X"), _l("arm-empty")),
            _det([_l("holding", "X")], [_l("on-table", "X"), _l("clear", "X"), _l("arm-empty")]),
        ),
        ActionSchema(
            "put-down",
            ("X",),
            (),
            (_l("holding", "X"),),
            _det([_l("on-table", "X"), _l("clear", "X"), _l("arm-empty")], [_l("holding", "X")]),
        ),
        ActionSchema(
            "unstack",
            ("X",),
            ("Y",),
            (_l("on", "X", "Y"), _l("clear", "X"), _l("arm-empty")),
            _det(
                [_l("holding", "X"), _l("clear", "Y")],
                [_l("on", "X", "Y"), _l("clear", "X"), _l("arm-empty")],
            ),
        ),
    ]


_STACK_ADD = [_l("on", "X", "Y"), _l("clear", "X"), _l("arm-empty")]
_STACK_DEL = [_l("holding", "X"), _l("clear", "Y")]
# stack names the destination block; the held block is bound through holding(X)
_STACK_PRE = (_l("holding", "X"), _l("clear", "Y"))


def _stack_det() -> ActionSchema:
    return ActionSchema("stack", ("Y",), ("X",), _STACK_PRE, _det(_STACK_ADD, _STACK_DEL))


_FAST_PRE = (_l("on-table", "X"), _l("clear", "X"), _l("gon", "X", "Y"), _l("clear", "Y"), _l("arm-empty"))
_FAST_ADD = [_l("on", "X", "Y")]
_FAST_DEL = [_l("on-table", "X"), _l("clear", "Y")]


def _bw1() -> DomainDef:
    preds = _preds(("on", 2), ("on-table", 1), ("clear", 1), ("holding", 1), ("arm-empty", 0))
    fast = ActionSchema(
        "faststack", ("X",), ("Y",), _FAST_PRE, (Case((), _coin(BW1_FASTSTACK_SUCCESS, _FAST_ADD, _FAST_DEL)),)
    )
    return DomainDef("bw1", preds, tuple(_bw_core() + [_stack_det(), fast]))


def _bwdet() -> DomainDef:
    preds = _preds(("on", 2), ("on-table", 1), ("clear", 1), ("holding", 1), ("arm-empty", 0))
    return DomainDef("bwdet", preds, tuple(_bw_core() + [_stack_det()]))


_COLOR_PREDS = (("on", 2), ("on-table", 1), ("clear", 1), ("holding", 1), ("arm-empty", 0), ("black", 1), ("gold", 1))


def _bw2() -> DomainDef:
    cases = tuple(
        Case((_l(color, "X"),), _coin(p, _FAST_ADD, _FAST_DEL)) for color, p in FASTSTACK_SUCCESS.items()
    )
    fast = ActionSchema("faststack", ("X",), ("Y",), _FAST_PRE, cases)
    return DomainDef("bw2", _preds(*_COLOR_PREDS), tuple(_bw_core() + [_stack_det(), fast]))


def _paint() -> ActionSchema:
    other = {"black": "gold", "gold": "black"}
    cases = tuple(
        Case((_l(c, "X"),), _coin(PAINT_FLIP, [_l(other[c], "X")], [_l(c, "X")])) for c in ("black", "gold")
    )
    return ActionSchema("paint", ("X",), (), (_l("holding", "X"),), cases)


def _pw(name: str, by_dest: bool) -> DomainDef:
    cases = []
    for held, p in PW_STACK_HELD.items():
        if by_dest:
            for dest, f in PW2_DEST_FACTOR.items():
                guard = (_l(held, "X"), _l(dest, "Y"))
                cases.append(Case(guard, _coin(round(p * f, 12), _STACK_ADD, _STACK_DEL)))
        else:
            cases.append(Case((_l(held, "X"),), _coin(p, _STACK_ADD, _STACK_DEL)))
    stack = ActionSchema("stack", ("Y",), ("X",), _STACK_PRE, tuple(cases))
    return DomainDef(name, _preds(*_COLOR_PREDS), tuple(_bw_core() + [stack, _paint()]))


def _lw(name: str, rain: bool) -> DomainDef:
    spec = [("city", 1), ("package", 1), ("truck", 1), ("car", 1), ("in", 2), ("selected", 1)]
    if rain:
        spec.append(("rain", 1))
    move_add = [_l("in", "V", "C")]
    move_del = [_l("in", "V", "D")]
    if rain:
        drive_cases = (
            Case((_l("car", "V"),), _coin(DRIVE_SUCCESS["car"], move_add, move_del)),
            Case((_l("truck", "V"), _l("rain", "C")), _coin(DRIVE_SUCCESS_RAIN["truck"], move_add, move_del)),
            Case((_l("truck", "V"),), _coin(DRIVE_SUCCESS["truck"], move_add, move_del)),
        )
    else:
        drive_cases = tuple(
            Case((_l(kind, "V"),), _coin(DRIVE_SUCCESS[kind], move_add, move_del)) for kind in ("car", "truck")
        )
    actions = [
        ActionSchema(
            "load",
            ("P",),
            ("V", "C"),
            (_l("package", "P"), _l("selected", "V"), _l("in", "V", "C"), _l("in", "P", "C")),
            _det([_l("in", "P", "V")], [_l("in", "P", "C")]),
        ),
        ActionSchema(
            "unload",
            ("P",),
            ("V", "C"),
            (_l("package", "P"), _l("selected", "V"), _l("in", "P", "V"), _l("in", "V", "C")),
            _det([_l("in", "P", "C")], [_l("in", "P", "V")]),
        ),
        ActionSchema(
            "drive",
            ("C",),
            ("V", "D"),
            (_l("city", "C"), _l("selected", "V"), _l("in", "V", "D"), _n("in", "V", "C")),
            drive_cases,
        ),
    ]
    for kind in ("car", "truck"):
        actions.append(
            ActionSchema(
                "select",
                ("V",),
                ("W",),
                (_l(kind, "V"), _l("selected", "W"), _n("selected", "V")),
                _det([_l("selected", "V")], [_l("selected", "W")]),
            )
        )
    return DomainDef(name, _preds(*spec), tuple(actions))


_BUILDERS = {
    "bw1": _bw1,
    "bw2": _bw2,
    "pw1": lambda: _pw("pw1", False),
    "pw2": lambda: _pw("pw2", True),
    "lw1": lambda: _lw("lw1", False),
    "lw2": lambda: _lw("lw2", True),
    "bwdet": _bwdet,
}


@functools.lru_cache(maxsize=None)
def builtin_domain(name: str) -> DomainDef:
    """A benchmark domain by name (bw1, bw2, pw1, pw2, lw1, lw2, or bwdet)."""
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown built-in domain {name!r}; choose from {', '.join(BUILTIN_NAMES)}") from None
    return builder().validate()


def domain_file_text(name: str) -> str:
    if name not in _BUILDERS:
        raise ValueError(f"unknown built-in domain {name!r}")
    return resources.files(__package__).joinpath("data", f"{name}.dom").read_text(encoding="utf-8")


def domain_family(name: str) -> str:
    return "lw" if name.startswith("lw") else "bw"


# --------------------------------------------------------------------------
# Uniform blocks-world states
# --------------------------------------------------------------------------


def count_bw_states(n: int) -> int:
    """Arm-empty states of ``n`` labelled blocks, i.e. partitions into ordered towers."""
    if n < 0:
        raise ValueError("n must be non-negative")
    prev, cur = 1, 1  # a(0), a(1)
    if n == 0:
        return 1
    for k in range(2, n + 1):
        prev, cur = cur, (2 * k - 1) * cur - (k - 1) * (k - 2) * prev
    return cur


@functools.lru_cache(maxsize=None)
def _completions(n: int, placed: int, towers: int) -> int:
    # each new block starts a tower, goes directly above a placed block,
    # or goes under the bottom block of a tower
    if placed == n:
        return 1
    return _completions(n, placed + 1, towers + 1) + (placed + towers) * _completions(n, placed + 1, towers)


def uniform_bw_state(n: int, rng, names: Sequence[str] | None = None) -> Tuple[Tuple[str, ...], ...]:
    """An exactly uniform tower configuration of ``n`` blocks (towers listed bottom to top)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    names = list(names) if names is not None else [f"b{i + 1}" for i in range(n)]
    if len(names) != n:
        raise ValueError("need one name per block")
    towers: List[List[str]] = []
    placed: List[str] = []
    for m, block in enumerate(names):
        k = len(towers)
        fresh = _completions(n, m + 1, k + 1)
        per_slot = _completions(n, m + 1, k)
        r = rng.randrange(fresh + (m + k) * per_slot)
        if r < fresh:
            towers.append([block])
        else:
            j = (r - fresh) // per_slot
            if j < m:
                below = placed[j]
                for t in towers:
                    if below in t:
                        t.insert(t.index(below) + 1, block)
                        break
            else:
                towers[j - m].insert(0, block)
        placed.append(block)
    return tuple(sorted((tuple(t) for t in towers), key=lambda t: natural_key(t[0])))


def bw_facts(config, prefix: str = "") -> List[tuple]:
    """World (or, with prefix ``g``, goal) facts for a tower configuration."""
    facts = []
    for tower in config:
        facts.append((prefix + "on-table", tower[0]))
        for lower, upper in zip(tower, tower[1:]):
            facts.append((prefix + "on", upper, lower))
        if not prefix:
            facts.append(("clear", tower[-1]))
    return facts


# --------------------------------------------------------------------------
# Problem sizes and generators
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemSize:
    """Blocks worlds: one component (blocks).  Logistics: cities, cars, trucks, packages.

    Each component is an inclusive ``(lo, hi)`` range drawn uniformly per problem.
    """

    ranges: Tuple[Tuple[int, int], ...]

    @classmethod
    def parse(cls, text) -> "ProblemSize":
        if isinstance(text, ProblemSize):
            return text
        if isinstance(text, int):
            return cls(((text, text),))
        if isinstance(text, (tuple, list)):
            return cls(tuple((v, v) if isinstance(v, int) else tuple(v) for v in text))
        parts = []
        for item in str(text).split(","):
            item = item.strip()
            if item.startswith("<"):
                hi = int(item[1:]) - 1
                parts.append((1, hi))
            elif "-" in item:
                lo, hi = item.split("-")
                parts.append((int(lo), int(hi)))
            else:
                parts.append((int(item), int(item)))
        for lo, hi in parts:
            if lo > hi or lo < 0:
                raise ValueError(f"bad size range {lo}-{hi}")
        return cls(tuple(parts))

    def draw(self, rng) -> Tuple[int, ...]:
        return tuple(lo if lo == hi else rng.randint(lo, hi) for lo, hi in self.ranges)

    def __str__(self) -> str:
        return ",".join(str(lo) if lo == hi else f"{lo}-{hi}" for lo, hi in self.ranges)

    def check(self, domain: str) -> "ProblemSize":
        if domain_family(domain) == "lw":
            if len(self.ranges) != 4:
                raise ValueError("logistics sizes are cities,cars,trucks,packages")
            if self.ranges[0][0] < 1:
                raise ValueError("need at least one city")
        else:
            if len(self.ranges) != 1 or self.ranges[0][0] < 1:
                raise ValueError("blocks-world size is a positive block count")
        return self


@dataclass(frozen=True)
class GeneratorSpec:
    domain: str
    size: ProblemSize
    seed: int = 0


def sample_problem(spec: GeneratorSpec, rng, dom: Optional[DomainDef] = None) -> State:
    """One initial state (goal facts included) from the domain's problem distribution.

    ``dom`` may replace the built-in definition (e.g. one with derived concepts
    registered); the distribution is still the built-in domain's."""
    dom = dom or builtin_domain(spec.domain)
    size = ProblemSize.parse(spec.size).check(spec.domain)
    dims = size.draw(rng)
    if domain_family(spec.domain) == "lw":
        return _sample_logistics(dom, dims, rng)
    return _sample_blocks(dom, dims[0], rng)


def _sample_blocks(dom: DomainDef, p: int, rng) -> State:
    names = [f"b{i + 1}" for i in range(p)]
    init = uniform_bw_state(p, rng, names)
    goal = uniform_bw_state(p, rng, names)
    facts = bw_facts(init) + bw_facts(goal, "g") + [("arm-empty",)]
    if "black" in dom.pred_map:
        for b in names:
            facts.append(("black" if rng.random() < 0.5 else "gold", b))
    return State(names, facts, dom).validate()


def _sample_logistics(dom: DomainDef, dims: Tuple[int, ...], rng) -> State:
    n_city, n_car, n_truck, n_pkg = dims
    cities = [f"city{i + 1}" for i in range(n_city)]
    cars = [f"car{i + 1}" for i in range(n_car)]
    trucks = [f"truck{i + 1}" for i in range(n_truck)]
    pkgs = [f"pkg{i + 1}" for i in range(n_pkg)]
    vehicles = cars + trucks
    facts: List[tuple] = [("city", c) for c in cities]
    facts += [("car", v) for v in cars] + [("truck", v) for v in trucks] + [("package", p) for p in pkgs]
    for v in vehicles:
        facts.append(("in", v, rng.choice(cities)))
    holders = vehicles + cities
    for p in pkgs:
        facts.append(("in", p, rng.choice(holders)))
    for p in pkgs:
        facts.append(("gin", p, rng.choice(cities)))
    if vehicles:
        facts.append(("selected", rng.choice(vehicles)))
    if "rain" in dom.pred_map:
        for c in cities:
            if rng.random() < 0.5:
                facts.append(("rain", c))
    return State(cities + vehicles + pkgs, facts, dom).validate()


def all_bw_configs(names: Sequence[str]) -> List[Tuple[Tuple[str, ...], ...]]:
    """Every tower configuration of the given blocks (brute force, for oracles and tests)."""
    names = list(names)
    if not names:
        return [()]
    out = set()
    first, rest = names[0], names[1:]
    for config in all_bw_configs(rest):
        towers = [list(t) for t in config]
        out.add(_canon(towers + [[first]]))
        for ti, t in enumerate(towers):
            for pos in range(len(t) + 1):
                new = [list(x) for x in towers]
                new[ti].insert(pos, first)
                out.add(_canon(new))
    return sorted(out)


def _canon(towers) -> Tuple[Tuple[str, ...], ...]:
    return tuple(sorted((tuple(t) for t in towers), key=lambda t: natural_key(t[0])))
