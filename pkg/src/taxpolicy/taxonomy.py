"""Taxonomic class and relation expressions.

Every node carries its canonical s-expression ``key``; equality, hashing and
ordering go through it.  Denotations are computed as object bitmasks over a
state's sorted object tuple (bit ``i`` is ``q.objects[i]``).

    (R C)  = {o | exists o' in C with (o, o') in R}
    R*     = identity plus the transitive closure of R
    cP     = P intersected with gP
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

from .pstrips import DomainDef, DomainError, State
from .sexpr import ParseError, expect_symbol, parse_one, where


class ExprError(ValueError):
    """An expression outside the restricted concept language."""


# --------------------------------------------------------------------------
# Relation expressions
# --------------------------------------------------------------------------


class RelExpr:
    __slots__ = ("key", "_hash")

    def _init(self, key: str) -> None:
        object.__setattr__(self, "key", key)
        object.__setattr__(self, "_hash", hash((type(self).__name__, key)))

    def __eq__(self, other) -> bool:
        return isinstance(other, RelExpr) and type(self) is type(other) and self.key == other.key

    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        return self.key

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.key}>"

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")

    def __reduce__(self):
        return (_rebuild_rel, (type(self).__name__, self._args()))

    @property
    def base(self) -> str:
        raise NotImplementedError


class RelPrimitive(RelExpr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        self._init(name)

    def _args(self):
        return (self.name,)

    @property
    def base(self) -> str:
        return self.name


class RelComparison(RelExpr):
    """cR, the pairs in both R and its goal twin gR."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        self._init("c" + name)

    def _args(self):
        return (self.name,)

    @property
    def base(self) -> str:
        return "c" + self.name


class Inverse(RelExpr):
    __slots__ = ("rel",)

    def __init__(self, rel: RelExpr):
        if isinstance(rel, (Inverse, Star)):
            raise ExprError(f"(inv {rel.key}) is not canonical")
        object.__setattr__(self, "rel", rel)
        self._init(f"(inv {rel.key})")

    def _args(self):
        return (self.rel,)

    @property
    def base(self) -> str:
        return self.rel.base


class Star(RelExpr):
    __slots__ = ("rel",)

    def __init__(self, rel: RelExpr):
        if isinstance(rel, Star):
            raise ExprError("star applied twice")
        object.__setattr__(self, "rel", rel)
        self._init(f"(star {rel.key})")

    def _args(self):
        return (self.rel,)

    @property
    def base(self) -> str:
        return self.rel.base


def inv(r: RelExpr) -> RelExpr:
    """Inverse in canonical form: (inv (star R)) becomes (star (inv R))."""
    if isinstance(r, Star):
        return Star(Inverse(r.rel))
    return Inverse(r)


def star(r: RelExpr) -> RelExpr:
    return Star(r)


def _rebuild_rel(kind: str, args):
    return {"RelPrimitive": RelPrimitive, "RelComparison": RelComparison, "Inverse": Inverse, "Star": Star}[
        kind
    ](*args)


# --------------------------------------------------------------------------
# Class expressions
# --------------------------------------------------------------------------


class ClassExpr:
    __slots__ = ("key", "_hash")

    def _init(self, key: str) -> None:
        object.__setattr__(self, "key", key)
        object.__setattr__(self, "_hash", hash(key))

    def __eq__(self, other) -> bool:
        return isinstance(other, ClassExpr) and self.key == other.key

    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        return self.key

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.key}>"

    def __setattr__(self, name, value):
        raise AttributeError("expressions are immutable")

    def __reduce__(self):
        return (_rebuild_class, (type(self).__name__, self._args()))

    @property
    def conjuncts(self) -> Tuple["ClassExpr", ...]:
        """Members of a top-level intersection; a-thing is the empty conjunction."""
        return (self,)

    @property
    def sort_key(self) -> tuple:
        return (depth(self), self.key)


class AThing(ClassExpr):
    __slots__ = ()

    def __init__(self):
        self._init("a-thing")

    def _args(self):
        return ()

    @property
    def conjuncts(self):
        return ()


class Primitive(ClassExpr):
    """A unary predicate, goal predicate or registered derived concept."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        self._init(name)

    def _args(self):
        return (self.name,)


class Comparison(ClassExpr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        self._init("c" + name)

    def _args(self):
        return (self.name,)


class Not(ClassExpr):
    __slots__ = ("arg",)

    def __init__(self, arg: ClassExpr):
        if isinstance(arg, Not):
            raise ExprError("double negation is excluded")
        if isinstance(arg, Intersect):
            raise ExprError("intersection is only allowed at top level")
        object.__setattr__(self, "arg", arg)
        self._init(f"(not {arg.key})")

    def _args(self):
        return (self.arg,)


class RelApp(ClassExpr):
    __slots__ = ("rel", "arg")

    def __init__(self, rel: RelExpr, arg: ClassExpr):
        if isinstance(arg, Intersect):
            raise ExprError("intersection is only allowed at top level")
        object.__setattr__(self, "rel", rel)
        object.__setattr__(self, "arg", arg)
        self._init(f"({rel.key} {arg.key})")

    def _args(self):
        return (self.rel, self.arg)


class Intersect(ClassExpr):
    """Top-level conjunction of at least two intersection-free members, canonically ordered."""

    __slots__ = ("members",)

    def __init__(self, members: Iterable[ClassExpr]):
        ms = _canonical_members(members)
        if len(ms) < 2:
            raise ExprError("an intersection needs two distinct non-trivial members; use intersect()")
        object.__setattr__(self, "members", ms)
        self._init("(and " + " ".join(m.key for m in ms) + ")")

    def _args(self):
        return (self.members,)

    @property
    def conjuncts(self):
        return self.members


def _canonical_members(members: Iterable[ClassExpr]) -> Tuple[ClassExpr, ...]:
    seen: Dict[str, ClassExpr] = {}
    for m in members:
        if isinstance(m, Intersect):
            raise ExprError("nested intersection")
        if isinstance(m, AThing):
            continue
        seen.setdefault(m.key, m)
    return tuple(sorted(seen.values(), key=lambda m: m.sort_key))


def intersect(members: Iterable[ClassExpr]) -> ClassExpr:
    """Canonical conjunction; collapses to the single member or a-thing when possible."""
    flat: List[ClassExpr] = []
    for m in members:
        flat.extend(m.conjuncts)
    ms = _canonical_members(flat)
    if not ms:
        return AThing()
    if len(ms) == 1:
        return ms[0]
    return Intersect(ms)


def _rebuild_class(kind: str, args):
    return {
        "AThing": AThing,
        "Primitive": Primitive,
        "Comparison": Comparison,
        "Not": Not,
        "RelApp": RelApp,
        "Intersect": Intersect,
    }[kind](*args)


A_THING = AThing()


# --------------------------------------------------------------------------
# Depth and the candidate space
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CandidateSpaceParams:
    d: int
    w: int

    def __post_init__(self):
        if self.d < 1 or self.w < 1:
            raise ValueError("depth and width must be at least 1")


def depth(c: ClassExpr) -> int:
    """Depth of an intersection-free expression; comparison predicates count as one."""
    if isinstance(c, (AThing, Primitive, Comparison)):
        return 1
    if isinstance(c, Not):
        return 1 + depth(c.arg)
    if isinstance(c, RelApp):
        return 1 + depth(c.arg)
    raise ExprError("depth is defined only for intersection-free expressions")


def max_depth(c: ClassExpr) -> int:
    """Largest conjunct depth; a-thing has depth one."""
    return max((depth(m) for m in c.conjuncts), default=1)


def width(c: ClassExpr) -> int:
    return len(c.conjuncts)


def conjoin(c: ClassExpr, extra: ClassExpr, params: CandidateSpaceParams) -> Optional[ClassExpr]:
    """``c`` intersected with the intersection-free ``extra``; None when rejected."""
    if isinstance(extra, Intersect):
        raise ExprError("the added conjunct must be intersection-free")
    if isinstance(extra, AThing):
        return None
    members = c.conjuncts
    if extra in members:
        return None
    if len(members) + 1 > params.w:
        return None
    return intersect(members + (extra,))


def base_classes(dom: DomainDef) -> List[ClassExpr]:
    out: List[ClassExpr] = [A_THING]
    for p in dom.predicates:
        if p.arity == 1:
            out.append(Primitive(p.name))
            if p.role == "world":
                out.append(Comparison(p.name))
    out.extend(Primitive(name) for name, _ in dom.derived)
    return out


def base_relations(dom: DomainDef) -> List[RelExpr]:
    """Per binary predicate (world, goal, comparison): R, R^-1, R*, (R^-1)*."""
    bases: List[RelExpr] = []
    for p in dom.predicates:
        if p.arity == 2:
            bases.append(RelPrimitive(p.name))
            if p.role == "world":
                bases.append(RelComparison(p.name))
    out: List[RelExpr] = []
    for r in sorted(bases, key=lambda r: r.key):
        out.extend((r, Inverse(r), Star(r), Star(Inverse(r))))
    return out


def enumerate_intersection_free(dom: DomainDef, d: int) -> List[ClassExpr]:
    """All canonical intersection-free class expressions of depth at most ``d``.

    Ordered by (depth, canonical string)."""
    if d < 1:
        raise ValueError("d must be at least 1")
    rels = base_relations(dom)
    levels: List[List[ClassExpr]] = [sorted(base_classes(dom), key=lambda c: c.key)]
    for _ in range(2, d + 1):
        prev = levels[-1]
        nxt: List[ClassExpr] = [Not(c) for c in prev if not isinstance(c, Not)]
        nxt.extend(RelApp(r, c) for r in rels for c in prev)
        levels.append(sorted(nxt, key=lambda c: c.key))
    return [c for level in levels for c in level]


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------


class StateModel:
    """Bitmask view of a state with per-state memo tables."""

    __slots__ = ("objects", "n", "full", "unary", "binary", "class_memo", "rel_memo", "domain", "legal")

    def __init__(self, q: State):
        self.objects = q.objects
        self.n = len(q.objects)
        self.full = (1 << self.n) - 1
        pos = {o: i for i, o in enumerate(q.objects)}
        self.unary: Dict[str, int] = {}
        self.binary: Dict[str, List[int]] = {}
        for f in q.facts:
            if len(f) == 2:
                self.unary[f[0]] = self.unary.get(f[0], 0) | (1 << pos[f[1]])
            elif len(f) == 3:
                rows = self.binary.get(f[0])
                if rows is None:
                    rows = self.binary[f[0]] = [0] * self.n
                rows[pos[f[1]]] |= 1 << pos[f[2]]
        self.class_memo: Dict[str, int] = {}
        self.rel_memo: Dict[str, Tuple[int, ...]] = {}
        self.domain = q.domain
        self.legal = None  # filled lazily by the policy layer

    def objects_of(self, mask: int) -> FrozenSet[str]:
        return frozenset(o for i, o in enumerate(self.objects) if mask >> i & 1)


def state_model(q: State) -> StateModel:
    m = q._model
    if m is None:
        m = q._model = StateModel(q)
    return m


def _pred_decl(dom: Optional[DomainDef], name: str, arity: int):
    if dom is None:
        return None
    decl = dom.pred_map.get(name)
    if decl is None or decl.arity != arity:
        raise DomainError(f"unknown {'class' if arity == 1 else 'relation'} predicate {name!r}")
    return decl


def _world_decl(dom: Optional[DomainDef], name: str, arity: int):
    decl = _pred_decl(dom, name, arity)
    if decl is not None and decl.role != "world":
        raise DomainError(f"comparison needs a world predicate, got {name!r}")


def rel_rows(r: RelExpr, m: StateModel) -> Tuple[int, ...]:
    memo = m.rel_memo
    hit = memo.get(r.key)
    if hit is not None:
        return hit
    n = m.n
    if isinstance(r, RelPrimitive):
        _pred_decl(m.domain, r.name, 2)
        rows = tuple(m.binary.get(r.name, (0,) * n))
    elif isinstance(r, RelComparison):
        _world_decl(m.domain, r.name, 2)
        a = m.binary.get(r.name, (0,) * n)
        b = m.binary.get("g" + r.name, (0,) * n)
        rows = tuple(x & y for x, y in zip(a, b))
    elif isinstance(r, Inverse):
        src = rel_rows(r.rel, m)
        out = [0] * n
        for i, row in enumerate(src):
            j = 0
            while row:
                if row & 1:
                    out[j] |= 1 << i
                row >>= 1
                j += 1
        rows = tuple(out)
    elif isinstance(r, Star):
        out = list(rel_rows(r.rel, m))
        for i in range(n):
            out[i] |= 1 << i
        for k in range(n):
            bit = 1 << k
            rk = out[k]
            for i in range(n):
                if out[i] & bit:
                    out[i] |= rk
        rows = tuple(out)
    else:
        raise ExprError(f"unknown relation node {r!r}")
    memo[r.key] = rows
    return rows


def class_mask(c: ClassExpr, m: StateModel) -> int:
    memo = m.class_memo
    hit = memo.get(c.key)
    if hit is not None:
        return hit
    if isinstance(c, AThing):
        v = m.full
    elif isinstance(c, Primitive):
        derived = m.domain.derived_map.get(c.name) if m.domain is not None else None
        if derived is not None:
            v = class_mask(derived, m)
        else:
            _pred_decl(m.domain, c.name, 1)
            v = m.unary.get(c.name, 0)
    elif isinstance(c, Comparison):
        _world_decl(m.domain, c.name, 1)
        v = m.unary.get(c.name, 0) & m.unary.get("g" + c.name, 0)
    elif isinstance(c, Not):
        v = m.full & ~class_mask(c.arg, m)
    elif isinstance(c, RelApp):
        target = class_mask(c.arg, m)
        v = 0
        if target:
            for i, row in enumerate(rel_rows(c.rel, m)):
                if row & target:
                    v |= 1 << i
        else:
            rel_rows(c.rel, m)  # still validates predicate names
    elif isinstance(c, Intersect):
        v = m.full
        for member in c.members:
            v &= class_mask(member, m)
            if not v:
                break
    else:
        raise ExprError(f"unknown class node {c!r}")
    memo[c.key] = v
    return v


def eval_class(c: ClassExpr, q: State) -> FrozenSet[str]:
    """The set of objects of ``q`` denoted by ``c``."""
    m = state_model(q)
    return m.objects_of(class_mask(c, m))


def eval_rel(r: RelExpr, q: State) -> FrozenSet[Tuple[str, str]]:
    m = state_model(q)
    rows = rel_rows(r, m)
    objs = q.objects
    return frozenset((objs[i], objs[j]) for i, row in enumerate(rows) for j in range(m.n) if row >> j & 1)


# --------------------------------------------------------------------------
# Surface syntax
# --------------------------------------------------------------------------


def _resolve_class_name(name: str, dom: DomainDef, expr) -> ClassExpr:
    if name == "a-thing":
        return A_THING
    if name in dom.derived_map:
        return Primitive(name)
    decl = dom.pred_map.get(name)
    if decl is not None and decl.arity == 1:
        return Primitive(name)
    if name.startswith("c"):
        w = dom.pred_map.get(name[1:])
        if w is not None and w.arity == 1 and w.role == "world":
            return Comparison(name[1:])
    raise ParseError(f"unknown class name {name!r}", *where(expr))


def _resolve_rel_name(name: str, dom: DomainDef, expr) -> RelExpr:
    decl = dom.pred_map.get(name)
    if decl is not None and decl.arity == 2:
        return RelPrimitive(name)
    if name.startswith("c"):
        w = dom.pred_map.get(name[1:])
        if w is not None and w.arity == 2 and w.role == "world":
            return RelComparison(name[1:])
    raise ParseError(f"unknown relation name {name!r}", *where(expr))


def rel_from_sexpr(expr, dom: DomainDef) -> RelExpr:
    if not isinstance(expr, list):
        return _resolve_rel_name(str(expr), dom, expr)
    if len(expr) != 2 or expr[0] not in ("inv", "star"):
        raise ParseError("expected (inv R) or (star R)", *where(expr))
    inner = rel_from_sexpr(expr[1], dom)
    try:
        return inv(inner) if expr[0] == "inv" else star(inner)
    except ExprError as e:
        raise ParseError(str(e), *where(expr)) from None


def class_from_sexpr(expr, dom: DomainDef, top: bool = True) -> ClassExpr:
    if not isinstance(expr, list):
        return _resolve_class_name(str(expect_symbol(expr)), dom, expr)
    if not expr:
        raise ParseError("empty class expression", *where(expr))
    try:
        if expr[0] == "and":
            if not top:
                raise ParseError("intersection is only allowed at top level", *where(expr))
            return intersect(class_from_sexpr(e, dom, False) for e in expr[1:])
        if len(expr) != 2:
            raise ParseError("expected (not C) or (R C)", *where(expr))
        if expr[0] == "not":
            return Not(class_from_sexpr(expr[1], dom, False))
        return RelApp(rel_from_sexpr(expr[0], dom), class_from_sexpr(expr[1], dom, False))
    except ExprError as e:
        raise ParseError(str(e), *where(expr)) from None


def parse_class(text: str, dom: DomainDef) -> ClassExpr:
    return class_from_sexpr(parse_one(text), dom)


def parse_rel(text: str, dom: DomainDef) -> RelExpr:
    return rel_from_sexpr(parse_one(text), dom)


def format_class(c: ClassExpr) -> str:
    return c.key


def register_derived(dom: DomainDef, name: str, concept) -> DomainDef:
    """Add a named concept (expression or source text) that then acts as a primitive class."""
    expr = parse_class(concept, dom) if isinstance(concept, str) else concept
    return dom.with_derived(name, expr)
