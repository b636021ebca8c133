"""Decision-list induction: heuristics, beam search over concepts, set covering, bagging.

Two routes compute the same heuristic values.  The ``heuristic_*`` functions
follow the definitions literally through :func:`policy.suggest`; the search
itself uses :class:`InstanceTable`, which stores every candidate concept as a
vector of per-instance object bitmasks so whole beams are scored with numpy.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import IO, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .policy import DecisionList, Ensemble, Rule, TrainingInstance, legal_by_type, suggest
from .pstrips import DomainDef, GroundAction, legal_actions, state_from_json, state_to_json
from .seeds import stream
from .taxonomy import (
    A_THING,
    ClassExpr,
    Not,
    RelApp,
    base_classes,
    base_relations,
    class_mask,
    intersect,
    rel_rows,
    state_model,
)

log = logging.getLogger(__name__)

DIGITS = 12  # heuristic values are compared after rounding to this many decimals
MAX_OBJECTS = 64


@dataclass(frozen=True)
class LearnerParams:
    d: int = 3
    w: int = 12
    b: int = 5

    def __post_init__(self):
        if min(self.d, self.w, self.b) < 1:
            raise ValueError("d, w and b must all be at least 1")


@dataclass(frozen=True)
class BagParams:
    Z: int = 9
    M: int = 50

    def __post_init__(self):
        if self.Z < 1 or self.M < 1:
            raise ValueError("Z and M must be at least 1")


@dataclass(frozen=True, order=True)
class HeuristicValue:
    """Compared lexicographically, ``n`` first."""

    n: float
    v: float


# --------------------------------------------------------------------------
# Reference heuristics, straight from the definitions
# --------------------------------------------------------------------------


def _has_type(q, a: str) -> bool:
    return a in legal_by_type(q)


def heuristic_V(rule: Rule, F: Sequence[TrainingInstance]) -> float:
    if not F:
        raise ValueError("V is undefined on an empty instance set")
    return sum(1 for f in F if suggest(rule, f.state)) / len(F)


def _P(rule: Rule, f: TrainingInstance) -> float:
    s = suggest(rule, f.state)
    if s:
        return len(s & f.optimal) / len(s)
    return 0.0 if any(act.name == rule.action for act in f.optimal) else 1.0


def heuristic_N1(rule: Rule, F: Sequence[TrainingInstance]) -> float:
    Fa = [f for f in F if _has_type(f.state, rule.action)]
    if not Fa:
        return 0.0
    return sum(_P(rule, f) for f in Fa) / len(Fa)


def incorrect_covers(rule: Rule, F: Sequence[TrainingInstance]) -> int:
    n = 0
    for f in F:
        s = suggest(rule, f.state)
        if s and not s <= f.optimal:
            n += 1
    return n


def heuristic_N2(rule: Rule, F: Sequence[TrainingInstance]) -> float:
    return 1.0 / (1 + incorrect_covers(rule, F))


def H1(rule: Rule, F: Sequence[TrainingInstance]) -> HeuristicValue:
    return HeuristicValue(heuristic_N1(rule, F), heuristic_V(rule, F))


def H2(rule: Rule, F: Sequence[TrainingInstance]) -> HeuristicValue:
    return HeuristicValue(heuristic_N2(rule, F), heuristic_V(rule, F))


HEURISTICS = {"H1": H1, "H2": H2}


# --------------------------------------------------------------------------
# Batch representation
# --------------------------------------------------------------------------


def _weights(width: int) -> np.ndarray:
    return np.left_shift(np.uint64(1), np.arange(width, dtype=np.uint64))


class InstanceTable:
    """Per-instance bitmasks for legal actions, optimal actions and a concept pool.

    The pool holds every intersection-free concept of depth at most ``d`` up
    to equivalence on these instances: a concept whose mask vector equals an
    earlier one (in (depth, string) order) is dropped, and deeper concepts are
    only built over the survivors.  Heuristic values depend on concepts only
    through their mask vectors, so nothing reachable by the search is lost.
    """

    def __init__(self, F: Sequence[TrainingInstance], d: int):
        if not F:
            raise ValueError("no training instances")
        self.F = list(F)
        self.dom: DomainDef = self.F[0].state.domain
        if self.dom is None:
            raise ValueError("training states must carry their domain")
        n = len(self.F)
        self.width = max(1, max(len(f.state.objects) for f in self.F))
        if self.width > MAX_OBJECTS:
            raise ValueError(f"training states may have at most {MAX_OBJECTS} objects")
        self.full = np.array([(1 << len(f.state.objects)) - 1 for f in self.F], dtype=np.uint64)
        self.action_types = sorted(a for a, k in self.dom.action_arity.items() if k == 1)
        self.legal: Dict[str, np.ndarray] = {}
        self.opt: Dict[str, np.ndarray] = {}
        self.has_opt: Dict[str, np.ndarray] = {}
        for a in self.action_types:
            self.legal[a] = np.zeros(n, dtype=np.uint64)
            self.opt[a] = np.zeros(n, dtype=np.uint64)
            self.has_opt[a] = np.zeros(n, dtype=bool)
        for k, f in enumerate(self.F):
            pos = {o: i for i, o in enumerate(f.state.objects)}
            for a, (mask, _) in legal_by_type(f.state).items():
                if a in self.legal:
                    self.legal[a][k] = mask
            for act in f.optimal:
                if act.name in self.opt:
                    self.has_opt[act.name][k] = True
                    if len(act.args) == 1:
                        self.opt[act.name][k] |= np.uint64(1 << pos[act.args[0]])
        self._build_pool(d)

    def _build_pool(self, d: int) -> None:
        models = [state_model(f.state) for f in self.F]
        seen: Dict[bytes, int] = {}
        exprs: List[ClassExpr] = []
        masks: List[np.ndarray] = []
        depths: List[int] = []

        def admit(c: ClassExpr, vec: np.ndarray, dep: int) -> bool:
            key = vec.tobytes()
            if key in seen:
                return False
            seen[key] = len(exprs)
            exprs.append(c)
            masks.append(vec)
            depths.append(dep)
            return True

        level = []
        for c in sorted(base_classes(self.dom), key=lambda c: c.key):
            vec = np.fromiter((class_mask(c, m) for m in models), dtype=np.uint64, count=len(models))
            if admit(c, vec, 1):
                level.append(len(exprs) - 1)
        rels = base_relations(self.dom)
        rel_mats = [self._rel_matrix(r, models) for r in rels]
        weights = _weights(self.width)
        for dep in range(2, d + 1):
            cands: List[Tuple[ClassExpr, object]] = []
            for i in level:
                c = exprs[i]
                if not isinstance(c, Not):
                    cands.append((Not(c), (None, i)))
                for r, mat in zip(rels, rel_mats):
                    cands.append((RelApp(r, c), (mat, i)))
            cands.sort(key=lambda t: t[0].key)
            level = []
            for c, how in cands:
                if how[0] is None:
                    vec = self.full & ~masks[how[1]]
                else:
                    mat, i = how
                    hit = (mat & masks[i][:, None]) != 0
                    vec = np.bitwise_or.reduce(hit * weights, axis=1)
                if admit(c, vec, dep):
                    level.append(len(exprs) - 1)
        self.pool: List[ClassExpr] = exprs
        self.pool_masks = np.stack(masks) if masks else np.zeros((0, len(self.F)), dtype=np.uint64)
        self.pool_depth = np.array(depths, dtype=np.int64)
        self.athing_index = seen.get(self.full.tobytes())

    def _rel_matrix(self, r, models) -> np.ndarray:
        mat = np.zeros((len(models), self.width), dtype=np.uint64)
        for k, m in enumerate(models):
            rows = rel_rows(r, m)
            if rows:
                mat[k, : len(rows)] = rows
        return mat


@dataclass
class _Scorer:
    """Heuristic evaluation for one action type on one active instance subset."""

    idx: np.ndarray  # active instances with a legal type-a action
    legal: np.ndarray
    opt: np.ndarray
    has_opt: np.ndarray
    n_active: int  # |F|, the denominator of V

    @classmethod
    def make(cls, table: InstanceTable, a: str, active: np.ndarray) -> "_Scorer":
        legal = table.legal[a][active]
        keep = legal != 0
        idx = active[keep]
        return cls(idx, legal[keep], table.opt[a][idx], table.has_opt[a][idx], len(active))

    def score(self, cand: np.ndarray):
        """(N1, N2, V, X) for candidate masks of shape (K, |F_a|)."""
        k = cand.shape[0]
        if self.idx.size == 0:
            zeros = np.zeros(k)
            return zeros, np.ones(k), zeros, np.zeros(k, dtype=np.int64)
        s = cand & self.legal
        cnt_s = np.bitwise_count(s).astype(np.int64)
        cnt_sa = np.bitwise_count(s & self.opt).astype(np.int64)
        covered = cnt_s > 0
        empty_p = np.where(self.has_opt, 0.0, 1.0)
        p = np.where(covered, cnt_sa / np.maximum(cnt_s, 1), empty_p)
        n1 = np.round(p.sum(axis=1) / self.idx.size, DIGITS)
        x = (covered & (cnt_sa < cnt_s)).sum(axis=1)
        n2 = np.round(1.0 / (1.0 + x), DIGITS)
        v = np.round(covered.sum(axis=1) / self.n_active, DIGITS)
        return n1, n2, v, x


@dataclass
class _Member:
    conj: Tuple[int, ...]  # sorted pool indices; () is a-thing
    mask: np.ndarray  # over all table instances
    n: float = 0.0
    v: float = 0.0
    x: int = 0


@dataclass
class RuleStep:
    """What one call of the rule learner produced."""

    rule: Rule
    consistent: bool
    h1: HeuristicValue
    newly_covered: int
    fallback: bool = False


class Learner:
    """Rule and decision-list learning over one fixed training set."""

    def __init__(self, F0: Sequence[TrainingInstance], params: LearnerParams):
        self.params = params
        self.table = InstanceTable(F0, params.d)

    # -- concepts ----------------------------------------------------------

    def concept(self, conj: Tuple[int, ...]) -> ClassExpr:
        return intersect(self.table.pool[j] for j in conj)

    def _depth_of(self, conj: Tuple[int, ...]) -> int:
        return max((int(self.table.pool_depth[j]) for j in conj), default=1)

    # -- beam search -------------------------------------------------------

    def beam_search(self, a: str, heuristic: str, active: np.ndarray) -> _Member:
        t = self.table
        sc = _Scorer.make(t, a, active)
        use_n2 = heuristic == "H2"
        if heuristic not in ("H1", "H2"):
            raise ValueError(f"unknown heuristic {heuristic!r}")

        def fill(mem: _Member) -> _Member:
            n1, n2, v, x = sc.score(mem.mask[sc.idx][None, :])
            mem.n = float((n2 if use_n2 else n1)[0])
            mem.v = float(v[0])
            mem.x = int(x[0])
            return mem

        best = fill(_Member((), t.full))
        beam = [best]
        history = [self._hvalues(beam)]
        pool_sub = t.pool_masks[:, sc.idx]
        while best.x != 0 and (len(history) == 1 or history[-1] != history[-2]):
            beam = self._select(beam, pool_sub, sc, use_n2)
            best = beam[0]
            history.append(self._hvalues(beam))
        return best

    @staticmethod
    def _hvalues(beam: List[_Member]) -> Tuple[Tuple[float, float], ...]:
        return tuple(sorted((m.n, m.v) for m in beam))

    def _select(self, beam: List[_Member], pool_sub: np.ndarray, sc: _Scorer, use_n2: bool) -> List[_Member]:
        t = self.table
        w, b = self.params.w, self.params.b
        parents: List[np.ndarray] = []
        extras: List[np.ndarray] = []
        ns: List[np.ndarray] = []
        vs: List[np.ndarray] = []
        xs: List[np.ndarray] = []
        # the previous beam members themselves
        parents.append(np.arange(len(beam)))
        extras.append(np.full(len(beam), -1))
        ns.append(np.array([m.n for m in beam]))
        vs.append(np.array([m.v for m in beam]))
        xs.append(np.array([m.x for m in beam], dtype=np.int64))
        npool = pool_sub.shape[0]
        for pi, m in enumerate(beam):
            if len(m.conj) + 1 > w:
                continue
            allowed = np.ones(npool, dtype=bool)
            allowed[list(m.conj)] = False
            if t.athing_index is not None:
                allowed[t.athing_index] = False
            js = np.nonzero(allowed)[0]
            if js.size == 0:
                continue
            base = m.mask[sc.idx]
            n1, n2, v, x = self._score_chunked(pool_sub, js, base, sc)
            parents.append(np.full(js.size, pi))
            extras.append(js)
            ns.append(n2 if use_n2 else n1)
            vs.append(v)
            xs.append(x)
        P = np.concatenate(parents)
        E = np.concatenate(extras)
        N = np.concatenate(ns)
        V = np.concatenate(vs)
        X = np.concatenate(xs)
        order = np.lexsort((-V, -N))
        chosen: List[_Member] = []
        i = 0
        total = order.size
        while i < total and len(chosen) < b:
            j = i
            key = (N[order[i]], V[order[i]])
            while j < total and (N[order[j]], V[order[j]]) == key:
                j += 1
            group = order[i:j]
            chosen.append(self._tie_break(beam, group, P, E, N, V, X))
            i = j
        return chosen

    def _score_chunked(self, pool_sub, js, base, sc: _Scorer):
        # keep temporaries near a few tens of megabytes
        step = max(1, 4_000_000 // max(1, base.size))
        parts = []
        for lo in range(0, js.size, step):
            sel = js[lo : lo + step]
            parts.append(sc.score(pool_sub[sel] & base))
        return tuple(np.concatenate([p[k] for p in parts]) for k in range(4))

    def _tie_break(self, beam, group, P, E, N, V, X) -> _Member:
        """Smaller max conjunct depth, then fewer conjuncts, then canonical string."""
        t = self.table
        depth_p = np.array([self._depth_of(m.conj) for m in beam])
        size_p = np.array([len(m.conj) for m in beam])
        pg, eg = P[group], E[group]
        ext_depth = np.where(eg >= 0, t.pool_depth[np.maximum(eg, 0)], 0)
        dep = np.maximum(depth_p[pg], ext_depth)
        size = size_p[pg] + (eg >= 0)
        best = np.lexsort((size, dep))[0]
        tied = group[(dep == dep[best]) & (size == size[best])]
        options = []
        for g in tied:
            parent = beam[P[g]]
            conj = parent.conj if E[g] < 0 else tuple(sorted(parent.conj + (int(E[g]),)))
            options.append((self.concept(conj).key, conj, g))
        key, conj, g = min(options, key=lambda o: o[0])
        parent = beam[P[g]]
        mask = parent.mask if E[g] < 0 else parent.mask & t.pool_masks[E[g]]
        return _Member(conj, mask, float(N[g]), float(V[g]), int(X[g]))

    # -- rules and lists ---------------------------------------------------

    def _h1(self, a: str, mem: _Member, active: np.ndarray) -> Tuple[HeuristicValue, int]:
        sc = _Scorer.make(self.table, a, active)
        n1, _, v, x = sc.score(mem.mask[sc.idx][None, :])
        return HeuristicValue(float(n1[0]), float(v[0])), int(x[0])

    def learn_rule(self, active: np.ndarray) -> RuleStep:
        """Per action type, the H1 beam result unless only the H2 one is consistent.

        A rule counts as consistent here only if it also covers some instance:
        a rule that suggests nothing is vacuously consistent but can never
        shrink the uncovered set."""
        cands = []
        for a in self.table.action_types:
            r = self.beam_search(a, "H1", active)
            if not (r.x == 0 and r.v > 0):
                r2 = self.beam_search(a, "H2", active)
                if r2.x == 0 and r2.v > 0:
                    r = r2
            h1, x = self._h1(a, r, active)
            cands.append((a, r, h1, x))
        pick = [c for c in cands if c[2].v > 0] or cands
        pick = [c for c in pick if c[3] == 0] or pick
        a, r, h1, x = min(pick, key=lambda c: ((-c[2].n, -c[2].v), c[0], self.concept(c[1].conj).key))
        return RuleStep(Rule(self.concept(r.conj), a), x == 0 and h1.v > 0, h1, 0)

    def _covered(self, rule: Rule, active: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
        t = self.table
        if mask is None:
            mask = np.fromiter(
                (class_mask(rule.concept, state_model(t.F[k].state)) for k in active), dtype=np.uint64, count=active.size
            )
        else:
            mask = mask[active]
        return (mask & t.legal[rule.action][active]) != 0

    def _fallback(self, active: np.ndarray) -> RuleStep:
        """(a-thing : a*) with a* correctly covering the most remaining instances."""
        t = self.table
        best = None
        for a in t.action_types:
            legal = t.legal[a][active]
            cover = legal != 0
            correct = cover & ((legal & ~t.opt[a][active]) == 0)
            score = (int(correct.sum()), int(cover.sum()))
            if score[1] and (best is None or score > best[0]):
                best = (score, a)
        if best is None:
            raise ValueError("some training state has no legal single-argument action")
        rule = Rule(A_THING, best[1])
        sc = _Scorer.make(t, best[1], active)
        n1, _, v, x = sc.score(t.full[sc.idx][None, :])
        return RuleStep(rule, int(x[0]) == 0, HeuristicValue(float(n1[0]), float(v[0])), 0, True)

    def learn_decision_list(self) -> Tuple[DecisionList, List[RuleStep]]:
        t = self.table
        for f in t.F:
            if not any(len(act.args) == 1 for act in legal_actions(f.state)):
                raise ValueError("every training state needs a legal single-argument action")
        active = np.arange(len(t.F))
        rules: List[Rule] = []
        steps: List[RuleStep] = []
        while active.size:
            step = self.learn_rule(active)
            covered = self._covered(step.rule, active)
            if not covered.any():
                step = self._fallback(active)
                covered = self._covered(step.rule, active)
            step.newly_covered = int(covered.sum())
            log.debug("rule %s covers %d of %d", step.rule, step.newly_covered, active.size)
            rules.append(step.rule)
            steps.append(step)
            active = active[~covered]
        return DecisionList(tuple(rules)), steps


# --------------------------------------------------------------------------
# Public entry points
# --------------------------------------------------------------------------


def _all(F) -> np.ndarray:
    return np.arange(len(F))


def beam_search(F: Sequence[TrainingInstance], params: LearnerParams, a: str, H: str = "H1") -> Rule:
    L = Learner(F, params)
    mem = L.beam_search(a, H, _all(F))
    return Rule(L.concept(mem.conj), a)


def learn_rule(F: Sequence[TrainingInstance], params: LearnerParams) -> Rule:
    return Learner(F, params).learn_rule(_all(F)).rule


def learn_decision_list_traced(F0: Sequence[TrainingInstance], params: LearnerParams):
    """The learned list together with one :class:`RuleStep` per rule."""
    if not F0:
        return DecisionList(()), []
    return Learner(F0, params).learn_decision_list()


def learn_decision_list(F0: Sequence[TrainingInstance], params: LearnerParams) -> DecisionList:
    return learn_decision_list_traced(F0, params)[0]


def bootstrap_sample(F: Sequence[TrainingInstance], M: int, rng) -> List[TrainingInstance]:
    return [F[rng.randrange(len(F))] for _ in range(M)]


def bootstrap_groups(F: Sequence[TrainingInstance], groups: Sequence[Sequence[int]], M: int, rng) -> List[TrainingInstance]:
    """M groups drawn with replacement (a group is the instances of one training
    trajectory), concatenated."""
    out: List[TrainingInstance] = []
    for _ in range(M):
        out.extend(F[k] for k in groups[rng.randrange(len(groups))])
    return out


def _bag_member(args) -> DecisionList:
    F, params, M, seed, i, resample, groups = args
    if not resample:
        sample = list(F)
    elif groups is not None:
        sample = bootstrap_groups(F, groups, M, stream(seed, "bag", i))
    else:
        sample = bootstrap_sample(F, M, stream(seed, "bag", i))
    return learn_decision_list(sample, params)


def bag_learn(
    F: Sequence[TrainingInstance],
    params: LearnerParams,
    bag: BagParams,
    seed: int,
    jobs: int = 1,
    resample: bool = True,
    groups: Optional[Sequence[Sequence[int]]] = None,
) -> Ensemble:
    """Z lists, each learned from a bootstrap sample of size M.

    Without ``groups`` the sample is M instances of F.  With ``groups`` (lists
    of indices into F, one per training trajectory) it is M whole groups.
    Member ``i`` samples from its own stream derived from ``seed``, so the
    ensemble does not depend on ``jobs``."""
    if not F:
        raise ValueError("cannot bag an empty training set")
    F = list(F)
    if groups is not None:
        groups = [tuple(g) for g in groups if len(g)]
        if not groups:
            raise ValueError("cannot bag over empty groups")
        if any(k < 0 or k >= len(F) for g in groups for k in g):
            raise ValueError("group index out of range")
    work = [(F, params, bag.M, seed, i, resample, groups) for i in range(bag.Z)]
    if jobs > 1 and bag.Z > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, bag.Z)) as ex:
            members = list(ex.map(_bag_member, work))
    else:
        members = [_bag_member(w) for w in work]
    return Ensemble(tuple(members))


# --------------------------------------------------------------------------
# Training-set files
# --------------------------------------------------------------------------


def instance_to_json(f: TrainingInstance) -> dict:
    opt = sorted(f.optimal, key=lambda a: a.sort_key)
    return {"state": state_to_json(f.state), "optimal": [str(a) for a in opt]}


def instance_from_json(obj: dict, dom: DomainDef) -> TrainingInstance:
    q = state_from_json(obj["state"], dom)
    legal = {str(a): a for a in legal_actions(q)}
    opt = []
    for text in obj["optimal"]:
        act = legal.get(str(GroundAction.parse(text)))
        if act is None:
            raise ValueError(f"optimal action {text} is not legal in its state")
        opt.append(act)
    return TrainingInstance(q, frozenset(opt))


def write_training(
    F: Iterable[TrainingInstance], out: IO[str], groups: Optional[Sequence[Sequence[int]]] = None
) -> None:
    """One JSON object per line; with ``groups``, each line also lists the
    trajectories (group numbers) its state was met on."""
    F = list(F)
    tags: List[List[int]] = [[] for _ in F]
    if groups is not None:
        for g, members in enumerate(groups):
            for k in members:
                tags[k].append(g)
    for f, tag in zip(F, tags):
        obj = instance_to_json(f)
        if groups is not None:
            obj["trajectories"] = tag
        out.write(json.dumps(obj) + "\n")


def read_training_set(lines: Iterable[str], dom: DomainDef) -> Tuple[List[TrainingInstance], Optional[List[List[int]]]]:
    """Instances and, when every line is tagged, the trajectory groups."""
    out = []
    tags: List[Optional[List[int]]] = []
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            out.append(instance_from_json(obj, dom))
            tag = obj.get("trajectories")
            tags.append(None if tag is None else [int(g) for g in tag])
        except (KeyError, TypeError, AttributeError, json.JSONDecodeError) as e:
            raise ValueError(f"line {n}: malformed training instance ({e})") from None
    if not tags or any(t is None for t in tags):
        return out, None
    n_groups = 1 + max((g for t in tags for g in t), default=-1)
    groups: List[List[int]] = [[] for _ in range(n_groups)]
    for k, tag in enumerate(tags):
        for g in tag:
            groups[g].append(k)
    return out, groups


def read_training(lines: Iterable[str], dom: DomainDef) -> List[TrainingInstance]:
    return read_training_set(lines, dom)[0]
