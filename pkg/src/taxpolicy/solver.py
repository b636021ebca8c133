"""Exact finite-horizon solver for small instances.

The reachable state space is enumerated breadth-first, then discounted
goal-reaching values are computed by backward induction:

    V_0(q) = 1 if q is a goal else 0
    V_k(q) = max_a  gamma * sum_o p(o) * V*(next(q, a, o))

where ``V*`` of a goal state is 1 and otherwise ``V_{k-1}``.  Goal states are
absorbing and never expanded; states without legal actions are worth 0.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from typing import IO, Dict, List, Optional, Tuple

import numpy as np

from .pstrips import DomainDef, GroundAction, State, is_goal, least_action, legal_actions, state_to_json, transitions

DEFAULT_NODE_BUDGET = 5_000_000


class SolverResourceError(RuntimeError):
    """The reachable graph would exceed the node budget."""


@dataclass(frozen=True)
class SolverParams:
    horizon: int
    gamma: float = 0.95
    tie_epsilon: float = 1e-9
    node_budget: int = DEFAULT_NODE_BUDGET

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie strictly between 0 and 1")
        if self.tie_epsilon < 0:
            raise ValueError("tie_epsilon must be non-negative")


class StateGraph:
    """States reachable from a root within ``limit`` actions, with outcome edges.

    State ``i`` is expanded iff it is not a goal and ``depth[i] < limit``.
    Per state, ``actions[i]`` lists legal actions in canonical order and
    ``edges[i][j]`` the merged successor distribution of ``actions[i][j]``.
    """

    def __init__(self, root: State, limit: int):
        self.root = root
        self.limit = limit
        self.states: List[State] = []
        self.index: Dict[State, int] = {}
        self.depth: List[int] = []
        self.goal: List[bool] = []
        self.actions: List[Tuple[GroundAction, ...]] = []
        self.edges: List[Tuple[Tuple[Tuple[float, int], ...], ...]] = []

    def __len__(self) -> int:
        return len(self.states)

    def __contains__(self, q: State) -> bool:
        return q in self.index

    def expanded(self, i: int) -> bool:
        return not self.goal[i] and self.depth[i] < self.limit

    def edge_count(self) -> int:
        return sum(len(e) for e in self.edges)


def reachable(q0: State, dom: Optional[DomainDef] = None, h: int = 1, node_budget: int = DEFAULT_NODE_BUDGET) -> StateGraph:
    """Breadth-first enumeration; goal states are not expanded.

    Raises :class:`SolverResourceError` once states * (h + 1) exceeds the budget."""
    if h < 0:
        raise ValueError("h must be non-negative")
    dom = dom or q0.domain
    g = StateGraph(q0, h)

    def add(q: State, d: int) -> int:
        i = g.index.get(q)
        if i is None:
            if (len(g.states) + 1) * (h + 1) > node_budget:
                raise SolverResourceError(
                    f"reachable graph exceeds the node budget of {node_budget} state-step pairs"
                )
            i = len(g.states)
            g.index[q] = i
            g.states.append(q)
            g.depth.append(d)
            g.goal.append(is_goal(q))
            g.actions.append(())
            g.edges.append(())
            queue.append(i)
        return i

    queue: deque = deque()
    add(q0, 0)
    while queue:
        i = queue.popleft()
        if not g.expanded(i):
            continue
        q = g.states[i]
        acts = tuple(legal_actions(q, dom))
        edges = []
        for a in acts:
            edges.append(tuple((p, add(nq, g.depth[i] + 1)) for p, nq in transitions(q, a, dom)))
        g.actions[i] = acts
        g.edges[i] = tuple(edges)
    return g


class ValueTable:
    """V_k for every graph state and k = 0..steps.

    ``V[k][i]`` is exact when ``depth[i] + k <= limit`` (every state the
    recursion touches was expanded); other entries are lower bounds and are
    refused by :meth:`value`.
    """

    def __init__(self, graph: StateGraph, params: SolverParams, V: np.ndarray, Q: List[np.ndarray], sa_start: np.ndarray):
        self.graph = graph
        self.params = params
        self.V = V
        self._Q = Q
        self._sa_start = sa_start

    @property
    def steps(self) -> int:
        return self.V.shape[0] - 1

    def _locate(self, q: State, k: int) -> int:
        i = self.graph.index.get(q)
        if i is None:
            raise KeyError("state is not in the solved graph")
        if k < 0 or k > self.steps:
            raise KeyError(f"no values for {k} steps remaining")
        if not self.graph.goal[i] and self.graph.depth[i] + k > self.graph.limit:
            raise KeyError(f"the value with {k} steps remaining is not exact for this state")
        return i

    def value(self, q: State, k: int) -> float:
        return float(self.V[k, self._locate(q, k)])

    def q_values(self, q: State, k: int) -> List[Tuple[GroundAction, float]]:
        """One-step backed-up values of the legal actions with ``k`` steps remaining."""
        if k < 1:
            raise KeyError("action values need at least one step remaining")
        i = self._locate(q, k)
        lo = self._sa_start[i]
        acts = self.graph.actions[i]
        return [(a, float(self._Q[k][lo + j])) for j, a in enumerate(acts)]


def value_iterate(graph: StateGraph, params: SolverParams, steps: Optional[int] = None) -> ValueTable:
    steps = graph.limit if steps is None else steps
    n = len(graph)
    counts = np.array([len(a) for a in graph.actions], dtype=np.int64)
    sa_start = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=sa_start[1:])
    n_sa = int(sa_start[-1])
    out_sa, out_p, out_next = [], [], []
    sa = 0
    for i in range(n):
        for dist in graph.edges[i]:
            for p, j in dist:
                out_sa.append(sa)
                out_p.append(p)
                out_next.append(j)
            sa += 1
    out_sa = np.array(out_sa, dtype=np.int64)
    out_p = np.array(out_p, dtype=np.float64)
    out_next = np.array(out_next, dtype=np.int64)
    goal = np.array(graph.goal, dtype=bool)
    has_act = counts > 0
    starts = sa_start[:-1][has_act]

    V = np.zeros((steps + 1, n))
    V[0, goal] = 1.0
    Q: List[np.ndarray] = [np.zeros(0)]
    for k in range(1, steps + 1):
        star = np.where(goal, 1.0, V[k - 1])
        q = params.gamma * np.bincount(out_sa, weights=out_p * star[out_next], minlength=n_sa)
        Q.append(q)
        vk = np.zeros(n)
        if n_sa:
            vk[has_act] = np.maximum.reduceat(q, starts)
        vk[goal] = 1.0
        V[k] = vk
    return ValueTable(graph, params, V, Q, sa_start)


def solve(q0: State, params: SolverParams, dom: Optional[DomainDef] = None, lookahead: int = 0) -> ValueTable:
    """Graph to depth ``horizon + lookahead`` and its value table.

    With ``lookahead = horizon`` the table answers horizon-``h`` queries exactly
    for every state within ``h`` steps of ``q0``, so one solve serves a whole
    trajectory."""
    g = reachable(q0, dom, params.horizon + lookahead, params.node_budget)
    return value_iterate(g, params, params.horizon)


def optimal_actions(q: State, table: ValueTable, params: Optional[SolverParams] = None) -> frozenset:
    """All legal actions whose backed-up value is within tie_epsilon of the best."""
    params = params or table.params
    if is_goal(q):
        raise ValueError("optimal actions are not defined at goal states")
    qs = table.q_values(q, params.horizon)
    if not qs:
        return frozenset()
    best = max(v for _, v in qs)
    return frozenset(a for a, v in qs if v >= best - params.tie_epsilon)


class SolverPolicy:
    """Acts by re-solving: the least optimal action at each state."""

    def __init__(self, params: SolverParams, dom: Optional[DomainDef] = None):
        self.params = params
        self.dom = dom
        self._cache: Dict[State, Optional[GroundAction]] = {}

    def act(self, q: State) -> Optional[GroundAction]:
        if q not in self._cache:
            table = solve(q, self.params, self.dom)
            self._cache[q] = least_action(optimal_actions(q, table, self.params))
        return self._cache[q]


def dump_values(table: ValueTable, out: IO[str], k: Optional[int] = None) -> None:
    """JSON lines of (state, k, value, argmax set) for the exact non-goal entries."""
    g = table.graph
    ks = range(1, table.steps + 1) if k is None else [k]
    for kk in ks:
        for i, q in enumerate(g.states):
            if g.goal[i] or g.depth[i] + kk > g.limit:
                continue
            qs = table.q_values(q, kk)
            best = max((v for _, v in qs), default=0.0)
            arg = sorted((a for a, v in qs if v >= best - table.params.tie_epsilon), key=lambda a: a.sort_key)
            rec = {"state": state_to_json(q), "k": kk, "value": float(table.V[kk, i]), "argmax": [str(a) for a in arg]}
            out.write(json.dumps(rec) + "\n")
