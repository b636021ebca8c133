"""Training data along optimal trajectories, policy evaluation, and multi-trial experiments.

Randomness: every component draws from a named stream of the master seed
(see :mod:`taxpolicy.seeds`), indexed by trajectory, episode or trial, so
results do not depend on worker count or execution order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .domains import BUILTIN_NAMES, GeneratorSpec, ProblemSize, builtin_domain, sample_problem
from .learner import BagParams, LearnerParams, bag_learn, learn_decision_list, write_training
from .policy import TrainingInstance, format_policy
from .pstrips import DomainDef, State, is_goal, parse_domain, sample_transition
from .seeds import derive_seed, stream
from .solver import DEFAULT_NODE_BUDGET, SolverParams, optimal_actions, solve
from .taxonomy import register_derived

log = logging.getLogger(__name__)


def load_domain(name: str, derived: Sequence[Tuple[str, str]] = ()) -> DomainDef:
    """A built-in domain by name, or a domain file by path, with derived concepts added."""
    if name in BUILTIN_NAMES:
        dom = builtin_domain(name)
    else:
        with open(name, encoding="utf-8") as fh:
            dom = parse_domain(fh.read())
    for cname, text in derived:
        dom = register_derived(dom, cname, text)
    return dom


def _map(fn: Callable, work: list, jobs: int) -> list:
    """Ordered map, in worker processes when ``jobs > 1``."""
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(work))) as ex:
            return list(ex.map(fn, work, chunksize=max(1, len(work) // (4 * jobs))))
    return [fn(w) for w in work]


# --------------------------------------------------------------------------
# Training data
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    domain: str
    size: str
    trajectories: int
    horizon: int
    seed: int
    gamma: float = 0.95
    node_budget: int = DEFAULT_NODE_BUDGET

    def __post_init__(self):
        if self.trajectories < 1:
            raise ValueError("trajectory count must be at least 1")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")


@dataclass
class TrainingSet:
    instances: List[TrainingInstance]
    skipped: int = 0  # initial states that cannot reach the goal within the horizon
    already_goal: int = 0
    recorded: int = 0  # instances before merging repeated states
    # per trajectory, indices into ``instances`` of the states it visited
    groups: List[List[int]] = field(default_factory=list)


def _trajectory(args) -> Tuple[str, List[TrainingInstance]]:
    """One sampled problem and the optimal-action instances along a simulated trajectory."""
    cfg, dom, i = args
    rng = stream(cfg.seed, "trajectory", i)
    q = sample_problem(GeneratorSpec(cfg.domain, ProblemSize.parse(cfg.size)), rng, dom)
    if is_goal(q):
        return "goal", []
    params = SolverParams(cfg.horizon, cfg.gamma, node_budget=cfg.node_budget)
    # one graph deep enough that every state of the trajectory has exact
    # horizon-h values; the alpha sets equal those of re-solving at each step
    table = solve(q, params, dom, lookahead=cfg.horizon)
    if table.value(q, cfg.horizon) <= 0.0:
        return "skipped", []
    out: List[TrainingInstance] = []
    for _ in range(cfg.horizon):
        if is_goal(q) or table.value(q, cfg.horizon) <= 0.0:
            break
        alpha = optimal_actions(q, table, params)
        out.append(TrainingInstance(q, alpha))
        act = rng.choice(sorted(alpha, key=lambda a: a.sort_key))
        q = sample_transition(q, act, rng, dom)
    return "ok", out


def generate_training(cfg: TrainConfig, dom: Optional[DomainDef] = None, jobs: int = 1) -> TrainingSet:
    """Instances <q, alpha> along optimal trajectories from ``cfg.trajectories`` sampled problems.

    A state met on several trajectories is kept once (its alpha is the same)."""
    dom = dom or load_domain(cfg.domain)
    results = _map(_trajectory, [(cfg, dom, i) for i in range(cfg.trajectories)], jobs)
    index: Dict[State, int] = {}
    ts = TrainingSet([])
    for status, insts in results:
        if status == "skipped":
            ts.skipped += 1
        elif status == "goal":
            ts.already_goal += 1
        ts.recorded += len(insts)
        group: List[int] = []
        for f in insts:
            if f.state not in index:
                index[f.state] = len(ts.instances)
                ts.instances.append(f)
            if index[f.state] not in group:
                group.append(index[f.state])
        ts.groups.append(group)
    if ts.skipped:
        log.info("skipped %d of %d initial states with no goal within %d steps", ts.skipped, cfg.trajectories, cfg.horizon)
    return ts


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalConfig:
    domain: str
    size: str
    episodes: int = 1000
    horizon: int = 80
    seed: int = 0

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episode count must be at least 1")
        if self.horizon < 1:
            raise ValueError("evaluation horizon must be at least 1")


def run_episode(pol, q0: State, e: int, rng) -> Tuple[bool, int]:
    """Follow ``pol`` from ``q0`` for at most ``e`` actions; (reached goal, actions taken)."""
    if e < 1:
        raise ValueError("evaluation horizon must be at least 1")
    q = q0
    if is_goal(q):
        return True, 0
    for step in range(1, e + 1):
        act = pol.act(q)
        if act is None:
            return False, step - 1
        q = sample_transition(q, act, rng)
        if is_goal(q):
            return True, step
    return False, e


@dataclass
class EvalResult:
    phi: float
    psi: Optional[float]
    episodes: List[Tuple[bool, int]] = field(default_factory=list)


def draw_test_states(cfg: EvalConfig, dom: Optional[DomainDef] = None, seed: Optional[int] = None) -> List[State]:
    """The evaluation problems: state ``i`` comes from stream (seed, "test", i)."""
    dom = dom or load_domain(cfg.domain)
    seed = cfg.seed if seed is None else seed
    spec = GeneratorSpec(cfg.domain, ProblemSize.parse(cfg.size))
    return [sample_problem(spec, stream(seed, "test", i), dom) for i in range(cfg.episodes)]


def _episode_chunk(args) -> List[Tuple[bool, int]]:
    pol, cfg, dom, lo, hi, tests = args
    out = []
    for i in range(lo, hi):
        if tests is None:
            q0 = sample_problem(GeneratorSpec(cfg.domain, ProblemSize.parse(cfg.size)), stream(cfg.seed, "test", i), dom)
        else:
            q0 = tests[i - lo]
        out.append(run_episode(pol, q0, cfg.horizon, stream(cfg.seed, "episode", i)))
    return out


def summarize(episodes: Sequence[Tuple[bool, int]]) -> EvalResult:
    wins = [steps for ok, steps in episodes if ok]
    phi = len(wins) / len(episodes) if episodes else 0.0
    psi = sum(wins) / len(wins) if wins else None
    return EvalResult(phi, psi, list(episodes))


def evaluate(
    pol, cfg: EvalConfig, dom: Optional[DomainDef] = None, jobs: int = 1, tests: Optional[Sequence[State]] = None
) -> EvalResult:
    """phi = fraction of episodes reaching the goal; psi = mean length of those (None if none)."""
    dom = dom or load_domain(cfg.domain)
    if tests is not None and len(tests) != cfg.episodes:
        raise ValueError("need one test state per episode")
    n = cfg.episodes
    chunks = max(1, min(n, 4 * jobs)) if jobs > 1 else 1
    bounds = [(n * c // chunks, n * (c + 1) // chunks) for c in range(chunks)]
    work = [(pol, cfg, dom, lo, hi, None if tests is None else list(tests[lo:hi])) for lo, hi in bounds]
    parts = _map(_episode_chunk, work, jobs)
    return summarize([ep for part in parts for ep in part])


# --------------------------------------------------------------------------
# Experiments
# --------------------------------------------------------------------------


BAG_UNITS = ("trajectory", "instance")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one row of results depends on."""

    domain: str
    train_size: str
    trajectories: int
    train_horizon: int
    test_size: str
    eval_horizon: int
    depth: int = 3
    width: int = 12
    beam: int = 5
    bag_size: int = 0  # 0 means a single decision list
    bag_sample: int = 50
    bag_unit: str = "trajectory"  # what a bootstrap sample draws: "trajectory" or "instance"
    episodes: int = 1000
    trials: int = 40
    seed: int = 0
    gamma: float = 0.95
    fixed_tests: bool = False
    label: str = ""
    derived: Tuple[Tuple[str, str], ...] = ()
    expected_phi: Optional[float] = None
    expected_psi: Optional[float] = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.bag_size < 0:
            raise ValueError("bag_size must be non-negative")
        if self.bag_unit not in BAG_UNITS:
            raise ValueError(f"bag_unit must be one of {', '.join(BAG_UNITS)}")

    @property
    def learner(self) -> LearnerParams:
        return LearnerParams(self.depth, self.width, self.beam)

    @property
    def bag(self) -> Optional[BagParams]:
        return BagParams(self.bag_size, self.bag_sample) if self.bag_size else None

    def train_config(self, trial: int) -> TrainConfig:
        return TrainConfig(
            self.domain, self.train_size, self.trajectories, self.train_horizon,
            derive_seed(self.seed, "trial", trial, "train"), self.gamma,
        )

    def eval_config(self, trial: int) -> EvalConfig:
        return EvalConfig(
            self.domain, self.test_size, self.episodes, self.eval_horizon, derive_seed(self.seed, "trial", trial, "eval")
        )


@dataclass
class ResultRow:
    phi: float
    psi: Optional[float]
    trials: int
    per_trial: List[dict]
    label: str = ""
    domain: str = ""

    def to_json(self) -> dict:
        return {"phi": self.phi, "psi": self.psi, "trials": self.trials, "per_trial": self.per_trial}

    def csv_row(self) -> str:
        """domain,setting,phi,psi,trials -- one cell of the results table."""
        buf = io.StringIO()
        psi = "" if self.psi is None else f"{self.psi:.1f}"
        csv.writer(buf, lineterminator="\n").writerow([self.domain, self.label, f"{self.phi:.3f}", psi, self.trials])
        return buf.getvalue()


CSV_HEADER = "domain,setting,phi,psi,trials\n"


def learn_policy(F: Sequence[TrainingInstance], exp: ExperimentConfig, seed: int, jobs: int = 1, groups=None):
    if exp.bag is None:
        return learn_decision_list(F, exp.learner)
    if exp.bag_unit == "trajectory":
        if groups is None:
            raise ValueError("bagging over trajectories needs the trajectory groups")
        return bag_learn(F, exp.learner, exp.bag, seed, jobs=jobs, groups=groups)
    return bag_learn(F, exp.learner, exp.bag, seed, jobs=jobs)


def run_trial(exp: ExperimentConfig, trial: int, dom: Optional[DomainDef] = None, jobs: int = 1, out_dir: Optional[str] = None) -> dict:
    dom = dom or load_domain(exp.domain, exp.derived)
    ts = generate_training(exp.train_config(trial), dom, jobs)
    if not ts.instances:
        raise ValueError("the training set is empty")
    pol = learn_policy(ts.instances, exp, derive_seed(exp.seed, "trial", trial, "learn"), jobs, ts.groups)
    ecfg = exp.eval_config(trial)
    tests = None
    if exp.fixed_tests:
        tests = draw_test_states(ecfg, dom, derive_seed(exp.seed, "fixed-tests"))
    res = evaluate(pol, ecfg, dom, jobs, tests)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, f"trial{trial}-train.jsonl"), "w", encoding="utf-8") as fh:
            write_training(ts.instances, fh, ts.groups)
        with open(os.path.join(out_dir, f"trial{trial}-policy.txt"), "w", encoding="utf-8") as fh:
            fh.write(format_policy(pol))
    return {
        "trial": trial,
        "phi": res.phi,
        "psi": res.psi,
        "training_instances": len(ts.instances),
        "skipped": ts.skipped,
        "policy_size": len(pol) if exp.bag is None else sum(len(m) for m in pol.members),
    }


def aggregate(per_trial: List[dict], exp: ExperimentConfig) -> ResultRow:
    phis = [t["phi"] for t in per_trial]
    psis = [t["psi"] for t in per_trial if t["psi"] is not None]
    return ResultRow(
        sum(phis) / len(phis),
        sum(psis) / len(psis) if psis else None,
        len(per_trial),
        per_trial,
        exp.label,
        exp.domain,
    )


def run_experiment(exp: ExperimentConfig, jobs: int = 1, out_dir: Optional[str] = None) -> ResultRow:
    """Average phi and psi over independent trials (fresh data, policy and tests each)."""
    dom = load_domain(exp.domain, exp.derived)
    per_trial = []
    for k in range(exp.trials):
        row = run_trial(exp, k, dom, jobs, out_dir)
        log.info("trial %d: phi=%.3f psi=%s", k, row["phi"], row["psi"])
        per_trial.append(row)
    return aggregate(per_trial, exp)


# --------------------------------------------------------------------------
# Config files: flat key = value, '#' comments
# --------------------------------------------------------------------------


def parse_config(text: str) -> ExperimentConfig:
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    values: Dict[str, object] = {}
    derived: List[Tuple[str, str]] = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key.startswith("derived."):
            derived.append((key[len("derived."):], val))
            continue
        if key not in types or key == "derived":
            raise ValueError(f"config line {n}: unknown key {key!r}")
        values[key] = _convert(key, val, str(types[key]), n)
    values["derived"] = tuple(derived)
    try:
        return ExperimentConfig(**values)
    except TypeError as e:
        raise ValueError(f"incomplete config: {e}") from None


def _convert(key: str, val: str, typ: str, n: int):
    try:
        if typ == "int":
            return int(val)
        if typ == "float":
            return float(val)
        if typ == "bool":
            if val.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(val)
            return val.lower() in ("true", "1", "yes")
        if typ.startswith("Optional[float]"):
            return float(val)
        return val
    except ValueError:
        raise ValueError(f"config line {n}: bad value {val!r} for {key}") from None


def format_config(exp: ExperimentConfig) -> str:
    lines = []
    for k, v in asdict(exp).items():
        if k == "derived":
            lines.extend(f"derived.{name} = {text}" for name, text in v)
        elif v is not None:
            lines.append(f"{k} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"


def result_json(row: ResultRow) -> str:
    return json.dumps(row.to_json(), indent=2) + "\n"
