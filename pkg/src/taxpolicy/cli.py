"""Command-line front end.

Exit codes: 0 ok, 2 bad flags or config, 3 domain parse error, 4 solver
resource error, 5 empty training set, 6 policy parse error.  Diagnostics go to
standard error; machine-readable output to standard output or ``-o`` files.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from typing import List, Optional, Sequence, Tuple

from . import __version__
from .domains import BUILTIN_NAMES, ProblemSize, domain_file_text
from .harness import (
    BAG_UNITS,
    CSV_HEADER,
    EvalConfig,
    TrainConfig,
    evaluate,
    generate_training,
    load_domain,
    parse_config,
    result_json,
    run_experiment,
)
from .learner import (
    BagParams,
    LearnerParams,
    bag_learn,
    learn_decision_list,
    read_training_set,
    write_training,
)
from .policy import format_policy, parse_policy
from .pstrips import DomainError, format_domain, format_state, parse_domain, parse_states
from .sexpr import ParseError
from .solver import SolverResourceError

log = logging.getLogger("taxpolicy")

EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_SOLVER = 4
EXIT_EMPTY = 5
EXIT_POLICY = 6


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _derive(text: str) -> Tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError("expected NAME=CONCEPT")
    name, concept = text.split("=", 1)
    return name.strip(), concept.strip()


def _domain(name: str, derived: Sequence[Tuple[str, str]] = ()):
    try:
        return load_domain(name, derived)
    except OSError as e:
        raise CliError(f"cannot read domain {name!r}: {e}", EXIT_DOMAIN) from None
    except (ParseError, DomainError) as e:
        raise CliError(f"domain error: {e}", EXIT_DOMAIN) from None


def _size(text: str, domain: str) -> str:
    try:
        if domain in BUILTIN_NAMES:
            ProblemSize.parse(text).check(domain)
        else:
            raise ValueError("problem generators exist only for built-in domains")
    except ValueError as e:
        raise CliError(f"bad --size: {e}", EXIT_USAGE) from None
    return text


def _write_text(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def meta_path(train_path: str) -> str:
    return train_path + ".meta.json"


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_domains(args) -> int:
    if args.name is None:
        for name in BUILTIN_NAMES:
            print(name)
        return 0
    if args.name not in BUILTIN_NAMES:
        raise CliError(f"unknown built-in domain {args.name!r}", EXIT_USAGE)
    sys.stdout.write(domain_file_text(args.name))
    return 0


def cmd_gen_data(args) -> int:
    dom = _domain(args.domain, args.derive)
    cfg = TrainConfig(
        args.domain, _size(args.size, args.domain), args.trajectories, args.horizon, args.seed,
        args.gamma, args.node_budget,
    )
    ts = generate_training(cfg, dom, args.jobs)
    with open(args.output, "w", encoding="utf-8") as fh:
        write_training(ts.instances, fh, ts.groups)
    meta = {
        "domain": args.domain,
        "size": args.size,
        "trajectories": args.trajectories,
        "horizon": args.horizon,
        "seed": args.seed,
        "gamma": args.gamma,
        "derived": [list(d) for d in args.derive],
        "instances": len(ts.instances),
        "recorded": ts.recorded,
        "skipped": ts.skipped,
        "already_goal": ts.already_goal,
    }
    with open(meta_path(args.output), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    log.info("wrote %d instances (%d initial states skipped)", len(ts.instances), ts.skipped)
    return 0


def _training_domain(args):
    domain, derived = args.domain, list(args.derive)
    mp = meta_path(args.train)
    if os.path.exists(mp):
        with open(mp, encoding="utf-8") as fh:
            meta = json.load(fh)
        domain = domain or meta.get("domain")
        if not derived:
            derived = [tuple(d) for d in meta.get("derived", [])]
    if not domain:
        raise CliError("--domain is required when the training file has no metadata sidecar", EXIT_USAGE)
    return _domain(domain, derived)


def cmd_learn(args) -> int:
    if args.sample is not None and args.bag is None:
        raise CliError("--sample needs --bag", EXIT_USAGE)
    dom = _training_domain(args)
    try:
        with open(args.train, encoding="utf-8") as fh:
            F, groups = read_training_set(fh, dom)
    except OSError as e:
        raise CliError(f"cannot read training file: {e}", EXIT_USAGE) from None
    except (ValueError, DomainError) as e:
        raise CliError(f"bad training file: {e}", EXIT_USAGE) from None
    if not F:
        raise CliError("the training set is empty", EXIT_EMPTY)
    params = LearnerParams(args.depth, args.width, args.beam)
    if args.bag is not None:
        if args.bag_unit == "trajectory" and groups is None:
            raise CliError("the training file has no trajectory tags; use --bag-unit instance", EXIT_USAGE)
        if args.bag_unit == "instance":
            groups = None
        pol = bag_learn(F, params, BagParams(args.bag, args.sample or 50), args.seed, jobs=args.jobs, groups=groups)
    else:
        pol = learn_decision_list(F, params)
    _write_text(args.output, format_policy(pol))
    return 0


def cmd_eval(args) -> int:
    dom = _domain(args.domain, args.derive)
    try:
        with open(args.policy, encoding="utf-8") as fh:
            pol = parse_policy(fh.read(), dom)
    except OSError as e:
        raise CliError(f"cannot read policy: {e}", EXIT_POLICY) from None
    except ParseError as e:
        raise CliError(f"policy parse error: {e}", EXIT_POLICY) from None
    cfg = EvalConfig(args.domain, _size(args.size, args.domain), args.episodes, args.horizon, args.seed)
    res = evaluate(pol, cfg, dom, args.jobs)
    out = {"phi": res.phi, "psi": res.psi}
    if args.verbose:
        out["episodes"] = [{"success": ok, "steps": n} for ok, n in res.episodes]
    print(json.dumps(out))
    return 0


def cmd_experiment(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            exp = parse_config(fh.read())
    except OSError as e:
        raise CliError(f"cannot read config: {e}", EXIT_USAGE) from None
    except ValueError as e:
        raise CliError(str(e), EXIT_USAGE) from None
    overrides = {k: getattr(args, k) for k in ("trials", "episodes", "seed") if getattr(args, k) is not None}
    if overrides:
        exp = replace(exp, **overrides)
    _domain(exp.domain, exp.derived)
    row = run_experiment(exp, args.jobs, args.out_dir)
    if args.csv:
        sys.stdout.write(CSV_HEADER + row.csv_row())
    else:
        sys.stdout.write(result_json(row))
    return 0


def _detect_kind(text: str) -> str:
    lines = [ln.strip() for ln in text.splitlines()]
    stripped = "\n".join(ln for ln in lines if ln and not ln.startswith(";"))
    if stripped.startswith("{"):
        return "training"
    head = stripped[:40]
    for kind, token in (("domain", "(domain"), ("policy", "(policy"), ("policy", "(ensemble"), ("state", "(state")):
        if head.startswith(token):
            return kind
    raise CliError("cannot tell what kind of file this is; pass --kind", EXIT_USAGE)


def cmd_inspect(args) -> int:
    with open(args.path, encoding="utf-8") as fh:
        text = fh.read()
    kind = args.kind or _detect_kind(text)
    if kind == "domain":
        try:
            dom = parse_domain(text)
        except (ParseError, DomainError) as e:
            raise CliError(f"domain error: {e}", EXIT_DOMAIN) from None
        sys.stdout.write(format_domain(dom))
        return 0
    if not args.domain:
        raise CliError(f"--domain is required to inspect a {kind} file", EXIT_USAGE)
    dom = _domain(args.domain, args.derive)
    if kind == "policy":
        try:
            pol = parse_policy(text, dom)
        except ParseError as e:
            raise CliError(f"policy parse error: {e}", EXIT_POLICY) from None
        sys.stdout.write(format_policy(pol))
    elif kind == "training":
        try:
            F, groups = read_training_set(text.splitlines(), dom)
        except (ValueError, DomainError) as e:
            raise CliError(f"bad training file: {e}", EXIT_USAGE) from None
        write_training(F, sys.stdout, groups)
    else:
        try:
            states = parse_states(text, dom)
        except (ParseError, DomainError) as e:
            raise CliError(f"state error: {e}", EXIT_DOMAIN) from None
        for q in states:
            sys.stdout.write(format_state(q) + "\n")
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="taxpolicy", description="Learn taxonomic decision-list policies for relational MDPs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    def jobs(sp):
        sp.add_argument("--jobs", type=_positive, default=1, help="worker processes (results do not depend on it)")

    def derive(sp):
        sp.add_argument("--derive", type=_derive, action="append", default=[], metavar="NAME=CONCEPT",
                        help="register a derived concept usable as a primitive class")

    sp = sub.add_parser("domains", help="list built-in domains or print one as a domain file")
    sp.add_argument("name", nargs="?")
    sp.set_defaults(func=cmd_domains)

    sp = sub.add_parser("gen-data", help="generate training instances along optimal trajectories")
    sp.add_argument("--domain", required=True, help="built-in name or domain file")
    sp.add_argument("--size", required=True, help="blocks, or cities,cars,trucks,packages (ranges like 1-2 or <3)")
    sp.add_argument("--trajectories", type=_positive, required=True)
    sp.add_argument("--horizon", type=_positive, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--gamma", type=float, default=0.95)
    sp.add_argument("--node-budget", type=_positive, default=5_000_000)
    sp.add_argument("-o", "--output", required=True)
    derive(sp)
    jobs(sp)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("learn", help="learn a decision list or a bagged ensemble")
    sp.add_argument("--train", required=True)
    sp.add_argument("--domain", help="defaults to the training file's metadata")
    sp.add_argument("--depth", type=_positive, default=3)
    sp.add_argument("--width", type=_positive, default=12)
    sp.add_argument("--beam", type=_positive, default=5)
    sp.add_argument("--bag", type=_positive, help="ensemble size Z")
    sp.add_argument("--sample", type=_positive, help="bootstrap sample size M per ensemble member")
    sp.add_argument("--bag-unit", choices=BAG_UNITS, default="trajectory",
                    help="draw whole training trajectories (default) or single instances")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("-o", "--output", required=True)
    derive(sp)
    jobs(sp)
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("eval", help="estimate success rate and successful-episode length")
    sp.add_argument("--policy", required=True)
    sp.add_argument("--domain", required=True)
    sp.add_argument("--size", required=True)
    sp.add_argument("--episodes", type=_positive, default=1000)
    sp.add_argument("--horizon", type=_positive, required=True)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("-v", "--verbose", action="store_true", help="include per-episode results")
    derive(sp)
    jobs(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("experiment", help="run a multi-trial experiment from a key=value config file")
    sp.add_argument("config")
    sp.add_argument("--trials", type=_positive)
    sp.add_argument("--episodes", type=_positive)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out-dir", help="keep per-trial training sets and policies here")
    sp.add_argument("--csv", action="store_true", help="emit a CSV row instead of JSON")
    jobs(sp)
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("inspect", help="parse a domain, policy, state or training file and print it canonically")
    sp.add_argument("path")
    sp.add_argument("--kind", choices=["domain", "policy", "training", "state"])
    sp.add_argument("--domain")
    derive(sp)
    sp.set_defaults(func=cmd_inspect)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as e:
        print(f"taxpolicy: {e}", file=sys.stderr)
        return e.code
    except SolverResourceError as e:
        print(f"taxpolicy: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as e:
        print(f"taxpolicy: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
