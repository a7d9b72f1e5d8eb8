"""Command-line harness.

Every subcommand reads its parameters from flags, optionally seeded from a
JSON file given with ``--config`` (keys are flag names with dashes
replaced by underscores; explicit flags win).  Numbers accept ``a/b``.

Exit codes: 0 when a verdict or result was produced, 2 when the run was
inconclusive or hit a budget, 1 on usage or parse errors.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .coarse import CoarseConfig, coarse_test
from .core import BudgetExceeded, FiniteDistribution, MultilinearPolynomial, format_number, parse_number, rademacher
from .dfkolab import calibrate_tail_theorem, verify_tail_theorem
from .exactdist import DiscreteRV, output_distribution, wasserstein1
from .hardness import NO, YES, HardInstanceEnsemble, HardOracle, transcript_experiment
from .momest import BatchOracle, ExactMomentOracle, LabeledSampleBatch, NoiseSpec, SampleOracle, draw_labeled_samples, estimate_clean_moments
from .msg import GridSpec, compute_msg, find_msg_witness
from .nets import construct_poly_nets, construct_rv_nets, save_net
from .report import INCONCLUSIVE, jsonable
from .sharp import SharpConfig, desk_config, test_sparsity

EXIT_OK, EXIT_USAGE, EXIT_INCONCLUSIVE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# argument parsing helpers


_TERM = re.compile(r"^\s*([+-]?)\s*([0-9./]*)\s*\*?\s*((?:x\d+\s*\*?\s*)*)$")


def parse_expression(text: str, degree: int | None = None) -> MultilinearPolynomial:
    """Parse ``"1/2*x1*x2 - x3 + 2"`` into an exact polynomial."""
    text = text.replace("-", "+-").replace("*+-", "*-")
    terms = []
    for raw in text.split("+"):
        raw = raw.strip()
        if not raw:
            continue
        m = _TERM.match(raw)
        if not m:
            raise ValueError(f"cannot parse term {raw!r}")
        sign, coef, mono = m.groups()
        idx = [int(v) for v in re.findall(r"x(\d+)", mono)]
        if not coef and not idx:
            raise ValueError(f"empty term {raw!r}")
        c = parse_number(coef) if coef else Fraction(1)
        terms.append((idx, -c if sign == "-" else c))
    return MultilinearPolynomial(terms, degree)


def load_poly(ref: str, degree: int | None = None) -> MultilinearPolynomial:
    path = Path(ref)
    if path.is_file():
        return MultilinearPolynomial.from_text(path.read_text(), degree)
    return parse_expression(ref, degree)


def load_dist(ref: str) -> FiniteDistribution:
    if ref == "rademacher":
        return rademacher()
    path = Path(ref)
    if path.is_file():
        return FiniteDistribution.from_text(path.read_text(), name=path.stem)
    atoms = [pair.split(":") for pair in ref.split(",")]
    from .core import validate_distribution

    return validate_distribution(atoms)


def load_noise(ref: str | None) -> NoiseSpec:
    if ref is None or ref == "none":
        return NoiseSpec()
    path = Path(ref)
    if path.is_file():
        return NoiseSpec.from_dict(json.loads(path.read_text()))
    if ref.strip().startswith("{"):
        return NoiseSpec.from_dict(json.loads(ref))
    kind, _, arg = ref.partition(":")
    if kind == "gaussian":
        return NoiseSpec.gaussian(0, parse_number(arg or "1"))
    raise ValueError(f"unknown noise reference {ref!r}")


def num(text) -> Fraction | float:
    return parse_number(str(text))


def _emit(args, text: str) -> None:
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _dump(args, obj) -> None:
    _emit(args, json.dumps(jsonable(obj), indent=1, sort_keys=True))


def _need_seed(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for this subcommand")
    return int(args.seed)


def _trial_seeds(seed: int, trials: int) -> list:
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in np.random.SeedSequence(seed).spawn(trials)]


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    _require(args, "poly")
    dist, noise = load_dist(args.dist), load_noise(args.noise)
    batch = draw_labeled_samples(load_poly(args.poly), dist, noise, int(args.m), _need_seed(args))
    _emit(args, batch.to_csv())
    return EXIT_OK


def _oracle(args, dist, noise, seed=None):
    if getattr(args, "samples", None):
        return BatchOracle(LabeledSampleBatch.from_csv(Path(args.samples).read_text()), dist)
    _require(args, "poly")
    d = getattr(args, "d", None)
    p = load_poly(args.poly, None if d is None else int(d))
    if args.exact:
        return ExactMomentOracle(p, dist)
    return SampleOracle(p, dist, noise, _need_seed(args) if seed is None else seed)


def cmd_estimate(args) -> int:
    _require(args, "order")
    dist, noise = load_dist(args.dist), load_noise(args.noise)
    oracle = _oracle(args, dist, noise)
    try:
        est = estimate_clean_moments(
            oracle, int(args.order), float(num(args.tau)), float(num(args.delta)), noise, float(num(args.K)),
            mode=args.mode, d=args.d, max_samples=int(args.max_samples),
        )
    except BudgetExceeded as exc:
        _dump(args, {"error": str(exc), "owner": exc.owner})
        return EXIT_INCONCLUSIVE
    _dump(args, est.to_dict())
    return EXIT_OK


def _run_trials(args, dist, noise, run) -> int:
    if args.exact or args.samples:
        report = run(_oracle(args, dist, noise))
        _emit(args, report.to_json(indent=1))
        return EXIT_INCONCLUSIVE if report.verdict == INCONCLUSIVE else EXIT_OK
    seeds = _trial_seeds(_need_seed(args), int(args.trials)) if int(args.trials) > 1 else [_need_seed(args)]
    reports = [run(_oracle(args, dist, noise, seed=s)) for s in seeds]
    if len(reports) == 1:
        _emit(args, reports[0].to_json(indent=1))
    else:
        verdicts = [r.verdict for r in reports]
        _dump(args, {
            "trials": len(reports),
            "accept_rate": sum(r.accepted for r in reports) / len(reports),
            "verdict_counts": {v: verdicts.count(v) for v in sorted(set(verdicts))},
            "reports": [r.to_dict() for r in reports],
        })
    return EXIT_INCONCLUSIVE if all(r.verdict == INCONCLUSIVE for r in reports) else EXIT_OK


def cmd_coarse(args) -> int:
    _require(args, "s", "d", "eps")
    dist, noise = load_dist(args.dist), load_noise(args.noise)
    cfg = CoarseConfig(
        int(args.s), int(args.d), num(args.eps), num(args.K), num(args.C_dfko), order=args.order,
        delta=float(num(args.delta)), noise=noise, mode=args.mode, max_samples=int(args.max_samples),
    )
    return _run_trials(args, dist, noise, lambda o: coarse_test(o, cfg, dist))


_SHARP_KEYS = ("d", "s", "T", "eps", "K", "C_dfko", "C_kv", "C_kv_prime", "wasserstein_gap", "coarse_order",
               "order_cap", "net_budget", "mode", "max_samples", "delta", "gap_t_max", "moment_tau_divisor",
               "moment_delta")


def cmd_sharp(args) -> int:
    noise = load_noise(args.noise)
    overrides = {"noise": noise}
    for key in _SHARP_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = num(val) if isinstance(val, str) and key not in ("mode",) else val
    for key in ("d", "s", "T", "coarse_order", "order_cap", "net_budget", "max_samples", "gap_t_max"):
        if key in overrides and overrides[key] is not None:
            overrides[key] = int(overrides[key])
    for key in ("moment_tau_divisor", "moment_delta", "delta", "wasserstein_gap", "C_kv", "C_kv_prime"):
        if key in overrides:
            overrides[key] = float(overrides[key])
    if args.desk:
        cfg = desk_config(**overrides)
    else:
        missing = [k for k in ("d", "s", "T", "eps") if k not in overrides]
        if missing:
            raise UsageError(f"sharp-test needs {', '.join(missing)} (or --desk)")
        cfg = SharpConfig(dist=load_dist(args.dist), **overrides)
    return _run_trials(args, cfg.dist, noise, lambda o: test_sparsity(o, cfg))


def cmd_msg(args) -> int:
    _require(args, "d", "s", *(("t",) if args.action == "search" else ()))
    dist = load_dist(args.dist)
    grid = GridSpec(int(args.denominator), int(args.max_numerator))
    try:
        if args.action == "search":
            w = find_msg_witness(dist, int(args.d), int(args.s), int(args.t), grid, budget=float(args.budget))
            _dump(args, {"found": w is not None, "witness": w.to_dict() if w else None})
        else:
            res = compute_msg(dist, int(args.d), int(args.s), float(args.budget), t_cap=int(args.t_cap), grid=grid)
            res = {**res, "witness": res["witness"].to_dict() if res.get("witness") else None}
            _dump(args, res)
    except BudgetExceeded as exc:
        _dump(args, {"error": str(exc), "owner": exc.owner or "msg"})
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_net(args) -> int:
    _require(args, "d", "s", "T", "eps", "zeta")
    dist = load_dist(args.dist)
    if not args.out:
        raise UsageError("net build needs --out DIR")
    kw = dict(budget=int(args.budget), r_cap=args.r_cap, var_cap=args.var_cap)
    try:
        if args.moments:
            nets = construct_rv_nets(dist, int(args.d), int(args.s), int(args.T), num(args.eps),
                                     float(num(args.zeta)), int(args.moments), **kw)
        else:
            nets = construct_poly_nets(dist, int(args.d), int(args.s), int(args.T), num(args.eps),
                                       float(num(args.zeta)), **kw)
    except BudgetExceeded as exc:
        print(json.dumps({"error": str(exc), "owner": exc.owner or "nets"}))
        return EXIT_INCONCLUSIVE
    summary = {}
    for name, net in zip(("P", "P_eps"), nets):
        save_net(net, Path(args.out) / name)
        summary[name] = net.size
    print(json.dumps(summary))
    return EXIT_OK


def cmd_wasserstein(args) -> int:
    a = DiscreteRV.from_text(Path(args.a).read_text())
    b = DiscreteRV.from_text(Path(args.b).read_text())
    w = wasserstein1(a, b)
    _emit(args, format_number(w) if isinstance(w, Fraction) else repr(float(w)))
    return EXIT_OK


def cmd_dfko(args) -> int:
    dist = load_dist(args.dist)
    if args.action == "verify":
        _require(args, "poly")
        f = load_poly(args.poly)
        J = [int(v) for v in args.J.split(",") if v] if args.J else []
        rep = verify_tail_theorem(f, J, num(args.delta), num(args.t), float(num(args.C)), dist)
        _dump(args, rep)
    else:
        instances = []
        for spec in args.instances:
            cfg = json.loads(Path(spec).read_text())
            for inst in cfg if isinstance(cfg, list) else [cfg]:
                instances.append((load_poly(inst["poly"]), inst.get("J", []), num(inst["delta"]), num(inst["t"])))
        _dump(args, {"instances": len(instances), "C_boundary": calibrate_tail_theorem(instances, dist)})
    return EXIT_OK


def _witness_from(args):
    dist = load_dist(args.dist)
    w = find_msg_witness(dist, int(args.d), int(args.s), int(args.t))
    if w is None:
        raise UsageError("no witness found for the given (d, s, t)")
    return w


def cmd_hardness(args) -> int:
    w = _witness_from(args)
    seed = _need_seed(args)
    if args.action == "gen":
        ens = HardInstanceEnsemble.from_witness(w, int(args.n), args.case)
        _emit(args, HardOracle(ens, seed).draw(int(args.m)).to_csv())
        return EXIT_OK
    ms = [int(v) for v in args.ms.split(",")]
    lines = []
    for j, n in enumerate(int(v) for v in args.ns.split(",")):
        yes = HardInstanceEnsemble.from_witness(w, n, YES)
        no = HardInstanceEnsemble.from_witness(w, n, NO)
        csv_text = transcript_experiment(yes, no, ms, int(args.trials), seed).to_csv()
        lines.extend(csv_text.splitlines()[(0 if j == 0 else 1):])
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _common(p, *, seed=True, out=True):
    p.add_argument("--config", help="JSON file with default values for the flags")
    if seed:
        p.add_argument("--seed", type=int, help="RNG seed (required when sampling)")
    if out:
        p.add_argument("--out", help="write output here instead of stdout")


def _tester_flags(p):
    p.add_argument("--dist", default="rademacher")
    p.add_argument("--poly", help="polynomial file or expression such as '1/2*x1*x2 + x3'")
    p.add_argument("--samples", help="labeled-sample CSV instead of a simulated oracle")
    p.add_argument("--exact", action="store_true", help="use exact moments instead of samples")
    p.add_argument("--noise", help="'none', 'gaussian:SIGMA', a JSON object or a JSON file")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--mode", default="practical", choices=["practical", "explicit", "all"])
    p.add_argument("--max-samples", dest="max_samples", type=int, default=5 * 10**7)
    p.add_argument("--delta", default="1/10")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsetest", description="Sparse polynomial testing experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    parser.subcommands = sub.choices

    p = sub.add_parser("simulate", help="draw labeled samples as CSV")
    _common(p)
    p.add_argument("--dist", default="rademacher")
    p.add_argument("--poly")
    p.add_argument("--noise")
    p.add_argument("--m", type=int, default=1000)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate-moments", help="clean-moment estimate as JSON")
    _common(p)
    _tester_flags(p)
    p.add_argument("--order", type=int)
    p.add_argument("--tau", default="1/10")
    p.add_argument("--K", default="1")
    p.add_argument("--d", type=int)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("coarse-test", help="run the coarse tester")
    _common(p)
    _tester_flags(p)
    for flag, default in (("--s", None), ("--d", None), ("--eps", None), ("--K", "1"), ("--C-dfko", "1")):
        p.add_argument(flag, dest=flag[2:].replace("-", "_"), default=default)
    p.add_argument("--order", type=int)
    p.set_defaults(func=cmd_coarse)

    p = sub.add_parser("sharp-test", help="run the four-phase sharp tester")
    _common(p)
    _tester_flags(p)
    p.add_argument("--desk", action="store_true", help="start from the calibrated desk configuration")
    for key in _SHARP_KEYS:
        if key in ("mode", "max_samples", "delta"):
            continue
        p.add_argument("--" + key.replace("_", "-"), dest=key)
    p.set_defaults(func=cmd_sharp)

    p = sub.add_parser("msg", help="sparsity-gap witnesses")
    _common(p, seed=False)
    p.add_argument("action", choices=["search", "witness"])
    p.add_argument("--dist", default="rademacher")
    p.add_argument("--d", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--t", type=int, help="target sparsity (search)")
    p.add_argument("--t-cap", dest="t_cap", type=int, default=16)
    p.add_argument("--budget", default="5e7")
    p.add_argument("--denominator", type=int, default=4)
    p.add_argument("--max-numerator", dest="max_numerator", type=int, default=8)
    p.set_defaults(func=cmd_msg)

    p = sub.add_parser("net", help="coefficient or moment nets")
    _common(p, seed=False)
    p.add_argument("action", choices=["build"])
    p.add_argument("--dist", default="rademacher")
    for key in ("d", "s", "T"):
        p.add_argument("--" + key, type=int)
    p.add_argument("--eps")
    p.add_argument("--zeta", help="granularity (coefficient, or moment with --moments)")
    p.add_argument("--moments", type=int, help="build moment nets of this order")
    p.add_argument("--r-cap", dest="r_cap", type=int)
    p.add_argument("--var-cap", dest="var_cap", type=int)
    p.add_argument("--budget", type=int, default=10**6)
    p.set_defaults(func=cmd_net)

    p = sub.add_parser("wasserstein", help="W1 between two random-variable files")
    _common(p, seed=False)
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_wasserstein)

    p = sub.add_parser("dfko", help="tail-theorem verification and calibration")
    _common(p, seed=False)
    p.add_argument("action", choices=["verify", "calibrate"])
    p.add_argument("--dist", default="rademacher")
    p.add_argument("--poly")
    p.add_argument("--J", default="")
    p.add_argument("--delta", default="1")
    p.add_argument("--t", default="1")
    p.add_argument("--C", default="1")
    p.add_argument("instances", nargs="*", help="JSON files of {poly, J, delta, t} (calibrate)")
    p.set_defaults(func=cmd_dfko)

    p = sub.add_parser("hardness", help="lower-bound ensembles")
    _common(p)
    p.add_argument("action", choices=["gen", "curve"])
    p.add_argument("--dist", default="rademacher")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--s", type=int, default=1)
    p.add_argument("--t", type=int, default=4)
    p.add_argument("--n", type=int, default=12)
    p.add_argument("--case", choices=[YES, NO], default=YES)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--ns", default="3,6,12,24")
    p.add_argument("--ms", default="0,1,2,4,8,16")
    p.add_argument("--trials", type=int, default=200)
    p.set_defaults(func=cmd_hardness)
    return parser


def _with_config(parser, argv):
    """Parse twice: the second pass uses the ``--config`` values as defaults."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    cfg = json.loads(Path(args.config).read_text())
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    sub = parser.subcommands[args.command]
    known = {a.dest for a in sub._actions}
    defaults = {}
    for key, val in cfg.items():
        key = key.replace("-", "_")
        if key not in known or key in ("config", "func"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        # string defaults go through the flag's type conversion
        defaults[key] = val if isinstance(val, (bool, list, dict)) or val is None else str(val)
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _require(args, *keys) -> None:
    missing = [k for k in keys if getattr(args, k, None) in (None, "")]
    if missing:
        raise UsageError("missing " + ", ".join("--" + k.replace("_", "-") for k in missing))


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _with_config(parser, argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExceeded as exc:
        print(f"budget exceeded ({exc.owner or 'unknown'}): {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
