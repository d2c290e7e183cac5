"""Command-line interface: run sweeps, evaluate rates, select beams, self-check."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from .beamforming import BeamAssignment
from .harness import SpecError, load_spec, run_experiment
from .io import load_profile
from .rate import user_rates
from .scenario import SystemConfig
from .selection import METHODS, SelectorConfig, select

log = logging.getLogger("bssbf")


def shipped_specs() -> dict[str, Path]:
    root = resources.files("bssbf") / "specs"
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".toml")}


def _resolve_spec(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    specs = shipped_specs()
    if name in specs:
        return specs[name]
    raise SpecError("<file>", f"no such spec file or shipped spec: {name!r}")


def _parse_assignment(text: str) -> BeamAssignment:
    """'0,1;2,3' -> user 0 gets beams 0 and 1, user 1 gets 2 and 3."""
    try:
        groups = [tuple(int(x) for x in part.split(",") if x.strip()) for part in text.split(";")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad assignment {text!r}: {exc}") from exc
    return BeamAssignment.of(groups)


def _system_for(profile, grid, beams_per_user: int, gamma: float | None, power_db: float | None) -> SystemConfig:
    K = profile.num_users
    if gamma is not None:
        total = gamma * K
    else:
        total = 10 ** ((40.0 if power_db is None else power_db) / 10)
    return SystemConfig(num_antennas=len(grid), num_users=K, grid_len=len(grid), beams_per_user=beams_per_user,
                        total_power=total)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, newline="")
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    spec = load_spec(_resolve_spec(args.spec))
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    if args.trials is not None:
        spec = replace(spec, trials=args.trials)
    table = run_experiment(spec, threads=args.threads)
    fmt = args.format or "csv"
    _emit(table.to_csv() if fmt == "csv" else table.to_jsonl(), args.out)
    failed = [r for r in table.rows if "error" in r.extras]
    for r in failed:
        print(f"warning: {r.method} at {r.sweep_name}={r.sweep_value}: {r.extras['error']}", file=sys.stderr)
    return 0


def cmd_rate(args) -> int:
    profile, grid = load_profile(args.profile)
    assignment = args.assign
    if len(assignment) != profile.num_users:
        raise SpecError("assign", f"{len(assignment)} groups given for {profile.num_users} users")
    gamma_sizes = {len(g) for g in assignment}
    if len(gamma_sizes) != 1:
        raise SpecError("assign", "every user needs the same number of beams")
    Gamma = gamma_sizes.pop()
    assignment.validate(Gamma, len(grid))
    system = _system_for(profile, grid, Gamma, args.gamma, args.power_db)
    rates = user_rates(profile.channel_power, assignment, system.per_user_power, Gamma, system.btbc_rate_inverse)
    total = float(rates.sum())
    if args.format == "json":
        text = json.dumps({"sum_rate": total, "per_user": rates.tolist(), "gamma": system.per_user_power}) + "\n"
    elif args.format == "csv":
        text = "user,rate\r\n" + "".join(f"{k},{r!r}\r\n" for k, r in enumerate(rates)) + f"sum,{total!r}\r\n"
    else:
        text = f"{total:.4f}\n"
    _emit(text, args.out)
    return 0


def cmd_select(args) -> int:
    profile, grid = load_profile(args.profile)
    system = _system_for(profile, grid, args.beams, args.gamma, args.power_db)
    seed = 0 if args.seed is None else args.seed
    cfg = SelectorConfig(method=args.method, rng_seed=seed)
    res = select(profile, system, cfg, rng=np.random.default_rng(seed))
    groups = [list(g) for g in res.assignment]
    rates = user_rates(profile.channel_power, res.assignment, system.per_user_power, args.beams)
    if args.format == "json":
        text = json.dumps({"assignment": groups, "sum_rate": float(rates.sum())}) + "\n"
    elif args.format == "csv":
        text = "user,beams\r\n" + "".join(f'{k},"{" ".join(map(str, g))}"\r\n' for k, g in enumerate(groups))
    else:
        text = "".join(f"user {k}: {' '.join(map(str, g))}\n" for k, g in enumerate(groups))
        text += f"sum-rate {float(rates.sum()):.4f}\n"
    _emit(text, args.out)
    return 0


def cmd_validate(args) -> int:
    from .checks import run_checks

    names = args.specs or sorted(shipped_specs())
    ok = True
    for name in names:
        try:
            load_spec(_resolve_spec(name))
            print(f"PASS spec {name}")
        except SpecError as exc:
            ok = False
            print(f"FAIL spec {name}: {exc}", file=sys.stderr)
    seed = 0 if args.seed is None else args.seed
    for label, passed, detail in run_checks(seed):
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {label}" + (f" ({detail})" if detail else ""))
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="base seed override")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output path (default stdout)")
    common.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="bssbf", parents=[common],
                                     description="Beam-selection statistical beamforming simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common], help="run an experiment spec and write a result table")
    p.add_argument("spec", help="spec file path or shipped spec name")
    p.add_argument("--trials", type=int, default=None, help="override the trial count")
    p.set_defaults(func=cmd_run)

    for name, func, helptext in (("rate", cmd_rate, "closed-form rates of a given assignment"),
                                 ("select", cmd_select, "run a beam selector on a profile")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("profile", help="profile JSON file")
        power = p.add_mutually_exclusive_group()
        power.add_argument("--gamma", type=float, default=None, help="per-user SNR (linear)")
        power.add_argument("--power-db", type=float, default=None, help="total power in dB (default 40)")
        if name == "rate":
            p.add_argument("--assign", type=_parse_assignment, required=True,
                           help="beams per user, users separated by ';', e.g. '0,1;5,6'")
        else:
            p.add_argument("--method", choices=METHODS, default="fs")
            p.add_argument("--beams", type=int, default=1, help="beams per user")
        p.set_defaults(func=func)

    p = sub.add_parser("validate", parents=[common], help="check spec files and run the numerical self-checks")
    p.add_argument("specs", nargs="*", help="spec files or shipped names (default: all shipped)")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key, default in (("seed", None), ("out", None), ("format", None), ("threads", 1), ("verbose", False)):
        if not hasattr(args, key):
            setattr(args, key, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SpecError as exc:
        print(f"error: spec field {exc.field!r}: {exc.message}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
