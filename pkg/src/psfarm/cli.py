"""Command-line front end.

Every analytic operation is a subcommand emitting CSV (17 significant
digits, so values round-trip losslessly); the simulator and a rho-sweep
reproduce the reference experiments.  Exit codes: 0 success, 1 numerical
failure, 2 validation error.

A flat key=value config file can prefill any flag (flags win on conflict);
the PSFARM_OUTPUT_DIR environment variable supplies a default directory for
relative output paths.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import asymptotics, meanfield, stationary
from .model import QuadratureError, SystemConfig
from .simulate import JobSizeDist, PolicyKind, run_experiment


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def load_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; '#' starts a comment, blank lines ignored."""
    values: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key = key.strip().replace("-", "_")
        val = val.strip()
        if not key or not val:
            raise ValueError(f"{path}:{lineno}: empty key or value")
        values[key] = val
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # single-line diagnostic, exit 2
        raise ValueError(message)


def _build_parser() -> _Parser:
    # --config/--output are accepted before or after the subcommand; the
    # SUPPRESS defaults keep a subparser from clobbering values the main
    # parser already collected.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="flat key=value file prefilling flags")
    common.add_argument("-o", "--output", default=argparse.SUPPRESS,
                        help="output CSV path (default: stdout)")
    p = _Parser(prog="psfarm", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command")

    def add(name, **flags):
        sp = sub.add_parser(name, parents=[common])
        for flag, (conv, required, helptext) in flags.items():
            sp.add_argument(f"--{flag}", type=conv, default=None, help=helptext,
                            dest=flag.replace("-", "_"))
        sp.set_defaults(_required={f.replace("-", "_") for f, (c, r, h) in flags.items() if r})
        return sp

    add("exact", n=(int, True, "servers"), theta=(int, True, "buffer depth"),
        rho=(float, True, "load per server"),
        table=(str, False, "also dump the stationary table to this CSV path"))
    add("integral", n=(int, True, "servers"), theta=(int, True, "buffer depth"),
        rho=(float, True, "load per server"))
    add("asymptotic", n=(int, True, "servers"), theta=(int, True, "buffer depth"),
        rho=(float, True, "load per server"))
    add("qed", n=(int, True, "servers"), theta=(int, True, "buffer depth"),
        a=(float, True, "window coefficient: total load = n + a*n^(1/(theta+1))"))
    sp = add("staffing", theta=(int, True, "buffer depth"),
             target=(float, True, "target blocking probability"))
    sp.add_argument("--lambda", type=float, default=None, dest="lam",
                    help="offered load (total arrival rate)")
    sp.set_defaults(_required={"theta", "target", "lam"})
    add("clt", theta=(int, True, "buffer depth"), rho=(float, True, "load per server"))
    add("mdtail", theta=(int, True, "buffer depth"), z=(float, True, "threshold"))
    add("ldrate", theta=(int, True, "buffer depth"), rho=(float, True, "load per server"),
        q=(str, True, "comma-separated level fractions q_0,...,q_theta"))
    add("meanfield", theta=(int, True, "buffer depth"), rho=(float, True, "load per server"),
        **{"t-end": (float, True, "horizon"), "step": (float, False, "RK4 step (default 0.01)"),
           "y0": (str, False, "'empty', 'full' or comma list (default empty)"),
           "every": (int, False, "record every k-th step (default 100)")})
    add("simulate", n=(int, True, "servers"), theta=(int, True, "buffer depth"),
        rho=(float, True, "load per server"),
        policy=(str, True, "insensitive|jsq|jsqd|jiq|bernoulli"),
        d=(int, False, "sample size for jsqd"),
        jobdist=(str, True, "exponential|deterministic|twopoint"),
        replications=(int, True, "replication count"),
        arrivals=(int, True, "arrivals per replication"),
        warmup=(int, False, "warmup arrivals (default 20%)"),
        seed=(int, True, "base seed"),
        speed=(float, False, "server speed (default 1)"))
    add("sweep", n=(int, True, "servers"),
        theta=(str, True, "comma list of buffer depths"),
        **{"rho-min": (float, True, "grid start"), "rho-max": (float, True, "grid end"),
           "rho-step": (float, True, "grid step"),
           "replications": (int, False, "simulate each point with this many replications"),
           "arrivals": (int, False, "arrivals per replication for --replications"),
           "seed": (int, False, "base seed for --replications (default 0)")})
    return p


def _merge_config(args: argparse.Namespace, parser: _Parser) -> None:
    if not args.config:
        return
    values = load_config(args.config)
    for key, raw in values.items():
        if key in ("config", "output", "command"):
            if key == "output" and args.output is None:
                args.output = raw
            continue
        if not hasattr(args, key):
            raise ValueError(f"config key {key!r} is not a flag of {args.command!r}")
        if getattr(args, key) is None:  # flags override file values
            conv = float if key in ("rho", "a", "target", "lam", "rho_min", "rho_max",
                                    "rho_step", "t_end", "step", "speed", "z") else None
            if key in ("n", "theta", "d", "replications", "arrivals", "warmup",
                       "seed", "every") and args.command != "sweep":
                conv = int
            elif key == "theta" and args.command == "sweep":
                conv = str
            setattr(args, key, conv(raw) if conv else raw)


def _require(args: argparse.Namespace) -> None:
    missing = [k for k in getattr(args, "_required", ()) if getattr(args, k) is None]
    if missing:
        raise ValueError(f"missing required value(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")


def _emit(args: argparse.Namespace, header: str, rows) -> None:
    text = header + "\n" + "".join(",".join(_fmt(v) for v in row) + "\n" for row in rows)
    if args.output:
        path = args.output
        out_dir = os.environ.get("PSFARM_OUTPUT_DIR")
        if out_dir and not os.path.isabs(path):
            path = os.path.join(out_dir, path)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_q(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise ValueError(f"bad fraction list {text!r}: {exc}") from exc


def _cmd_exact(args):
    config = SystemConfig(args.n, args.theta, args.rho)
    table = stationary.stationary_table(config)
    if args.table:
        stationary.dump_stationary_csv(table, args.table)
    _emit(args, "n,theta,rho,blocking", [(args.n, args.theta, args.rho, table.blocking)])


def _cmd_integral(args):
    config = SystemConfig(args.n, args.theta, args.rho)
    b = stationary.blocking_via_integral(config)
    _emit(args, "n,theta,rho,blocking", [(args.n, args.theta, args.rho, b)])


def _cmd_asymptotic(args):
    config = SystemConfig(args.n, args.theta, args.rho)
    est = asymptotics.blocking_asymptotic(config)
    _emit(args, "n,theta,rho,regime,blocking",
          [(args.n, args.theta, args.rho, est.regime, est.value)])


def _cmd_qed(args):
    est = asymptotics.blocking_qed(args.n, args.theta, args.a)
    _emit(args, "n,theta,a,blocking", [(args.n, args.theta, args.a, est.value)])


def _cmd_staffing(args):
    n = asymptotics.staffing(args.lam, args.theta, args.target)
    _emit(args, "lambda,theta,target,n", [(args.lam, args.theta, args.target, n)])


def _cmd_clt(args):
    res = asymptotics.clt_covariance(args.theta, args.rho)
    rows = [(i, j, res.sigma_inv[i, j], res.sigma[i, j])
            for i in range(args.theta) for j in range(args.theta)]
    _emit(args, "i,j,sigma_inv,sigma", rows)


def _cmd_mdtail(args):
    _emit(args, "theta,z,tail", [(args.theta, args.z, asymptotics.md_tail(args.theta, args.z))])


def _cmd_ldrate(args):
    config = SystemConfig(1, args.theta, args.rho)
    value = asymptotics.ld_rate(config, _parse_q(args.q))
    _emit(args, "theta,rho,rate", [(args.theta, args.rho, value)])


def _cmd_meanfield(args):
    step = args.step if args.step is not None else 0.01
    every = args.every if args.every is not None else 100
    if args.y0 in (None, "empty"):
        y0 = np.zeros(args.theta + 1)
        y0[0] = 1.0
    elif args.y0 == "full":
        y0 = np.zeros(args.theta + 1)
        y0[-1] = 1.0
    else:
        y0 = _parse_q(args.y0)
    points = meanfield.integrate(args.theta, args.rho, y0, args.t_end, step=step,
                                 record_every=every)
    header = "t," + ",".join(f"y_{k}" for k in range(args.theta + 1))
    _emit(args, header, [(p.time, *p.y.probs) for p in points])


_SIM_HEADER = ("policy,n,theta,rho,jobdist,seed,replications,arrivals,"
               "blocking_mean,blocking_ci95,sojourn_mean,sojourn_ci95")


def _jobs_from_name(name: str) -> JobSizeDist:
    try:
        return {"exponential": JobSizeDist.exponential,
                "deterministic": JobSizeDist.deterministic,
                "twopoint": JobSizeDist.two_point}[name]()
    except KeyError:
        raise ValueError(f"unknown job-size law {name!r}") from None


def _cmd_simulate(args):
    config = SystemConfig(args.n, args.theta, args.rho)
    policy = PolicyKind(args.policy, d=args.d or 0)
    jobs = _jobs_from_name(args.jobdist)
    speed = args.speed if args.speed is not None else 1.0
    rep = run_experiment(config, policy, jobs, args.replications, args.arrivals,
                         args.seed, warmup_arrivals=args.warmup, server_speed=speed)
    _emit(args, _SIM_HEADER,
          [(args.policy, args.n, args.theta, args.rho, args.jobdist, args.seed,
            args.replications, args.arrivals, rep.blocking_mean, rep.blocking_ci95,
            rep.sojourn_mean, rep.sojourn_ci95)])


def _cmd_sweep(args):
    thetas = [int(v) for v in str(args.theta).split(",")]
    if args.rho_step <= 0 or not 0 < args.rho_min <= args.rho_max:
        raise ValueError("need 0 < rho-min <= rho-max and rho-step > 0")
    grid = []
    k = 0
    while True:
        rho = args.rho_min + k * args.rho_step
        if rho > args.rho_max + 1e-12:
            break
        grid.append(round(rho, 12))
        k += 1
    rows = []
    seed = args.seed if args.seed is not None else 0
    for theta in thetas:
        for rho in grid:
            config = SystemConfig(args.n, theta, rho)
            rows.append((args.n, theta, rho, "exact",
                         stationary.exact_blocking_enumeration(config)))
            rows.append((args.n, theta, rho, "integral",
                         stationary.blocking_via_integral(config)))
            rows.append((args.n, theta, rho, "asymptotic",
                         asymptotics.blocking_asymptotic(config).value))
            if args.replications:
                if not args.arrivals:
                    raise ValueError("--replications needs --arrivals")
                rep = run_experiment(config, PolicyKind("insensitive"),
                                     JobSizeDist.exponential(), args.replications,
                                     args.arrivals, seed)
                rows.append((args.n, theta, rho, "simulated", rep.blocking_mean))
    _emit(args, "n,theta,rho,method,blocking", rows)


_COMMANDS = {
    "exact": _cmd_exact,
    "integral": _cmd_integral,
    "asymptotic": _cmd_asymptotic,
    "qed": _cmd_qed,
    "staffing": _cmd_staffing,
    "clt": _cmd_clt,
    "mdtail": _cmd_mdtail,
    "ldrate": _cmd_ldrate,
    "meanfield": _cmd_meanfield,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        # SUPPRESS defaults leave these unset when never passed
        args.config = getattr(args, "config", None)
        args.output = getattr(args, "output", None)
        if not args.command:
            raise ValueError("missing subcommand; see --help")
        _merge_config(args, parser)
        _require(args)
        _COMMANDS[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (QuadratureError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
