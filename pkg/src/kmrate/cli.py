"""Command line front end.

Every subcommand is deterministic given its arguments and ``--seed``. Each
run emits a manifest: ``<out>.manifest.json`` with ``--out``, the ``--manifest``
path if given, otherwise one JSON line on stderr. ``kmrate replay``
re-executes a manifest and compares output bytes.

Exit codes: 0 success, 1 usage / input error, 2 property violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .bounds import (
    c_table,
    h_envelope,
    pn_exact,
    pn_recursion,
    rate_report,
    recurrence_check,
)
from .km_core import EuclideanSpace, hilbert_identity_check, run_experiment, shift_sharpness_experiment
from .schedule import StepSchedule
from .special_fn import bessel_I, bessel_I2, catalan, catalan_alternating_sum
from .stochastic import (
    ConvexIntFunction,
    RngStream,
    expect,
    hoeffding_majorization_check,
    poisson_binomial_pmf,
    simulate_walk_nonneg,
    split_bernoulli,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATION = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# formatting


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def to_json(obj: Any) -> str:
    """JSON text with every float written to 17 significant digits."""
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {to_json(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(to_json(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return "" if v is None else str(v)


def to_csv(header: list[str], rows: list[list[Any]]) -> str:
    lines = [",".join(header)] + [",".join(_cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def record(quantity: str, value: Any, method: str, params: dict, seed: int | None) -> dict:
    return {"quantity": quantity, "value": value, "method": method, "params": params, "seed": seed, "version": __version__}


# schedule sources


def parse_schedule(source: str, length: int, seed: int) -> StepSchedule:
    """``const:A``, ``two-block:M,U``, ``uniform-random[:LEN]`` or ``file:PATH``."""
    kind, _, arg = source.partition(":")
    try:
        if kind == "const":
            return StepSchedule.constant(float(arg), length)
        if kind == "two-block":
            m, u = arg.split(",")
            return StepSchedule.two_block(int(m), float(u))
        if kind == "uniform-random":
            size = int(arg) if arg else length
            return StepSchedule.uniform_random(size, RngStream(seed, 0).generator())
        if kind == "file":
            return StepSchedule.from_file(arg)
    except (ValueError, OSError, KeyError) as exc:
        raise UsageError(f"bad schedule {source!r}: {exc}") from exc
    raise UsageError(f"unknown schedule source {source!r}")


# subcommands; each returns (text, outputs, exit_code)


def cmd_rate(args) -> tuple[str, list, int]:
    sched = parse_schedule(args.schedule, args.n + 1, args.seed)
    if args.n > len(sched):
        raise UsageError(f"schedule has {len(sched)} steps, --n {args.n} requested")
    rng = RngStream(args.seed, 1)
    rep = rate_report(sched, args.n, args.method, args.trials, rng)
    value = {"n": rep.n, "sum_s": rep.sum_s, "pn": rep.pn, "product": rep.product, "bound_ok": rep.bound_ok}
    if rep.std_err is not None:
        value["std_err"] = rep.std_err
    params = {"schedule": args.schedule, "n": args.n, "method": args.method, "trials": args.trials}
    if args.format == "csv":
        rows = [[k, v] for k, v in value.items()] + [["method", rep.method]]
        text = to_csv(["quantity", "value"], rows)
    else:
        text = to_json(record("rate_report", value, rep.method, params, args.seed)) + "\n"
    return text, [{"quantity": "rate_report", "method": rep.method}], EXIT_OK if rep.bound_ok else EXIT_VIOLATION


def cmd_ctable(args) -> tuple[str, list, int]:
    if not 0 <= args.n <= 200:
        raise UsageError("--n must lie in [0, 200] for ctable")
    sched = parse_schedule(args.schedule, args.n, args.seed)
    if args.n > len(sched):
        raise UsageError(f"schedule has {len(sched)} steps, --n {args.n} requested")
    table = c_table(sched, args.n, args.table_method)
    outputs = [{"quantity": "c_table", "method": args.table_method}]
    code = EXIT_OK
    residual = None
    if args.check:
        residual = recurrence_check(table, sched)
        outputs.append({"quantity": "recurrence_residual", "method": "three-term recurrence"})
        if residual > 1e-10:
            code = EXIT_VIOLATION
    if args.format == "json":
        value = {"rows": [[m, n, c] for m, n, c in table.rows()]}
        if residual is not None:
            value["recurrence_residual"] = residual
        params = {"schedule": args.schedule, "n": args.n, "check": args.check}
        text = to_json(record("c_table", value, args.table_method, params, args.seed)) + "\n"
    else:
        text = to_csv(["m", "n", "c"], [list(r) for r in table.rows()])
        if residual is not None:
            text += f"# recurrence_residual,{fmt_float(residual)}\n"
    return text, outputs, code


def cmd_envelope(args) -> tuple[str, list, int]:
    if not 0.0 < args.z_min < args.z_max:
        raise UsageError("need 0 < z-min < z-max")
    if args.points < 2:
        raise UsageError("--points must be at least 2")
    zs = np.geomspace(args.z_min, args.z_max, args.points)
    hs = np.array([h_envelope(z) for z in zs])
    monotone = bool(np.all(np.diff(hs) > 0))
    outputs = [{"quantity": "h_envelope", "method": "scaled Bessel"}]
    if not monotone:
        sys.stderr.write("h(z) is not strictly increasing on the grid\n")
        return "", outputs, EXIT_VIOLATION
    if args.format == "json":
        params = {"z_min": args.z_min, "z_max": args.z_max, "points": args.points}
        text = to_json(record("h_envelope", {"z": zs, "h": hs}, "scaled Bessel", params, None)) + "\n"
    else:
        text = to_csv(["z", "h"], [[z, h] for z, h in zip(zs, hs)])
    return text, outputs, EXIT_OK


def cmd_sharpness(args) -> tuple[str, list, int]:
    try:
        ms = [int(v) for v in args.m.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad --m list {args.m!r}") from exc
    if not ms or any(m < 1 or m > 5000 for m in ms):
        raise UsageError("--m values must lie in [1, 5000]")
    try:
        results = [shift_sharpness_experiment(m, args.u) for m in ms]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    outputs = [{"quantity": "shift_sharpness", "method": "poisson-binomial central mass"}]
    if args.format == "json":
        value = [{"m": r.m, "u": r.u, "observed": r.observed, "eta": r.eta, "gap": r.gap} for r in results]
        text = to_json(record("shift_sharpness", value, outputs[0]["method"], {"m": ms, "u": args.u}, None)) + "\n"
    else:
        text = to_csv(["m", "observed", "eta", "gap"], [[r.m, r.observed, r.eta, r.gap] for r in results])
    return text, outputs, EXIT_OK


_G_KINDS = ("square", "linear", "ballot_pair", "hinge")


def _random_convex(gen: np.random.Generator) -> tuple[str, ConvexIntFunction]:
    kind = _G_KINDS[gen.integers(len(_G_KINDS))]
    if kind == "square":
        return kind, ConvexIntFunction.square()
    if kind == "linear":
        return kind, ConvexIntFunction.linear()
    if kind == "ballot_pair":
        return kind, ConvexIntFunction.ballot_pair()
    c = float(gen.uniform(0.0, 8.0))
    return f"hinge({c:.6g})", ConvexIntFunction.hinge(c)


def _suite_hoeffding(cases: int, seed: int, trials: int) -> list[dict]:
    out = []
    for i in range(cases):
        gen = RngStream(seed, i).generator()
        p = gen.uniform(0.0, 1.0, size=gen.integers(0, 13))
        name, g = _random_convex(gen)
        chk = hoeffding_majorization_check(p, g)
        split_ok = True
        if p.size and p.size <= 8:
            j = int(gen.integers(p.size))
            before = expect(poisson_binomial_pmf(p), g)
            after = expect(poisson_binomial_pmf(split_bernoulli(p, j)), g)
            split_ok = after >= before - 1e-12
        out.append({"case": i, "pass": chk.holds and split_ok, "g": name, "n": int(p.size), "lhs": chk.lhs, "rhs": chk.rhs})
    return out


def _suite_catalan(cases: int, seed: int, trials: int) -> list[dict]:
    out = []
    for k in range(cases):
        a, b = catalan(k), catalan_alternating_sum(k)
        out.append({"case": k, "pass": a == b, "catalan": str(a), "alternating_sum": str(b)})
    return out


def _suite_turan(cases: int, seed: int, trials: int) -> list[dict]:
    out = []
    for i, z in enumerate(np.geomspace(0.01, 100.0, cases)):
        i0, i1 = bessel_I(0, z, True), bessel_I(1, z, True)
        i2 = bessel_I2(z, True)
        turan = i0 * i2 <= i1 * i1 * (1.0 + 1e-12)
        key = z * i0 <= 2.0 * (1.0 + z) * i1 * (1.0 + 1e-12)
        out.append({"case": i, "pass": turan and key, "z": z, "turan_gap": i1 * i1 - i0 * i2})
    return out


def _suite_identity_hilbert(cases: int, seed: int, trials: int) -> list[dict]:
    space = EuclideanSpace(5)
    out = []
    for i in range(cases):
        r = hilbert_identity_check(space, 1, RngStream(seed, i))
        out.append({"case": i, "pass": r <= 1e-10, "residual": r})
    return out


def _suite_triple_agreement(cases: int, seed: int, trials: int) -> list[dict]:
    out = []
    for i in range(cases):
        gen = RngStream(seed, i).generator()
        n = int(gen.integers(1, 21))
        sched = StepSchedule.uniform_random(n + 1, gen)
        rec = pn_recursion(sched, n)
        ex = pn_exact(sched, n)
        mc = simulate_walk_nonneg(sched, n, trials, RngStream(seed, 1 << 32 | i))
        # the plug-in error is 0 when every trial agrees; floor it by the exact value's error
        sigma = max(mc.std_err, math.sqrt(ex * (1.0 - ex) / trials))
        mc_ok = abs(mc.estimate - ex) <= 4.0 * sigma
        out.append(
            {"case": i, "pass": abs(rec - ex) <= 1e-12 and mc_ok, "n": n, "recursion": rec, "exact": ex,
             "mc": mc.estimate, "std_err": mc.std_err}
        )
    return out


SUITES: dict[str, tuple[Callable, int]] = {
    "hoeffding": (_suite_hoeffding, 1000),
    "catalan": (_suite_catalan, 31),
    "turan": (_suite_turan, 200),
    "identity_hilbert": (_suite_identity_hilbert, 10000),
    "triple_agreement": (_suite_triple_agreement, 100),
}


def cmd_verify(args) -> tuple[str, list, int]:
    fn, default_cases = SUITES[args.suite]
    cases = default_cases if args.cases is None else args.cases
    if cases < 1:
        raise UsageError("--cases must be positive")
    results = fn(cases, args.seed, args.trials)
    failed = sum(not r["pass"] for r in results)
    outputs = [{"quantity": f"verify:{args.suite}", "method": "property suite"}]
    if args.format == "csv":
        keys = list(results[0].keys())
        text = to_csv(keys, [[r.get(k) for k in keys] for r in results])
    else:
        value = {"passed": len(results) - failed, "failed": failed, "cases": results}
        params = {"suite": args.suite, "cases": cases, "trials": args.trials}
        text = to_json(record(f"verify:{args.suite}", value, "property suite", params, args.seed)) + "\n"
    return text, outputs, EXIT_VIOLATION if failed else EXIT_OK


def cmd_iterate(args) -> tuple[str, list, int]:
    try:
        source = args.experiment
        spec = json.loads(Path(source).read_text() if Path(source).exists() else source)
        result = run_experiment(spec)
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad experiment: {exc}") from exc
    outputs = [{"quantity": "km_trace", "method": "krasnoselskii-mann"}]
    ok = all(c["holds"] for c in result["certificates"]) and result["residuals_nonincreasing"]
    if args.format == "csv":
        text = to_csv(["k", "residual"], [[k, r] for k, r in enumerate(result["residuals"])])
        for c in result["certificates"]:
            text += f"# {c['kind']},{fmt_float(c['value'])},{_cell(c['holds'])}\n"
    else:
        text = to_json(record("km_trace", result, "krasnoselskii-mann", spec, None)) + "\n"
    return text, outputs, EXIT_OK if ok else EXIT_VIOLATION


COMMANDS = {
    "rate": cmd_rate,
    "ctable": cmd_ctable,
    "envelope": cmd_envelope,
    "sharpness": cmd_sharpness,
    "verify": cmd_verify,
    "iterate": cmd_iterate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kmrate", description="KM iteration rate bounds and their numerical checks")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, fmt="json"):
        p.add_argument("--seed", type=lambda v: int(v, 0), default=0, help="RNG seed (decimal or 0x hex)")
        p.add_argument("--out", type=Path, help="write output here and a manifest next to it")
        p.add_argument("--manifest", type=Path, help="explicit manifest path")
        p.add_argument("--format", choices=("json", "csv"), default=fmt)

    p = sub.add_parser("rate", help="sqrt(S_n) P^n against 1/sqrt(pi)")
    p.add_argument("--schedule", required=True, help="const:A | two-block:M,U | uniform-random[:LEN] | file:PATH")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--method", choices=("recursion", "exact", "mc"), default="exact")
    p.add_argument("--trials", type=int, default=100_000)
    common(p)

    p = sub.add_parser("ctable", help="triangle of c_mn bounds")
    p.add_argument("--schedule", required=True)
    p.add_argument("--n", type=int, required=True, help="n_max")
    p.add_argument("--check", action="store_true", help="append the recurrence residual")
    p.add_argument("--table-method", choices=("reference", "fast"), default="reference")
    common(p, "csv")

    p = sub.add_parser("envelope", help="h(z) on a log grid")
    p.add_argument("--z-min", type=float, default=0.01)
    p.add_argument("--z-max", type=float, default=700.0)
    p.add_argument("--points", type=int, default=200)
    common(p, "csv")

    p = sub.add_parser("sharpness", help="l1 shift lower-bound example")
    p.add_argument("--m", default="1,10,100,500", help="comma separated m values")
    p.add_argument("--u", type=float, default=None, help="default: eta-optimal u")
    common(p, "csv")

    p = sub.add_parser("verify", help="run a property suite")
    p.add_argument("suite", choices=tuple(SUITES))
    p.add_argument("--cases", type=int, default=None)
    p.add_argument("--trials", type=int, default=100_000, help="Monte Carlo trials (triple_agreement)")
    common(p)

    p = sub.add_parser("iterate", help="run KM from a JSON experiment description")
    p.add_argument("experiment", help="JSON file or inline JSON")
    common(p)

    p = sub.add_parser("replay", help="re-run a manifest and compare output bytes")
    p.add_argument("manifest_file", type=Path)
    return parser


def _execute(argv: list[str]) -> tuple[argparse.Namespace, str, list, int]:
    args = build_parser().parse_args(argv)
    text, outputs, code = COMMANDS[args.command](args)
    return args, text, outputs, code


def _replay(path: Path) -> int:
    try:
        manifest = json.loads(path.read_text())
        argv = manifest["argv"]
    except (OSError, ValueError, KeyError) as exc:
        sys.stderr.write(f"bad manifest: {exc}\n")
        return EXIT_USAGE
    try:
        _, text, _, code = _execute(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        sys.stderr.write(f"kmrate: error: {exc}\n")
        return EXIT_USAGE
    digest = hashlib.sha256(text.encode()).hexdigest()
    same = digest == manifest.get("output_sha256")
    sys.stdout.write(to_json({"manifest": str(path), "reproduced": same, "output_sha256": digest}) + "\n")
    return code if same else EXIT_VIOLATION


def _strip_io(argv: list[str]) -> list[str]:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a in ("--out", "--manifest"):
            skip = True
            continue
        if a.startswith(("--out=", "--manifest=")):
            continue
        out.append(a)
    return out


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "replay":
        args = build_parser().parse_args(argv)
        return _replay(args.manifest_file)
    try:
        args, text, outputs, code = _execute(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        sys.stderr.write(f"kmrate: error: {exc}\n")
        return EXIT_USAGE
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    manifest_path = args.manifest or (args.out.with_name(args.out.name + ".manifest.json") if args.out else None)
    params = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in ("out", "manifest")}
    manifest = {
        "subcommand": args.command,
        "params": params,
        "argv": _strip_io(argv),
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "outputs": outputs,
        "output_file": str(args.out) if args.out else None,
        "output_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "exit_code": code,
    }
    if manifest_path is None:
        sys.stderr.write(to_json(manifest) + "\n")
    else:
        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        manifest_path.write_text(to_json(manifest) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
