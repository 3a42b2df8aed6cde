"""Command line interface: gen, radius, underestimate, solve, bench."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bnb import BnbError, BnbOptions, Strategy, brute_force, cr_bound, minimize, Subproblem
from .bounds import Definiteness, NormBoundError, NormBoundReport, compute_norm_bound
from .instances import InstanceSpec, generate_instance
from .poly import ParseError, Polynomial, format_poly, parse_with_inferred_n, read_poly_file
from .underest import (
    DELTA_SAFETY,
    EXACT,
    UnderestimateResult,
    choose_h,
    quality_ratio,
    solve_glob,
    solve_sls,
)

log = logging.getLogger("intpolymin")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_PSD = 2
EXIT_UNDECIDED = 3

RECORD_SCHEMA = "intpolymin.run/1"
CSV_VERSION = "# intpolymin-bench v1"
CSV_FIELDS = ["seed", "n", "d", "strategy", "R", "R_lit", "bound", "Q", "u", "x_star",
              "nodes", "time", "status"]


def load_poly(source: str, n: int | None = None) -> Polynomial:
    """A file path or a literal in the term-list grammar."""
    if os.path.exists(source):
        return read_poly_file(source, n)
    return parse_with_inferred_n(source, n)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serialisable: {type(obj).__name__}")


def dumps(data) -> str:
    return json.dumps(data, indent=2, default=_json_default)


# ---------------------------------------------------------------------------
# run records


@dataclass
class RunRecord:
    instance: str
    polynomial: str
    n: int
    d: int
    p: int
    status: str
    R: float | None = None
    R_lit: float | None = None
    c: list[float] | None = None
    h: list[float] | None = None
    bounds: dict[str, float] = field(default_factory=dict)
    quality: dict[str, float | str] = field(default_factory=dict)
    results: dict[str, dict] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["schema"] = RECORD_SCHEMA
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        data = dict(data)
        if data.pop("schema", RECORD_SCHEMA) != RECORD_SCHEMA:
            raise ValueError("unknown record schema")
        return cls(**data)


def _fit(f: Polynomial, h, strategy: Strategy, z: float | None, sigma_deg: int,
         safety: float) -> UnderestimateResult:
    if strategy == Strategy.GLOB:
        return solve_glob(f, h, safety=safety)
    return solve_sls(f, h, z=z, k=sigma_deg, safety=safety)


def run_pipeline(f: Polynomial, strategies: list[Strategy], p: int = 2, k_max: int | None = None,
                 sigma_deg: int = 2, safety: float = DELTA_SAFETY, time_limit: float | None = 300.0,
                 z: float | None = None, instance: str = "", report: NormBoundReport | None = None
                 ) -> tuple[RunRecord, NormBoundReport]:
    """Certify, bound the radius, fit underestimators and minimise."""
    if report is None:
        report = compute_norm_bound(f, p, k_max)
    rec = RunRecord(instance, format_poly(f), f.n, f.degree, p, report.definite.value,
                    report.R, report.R_lit, None if report.c is None else report.c.values.tolist())
    if report.definite != Definiteness.CERTIFIED_POSITIVE:
        return rec, report
    R = report.R
    h = choose_h(f, R)
    rec.h = [float(v) for v in h]
    opts = BnbOptions(safety=safety, time_limit=time_limit)
    for strat in strategies:
        t0 = time.perf_counter()
        try:
            if strat in (Strategy.GLOB, Strategy.SLS):
                fit = _fit(f, h, strat, z, sigma_deg, safety)
                if not fit.ok:
                    rec.results[strat.value] = {"status": f"Underestimator{fit.status.value}"}
                    continue
                rec.bounds[strat.value] = fit.lower_bound
                res = minimize(f, h, R, p, fit.g, strat, opts)
            elif strat == Strategy.CR:
                root = cr_bound(Subproblem(0, ()), f)
                if root is not None:
                    rec.bounds[strat.value] = root - safety
                res = minimize(f, h, R, p, None, strat, opts)
            else:
                res = brute_force(f, R, p)
        except BnbError as exc:
            rec.results[strat.value] = {"status": "Error", "message": str(exc)}
            continue
        out = res.to_dict()
        out["wall_time"] = time.perf_counter() - t0
        rec.results[strat.value] = out
    solved = [r for r in rec.results.values() if r.get("status") == "Optimal"]
    if solved:
        x_star = solved[0]["x_star"]
        for name, b in rec.bounds.items():
            rec.quality[name] = quality_ratio(f, h, b, x_star)
    return rec, report


# ---------------------------------------------------------------------------
# commands


def _print_report(report: NormBoundReport, out) -> None:
    print(f"status: {report.definite.value}", file=out)
    if report.c is not None:
        cs = ", ".join(f"{e.value:.4g} [{e.provenance.value}]" for e in report.c.entries)
        print(f"c: {cs}", file=out)
    if report.R is not None:
        print(f"R = {report.R:.6g}   box = [-{report.box_radius}, {report.box_radius}]^n", file=out)
        print(f"R_lit = {report.R_lit:.6g}", file=out)
    if report.witness is not None:
        print(f"witness with negative leading form: {report.witness}", file=out)
    if report.definite == Definiteness.UNDECIDED:
        print("cannot decide positive definiteness of the leading form up to kmax", file=out)


def _write_json(path: str | None, data) -> None:
    if not path:
        return
    text = dumps(data)
    if path == "-":
        print(text)
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def _exit_for(report: NormBoundReport) -> int:
    return {Definiteness.CERTIFIED_POSITIVE: EXIT_OK, Definiteness.CERTIFIED_NOT_PSD: EXIT_NOT_PSD,
            Definiteness.UNDECIDED: EXIT_UNDECIDED}[report.definite]


def _structured_error(args, exc: NormBoundError) -> int:
    print(f"error: {exc}", file=sys.stderr)
    _write_json(args.json, {"schema": "intpolymin.error/1", "status": exc.status, "message": str(exc)})
    return EXIT_UNDECIDED


def cmd_gen(args) -> int:
    for i in range(args.count):
        spec = InstanceSpec(args.n, args.d, args.seed + i)
        f = generate_instance(spec)
        print(f"# {spec.ident}")
        print(format_poly(f))
    return EXIT_OK


def cmd_radius(args) -> int:
    f = load_poly(args.poly, args.n)
    try:
        report = compute_norm_bound(f, args.p, args.kmax, orthants=args.orthants)
    except NormBoundError as exc:
        return _structured_error(args, exc)
    _print_report(report, sys.stdout)
    _write_json(args.json, report.to_dict())
    return _exit_for(report)


def cmd_underestimate(args) -> int:
    f = load_poly(args.poly, args.n)
    try:
        report = compute_norm_bound(f, args.p, args.kmax)
    except NormBoundError as exc:
        return _structured_error(args, exc)
    if report.definite != Definiteness.CERTIFIED_POSITIVE:
        _print_report(report, sys.stdout)
        return _exit_for(report)
    h = np.asarray(args.h, dtype=float) if args.h else choose_h(f, report.R)
    strat = Strategy.from_name(args.strategy)
    if strat not in (Strategy.GLOB, Strategy.SLS):
        print("error: underestimate needs --strategy glob or sls", file=sys.stderr)
        return EXIT_ERROR
    fit = _fit(f, h, strat, args.z, args.sigma_deg, args.safety)
    print(f"h = {np.array2string(h, precision=6)}")
    print(f"status: {fit.status.value}")
    if fit.ok:
        print(f"lower bound g(round(h)) - delta = {fit.lower_bound:.8g}")
        for a, b in fit.g.b.items():
            print(f"  b{list(a)} = {b:.6g}")
    _write_json(args.json, fit.to_dict())
    return EXIT_OK if fit.ok else EXIT_ERROR


def cmd_solve(args) -> int:
    f = load_poly(args.poly, args.n)
    strat = Strategy.from_name(args.strategy)
    try:
        rec, report = run_pipeline(f, [strat], args.p, args.kmax, args.sigma_deg, args.safety,
                                   args.time_limit, args.z, instance=args.poly)
    except NormBoundError as exc:
        return _structured_error(args, exc)
    _print_report(report, sys.stdout)
    if report.definite != Definiteness.CERTIFIED_POSITIVE:
        _write_json(args.json, rec.to_dict())
        return _exit_for(report)
    res = rec.results[strat.value]
    print(f"strategy: {strat.value}  status: {res.get('status')}")
    if "x_star" in res:
        print(f"x* = {tuple(res['x_star'])}")
        print(f"u = {res['u']!r}")
        print(f"nodes = {res['nodes']}  prunes = {res['prunes']}  g-evals = {res['g_evals']}  "
              f"time = {res['wall_time']:.3f}s")
    _write_json(args.json, rec.to_dict())
    return EXIT_OK if res.get("status") == "Optimal" else EXIT_ERROR


def bench_rows(spec: InstanceSpec, strategies: list[Strategy], p: int, k_max: int | None,
               sigma_deg: int, safety: float, time_limit: float | None) -> list[dict]:
    f = generate_instance(spec)
    rows = []
    try:
        rec, _ = run_pipeline(f, strategies, p, k_max, sigma_deg, safety, time_limit, instance=spec.ident)
    except NormBoundError as exc:
        return [dict(seed=spec.seed, n=spec.n, d=spec.d, strategy=s.value, status=exc.status)
                for s in strategies]
    for s in strategies:
        res = rec.results.get(s.value, {})
        status = res.get("status", rec.status if rec.status != "CertifiedPositive" else "Skipped")
        if status == "TimeLimit":
            status = "Unsuccessful"
        q = rec.quality.get(s.value)
        rows.append(dict(
            seed=spec.seed, n=spec.n, d=spec.d, strategy=s.value, R=rec.R, R_lit=rec.R_lit,
            bound=rec.bounds.get(s.value), Q=q, u=res.get("u"),
            x_star=" ".join(map(str, res["x_star"])) if "x_star" in res else None,
            nodes=res.get("nodes"), time=res.get("wall_time"), status=status,
        ))
    return rows


def _bench_job(job):
    return bench_rows(*job)


def cmd_bench(args) -> int:
    strategies = [Strategy.from_name(s) for s in args.strategies.split(",")]
    jobs = []
    for n in args.n_list:
        for d in args.d_list:
            for i in range(args.count):
                jobs.append((InstanceSpec(n, d, args.seed + i), strategies, args.p, args.kmax,
                             args.sigma_deg, args.safety, args.time_limit))
    out = open(args.csv, "w", newline="") if args.csv and args.csv != "-" else sys.stdout
    try:
        out.write(CSV_VERSION + "\n")
        writer = csv.DictWriter(out, fieldnames=CSV_FIELDS, extrasaction="ignore")
        writer.writeheader()
        if args.workers > 1:
            with ProcessPoolExecutor(args.workers) as pool:
                for rows in pool.map(_bench_job, jobs):
                    writer.writerows(rows)
        else:
            for job in jobs:
                writer.writerows(_bench_job(job))
                out.flush()
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def read_bench_csv(text: str) -> list[dict]:
    lines = text.splitlines()
    if not lines or lines[0] != CSV_VERSION:
        raise ValueError("not a bench CSV of a known version")
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


# ---------------------------------------------------------------------------
# argument parsing


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="intpolymin", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, poly=True):
        if poly:
            sp.add_argument("poly", help="polynomial file or literal, e.g. 'x1^4 + x2^4 - x1'")
            sp.add_argument("--n", type=int, default=None, help="number of variables (default: inferred)")
        sp.add_argument("--p", type=int, default=2, help="even p of the norm ball")
        sp.add_argument("--kmax", type=int, default=None, help="largest multiplier degree (default d+2)")
        sp.add_argument("--json", default=None, help="write a JSON record here ('-' for stdout)")

    def fitting(sp):
        sp.add_argument("--sigma-deg", type=int, default=2, help="degree of the sublevel multiplier")
        sp.add_argument("--safety", type=float, default=DELTA_SAFETY, help="slack subtracted from bounds")
        sp.add_argument("--z", type=float, default=None, help="sublevel value (default f(round(h)))")

    g = sub.add_parser("gen", help="print seeded random instances")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=int, default=1)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("radius", help="certify the leading form and bound the minimisers")
    common(r)
    r.add_argument("--orthants", action="store_true", help="also report per-orthant radii")
    r.set_defaults(func=cmd_radius)

    u = sub.add_parser("underestimate", help="fit a cone(h) underestimator")
    common(u)
    fitting(u)
    u.add_argument("--strategy", default="sls", choices=["glob", "sls"])
    u.add_argument("--h", type=float, nargs="+", default=None, help="shift point (default: local minimiser)")
    u.set_defaults(func=cmd_underestimate)

    s = sub.add_parser("solve", help="minimise over the integers")
    common(s)
    fitting(s)
    s.add_argument("--strategy", default="sls", choices=["glob", "sls", "cr", "bf"])
    s.add_argument("--time-limit", type=float, default=300.0)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run seeded instances and write CSV rows")
    b.add_argument("--n", dest="n_list", type=_int_list, default=[2])
    b.add_argument("--d", dest="d_list", type=_int_list, default=[4])
    b.add_argument("--count", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--strategies", default="glob,sls,bf")
    b.add_argument("--p", type=int, default=2)
    b.add_argument("--kmax", type=int, default=None)
    b.add_argument("--time-limit", type=float, default=300.0)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--csv", default=None, help="output file (default stdout)")
    fitting(b)
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
