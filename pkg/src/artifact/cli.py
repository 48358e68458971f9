"""Command line: ``gen``, ``solve``, ``verify`` and ``bench``.

Exit codes: 0 success, 1 usage or I/O error (and failed verification),
2 LP infeasibility certificate, 3 size guard exceeded, 4 randomized step
failed.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io as _io
import json
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from . import generators
from .balancing import graph_to_instance, solve_balance
from .canonical import CanonicalInstance
from .instance import Instance, InstanceError, as_fraction, value
from .io import (
    ParseError,
    allocation_from_doc,
    allocation_to_doc,
    canonical_from_doc,
    canonical_to_doc,
    dumps,
    graph_from_doc,
    graph_to_doc,
    instance_from_doc,
    instance_to_doc,
    num_out,
    read_document,
    write_document,
)
from .layered_lp import LPError, LPGuardExceeded
from .oracles import GuardExceeded, brute_force_opt, solve_vector_enumeration
from .pipeline import achieved_alpha, canonical_value, solve_layered_instance
from .rounding import RoundingError, solve, verify_canonical_allocation

__all__ = ["main", "RunReport", "CSV_COLUMNS", "EXIT_OK", "EXIT_USAGE", "EXIT_CERTIFICATE", "EXIT_GUARD", "EXIT_RETRY"]

EXIT_OK, EXIT_USAGE, EXIT_CERTIFICATE, EXIT_GUARD, EXIT_RETRY = 0, 1, 2, 3, 4

# frozen bench schema; append new columns at the end only
CSV_COLUMNS = ("suite", "instance", "mode", "value", "oracle_value", "ratio", "seconds", "status")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which is reserved for certificates here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


@dataclass
class RunReport:
    command: str
    parameters: dict
    digest: str
    seed: int
    value: str | None = None
    status: str = "ok"
    trace: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_doc(self) -> dict:
        return {
            "command": self.command, "parameters": self.parameters, "instance_digest": self.digest,
            "seed": self.seed, "value": self.value, "status": self.status,
            "trace": sorted(self.trace, key=lambda r: r.get("iteration", 0)),
            "extra": self.extra, "seconds": round(self.seconds, 6),
        }


def digest(doc: dict) -> str:
    """sha256 of the compact, key-sorted document; independent of platform and whitespace."""
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode("ascii")).hexdigest()


def _json_default(x):
    if isinstance(x, Fraction):
        return num_out(x)
    if isinstance(x, (set, frozenset, tuple)):
        return list(x)
    return str(x)


def _emit(doc: dict, out=None) -> None:
    text = json.dumps(doc, indent=1, sort_keys=True, default=_json_default) + "\n"
    (out or sys.stdout).write(text)


def _load(path: str):
    """(kind, object, raw document) for an instance, canonical instance or graph file."""
    doc = read_document(path)
    kind = doc.get("kind")
    if kind is None:
        kind = "canonical" if "light_agents" in doc else "graph" if "edges" in doc else "instance"
    if kind == "instance":
        return kind, instance_from_doc(doc), doc
    if kind == "canonical":
        return kind, canonical_from_doc(doc), doc
    if kind == "graph":
        return kind, graph_from_doc(doc), doc
    raise ParseError(f"{path}: unknown document kind {kind!r}")


# ---------------------------------------------------------------- gen

def parse_cnf(text: str) -> list[list[int]]:
    """DIMACS CNF; the ``p cnf`` header is optional."""
    clauses, cur = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line[0] in "cp%":
            continue
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise ParseError(f"CNF line {lineno}: {tok!r} is not a literal") from None
            if lit == 0:
                if cur:
                    clauses.append(cur)
                cur = []
            else:
                cur.append(lit)
    if cur:
        clauses.append(cur)
    if not clauses:
        raise ParseError("CNF has no clauses")
    return clauses


def cmd_gen(args) -> int:
    if args.kind == "random":
        doc = instance_to_doc(generators.gen_random(args.m, args.n, args.density, args.max_utility, args.seed))
    elif args.kind == "restricted":
        doc = instance_to_doc(generators.gen_restricted(args.m, args.n, args.max_utility, args.seed))
    elif args.kind == "gap":
        if args.M is None:
            raise UsageError("gen gap needs --M")
        ci, _ = generators.gen_gap_instance(int(as_fraction(args.M)))
        doc = canonical_to_doc(ci)
    elif args.kind == "planted":
        ci, _ = generators.gen_planted_canonical(args.seed, n_terminals=args.terminals, N=args.N,
                                                 terminal_noise=False)
        doc = canonical_to_doc(ci)
    else:  # hardness
        if args.cnf:
            formula = parse_cnf(Path(args.cnf).read_text(encoding="utf-8"))
        else:
            formula = generators.random_formula(args.clauses, args.seed)
        doc = graph_to_doc(generators.gen_hardness_instance(formula))
    if args.out:
        write_document(args.out, doc)
    else:
        sys.stdout.write(dumps(doc))
    return EXIT_OK


# ---------------------------------------------------------------- solve

def _two_restricted(inst: Instance) -> bool:
    return all(len(w) <= 2 for w in inst.by_item())


def _brute_affordable(inst: Instance) -> bool:
    size = 1
    for w in inst.by_item():
        size *= max(1, len(w))
    return size <= 10**5


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    kind, obj, raw = _load(args.instance)
    eps = as_fraction(args.epsilon)
    params = {"mode": args.mode, "epsilon": num_out(eps), "M": args.M, "alpha": args.alpha, "layers": args.layers}
    report = RunReport("solve", params, digest(raw), args.seed)
    trace_out = _trace_sink(args.trace)

    def on_trace(rec):
        if trace_out is not None:
            trace_out.write(json.dumps(rec, sort_keys=True, default=_json_default) + "\n")
            trace_out.flush()

    def on_model(j, model):
        if args.dump_lp:
            Path(f"{args.dump_lp}.{j}.lp" if j > 1 else args.dump_lp).write_text(model.to_lp_text(), encoding="utf-8")

    code = EXIT_OK
    alloc = None
    if kind == "canonical":
        if args.mode not in ("auto", "layered"):
            raise UsageError(f"mode {args.mode} does not apply to a canonical instance")
        ci: CanonicalInstance = obj
        res = solve(ci, eps, args.seed, args.layers, args.alpha, on_trace=on_trace, on_model=on_model)
        report.trace = res.trace
        report.extra["alpha"] = num_out(res.alpha)
        report.extra["h"] = res.h
        if res.certificate is not None:
            report.status = "infeasible"
            report.extra["certificate"] = {"verified": res.certificate.verified,
                                           "violation": res.certificate.violation,
                                           "rows": len(res.certificate.ray)}
            code = EXIT_CERTIFICATE
        else:
            alloc = res.allocation
            problems = verify_canonical_allocation(res.scaled, alloc, res.alpha_final)
            if problems:
                raise RoundingError("allocation failed re-verification: " + problems[0])
            report.value = num_out(canonical_value(ci, alloc))
            report.extra["alpha_final"] = num_out(res.alpha_final)
            report.extra["alpha_achieved"] = num_out(achieved_alpha(ci, alloc))
    else:
        inst = graph_to_instance(obj) if kind == "graph" else obj
        mode = args.mode
        if mode == "auto":
            mode = "balance" if _two_restricted(inst) else "brute" if _brute_affordable(inst) else "layered"
        report.extra["mode_used"] = mode
        if mode == "balance":
            v, alloc = solve_balance(inst, eps)
        elif mode == "brute":
            v, alloc = brute_force_opt(inst)
        elif mode == "vector":
            v, alloc = solve_vector_enumeration(inst)
        else:
            run = solve_layered_instance(inst, eps, args.M, args.seed, args.layers, args.alpha,
                                         on_trace=on_trace, on_model=on_model)
            report.trace = [dict(r, guess=num_out(g.M)) for g in run.guesses for r in g.trace]
            report.extra["guesses"] = [{"M": num_out(g.M), "status": g.status,
                                        "value": None if g.value is None else num_out(g.value)}
                                       for g in run.guesses]
            v, alloc = run.value, run.allocation
            if run.M is None and run.certificate is not None:
                report.status = "infeasible"
                report.extra["certificate"] = {"verified": run.certificate.verified}
                code = EXIT_CERTIFICATE
            if _brute_affordable(inst):
                report.extra["oracle_value"] = num_out(brute_force_opt(inst)[0])
        # never report a value that was not recomputed from the allocation
        check = value(inst, alloc)
        if check != v:
            raise InstanceError(f"solver claimed {v} but the allocation is worth {check}")
        report.value = num_out(check)
    if alloc is not None and args.out:
        write_document(args.out, allocation_to_doc(alloc, as_fraction(report.value) if report.value else None))
    report.seconds = time.perf_counter() - t0
    _emit(report.to_doc())
    return code


def _trace_sink(spec):
    if spec is None:
        return None
    if spec == "-":
        return sys.stderr
    return open(spec, "w", encoding="utf-8")


# ---------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    kind, obj, _ = _load(args.instance)
    failures = []
    try:
        alloc, claimed = allocation_from_doc(read_document(args.allocation))
    except ParseError as exc:
        _emit({"pass": False, "failures": [str(exc)]})
        return EXIT_USAGE
    alpha = as_fraction(args.alpha)
    if kind == "canonical":
        ci: CanonicalInstance = obj
        agents = set(ci.agents)
        for i, a in alloc.owner.items():
            if a not in agents:
                failures.append(f"item {i} goes to unknown agent {a}")
        failures += verify_canonical_allocation(ci, alloc, alpha)
        got = canonical_value(ci, alloc)
    else:
        inst = graph_to_instance(obj) if kind == "graph" else obj
        for i, a in alloc.owner.items():
            if not (0 <= i < inst.n):
                failures.append(f"item {i} does not exist")
            if not (0 <= a < inst.m):
                failures.append(f"item {i} goes to unknown agent {a}")
        if failures:
            _emit({"pass": False, "failures": failures})
            return EXIT_USAGE
        got = value(inst, alloc)
        if args.M is not None and got * alpha < as_fraction(args.M):
            failures.append(f"value {got} is below M/alpha = {as_fraction(args.M) / alpha}")
    if claimed is not None and claimed != got:
        failures.append(f"claimed value {claimed} but recomputed {got}")
    _emit({"pass": not failures, "value": num_out(got), "failures": failures})
    return EXIT_OK if not failures else EXIT_USAGE


# ---------------------------------------------------------------- bench

def _bench_rows(suite: str, seed: int, eps: Fraction) -> list[dict]:
    rows = []

    def row(name, mode, v, oracle, t, status="ok"):
        ratio = None if (v is None or not oracle) else Fraction(v) / Fraction(oracle)
        rows.append({"suite": suite, "instance": name, "mode": mode,
                     "value": "" if v is None else num_out(v),
                     "oracle_value": "" if oracle is None else num_out(oracle),
                     "ratio": "" if ratio is None else f"{float(ratio):.6f}",
                     "seconds": f"{t:.4f}", "status": status})

    if suite == "balance":
        for k in range(20):
            inst = generators.gen_restricted(3 + k % 3, 6 + k % 5, 20, seed + k)
            t = time.perf_counter()
            v, _ = solve_balance(inst, eps)
            dt = time.perf_counter() - t
            row(f"restricted-{seed + k}", "balance", v, brute_force_opt(inst)[0], dt)
    elif suite == "vector":
        for k in range(10):
            inst = generators.gen_random(3, 7, 0.6, 16, seed + k)
            t = time.perf_counter()
            v, _ = solve_vector_enumeration(inst)
            dt = time.perf_counter() - t
            row(f"random-{seed + k}", "vector", v, brute_force_opt(inst)[0], dt)
    elif suite == "gap":
        from .layered_lp import Infeasible, build_layered_graph, build_lp, solve_lp
        for M in (2, 3):
            ci, pa = generators.gen_gap_instance(M)
            t = time.perf_counter()
            sol = solve_lp(build_lp(build_layered_graph(ci, pa, 2)))
            dt = time.perf_counter() - t
            status = "lp-infeasible" if isinstance(sol, Infeasible) else "lp-feasible"
            # the integral optimum of the gap family is 1 (checked by brute force in the test suite)
            row(f"gap-{M}", "layered-lp", M, 1, dt, status)
    elif suite == "pipeline":
        for k in range(10):
            ci, _ = generators.gen_planted_canonical(seed + k, n_terminals=1 + k % 2, N=24 if k % 2 else 40,
                                                     terminal_noise=False)
            t = time.perf_counter()
            res = solve(ci, h=1, alpha=2, seed=seed + k)
            dt = time.perf_counter() - t
            if res.certificate is not None:
                row(f"planted-{seed + k}", "layered", None, ci.M, dt, "certificate")
            else:
                row(f"planted-{seed + k}", "layered", canonical_value(ci, res.allocation), ci.M, dt)
    else:
        raise UsageError(f"unknown suite {suite!r}; choose balance, vector, gap or pipeline")
    return rows


def cmd_bench(args) -> int:
    if not args.suite:
        raise UsageError("bench needs a suite name")
    rows = _bench_rows(args.suite, args.seed, as_fraction(args.epsilon))
    widths = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in CSV_COLUMNS}
    out = [" ".join(c.ljust(widths[c]) for c in CSV_COLUMNS)]
    out += [" ".join(str(r[c]).ljust(widths[c]) for c in CSV_COLUMNS) for r in rows]
    sys.stdout.write("\n".join(out) + "\n")
    if args.out:
        buf = _io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="maxmin", description="Max-Min allocation solvers, generators and checkers.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen", help="write a generated instance")
    g.add_argument("kind", choices=["random", "restricted", "gap", "hardness", "planted"])
    g.add_argument("--m", type=int, default=3)
    g.add_argument("--n", type=int, default=6)
    g.add_argument("--density", type=float, default=0.6)
    g.add_argument("--max-utility", type=int, default=10)
    g.add_argument("--M")
    g.add_argument("--N", type=int, default=24)
    g.add_argument("--terminals", type=int, default=1)
    g.add_argument("--cnf")
    g.add_argument("--clauses", type=int, default=2)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")

    s = sub.add_parser("solve", help="solve an instance and print a run report")
    s.add_argument("instance")
    s.add_argument("--epsilon", default="1/2")
    s.add_argument("--M")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--mode", choices=["auto", "layered", "balance", "brute", "vector"], default="auto")
    s.add_argument("--alpha")
    s.add_argument("--layers", type=int, help="number of layers h (default ceil(8/epsilon))")
    s.add_argument("--dump-lp", help="write each iteration's LP in LP text format")
    s.add_argument("--trace", nargs="?", const="-", help="per-iteration records as JSON lines (default stderr)")
    s.add_argument("--out", help="write the allocation here")

    v = sub.add_parser("verify", help="check an allocation exactly")
    v.add_argument("instance")
    v.add_argument("allocation")
    v.add_argument("--alpha", default="1")
    v.add_argument("--M")

    b = sub.add_parser("bench", help="run a benchmark suite")
    b.add_argument("suite", nargs="?", default="")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--epsilon", default="1/20")
    b.add_argument("--out", help="CSV output path")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("choose a command: gen, solve, verify or bench")
        if getattr(args, "alpha", None) is not None and args.command == "solve":
            args.alpha = as_fraction(args.alpha)
        return {"gen": cmd_gen, "solve": cmd_solve, "verify": cmd_verify, "bench": cmd_bench}[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GuardExceeded, LPGuardExceeded) as exc:
        print(f"guard exceeded: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except RoundingError as exc:
        print(f"randomized step failed: {exc}", file=sys.stderr)
        return EXIT_RETRY
    except (InstanceError, LPError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
