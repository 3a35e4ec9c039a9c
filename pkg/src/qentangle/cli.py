"""Command-line front end: ``qentangle {analyze,sdis,distinguish,complexity,verify}``.

Exit codes: 0 success, 1 invalid input, 2 size limit exceeded, 3 a verify
suite failed. Reports are JSON (sorted keys, no timestamps), CSV or a plain
table, written to stdout or ``--out DIR/<command>.<ext>``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .descriptive import qca, sqcd, trivial_upper_bound
from .distinguish import DistinguisherSpec, build_reversal_distinguisher, embed_prefix, worst_case_advantage
from .errors import CapabilityError, NotDefinedError
from .qcircuit import ENCODING_VERSION, ENSEMBLES, GATE_SET_ID, circuit_from_json, encoding_length
from .qstate import Qustring, average_entropy, state_from_json, state_to_json
from .separability import DEFAULT_RESTARTS, DEFAULT_SEED, classify_closeness, finest_factorization, sdis
from .verify import SUITES, run_suites

THREADS_ENV = "QENTANGLE_THREADS"
CSV_COLUMNS = {
    "analyze": ["n", "k", "sind", "average_entropy", "sdis"],
    "sdis": ["n", "k", "sdis", "overlap", "partition"],
    "distinguish": ["n", "k", "sdis", "epsilon_star", "bound_checks"],
    "complexity": ["n", "k", "kind", "value_bits", "metric", "exhaustive"],
    "verify": ["suite", "passed", "cases", "detail"],
}


class InputError(ValueError):
    pass


def _parse_ns(text: str | None) -> list:
    if text is None:
        return []
    out = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _read_json(path: str, what: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {what} file {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _targets(args) -> list:
    """``(label_n, state, ensemble_name)`` for every requested input."""
    if args.state:
        return [(None, state_from_json(_read_json(args.state, "state")), None)]
    if not args.ensemble:
        raise InputError("give --state FILE or --ensemble NAME with --n")
    if args.ensemble not in ENSEMBLES:
        raise InputError(f"unknown ensemble {args.ensemble!r}; choose from {', '.join(sorted(ENSEMBLES))}")
    ns = _parse_ns(args.n)
    if not ns:
        raise InputError("--ensemble needs --n (e.g. 4, 2-5 or 2,4)")
    spec = ENSEMBLES[args.ensemble]
    return [(n, spec(n), args.ensemble) for n in ns]


def _ks(args, state: Qustring) -> list:
    if args.k is not None:
        return _parse_ns(args.k)
    return [2] if state.n >= 2 else []


def _analyze(args) -> list:
    rows = []
    for label, phi, _ in _targets(args):
        rep = finest_factorization(phi)
        row = {
            "n": phi.n,
            "ensemble_n": label,
            "sind": rep.sind,
            "finest_partition": rep.finest_partition.to_json(),
            "average_entropy": average_entropy(phi) if phi.n >= 2 else 0.0,
            "sdis": {},
        }
        for k in _ks(args, phi):
            row["sdis"][str(k)] = sdis(phi, k, restarts=args.restarts, seed=args.seed, threads=args.threads).value
            if args.delta is not None:
                c = classify_closeness(phi, k, args.delta, restarts=args.restarts, seed=args.seed)
                row.setdefault("closeness", {})[str(k)] = c.label
        rows.append(row)
    return rows


def _sdis(args) -> list:
    rows = []
    for label, phi, _ in _targets(args):
        for k in _ks(args, phi):
            res = sdis(phi, k, restarts=args.restarts, seed=args.seed, threads=args.threads)
            rows.append(
                {
                    "n": phi.n,
                    "ensemble_n": label,
                    "k": k,
                    "sdis": res.value,
                    "overlap": res.overlap,
                    "partition": res.partition.to_json(),
                    "converged": res.converged,
                    "nearest": state_to_json(res.nearest),
                }
            )
    return rows


def _distinguisher_for(args, label, phi, ens, k):
    if args.circuit:
        c = circuit_from_json(_read_json(args.circuit, "circuit"))
        if c.inputs != phi.n:
            raise InputError(f"circuit has {c.inputs} inputs, target has {phi.n} qubits")
        return embed_prefix(DistinguisherSpec(c, phi.n, k), k), "circuit"
    if ens is None or ENSEMBLES[ens].constructor is None:
        raise InputError("distinguish needs --circuit or an ensemble with a constructor")
    return embed_prefix(build_reversal_distinguisher(ENSEMBLES[ens].constructor(label), k), k), "reversal"


def _distinguish(args) -> list:
    rows = []
    for label, phi, ens in _targets(args):
        for k in _ks(args, phi):
            d, kind = _distinguisher_for(args, label, phi, ens, k)
            rep = worst_case_advantage(d, phi, restarts=args.restarts, seed=args.seed, threads=args.threads)
            s = sdis(phi, k, restarts=args.restarts, seed=args.seed, threads=args.threads).value
            checks = {
                "eps_le_sdis": rep.epsilon_star <= s + 1e-9,
                "eps_ge_sdis_sq": kind != "reversal" or rep.epsilon_star >= s * s - 1e-3,
            }
            rows.append(
                {
                    "n": phi.n,
                    "ensemble_n": label,
                    "k": k,
                    "distinguisher": kind,
                    "size": d.size,
                    "encoding_bits": encoding_length(d.circuit),
                    "sdis": s,
                    "epsilon_star": rep.epsilon_star,
                    "report": rep.to_json(),
                    "bound_checks": ";".join(f"{key}:{'pass' if v else 'fail'}" for key, v in sorted(checks.items())),
                }
            )
    return rows


def _complexity(args) -> list:
    rows = []
    size = args.size_bound if args.size_bound is not None else 3
    for label, phi, _ in _targets(args):
        for kind, fn in (("QCA", lambda: qca(phi, size)), ("QCA-trivial-bound", lambda: trivial_upper_bound(phi))):
            try:
                row = fn().to_json()
            except NotDefinedError as exc:
                row = {"value_bits": None, "metric": None, "exhaustive": None, "undefined": str(exc)}
            row.update({"n": phi.n, "ensemble_n": label, "k": None, "kind": kind})
            rows.append(row)
        for k in _ks(args, phi):
            try:
                est = sqcd(phi, k, size, restarts=args.restarts, seed=args.seed)
                row = est.to_json()
            except NotDefinedError as exc:
                row = {"kind": "sQCD", "value_bits": None, "metric": None, "exhaustive": None, "undefined": str(exc)}
            row.update({"n": phi.n, "ensemble_n": label, "k": k})
            rows.append(row)
    return rows


def _verify(args) -> list:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    for name in names:
        if name not in SUITES:
            raise InputError(f"unknown suite {name!r}; choose from all, {', '.join(SUITES)}")
    return run_suites(names, args.seed)


COMMANDS = {
    "analyze": _analyze,
    "sdis": _sdis,
    "distinguish": _distinguish,
    "complexity": _complexity,
    "verify": _verify,
}


def _render(command: str, report: dict, fmt: str) -> str:
    rows = report["results"]
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2) + "\n"
    cols = CSV_COLUMNS[command]
    tool, cfg = report["tool"], report["config"]
    banner = (
        f"# qentangle {tool['version']} gate_set={tool['gate_set']} encoding={tool['encoding']} "
        f"seed={cfg['seed']} restarts={cfg['restarts']} threads={cfg['threads']}\n"
    )
    if fmt == "csv":
        buf = io.StringIO(banner)
        buf.seek(len(banner))
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            if command == "analyze":
                for k, v in sorted(r["sdis"].items()) or [("", "")]:
                    w.writerow([r["n"], k, r["sind"], r["average_entropy"], v])
            else:
                w.writerow([_cell(r.get(c)) for c in cols])
        return buf.getvalue()
    lines = [banner.rstrip("\n"), "  ".join(cols)]
    for r in rows:
        if command == "analyze":
            lines.append(f"{r['n']}  -  {r['sind']}  {r['average_entropy']:.6f}  {json.dumps(r['sdis'], sort_keys=True)}")
        else:
            lines.append("  ".join(_cell(r.get(c)) for c in cols))
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True)
    return "" if v is None else str(v)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qentangle", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qentangle {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--ensemble", help="built-in ensemble: " + ", ".join(sorted(ENSEMBLES)))
        p.add_argument("--n", help="ensemble index: 4, 2-5 or 2,3,5")
        p.add_argument("--state", help="state JSON file")
        p.add_argument("--circuit", help="circuit JSON file (payload distinguisher)")
        p.add_argument("--k", help="separability parameter(s), default 2")
        p.add_argument("--delta", type=float, help="closeness threshold")
        p.add_argument("--size-bound", type=int, dest="size_bound", help="gate budget for complexity search")
        p.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--format", choices=("json", "csv", "table"), default="json")
        p.add_argument("--out", help="directory for the report file")
        if name == "verify":
            p.add_argument("--suite", default="all", help="suite id or 'all'")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is None:
        env = os.environ.get(THREADS_ENV)
        try:
            args.threads = max(1, int(env)) if env else 1
        except ValueError:
            print(f"error: {THREADS_ENV}={env!r} is not an integer", file=sys.stderr)
            return 1
    try:
        results = COMMANDS[args.command](args)
    except CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return 2
    except (InputError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    config = {
        "command": args.command,
        "ensemble": args.ensemble,
        "n": args.n,
        "state": args.state,
        "circuit": args.circuit,
        "k": args.k,
        "delta": args.delta,
        "size_bound": args.size_bound,
        "restarts": args.restarts,
        "seed": args.seed,
        "threads": args.threads,
    }
    if args.command == "verify":
        config["suite"] = args.suite
    report = {
        "tool": {"name": "qentangle", "version": __version__, "gate_set": GATE_SET_ID, "encoding": ENCODING_VERSION},
        "config": config,
        "results": results,
    }
    text = _render(args.command, report, args.format)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        ext = {"json": "json", "csv": "csv", "table": "txt"}[args.format]
        (out / f"{args.command}.{ext}").write_text(text)
    else:
        sys.stdout.write(text)
    if args.command == "verify" and not all(r["passed"] for r in results):
        return 3
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
