"""Command-line front end: project graphs, identify queries, verify verdicts,
generate witnesses.

Exit codes: 0 an answer was produced (identification failures are answers),
1 usage error, 2 internal error.  The environment variable ``SSID_SEED``
overrides ``--seed``.  Output is byte-identical for identical inputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import oracle
from .estimand import render as render_estimand
from .graph import Graph, GraphError
from .identify import (
    DatasetSpec,
    Identified,
    identify,
    identify_fused,
    identify_selected,
    selected_g_formula,
    sequential_baseline,
)
from .lsg import ParseError, parse_graph, parse_query, render_graph
from .projection import latent_project


class UsageError(ValueError):
    pass


def _load_graph(path: str) -> Graph:
    try:
        return parse_graph(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}")
    except ParseError as exc:
        raise UsageError(f"{path}: {exc}")


def _failure_payload(result) -> dict:
    payload = {"identified": False, "failure": result.kind}
    for field in ("district", "closure"):
        if hasattr(result, field):
            payload[field] = sorted(getattr(result, field))
    if getattr(result, "tried", None):
        payload["tried"] = [list(t) if not isinstance(t, str) else t for t in result.tried]
    return payload


def _run_algorithm(name: str, g: Graph, query, datasets):
    if name == "id":
        return identify(g, query)
    if name == "gid":
        if not datasets:
            raise UsageError("--algorithm gid needs at least one --dataset")
        return identify_fused(g, datasets, query)
    if name == "csg":
        return selected_g_formula(g, query)
    if name == "ssid":
        return identify_selected(g, query)
    if name == "baseline":
        return sequential_baseline(g, query)
    raise UsageError(f"unknown algorithm {name!r}")


def _pick_algorithm(args, g: Graph) -> str:
    if args.algorithm != "auto":
        return args.algorithm
    if getattr(args, "dataset", None):
        return "gid"
    return "ssid" if g.selector is not None else "id"


def _datasets(args) -> list:
    out = []
    for i, path in enumerate(getattr(args, "dataset", None) or (), start=1):
        g = _load_graph(path)
        out.append(DatasetSpec(f"p{i}", g.fixed, g))
    return out


def _frac(x) -> str:
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    return str(x)


def _value_key(v) -> str:
    if isinstance(v, tuple):  # composite selector value
        pattern, vals = v
        inner = ", ".join(f"{c}={x}" for c, x in zip(pattern, vals))
        return f"({inner})"
    return str(v)


def _model_payload(m: oracle.DiscreteCsScm) -> dict:
    cpts = {}
    for v, (parents, rows) in sorted(m.cpts.items()):
        entries = []
        for pa_vals in sorted(rows, key=repr):
            dist = rows[pa_vals]
            entries.append(
                {
                    "given": {p: _value_key(x) for p, x in zip(parents, pa_vals)},
                    "dist": {_value_key(k): _frac(p) for k, p in sorted(dist.items(), key=lambda kv: repr(kv[0]))},
                }
            )
        cpts[v] = {"parents": list(parents), "rows": entries}
    return {
        "vertices": sorted(m.graph.vertices),
        "latent": sorted(m.graph.latent),
        "selector": m.selector,
        "cpts": cpts,
    }


def cmd_project(args) -> int:
    g = _load_graph(args.graph)
    keep = (
        frozenset(args.keep.split(","))
        if args.keep
        else g.vertices - g.latent
    )
    from .projection import derive_labels

    if not any(e.label for e in g.edges) and g.selector is not None:
        g = derive_labels(g)
    proj = latent_project(g, keep)
    sys.stdout.write(render_graph(proj))
    return 0


def cmd_identify(args) -> int:
    g = _load_graph(args.graph)
    query, wants_empty = parse_query(args.query, g.selector)
    if g.selector is not None and not wants_empty and args.algorithm in ("auto", "ssid", "csg", "baseline"):
        raise UsageError("selection queries must name the observational context: S=empty")
    datasets = _datasets(args)
    algorithm = _pick_algorithm(args, g)
    result = _run_algorithm(algorithm, g, query, datasets)
    if isinstance(result, Identified):
        if args.format == "json":
            payload = {
                "identified": True,
                "algorithm": algorithm,
                "estimand": json.loads(render_estimand(result.estimand, "json")),
            }
            print(json.dumps(payload, sort_keys=True, indent=2))
        else:
            print(render_estimand(result.estimand, args.format))
    else:
        payload = _failure_payload(result)
        payload["algorithm"] = algorithm
        print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def cmd_verify(args) -> int:
    g = _load_graph(args.graph)
    query, _ = parse_query(args.query, g.selector)
    datasets = _datasets(args)
    algorithm = _pick_algorithm(args, g)
    result = _run_algorithm(algorithm, g, query, datasets)
    dag = g if not any(e.kind == "bidirected" for e in g.edges) else None
    report = oracle.verify(
        g,
        query,
        g.support,
        result,
        trials=args.trials,
        seed=args.seed,
        dag=dag,
        datasets=[(d.name, d.intervened) for d in datasets] or None,
    )
    payload = report.to_jsonable()
    payload["algorithm"] = algorithm
    if not isinstance(result, Identified):
        payload["verdict"] = _failure_payload(result)
    print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def cmd_witness(args) -> int:
    g = _load_graph(args.graph)
    query, _ = parse_query(args.query, g.selector)
    algorithm = _pick_algorithm(args, g)
    result = _run_algorithm(algorithm, g, query, [])
    if isinstance(result, Identified):
        print(json.dumps({"identified": True, "witness": None}, sort_keys=True, indent=2))
        return 0
    payload = {"identified": False, "failure": result.kind}
    try:
        m1, m2 = oracle.parity_witness(g, query, result)
        payload["models"] = [_model_payload(m1), _model_payload(m2)]
    except oracle.OracleError as exc:
        # some failure kinds carry no constructible certificate by design
        payload["models"] = None
        payload["reason"] = str(exc)
    print(json.dumps(payload, sort_keys=True, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="selid",
        description="identification of interventional queries under systematic selection",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, query=True):
        p.add_argument("--graph", required=True, help=".lsg graph file")
        if query:
            p.add_argument("--query", required=True, help='e.g. "P(Y | do(A=a), S=empty)"')
            p.add_argument(
                "--algorithm",
                default="auto",
                choices=["auto", "id", "gid", "csg", "ssid", "baseline"],
            )
            p.add_argument("--dataset", action="append", help=".lsg CADMG per dataset (gid)")

    p = sub.add_parser("project", help="latent-project an LS-DAG")
    p.add_argument("--graph", required=True)
    p.add_argument("--keep", help="comma-separated vertices to keep")
    p.set_defaults(fn=cmd_project)

    p = sub.add_parser("identify", help="compute the identifying estimand")
    common(p)
    p.add_argument("--format", default="text", choices=["text", "latex", "json"])
    p.set_defaults(fn=cmd_identify)

    p = sub.add_parser("verify", help="check a verdict against the oracle")
    common(p)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("witness", help="dump an agreement pair for a failure")
    common(p)
    p.set_defaults(fn=cmd_witness)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    if "SSID_SEED" in os.environ and hasattr(args, "seed"):
        args.seed = int(os.environ["SSID_SEED"])
    try:
        return args.fn(args)
    except UsageError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 1
    except ParseError as exc:
        print(json.dumps({"error": "parse", "message": str(exc)}), file=sys.stderr)
        return 1
    except GraphError as exc:
        # violated input contracts (bad query/graph/algorithm combination)
        print(json.dumps({"error": "input", "message": str(exc)}), file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
