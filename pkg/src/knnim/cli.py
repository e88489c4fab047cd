"""Command-line interface.

Subcommands: ``focals``, ``test``, ``two-stage``, ``exposures``,
``recommend-k``, ``simulate``.  Randomized subcommands require an explicit
``--seed`` so every run is reproducible.  Exit codes: 0 on success, 2 for
input errors (bad files or flags), 3 for precondition violations.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import data, figures
from .errors import InputError, PreconditionError
from .focal import RANDOM_HALF, TWO_NET, select_focals_random_half, select_focals_two_net
from .randtest import BERNOULLI, COMPLETE, RandTestConfig, run_randomization_test
from .sim import MODEL_CATALOG, run_power_study
from .stats import STATISTIC_NAMES, with_partition
from .twostage import cluster_units, observed_two_stage


def _emit_json(payload: dict, out: str | None) -> None:
    payload = {"schema_version": data.SCHEMA_VERSION, **payload}
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _parse_scheme(text: str) -> tuple[str, float | None]:
    if text == COMPLETE:
        return COMPLETE, None
    if text.startswith(BERNOULLI + ":"):
        try:
            p = float(text.split(":", 1)[1])
        except ValueError:
            raise InputError(f"bad bernoulli probability in scheme {text!r}")
        return BERNOULLI, p
    raise InputError(f"scheme must be 'complete' or 'bernoulli:p', got {text!r}")


def _parse_models(text: str) -> list[int]:
    ids: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            try:
                ids.extend(range(int(lo), int(hi) + 1))
            except ValueError:
                raise InputError(f"bad model range {part!r}")
        elif part:
            try:
                ids.append(int(part))
            except ValueError:
                raise InputError(f"bad model id {part!r}")
    bad = [m for m in ids if m not in MODEL_CATALOG]
    if bad:
        raise InputError(f"model ids outside the catalog: {bad}")
    if not ids:
        raise InputError("no models given")
    return ids


def _parse_stats(text: str) -> tuple[str, ...]:
    if text == "all":
        return STATISTIC_NAMES
    names = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in names if s not in STATISTIC_NAMES]
    if bad:
        raise InputError(f"unknown statistics: {bad}; choose from {STATISTIC_NAMES}")
    return names


def _select_partition(graph, method: str, seed: int):
    if method == TWO_NET:
        return select_focals_two_net(graph, seed)
    return select_focals_random_half(graph.n, seed)


def _cmd_focals(args) -> int:
    graph = data.load_graph(args.graph, args.k, id_base=args.id_base)
    partition = _select_partition(graph, args.method, args.seed)
    rows = [
        (graph.label_of(i), 1 if i in partition.focal else 0) for i in range(graph.n)
    ]
    summary = {
        "n": graph.n,
        "k": graph.k,
        "method": partition.method,
        "seed": args.seed,
        "n_focal": partition.n_focal,
    }
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["unit", "is_focal"])
            writer.writerows(rows)
        _emit_json(summary, None)
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(["unit", "is_focal"])
        writer.writerows(rows)
        print(json.dumps({"schema_version": data.SCHEMA_VERSION, **summary}), file=sys.stderr)
    return 0


def _emit_report(payload: dict, args) -> None:
    if getattr(args, "format", "json") == "csv":
        _emit_csv_rows([payload], args.out)
    else:
        _emit_json(payload, args.out)


def _emit_csv_rows(rows: list[dict], out: str | None) -> None:
    target = open(out, "w", newline="") if out else sys.stdout
    try:
        writer = csv.DictWriter(target, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if out:
            target.close()


def _cmd_test(args) -> int:
    inp = data.ingest(args.graph, args.outcomes, args.treatment, args.k, id_base=args.id_base)
    partition = _select_partition(inp.graph, args.focal_method, args.seed)
    scheme, p = _parse_scheme(args.scheme)
    config = RandTestConfig(
        statistic=args.stat,
        seed=args.seed,
        n_randomizations=args.randomizations,
        scheme=scheme,
        bernoulli_p=p,
    )
    report = run_randomization_test(with_partition(inp, partition), config)
    _emit_report(report.to_dict(), args)
    return 0


def _cmd_two_stage(args) -> int:
    inp = data.ingest(args.graph, args.outcomes, args.treatment, args.k, id_base=args.id_base)
    clustering = cluster_units(inp.graph, args.cluster_size)
    result, n_mixed = observed_two_stage(
        inp.outcomes, inp.treatment.w, clustering, args.seed, args.alpha
    )
    payload = result.to_dict(args.alpha)
    payload.update(
        {
            "seed": args.seed,
            "cluster_size": args.cluster_size,
            "n_clusters": clustering.n_clusters,
            "n_mixed_clusters_dropped": n_mixed,
        }
    )
    _emit_report(payload, args)
    return 0


def _exposure_tables(graph_path, treatment_path, k_max, id_base):
    graph = data.load_graph(graph_path, k_max, id_base=id_base)
    treatment = data.align_treatment(treatment_path, graph)
    return {
        k: data.tabulate_exposures(graph, treatment, k)
        for k in range(1, k_max + 1)
    }


def _cmd_exposures(args) -> int:
    graph = data.load_graph(args.graph, args.k, id_base=args.id_base)
    treatment = data.align_treatment(args.treatment, graph)
    table = data.tabulate_exposures(graph, treatment, args.k)
    if args.format == "csv":
        _emit_csv_rows(table.as_rows(), args.out)
    else:
        _emit_json(table.to_dict(), args.out)
    if args.figure:
        figures.exposure_figure(table, args.figure)
    return 0


def _cmd_recommend_k(args) -> int:
    tables = _exposure_tables(args.graph, args.treatment, args.k_max, args.id_base)
    rec = data.recommend_k(tables, threshold=args.threshold)
    payload = rec.to_dict()
    payload["tables"] = {k: t.to_dict() for k, t in sorted(tables.items())}
    _emit_json(payload, args.out)
    return 0


def _cmd_simulate(args) -> int:
    models = _parse_models(args.models)
    stats = _parse_stats(args.stats)
    study = run_power_study(
        models,
        n=args.n,
        k=args.k,
        realizations=args.realizations,
        randomizations=args.randomizations,
        statistics=stats,
        seed=args.seed,
        alpha=args.alpha,
        include_two_stage=not args.no_two_stage,
        n_assignments=args.assignments,
        cluster_size=args.cluster_size,
        n_jobs=args.jobs,
    )
    out = Path(args.out)
    study.to_csv(out)
    _emit_json(study.to_dict(), str(out.with_suffix(".json")))
    written = [str(out), str(out.with_suffix(".json"))]
    if not args.no_figures:
        power_png = out.with_name(out.stem + "_power.png")
        pval_png = out.with_name(out.stem + "_pvalues.png")
        figures.power_figure(study, power_png)
        figures.pvalue_boxplot(study, pval_png)
        written += [str(power_png), str(pval_png)]
    print(json.dumps({"written": written}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="knnim",
        description="Interference detection under K-nearest-neighbor interference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(p, outcomes=True):
        p.add_argument("--graph", required=True, help="edge CSV (i,j,d or i,j,rank)")
        if outcomes:
            p.add_argument("--outcomes", required=True, help="outcome CSV (unit,y)")
        p.add_argument("--treatment", required=True, help="treatment CSV (unit,w)")
        p.add_argument("--id-base", type=int, choices=(0, 1), default=1)
        p.add_argument("--out", help="output path (default: stdout)")

    p = sub.add_parser("focals", help="select focal units")
    p.add_argument("--graph", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--method", choices=(TWO_NET, RANDOM_HALF), default=TWO_NET)
    p.add_argument("--id-base", type=int, choices=(0, 1), default=1)
    p.add_argument("--out", help="CSV path for unit,is_focal (default: stdout)")
    p.set_defaults(func=_cmd_focals)

    p = sub.add_parser("test", help="conditional randomization test")
    add_io(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--stat", choices=STATISTIC_NAMES, required=True)
    p.add_argument("--randomizations", type=int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--focal-method", choices=(TWO_NET, RANDOM_HALF), default=TWO_NET)
    p.add_argument("--scheme", default=COMPLETE, help="complete or bernoulli:p")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=_cmd_test)

    p = sub.add_parser("two-stage", help="two-stage design statistic on observed data")
    add_io(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--cluster-size", type=int, default=4)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=_cmd_two_stage)

    p = sub.add_parser("exposures", help="tabulate treatment exposures")
    add_io(p, outcomes=False)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--figure", help="optional PNG path for the exposure bar chart")
    p.set_defaults(func=_cmd_exposures)

    p = sub.add_parser("recommend-k", help="largest k with adequate exposure counts")
    add_io(p, outcomes=False)
    p.add_argument("--k-max", type=int, required=True)
    p.add_argument("--threshold", type=int, default=30)
    p.set_defaults(func=_cmd_recommend_k)

    p = sub.add_parser("simulate", help="run the synthetic power study")
    p.add_argument("--models", default="1-16", help="e.g. 9 or 1-3,9,13")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--realizations", type=int, default=200)
    p.add_argument("--randomizations", type=int, default=500)
    p.add_argument("--stats", default="all")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="CSV path for the power table")
    p.add_argument("--assignments", type=int, default=None,
                   help="two-stage assignments per realization (default: --randomizations)")
    p.add_argument("--cluster-size", type=int, default=4)
    p.add_argument("--no-two-stage", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
