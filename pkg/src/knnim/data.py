"""File ingestion, exposure tabulation, and K selection for real data.

Edge files are CSV with header ``i,j,d`` (interaction measure) or
``i,j,rank`` (closeness rank, used directly as the measure).  Outcome and
treatment files are ``unit,y`` and ``unit,w``.  Unit ids are external
labels (1-based by default) mapped to a contiguous internal index; every
unit mentioned anywhere must carry an outcome and a treatment.

All parse failures raise :class:`InputError` with the offending row number,
so the CLI can point at the exact line.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import InputError, PreconditionError
from .graph import InteractionGraph, build_knn_graph
from .stats import StatisticInput, TreatmentVector

SCHEMA_VERSION = 1

EDGE_HEADERS = (["i", "j", "d"], ["i", "j", "rank"])


def _read_rows(path) -> list[list[str]]:
    try:
        with open(path, newline="") as fh:
            return [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _parse_unit(token: str, path, row_no: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise InputError(f"{path} row {row_no}: unit id {token!r} is not an integer")


def read_edge_csv(path) -> tuple[dict[tuple[int, int], float], str]:
    """Parse an edge file into {(i, j): d} keyed by external unit ids.

    Returns the measure map and the detected format ("measure" or "rank").
    """
    rows = _read_rows(path)
    if not rows:
        raise InputError(f"{path}: empty edge file")
    header = [h.strip().lower() for h in rows[0]]
    if header == EDGE_HEADERS[0]:
        fmt = "measure"
    elif header == EDGE_HEADERS[1]:
        fmt = "rank"
    else:
        raise InputError(
            f"{path} row 1: expected header 'i,j,d' or 'i,j,rank', got {','.join(header)}"
        )
    measures: dict[tuple[int, int], float] = {}
    for row_no, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise InputError(f"{path} row {row_no}: expected 3 fields, got {len(row)}")
        i = _parse_unit(row[0], path, row_no)
        j = _parse_unit(row[1], path, row_no)
        if i == j:
            raise InputError(f"{path} row {row_no}: self-edge for unit {i}")
        if (i, j) in measures:
            raise InputError(f"{path} row {row_no}: duplicate edge ({i}, {j})")
        try:
            d = float(row[2])
        except ValueError:
            raise InputError(f"{path} row {row_no}: value {row[2]!r} is not a number")
        if fmt == "rank" and (d != int(d) or d < 1):
            raise InputError(
                f"{path} row {row_no}: rank must be a positive integer, got {row[2]}"
            )
        if d < 0:
            raise InputError(f"{path} row {row_no}: negative measure {d}")
        measures[i, j] = d
    return measures, fmt


def _read_column_csv(path, value_name: str) -> dict[int, float]:
    rows = _read_rows(path)
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip().lower() for h in rows[0]]
    if header != ["unit", value_name]:
        raise InputError(
            f"{path} row 1: expected header 'unit,{value_name}', got {','.join(header)}"
        )
    values: dict[int, float] = {}
    for row_no, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise InputError(f"{path} row {row_no}: expected 2 fields, got {len(row)}")
        unit = _parse_unit(row[0], path, row_no)
        if unit in values:
            raise InputError(f"{path} row {row_no}: duplicate unit {unit}")
        try:
            values[unit] = float(row[1])
        except ValueError:
            raise InputError(f"{path} row {row_no}: value {row[1]!r} is not a number")
    return values


def read_outcome_csv(path) -> dict[int, float]:
    return _read_column_csv(path, "y")


def read_treatment_csv(path) -> dict[int, int]:
    values = _read_column_csv(path, "w")
    for unit, w in values.items():
        if w not in (0.0, 1.0):
            raise InputError(f"{path}: treatment for unit {unit} is {w:g}, must be 0 or 1")
    return {unit: int(w) for unit, w in values.items()}


def _index_units(
    measures: dict[tuple[int, int], float],
    outcomes: dict[int, float],
    treatments: dict[int, int],
    id_base: int,
) -> tuple[list[int], dict[int, int]]:
    labels = set(outcomes) | set(treatments)
    for i, j in measures:
        labels.add(i)
        labels.add(j)
    if any(label < id_base for label in labels):
        bad = min(labels)
        raise InputError(f"unit id {bad} below the id base {id_base}")
    ordered = sorted(labels)
    missing_y = sorted(labels - set(outcomes))
    if missing_y:
        raise InputError(f"units missing an outcome: {missing_y[:10]}")
    missing_w = sorted(labels - set(treatments))
    if missing_w:
        raise InputError(f"units missing a treatment: {missing_w[:10]}")
    return ordered, {label: idx for idx, label in enumerate(ordered)}


def load_graph(edge_path, k: int, id_base: int = 1) -> InteractionGraph:
    """Build an interaction graph from an edge file alone.

    The unit universe is the union of edge endpoints; external ids are kept
    as graph labels.
    """
    measures, _ = read_edge_csv(edge_path)
    labels = sorted({i for i, _ in measures} | {j for _, j in measures})
    if labels and labels[0] < id_base:
        raise InputError(f"unit id {labels[0]} below the id base {id_base}")
    if not labels:
        raise InputError(f"{edge_path}: no edges")
    index = {label: idx for idx, label in enumerate(labels)}
    internal = {(index[i], index[j]): d for (i, j), d in measures.items()}
    return build_knn_graph(internal, len(labels), k, unit_labels=tuple(labels))


def align_treatment(treatment_path, graph: InteractionGraph) -> TreatmentVector:
    """Read a treatment file and align it to the graph's unit labels."""
    treatments = read_treatment_csv(treatment_path)
    labels = graph.unit_labels or tuple(range(graph.n))
    missing = [label for label in labels if label not in treatments]
    if missing:
        raise InputError(f"units missing a treatment: {missing[:10]}")
    extra = sorted(set(treatments) - set(labels))
    if extra:
        raise InputError(f"treatment rows for unknown units: {extra[:10]}")
    return TreatmentVector(np.asarray([treatments[l] for l in labels], dtype=np.int8))


def ingest(
    edge_path,
    outcome_path,
    treatment_path,
    k: int,
    id_base: int = 1,
) -> StatisticInput:
    """Load the three input files into a StatisticInput (no partition yet).

    The interaction graph is built from the edge file (measure or rank
    format); outcomes and treatments are aligned to the combined unit id
    universe.  Select focal units afterwards, e.g. via
    :func:`knnim.focal.select_focals_two_net` and
    :func:`knnim.stats.with_partition`.
    """
    measures, _ = read_edge_csv(edge_path)
    outcomes = read_outcome_csv(outcome_path)
    treatments = read_treatment_csv(treatment_path)
    ordered, index = _index_units(measures, outcomes, treatments, id_base)
    n = len(ordered)
    internal = {(index[i], index[j]): d for (i, j), d in measures.items()}
    graph = build_knn_graph(internal, n, k, unit_labels=tuple(ordered))
    y = [outcomes[label] for label in ordered]
    w = [treatments[label] for label in ordered]
    return StatisticInput(
        graph=graph,
        treatment=TreatmentVector(np.asarray(w, dtype=np.int8)),
        outcomes=np.asarray(y, dtype=float),
    )


def write_edge_csv(graph: InteractionGraph, path, fmt: str = "measure") -> None:
    """Serialize measured pairs in canonical order (sorted by external id)."""
    header = ["i", "j", "d"] if fmt == "measure" else ["i", "j", "rank"]
    entries = sorted(
        (graph.label_of(i), graph.label_of(j), graph.dist[i, j])
        for (i, j) in graph.measures
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, j, d in entries:
            writer.writerow([i, j, repr(int(d)) if fmt == "rank" else repr(float(d))])


def write_outcome_csv(inp: StatisticInput, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit", "y"])
        for i, y in enumerate(inp.outcomes):
            writer.writerow([inp.graph.label_of(i), repr(float(y))])


def write_treatment_csv(inp: StatisticInput, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit", "w"])
        for i, w in enumerate(inp.treatment.w):
            writer.writerow([inp.graph.label_of(i), int(w)])


@dataclass(frozen=True)
class ExposureTable:
    """Counts of units per (own treatment, ranked neighbor statuses) cell.

    Covers the 2^(k+1) cells spanned by a unit's own treatment and the
    treatments of its first k ranked neighbors; only units with at least k
    measured neighbors are eligible.
    """

    k: int
    counts: dict[tuple[int, tuple[int, ...]], int]
    n_eligible: int
    warning: str | None = None

    @property
    def n_cells(self) -> int:
        return len(self.counts)

    @property
    def min_count(self) -> int:
        return min(self.counts.values())

    def as_rows(self) -> list[dict]:
        rows = []
        for (own, status), count in sorted(self.counts.items()):
            rows.append(
                {
                    "k": self.k,
                    "own_treatment": own,
                    "neighbor_status": "".join(str(s) for s in status),
                    "count": count,
                }
            )
        return rows

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "n_eligible": self.n_eligible,
            "min_count": self.min_count,
            "warning": self.warning,
            "cells": {
                f"{own}:{''.join(str(s) for s in status)}": count
                for (own, status), count in sorted(self.counts.items())
            },
        }


def tabulate_exposures(
    graph: InteractionGraph, treatment: TreatmentVector, k: int
) -> ExposureTable:
    """Count units in each of the 2^(k+1) treatment-exposure cells.

    Restricts to units with at least k measured neighbors; if no unit
    qualifies the table is all zeros and carries a warning.
    """
    if k < 1:
        raise PreconditionError(f"k must be >= 1, got {k}")
    if k > graph.k:
        raise PreconditionError(
            f"exposure depth {k} exceeds the graph's neighborhood size {graph.k}"
        )
    counts: dict[tuple[int, tuple[int, ...]], int] = {
        (own, status): 0
        for own in (0, 1)
        for status in product((0, 1), repeat=k)
    }
    w = treatment.w
    n_eligible = 0
    for i in range(graph.n):
        nbrs = graph.knn_out[i]
        if len(nbrs) < k:
            continue
        n_eligible += 1
        status = tuple(int(w[j]) for j in nbrs[:k])
        counts[int(w[i]), status] += 1
    warning = None
    if n_eligible == 0:
        warning = f"no unit has at least {k} measured neighbors"
        warnings.warn(warning)
    return ExposureTable(k=k, counts=counts, n_eligible=n_eligible, warning=warning)


@dataclass(frozen=True)
class KRecommendation:
    """Largest neighborhood size whose exposure cells all meet the threshold."""

    recommended: int | None
    threshold: int
    min_counts: dict[int, int]

    def to_dict(self) -> dict:
        return {
            "recommended_k": self.recommended,
            "threshold": self.threshold,
            "min_cell_count_per_k": dict(sorted(self.min_counts.items())),
        }


def recommend_k(
    tables: dict[int, ExposureTable] | list[ExposureTable],
    threshold: int = 30,
) -> KRecommendation:
    """Pick the largest candidate k with every exposure cell >= threshold.

    Returns ``recommended=None`` (with per-k diagnostics) when no candidate
    qualifies.  A threshold of 30 roughly ensures enough units per exposure
    for stable inference.
    """
    if isinstance(tables, dict):
        items = dict(tables)
    else:
        items = {t.k: t for t in tables}
    if not items:
        raise InputError("no candidate exposure tables supplied")
    min_counts = {k: t.min_count for k, t in items.items()}
    qualifying = [k for k, m in min_counts.items() if m >= threshold]
    return KRecommendation(
        recommended=max(qualifying) if qualifying else None,
        threshold=threshold,
        min_counts=min_counts,
    )
