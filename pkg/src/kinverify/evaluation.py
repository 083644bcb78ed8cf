"""Per-relationship accuracy reports and hyper-parameter sweeps."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import InputError
from .heads import predict, triplet_score


@dataclass
class TypeCount:
    correct: int
    total: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.total


@dataclass
class EvalReport:
    per_type: dict[str, TypeCount]
    config: dict = field(default_factory=dict)

    @property
    def correct(self) -> int:
        return sum(c.correct for c in self.per_type.values())

    @property
    def total(self) -> int:
        return sum(c.total for c in self.per_type.values())

    @property
    def weighted_average(self) -> float:
        """Micro average: total correct over total samples."""
        return self.correct / self.total

    @property
    def macro_average(self) -> float:
        return float(np.mean([c.accuracy for c in self.per_type.values()]))

    def accuracy(self, rel_type: str) -> float:
        return self.per_type[rel_type].accuracy

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "per_type": {
                k: {"correct": c.correct, "total": c.total, "accuracy": c.accuracy}
                for k, c in self.per_type.items()
            },
            "weighted_average": self.weighted_average,
            "macro_average": self.macro_average,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["rel_type", "correct", "total", "accuracy"])
        for k, c in self.per_type.items():
            w.writerow([k, c.correct, c.total, repr(c.accuracy)])
        w.writerow(["AVERAGE", self.correct, self.total, repr(self.weighted_average)])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'rel_type':<10}{'correct':>9}{'total':>9}{'accuracy':>10}"]
        for k, c in self.per_type.items():
            lines.append(f"{k:<10}{c.correct:>9}{c.total:>9}{c.accuracy:>10.4f}")
        lines.append(f"{'AVERAGE':<10}{self.correct:>9}{self.total:>9}{self.weighted_average:>10.4f}")
        lines.append(f"{'MACRO':<10}{'':>9}{'':>9}{self.macro_average:>10.4f}")
        return "\n".join(lines) + "\n"


def accuracy_report(records: Iterable[tuple[str, int, int]], config: Mapping | None = None) -> EvalReport:
    """Build a report from ``(rel_type, predicted, label)`` records.

    Types are listed in sorted order so reports do not depend on record order.
    """
    counts: dict[str, list[int]] = {}
    for rel, pred, label in records:
        if not isinstance(rel, str) or not rel:
            raise InputError(f"invalid rel_type {rel!r}")
        c = counts.setdefault(rel, [0, 0])
        c[0] += int(int(pred) == int(label))
        c[1] += 1
    if not counts:
        raise InputError("cannot build a report from zero predictions")
    per_type = {k: TypeCount(*counts[k]) for k in sorted(counts)}
    return EvalReport(per_type, dict(config or {}))


def report_from_arrays(rel_types, predictions, labels, config=None) -> EvalReport:
    return accuracy_report(zip(np.asarray(rel_types).tolist(), np.asarray(predictions).tolist(),
                               np.asarray(labels).tolist()), config)


# --- sweeps ---------------------------------------------------------------------

@dataclass
class SweepTable:
    columns: list[str]
    rows: list[list]
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"columns": self.columns, "rows": self.rows, "meta": self.meta}

    def to_text(self) -> str:
        def cell(v):
            return f"{v:.4f}" if isinstance(v, float) else str(v)

        body = [[cell(v) for v in r] for r in self.rows]
        widths = [max(len(c), *(len(r[i]) for r in body)) if body else len(c)
                  for i, c in enumerate(self.columns)]
        lines = ["  ".join(c.rjust(w) for c, w in zip(self.columns, widths))]
        lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in body]
        return "\n".join(lines) + "\n"


def _type_columns(rel_types) -> list[str]:
    return sorted(set(np.asarray(rel_types).tolist()))


def threshold_sweep(scores, labels, rel_types, t_values: Sequence[float]) -> SweepTable:
    """Re-threshold cached scores at each ``t``; rows are ``(t, acc per type..., average)``."""
    types = _type_columns(rel_types)
    rows = []
    for t in t_values:
        rep = report_from_arrays(rel_types, predict(np.asarray(scores), t), labels)
        rows.append([float(t)] + [rep.accuracy(k) for k in types] + [rep.weighted_average])
    table = SweepTable(["t"] + types + ["average"], rows)
    table.meta["best_row"] = int(np.argmax([r[-1] for r in rows])) if rows else None
    return table


def lambda_sweep(
    s_fc, s_mc, labels, rel_types, grid: Sequence[tuple[float, float]], t
) -> SweepTable:
    """Mix cached father-child and mother-child scores for every ``(lambda1, lambda2)``.

    ``t`` is a single threshold or a mapping from triplet type to threshold.
    """
    types = _type_columns(rel_types)
    rel_types = np.asarray(rel_types)
    if isinstance(t, Mapping):
        cut = np.array([t[r] for r in rel_types.tolist()], dtype=np.float64)
    else:
        cut = float(t)
    rows = []
    for l1, l2 in grid:
        score = triplet_score(np.asarray(s_fc), np.asarray(s_mc), l1, l2)
        rep = report_from_arrays(rel_types, (score > cut).astype(np.int64), labels)
        rows.append([float(l1), float(l2)] + [rep.accuracy(k) for k in types] + [rep.weighted_average])
    table = SweepTable(["lambda1", "lambda2"] + types + ["average"], rows)
    table.meta["best_row"] = int(np.argmax([r[-1] for r in rows])) if rows else None
    return table


def ablation_matrix(sources: Mapping[str, tuple], losses: Sequence, fusions: Sequence, fit_and_score) -> SweepTable:
    """Train and evaluate one model per (source, loss, fusion) combination.

    ``sources`` maps a free-form embedding-source tag to whatever data
    ``fit_and_score(source_data, loss, fusion)`` needs; that callable returns
    an :class:`EvalReport`. The best row by weighted average is recorded in
    ``meta["best_row"]``.
    """
    rows = []
    type_cols: list[str] | None = None
    for tag, payload in sources.items():
        for loss in losses:
            for fusion in fusions:
                rep = fit_and_score(payload, loss, fusion)
                if type_cols is None:
                    type_cols = list(rep.per_type)
                rows.append([tag, str(loss), str(fusion)]
                            + [rep.accuracy(k) for k in type_cols] + [rep.weighted_average])
    table = SweepTable(["source", "loss", "fusion"] + (type_cols or []) + ["average"], rows)
    table.meta["best_row"] = int(np.argmax([r[-1] for r in rows])) if rows else None
    return table
