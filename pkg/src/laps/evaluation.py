"""Boundary-level F1 at a time tolerance.

Predicted and ground-truth boundaries are matched one-to-one when they lie
within the tolerance. Both lists sorted, a greedy two-pointer scan attains
the maximum-cardinality matching for this interval structure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError
from .stream_io import BOUNDARY_DEDUP_S, Primitive


@dataclass
class F1Result:
    tolerance_s: float
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return {"tolerance_s": self.tolerance_s, "tp": self.tp, "fp": self.fp,
                "fn": self.fn, "precision": self.precision, "recall": self.recall,
                "f1": self.f1}


def extract_boundaries(primitives: list[Primitive]) -> list[float]:
    """All segment start/end times, deduplicated within 1e-6 s, sorted."""
    times = sorted(t for p in primitives for t in (p.start_s, p.end_s))
    out: list[float] = []
    for t in times:
        if not out or t - out[-1] > BOUNDARY_DEDUP_S:
            out.append(t)
    return out


def _counts_to_result(tp: int, n_pred: int, n_gt: int, tol: float) -> F1Result:
    fp = n_pred - tp
    fn = n_gt - tp
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gt if n_gt else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return F1Result(tolerance_s=tol, tp=tp, fp=fp, fn=fn,
                    precision=precision, recall=recall, f1=f1)


def boundary_f1(pred: list[float], gt: list[float], tol: float) -> F1Result:
    """One-to-one boundary matching with |dt| <= tol."""
    if tol <= 0:
        raise DataError(f"tolerance must be positive, got {tol}")
    pred = [float(t) for t in pred]
    gt = [float(t) for t in gt]
    for name, seq in (("pred", pred), ("gt", gt)):
        if any(b < a for a, b in zip(seq, seq[1:])):
            raise DataError(f"{name} boundaries must be sorted")
    tp = 0
    i = j = 0
    while i < len(pred) and j < len(gt):
        if abs(pred[i] - gt[j]) <= tol:
            tp += 1
            i += 1
            j += 1
        elif pred[i] < gt[j]:
            i += 1
        else:
            j += 1
    return _counts_to_result(tp, len(pred), len(gt), tol)


def evaluate_tolerances(pred: list[float], gt: list[float],
                        tolerances: list[float]) -> dict[str, dict]:
    return {repr(float(tol)): boundary_f1(pred, gt, tol).to_dict() for tol in tolerances}


def pooled_f1(results: list[F1Result], tol: float) -> F1Result:
    """Micro-averaged F1 from per-stream counts."""
    tp = sum(r.tp for r in results)
    n_pred = sum(r.tp + r.fp for r in results)
    n_gt = sum(r.tp + r.fn for r in results)
    return _counts_to_result(tp, n_pred, n_gt, tol)


def write_f1_report(results: dict[str, dict], path: str | Path) -> None:
    Path(path).write_text(json.dumps(results, indent=1), encoding="utf-8")
