"""Ranking metrics and the evaluation report.

AUPR is average precision with ties grouped: precision/recall are
evaluated only at boundaries between distinct score values, so permuting
records inside a tie group cannot change the result.  AUROC is the
Mann-Whitney statistic, ties counted half.

Confidence scoring treats correct predictions as the positive class and
uses max-probability and total concentration as-is.  Out-of-distribution
scoring treats ID samples as positive; mutual information and
differential entropy grow with uncertainty, so they are negated there.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import DataError

CONFIDENCE_METRICS = ("mp", "um")
OOD_METRICS = ("mp", "um", "mi", "de")


def _check_scored(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise DataError("scores and labels must be equal-length vectors")
    if scores.size == 0:
        raise DataError("empty score vector")
    if not np.isfinite(scores).all():
        raise DataError("scores must be finite")
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be 0/1")
    return scores, labels.astype(np.int64)


def aupr(scores, labels) -> float:
    """Average precision over descending-score tie groups."""
    scores, labels = _check_scored(scores, labels)
    total_pos = int(labels.sum())
    if total_pos == 0:
        raise DataError("aupr needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    boundary = np.nonzero(np.diff(s))[0]
    ends = np.append(boundary, s.size - 1)  # last index of each tie group
    tp = np.cumsum(y)[ends]
    k = ends + 1.0
    precision = tp / k
    recall = tp / total_pos
    prev = np.concatenate(([0.0], recall[:-1]))
    return float(((recall - prev) * precision).sum())


def auroc(scores, labels) -> float:
    """P(score of a positive > score of a negative) + half the tie mass."""
    scores, labels = _check_scored(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("auroc needs both classes present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size)
    s = scores[order]
    # average rank within each tie group
    boundary = np.nonzero(np.diff(s))[0]
    starts = np.concatenate(([0], boundary + 1))
    ends = np.append(boundary, s.size - 1)
    for a, b in zip(starts, ends):
        ranks[order[a:b + 1]] = 0.5 * (a + b) + 1.0
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def score_orientation(metric: str, task: str) -> int:
    """+1 keeps the score, -1 flips it so higher always means positive."""
    if metric not in OOD_METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if task not in ("confidence", "ood"):
        raise ValueError(f"unknown task {task!r}")
    if task == "ood" and metric in ("mi", "de"):
        return -1
    return 1


def _cells(scores, labels, metrics, task) -> dict[str, float]:
    out = {}
    for name in metrics:
        s = score_orientation(name, task) * np.asarray(scores[name], dtype=np.float64)
        out[f"aupr_{name}"] = aupr(s, labels)
        out[f"auroc_{name}"] = auroc(s, labels)
    return out


def build_report(id_scores: dict, correct, ood_scores: list[dict] | None = None,
                 seed: int = 0) -> dict:
    """Evaluation report: accuracy, confidence ranking, OOD ranking.

    id_scores maps mp/um/mi/de to per-sample vectors on the ID set;
    correct is the 0/1 correctness vector.  Each entry of ood_scores is
    the same mapping on one OOD set; several sets get per-set cells plus
    an elementwise mean.
    """
    correct = np.asarray(correct).astype(np.int64)
    if correct.size == 0:
        raise DataError("empty ID results")
    if correct.min() == 1:
        # every prediction correct: any ranking is perfect, so the
        # confidence cells are 1.0 by convention (auroc alone would be
        # undefined without a negative class)
        confidence = {}
        for name in CONFIDENCE_METRICS:
            confidence[f"aupr_{name}"] = aupr(id_scores[name], correct)
            confidence[f"auroc_{name}"] = 1.0
    else:
        confidence = _cells(id_scores, correct, CONFIDENCE_METRICS, "confidence")
    report: dict = {
        "seed": int(seed),
        "counts": {"id": int(correct.size),
                   "ood": [int(np.asarray(o["mp"]).size) for o in (ood_scores or [])]},
        "accuracy": float(correct.mean()),
        "confidence": confidence,
    }
    if ood_scores:
        per = []
        for o in ood_scores:
            n_ood = np.asarray(o["mp"]).size
            labels = np.concatenate([np.ones(correct.size, dtype=np.int64),
                                     np.zeros(n_ood, dtype=np.int64)])
            joined = {m: np.concatenate([id_scores[m], o[m]]) for m in OOD_METRICS}
            per.append(_cells(joined, labels, OOD_METRICS, "ood"))
        report["ood"] = {k: float(np.mean([p[k] for p in per])) for k in per[0]}
        if len(per) > 1:
            report["ood_per_bundle"] = per
    return report


def format_flat(report: dict) -> str:
    """Deterministic key = value lines, keys sorted, dotted paths."""
    rows: list[tuple[str, str]] = []
    for key in sorted(report):
        _flatten_path(key, report[key], rows)
    return "".join(f"{k} = {v}\n" for k, v in rows)


def _flatten_path(prefix: str, value, out: list[tuple[str, str]]) -> None:
    if isinstance(value, dict):
        for key in sorted(value):
            _flatten_path(f"{prefix}.{key}", value[key], out)
    elif isinstance(value, list):
        for i, item in enumerate(value):
            _flatten_path(f"{prefix}[{i}]", item, out)
    elif isinstance(value, float):
        out.append((prefix, format(value, ".10g")))
    else:
        out.append((prefix, str(value)))


def parse_flat(text: str) -> dict:
    """Flat report back to {dotted key: value}; non-numeric values stay str."""
    out: dict = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, val = line.partition(" = ")
        if not _:
            raise DataError(f"bad report line: {line!r}")
        try:
            out[key] = float(val)
        except ValueError:
            out[key] = val
    return out


def format_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def write_report(report: dict, path) -> None:
    """Flat text at the given path, structured JSON alongside (path + .json)."""
    path = str(path)
    with open(path, "w") as fh:
        fh.write(format_flat(report))
    with open(path + ".json", "w") as fh:
        fh.write(format_json(report))
