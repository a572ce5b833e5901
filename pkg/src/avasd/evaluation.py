"""Ranking metrics for frame-level speaking predictions.

Average precision follows the detection convention: sort by score
descending with a stable sort (equal scores keep input order), walk the
ranking, and average the precision values observed at each positive.
mAP tables group faces by how many share the frame or by face size in
pixels (S < 64 <= M < 128 <= L), pooling each group's predictions
globally before computing its AP.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger("avasd")

SIZE_BUCKETS = ("S", "M", "L")
GROUPINGS = ("none", "faces_in_frame", "face_size")


class EvaluationError(ValueError):
    """Inconsistent prediction/ground-truth inputs."""


@dataclass
class PredictionRecord:
    video_id: str
    timestamp: float
    entity_id: str
    score: float
    label: int
    faces_in_frame: int = 1
    face_width_px: float = float("nan")


def average_precision(scores, labels) -> float:
    """AP of one ranking; requires at least one positive label."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise EvaluationError(
            f"scores and labels must be equal-length 1-d arrays, got "
            f"{scores.shape} and {labels.shape}"
        )
    if scores.size == 0 or not np.any(labels == 1):
        raise EvaluationError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    ranked = (labels[order] == 1)
    cum_pos = np.cumsum(ranked)
    ranks = np.arange(1, ranked.size + 1)
    precision = cum_pos / ranks
    return float(precision[ranked].mean())


def face_size_bucket(width_px: float) -> str:
    """S: [0, 64) px, M: [64, 128) px, L: [128, inf) px."""
    if math.isnan(width_px) or width_px < 0:
        raise EvaluationError(f"face width must be non-negative, got {width_px}")
    if width_px < 64:
        return "S"
    if width_px < 128:
        return "M"
    return "L"


@dataclass
class GroupResult:
    group: str
    ap: float
    support: int  # number of predictions pooled into the group


def _group_key(record: PredictionRecord, group_by: str) -> str:
    if group_by == "none":
        return "all"
    if group_by == "faces_in_frame":
        return str(record.faces_in_frame)
    if group_by == "face_size":
        return face_size_bucket(record.face_width_px)
    raise EvaluationError(f"group_by must be one of {GROUPINGS}, got {group_by!r}")


def _sorted_groups(keys, group_by: str):
    if group_by == "faces_in_frame":
        return sorted(keys, key=int)
    if group_by == "face_size":
        return [b for b in SIZE_BUCKETS if b in keys]
    return sorted(keys)


def mean_ap(records: list[PredictionRecord], group_by: str = "none",
            per_video: bool = False) -> list[GroupResult]:
    """AP per group. Groups with no predictions are omitted; groups whose
    predictions contain no positive are skipped with a warning.

    per_video=True averages per-video APs inside each group instead of
    pooling the group globally.
    """
    groups: dict[str, list[PredictionRecord]] = {}
    for r in records:
        groups.setdefault(_group_key(r, group_by), []).append(r)

    out = []
    for key in _sorted_groups(groups.keys(), group_by):
        rows = groups[key]
        labels = [r.label for r in rows]
        if not any(labels):
            logger.warning("evaluation group %r has no positives; skipped", key)
            continue
        if per_video:
            by_video: dict[str, list[PredictionRecord]] = {}
            for r in rows:
                by_video.setdefault(r.video_id, []).append(r)
            aps = []
            for vid in sorted(by_video):
                vrows = by_video[vid]
                if not any(r.label for r in vrows):
                    logger.warning(
                        "video %r in group %r has no positives; skipped", vid, key)
                    continue
                aps.append(average_precision([r.score for r in vrows],
                                             [r.label for r in vrows]))
            ap = float(np.mean(aps))
        else:
            ap = average_precision([r.score for r in rows], labels)
        out.append(GroupResult(group=key, ap=ap, support=len(rows)))
    return out


# -- CSV plumbing -----------------------------------------------------------


def write_predictions_csv(path: str | Path, rows) -> None:
    """rows: iterables of (video_id, timestamp, entity_id, score)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "timestamp", "entity_id", "score"])
        for vid, ts, ent, score in rows:
            writer.writerow([vid, f"{ts:.4f}", ent, f"{score:.8f}"])


def load_predictions_csv(path: str | Path) -> dict[tuple[str, str, str], float]:
    path = Path(path)
    out: dict[tuple[str, str, str], float] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = (row["video_id"], row["timestamp"], row["entity_id"])
            if key in out:
                raise EvaluationError(f"duplicate prediction for {key}")
            out[key] = float(row["score"])
    return out


def join_predictions(gt_path: str | Path, pred_path: str | Path,
                     videos_path: str | Path | None = None
                     ) -> list[PredictionRecord]:
    """Join ground truth with predicted scores into evaluation records.

    Ground truth uses the annotation CSV layout. Every ground-truth row
    must have a prediction; extra predictions are an error. Face widths
    in pixels require the videos.csv metadata; without it they are NaN
    and face-size grouping is unavailable.
    """
    from avasd.data.annotations import load_annotations
    from avasd.data.dataset import load_video_index

    widths: dict[str, int] = {}
    if videos_path is not None:
        index = load_video_index(Path(videos_path).parent)
        widths = {vid: meta.width for vid, meta in index.items()}

    preds = load_predictions_csv(pred_path)
    tracks = load_annotations(gt_path)

    faces_at: dict[tuple[str, str], int] = {}
    for track in tracks:
        for r in track.records:
            key = (r.video_id, f"{r.timestamp:.4f}")
            faces_at[key] = faces_at.get(key, 0) + 1

    records = []
    matched = set()
    for track in tracks:
        for r in track.records:
            ts_key = f"{r.timestamp:.4f}"
            key = (r.video_id, ts_key, r.entity_id)
            if key not in preds:
                raise EvaluationError(f"missing prediction for {key}")
            matched.add(key)
            if r.video_id in widths:
                width_px = (r.bbox[2] - r.bbox[0]) * widths[r.video_id]
            else:
                width_px = float("nan")
            records.append(PredictionRecord(
                video_id=r.video_id,
                timestamp=r.timestamp,
                entity_id=r.entity_id,
                score=preds[key],
                label=r.label,
                faces_in_frame=faces_at[(r.video_id, ts_key)],
                face_width_px=width_px,
            ))
    extra = set(preds) - matched
    if extra:
        sample = sorted(extra)[:3]
        raise EvaluationError(
            f"{len(extra)} predictions have no ground-truth row, e.g. {sample}"
        )
    return records


def format_table(title: str, results: list[GroupResult]) -> str:
    lines = [title, f"{'group':>14}  {'mAP':>8}  {'support':>8}"]
    for r in results:
        lines.append(f"{r.group:>14}  {r.ap:8.4f}  {r.support:8d}")
    return "\n".join(lines)


def write_metrics_csv(path: str | Path, results: list[GroupResult]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group", "ap", "support"])
        for r in results:
            writer.writerow([r.group, f"{r.ap:.6f}", r.support])
