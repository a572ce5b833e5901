"""Face-track annotations in AVA-ActiveSpeaker CSV layout.

Each CSV row describes one labeled face box:

    video_id,timestamp,x1,y1,x2,y2,label,entity_id

Coordinates are normalized to [0, 1]. The label column holds
``SPEAKING_AUDIBLE`` for positives; any other recognized label maps to 0.
Rows with the same (video_id, entity_id) form one face track, ordered by
timestamp.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path


POSITIVE_LABEL = "SPEAKING_AUDIBLE"
KNOWN_LABELS = ("SPEAKING_AUDIBLE", "NOT_SPEAKING", "SPEAKING_NOT_AUDIBLE")


class AnnotationError(ValueError):
    """Malformed annotation row or invalid track."""


@dataclass(frozen=True)
class AnnotationRecord:
    video_id: str
    timestamp: float
    bbox: tuple[float, float, float, float]  # x1, y1, x2, y2, normalized
    label: int  # 1 = speaking audibly, 0 = anything else
    entity_id: str

    def __post_init__(self):
        x1, y1, x2, y2 = self.bbox
        if not (x1 < x2 and y1 < y2):
            raise AnnotationError(
                f"degenerate bbox for {self.entity_id} at t={self.timestamp}: "
                f"({x1}, {y1}, {x2}, {y2})"
            )
        if self.label not in (0, 1):
            raise AnnotationError(f"label must be 0 or 1, got {self.label}")


@dataclass
class FaceTrack:
    """All records of one entity within one video, timestamp-ascending."""

    video_id: str
    entity_id: str
    records: list[AnnotationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def timestamps(self) -> list[float]:
        return [r.timestamp for r in self.records]

    @property
    def labels(self) -> list[int]:
        return [r.label for r in self.records]

    def validate(self) -> None:
        for prev, cur in zip(self.records, self.records[1:]):
            if cur.timestamp <= prev.timestamp:
                raise AnnotationError(
                    f"track {self.video_id}/{self.entity_id}: timestamps not "
                    f"strictly increasing at t={cur.timestamp}"
                )


def parse_label(text: str) -> int:
    if text not in KNOWN_LABELS:
        raise AnnotationError(f"unknown label {text!r}")
    return 1 if text == POSITIVE_LABEL else 0


def label_name(label: int) -> str:
    return POSITIVE_LABEL if label else "NOT_SPEAKING"


def load_annotations(path: str | Path) -> list[FaceTrack]:
    """Read a CSV into face tracks.

    Tracks appear in order of first appearance in the file; records within
    a track are sorted by timestamp and must end up strictly increasing.
    """
    path = Path(path)
    tracks: dict[tuple[str, str], FaceTrack] = {}
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 8:
                raise AnnotationError(
                    f"{path.name}:{lineno}: expected 8 fields, got {len(row)}"
                )
            try:
                video_id = row[0]
                timestamp = float(row[1])
                bbox = tuple(float(v) for v in row[2:6])
                label = parse_label(row[6])
                entity_id = row[7]
                record = AnnotationRecord(video_id, timestamp, bbox, label, entity_id)
            except AnnotationError as exc:
                raise AnnotationError(f"{path.name}:{lineno}: {exc}") from None
            except ValueError as exc:
                raise AnnotationError(f"{path.name}:{lineno}: {exc}") from None
            key = (video_id, entity_id)
            if key not in tracks:
                tracks[key] = FaceTrack(video_id, entity_id)
            tracks[key].records.append(record)

    out = list(tracks.values())
    for track in out:
        track.records.sort(key=lambda r: r.timestamp)
        track.validate()
    return out


def write_annotations(tracks: list[FaceTrack], path: str | Path) -> None:
    """Inverse of load_annotations; rows grouped per track, timestamp order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        for track in tracks:
            for r in track.records:
                writer.writerow(
                    [
                        r.video_id,
                        f"{r.timestamp:.4f}",
                        f"{r.bbox[0]:.6f}",
                        f"{r.bbox[1]:.6f}",
                        f"{r.bbox[2]:.6f}",
                        f"{r.bbox[3]:.6f}",
                        label_name(r.label),
                        r.entity_id,
                    ]
                )
