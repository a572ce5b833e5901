"""Frame-level feature store produced by the trained encoder.

Holds one 512-d video embedding per labeled face and one 160-d audio
embedding per (video, frame); audio is shared by every face visible in
that frame. Persisted as a single .npz whose arrays round-trip bit for
bit. A CSV export exists for eyeballing.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import torch

from avasd.data.audio import slice_audio
from avasd.data.clips import build_clip, clip_to_tensor, resize_clip
from avasd.data.dataset import VideoData

V_DIM = 512
A_DIM = 160


class FeatureStoreError(KeyError):
    """Lookup of a (video, frame, entity) absent from the store."""


class FeatureStore:
    def __init__(self, v_dim: int = V_DIM, a_dim: int = A_DIM):
        self.v_dim = v_dim
        self.a_dim = a_dim
        self._ent_rows: list[tuple[str, float, str, int]] = []
        self._ent_v: list[np.ndarray] = []
        self._frm_rows: list[tuple[str, float]] = []
        self._frm_a: list[np.ndarray] = []
        self._ent_index: dict[tuple[str, float, str], int] = {}
        self._frm_index: dict[tuple[str, float], int] = {}
        self._ctx: dict[tuple[str, float], list[str]] = {}

    def __len__(self) -> int:
        return len(self._ent_rows)

    @property
    def num_frames(self) -> int:
        return len(self._frm_rows)

    def add_frame(self, video_id: str, timestamp: float, a: np.ndarray) -> None:
        a = np.asarray(a, dtype=np.float32)
        if a.shape != (self.a_dim,):
            raise ValueError(f"audio embedding must be ({self.a_dim},), got {a.shape}")
        key = (video_id, timestamp)
        if key in self._frm_index:
            raise ValueError(f"duplicate frame {key}")
        self._frm_index[key] = len(self._frm_rows)
        self._frm_rows.append(key)
        self._frm_a.append(a)
        self._ctx.setdefault(key, [])

    def add_entity(self, video_id: str, timestamp: float, entity_id: str,
                   label: int, v: np.ndarray) -> None:
        v = np.asarray(v, dtype=np.float32)
        if v.shape != (self.v_dim,):
            raise ValueError(f"video embedding must be ({self.v_dim},), got {v.shape}")
        key = (video_id, timestamp, entity_id)
        if key in self._ent_index:
            raise ValueError(f"duplicate entity row {key}")
        if (video_id, timestamp) not in self._frm_index:
            raise ValueError(
                f"frame ({video_id}, {timestamp}) must be added before its faces"
            )
        self._ent_index[key] = len(self._ent_rows)
        self._ent_rows.append((video_id, timestamp, entity_id, int(label)))
        self._ent_v.append(v)
        self._ctx[(video_id, timestamp)].append(entity_id)

    # -- lookups ------------------------------------------------------------

    def get_a(self, video_id: str, timestamp: float) -> np.ndarray:
        try:
            return self._frm_a[self._frm_index[(video_id, timestamp)]]
        except KeyError:
            raise FeatureStoreError(
                f"no audio embedding for ({video_id!r}, {timestamp})"
            ) from None

    def get_v(self, video_id: str, timestamp: float, entity_id: str) -> np.ndarray:
        try:
            return self._ent_v[self._ent_index[(video_id, timestamp, entity_id)]]
        except KeyError:
            raise FeatureStoreError(
                f"no video embedding for ({video_id!r}, {timestamp}, {entity_id!r})"
            ) from None

    def has_entity(self, video_id: str, timestamp: float, entity_id: str) -> bool:
        return (video_id, timestamp, entity_id) in self._ent_index

    def frame_context(self, video_id: str, timestamp: float) -> list[str]:
        """Entity ids visible in a frame, in insertion order."""
        return list(self._ctx.get((video_id, timestamp), []))

    def video_timeline(self, video_id: str) -> list[float]:
        """Sorted frame timestamps of one video."""
        return sorted(ts for vid, ts in self._frm_rows if vid == video_id)

    def entity_rows(self) -> list[tuple[str, float, str, int]]:
        return list(self._ent_rows)

    def tracks(self) -> dict[tuple[str, str], list[tuple[float, int]]]:
        """(video, entity) -> [(timestamp, row index)], timestamp-ascending."""
        out: dict[tuple[str, str], list[tuple[float, int]]] = {}
        for i, (vid, ts, ent, _) in enumerate(self._ent_rows):
            out.setdefault((vid, ent), []).append((ts, i))
        for rows in out.values():
            rows.sort(key=lambda r: r[0])
        return out

    # -- persistence --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(
            path,
            ent_video=np.array([r[0] for r in self._ent_rows]),
            ent_time=np.array([r[1] for r in self._ent_rows], dtype=np.float64),
            ent_entity=np.array([r[2] for r in self._ent_rows]),
            ent_label=np.array([r[3] for r in self._ent_rows], dtype=np.int64),
            v=(np.stack(self._ent_v) if self._ent_v
               else np.zeros((0, self.v_dim), np.float32)),
            frm_video=np.array([r[0] for r in self._frm_rows]),
            frm_time=np.array([r[1] for r in self._frm_rows], dtype=np.float64),
            a=(np.stack(self._frm_a) if self._frm_a
               else np.zeros((0, self.a_dim), np.float32)),
            dims=np.array([self.v_dim, self.a_dim], dtype=np.int64),
        )

    @classmethod
    def load(cls, path: str | Path) -> "FeatureStore":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"feature store not found: {path}")
        data = np.load(path, allow_pickle=False)
        store = cls(v_dim=int(data["dims"][0]), a_dim=int(data["dims"][1]))
        for vid, ts, a in zip(data["frm_video"], data["frm_time"], data["a"]):
            store.add_frame(str(vid), float(ts), a)
        for vid, ts, ent, lab, v in zip(data["ent_video"], data["ent_time"],
                                        data["ent_entity"], data["ent_label"],
                                        data["v"]):
            store.add_entity(str(vid), float(ts), str(ent), int(lab), v)
        return store

    def to_csv(self, path: str | Path, precision: int = 5) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["video_id", "timestamp", "entity_id", "label"]
                            + [f"v{i}" for i in range(self.v_dim)]
                            + [f"a{i}" for i in range(self.a_dim)])
            for (vid, ts, ent, lab), v in zip(self._ent_rows, self._ent_v):
                a = self.get_a(vid, ts)
                writer.writerow(
                    [vid, f"{ts:.4f}", ent, lab]
                    + [f"{x:.{precision}e}" for x in v]
                    + [f"{x:.{precision}e}" for x in a]
                )


@torch.no_grad()
def extract_features(model, videos: list[VideoData], *, clip_length: int,
                     crop_size: int, sample_rate: int,
                     reference: str = "center",
                     norm_mean=(0.45, 0.45, 0.45), norm_std=(0.225, 0.225, 0.225),
                     device_batch: int = 32) -> FeatureStore:
    """Run the trained encoder over every labeled frame of every track."""
    model.eval()
    store = FeatureStore(v_dim=model.v_dim, a_dim=model.a_dim)

    for video in videos:
        frames: dict[float, list[tuple[str, int, int]]] = {}
        for track in video.tracks:
            for pos, record in enumerate(track.records):
                frames.setdefault(record.timestamp, []).append(
                    (track.entity_id, pos, record.label))
        timeline = sorted(frames)

        waves = []
        for ts in timeline:
            frame = int(round(ts * video.meta.fps))
            seg = slice_audio(video.waveform, frame, clip_length,
                              video.meta.fps, sample_rate, reference=reference)
            waves.append(torch.from_numpy(seg.samples))
        a_out = []
        for i in range(0, len(waves), device_batch):
            a_out.append(model.audio_net(torch.stack(waves[i:i + device_batch])))
        a_all = torch.cat(a_out).numpy() if waves else np.zeros((0, model.a_dim))
        for ts, a in zip(timeline, a_all):
            store.add_frame(video.video_id, ts, a)

        crops_of = video.crops
        tensors, keys = [], []
        for ts in timeline:
            for entity_id, pos, label in frames[ts]:
                clip = build_clip(crops_of[entity_id], pos, clip_length,
                                  reference=reference)
                x = clip_to_tensor(resize_clip(clip.crops, crop_size),
                                   norm_mean, norm_std)
                tensors.append(x)
                keys.append((ts, entity_id, label))
        for i in range(0, len(tensors), device_batch):
            v = model.video_net(torch.stack(tensors[i:i + device_batch])).numpy()
            for (ts, entity_id, label), vec in zip(keys[i:i + device_batch], v):
                store.add_entity(video.video_id, ts, entity_id, label, vec)
    return store
