"""Dataset-root loading and the torch Dataset used for encoder training.

A dataset root looks like::

    root/
      videos.csv                 video_id, split, fps, num_frames, width, height
      annotations/{split}.csv    face-box rows, AVA column order
      audio/{video_id}.wav       16 kHz mono
      crops/{video_id}/{entity_id}.npy   uint8 (T, 3, h, w)

Crop arrays are memory-mapped, audio is loaded once per video.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import Dataset

from avasd.data.annotations import AnnotationError, FaceTrack, load_annotations
from avasd.data.audio import load_wav, slice_audio
from avasd.data.augment import AugmentParams, augment_clip
from avasd.data.clips import build_clip, clip_to_tensor, resize_clip


class DatasetLayoutError(FileNotFoundError):
    """Missing or inconsistent files under a dataset root."""


@dataclass
class VideoMeta:
    video_id: str
    split: str
    fps: float
    num_frames: int
    width: int
    height: int


@dataclass
class VideoData:
    meta: VideoMeta
    tracks: list[FaceTrack] = field(default_factory=list)
    crops: dict[str, np.ndarray] = field(default_factory=dict)  # entity -> (T,3,h,w)
    waveform: np.ndarray | None = None
    sample_rate: int = 0

    @property
    def video_id(self) -> str:
        return self.meta.video_id


def load_video_index(root: str | Path) -> dict[str, VideoMeta]:
    path = Path(root) / "videos.csv"
    if not path.exists():
        raise DatasetLayoutError(f"missing {path}")
    out: dict[str, VideoMeta] = {}
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            meta = VideoMeta(
                video_id=row["video_id"],
                split=row["split"],
                fps=float(row["fps"]),
                num_frames=int(row["num_frames"]),
                width=int(row["width"]),
                height=int(row["height"]),
            )
            out[meta.video_id] = meta
    return out


def load_split(root: str | Path, split: str) -> list[VideoData]:
    """Load annotations, crops, and audio for every video of a split."""
    root = Path(root)
    index = load_video_index(root)
    ann_path = root / "annotations" / f"{split}.csv"
    if not ann_path.exists():
        raise DatasetLayoutError(f"missing {ann_path}")
    tracks = load_annotations(ann_path)

    videos: dict[str, VideoData] = {}
    for vid, meta in index.items():
        if meta.split == split:
            videos[vid] = VideoData(meta=meta)

    for track in tracks:
        if track.video_id not in videos:
            raise AnnotationError(
                f"annotations reference unknown video {track.video_id!r}"
            )
        video = videos[track.video_id]
        video.tracks.append(track)
        crop_path = root / "crops" / track.video_id / f"{track.entity_id}.npy"
        if not crop_path.exists():
            raise DatasetLayoutError(f"missing crop array {crop_path}")
        crops = np.load(crop_path, mmap_mode="r")
        if len(crops) < len(track):
            raise DatasetLayoutError(
                f"{crop_path} holds {len(crops)} frames but the track has "
                f"{len(track)} records"
            )
        video.crops[track.entity_id] = crops

    for video in videos.values():
        wav_path = root / "audio" / f"{video.video_id}.wav"
        if not wav_path.exists():
            raise DatasetLayoutError(f"missing audio {wav_path}")
        video.waveform, video.sample_rate = load_wav(wav_path)
    return list(videos.values())


def absolute_frame(track: FaceTrack, pos: int, fps: float) -> int:
    """Video-timeline frame index of a track position."""
    return int(round(track.records[pos].timestamp * fps))


class AVClipDataset(Dataset):
    """(video clip, audio segment, label) samples over every track frame."""

    def __init__(self, videos: list[VideoData], *, clip_length: int,
                 crop_size: int, sample_rate: int, reference: str = "center",
                 augment: bool = False, augment_params: AugmentParams | None = None,
                 norm_mean=(0.45, 0.45, 0.45), norm_std=(0.225, 0.225, 0.225),
                 seed: int = 0):
        self.videos = videos
        self.clip_length = clip_length
        self.crop_size = crop_size
        self.sample_rate = sample_rate
        self.reference = reference
        self.augment = augment
        self.augment_params = augment_params or AugmentParams(size=crop_size)
        self.norm_mean = tuple(norm_mean)
        self.norm_std = tuple(norm_std)
        self.seed = seed
        self.epoch = 0
        for video in videos:
            if video.waveform is not None and video.sample_rate != sample_rate:
                raise DatasetLayoutError(
                    f"{video.video_id}: audio is {video.sample_rate} Hz but the "
                    f"pipeline expects {sample_rate} Hz"
                )
        self.samples: list[tuple[int, int, int]] = []  # (video idx, track idx, pos)
        for vi, video in enumerate(videos):
            for ti, track in enumerate(video.tracks):
                for pos in range(len(track)):
                    self.samples.append((vi, ti, pos))

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, idx: int):
        vi, ti, pos = self.samples[idx]
        video = self.videos[vi]
        track = video.tracks[ti]
        record = track.records[pos]

        clip = build_clip(
            video.crops[track.entity_id], pos, self.clip_length,
            entity_id=track.entity_id, label=record.label,
            video_id=video.video_id, timestamp=record.timestamp,
            reference=self.reference,
        )
        if self.augment:
            clip = augment_clip(
                clip, seed=hash((self.seed, self.epoch, idx)) & 0x7FFFFFFF,
                params=self.augment_params,
            )
            crops = clip.crops
        else:
            crops = resize_clip(clip.crops, self.crop_size)
        x_video = clip_to_tensor(crops, self.norm_mean, self.norm_std)

        frame = absolute_frame(track, pos, video.meta.fps)
        segment = slice_audio(
            video.waveform, frame, self.clip_length, video.meta.fps,
            self.sample_rate, reference=self.reference,
        )
        x_audio = torch.from_numpy(segment.samples)
        return x_video, x_audio, torch.tensor(record.label, dtype=torch.long)
