"""Procedural conversation generator for end-to-end testing.

Each synthetic video shows a fixed set of cartoon faces while a turn-based
conversation plays out: at most one entity speaks at a time, speech turns
alternate with silence, and a pure tone is present on the audio track
exactly while someone speaks. A speaking face opens and closes its mouth
on alternating frames. Non-speakers sometimes mouth silently for part of
a turn - frequently during silence, rarely while someone else is audible -
which gives the video-only signal a hard ceiling that audio-visual fusion
can recover.

Everything is drawn from generators seeded by (seed, video index), so a
given (config, seed) pair reproduces every output file byte for byte.
The number of positive labels per split is constructed to equal
round(speaking_ratio * labels) exactly, by voicing a random subset of
turns and splitting the final turn at the required frame.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from avasd.data.annotations import label_name
from avasd.data.audio import save_wav


class SyntheticError(ValueError):
    """Invalid generator configuration."""


@dataclass
class SyntheticConfig:
    train_videos: int = 12
    val_videos: int = 4
    duration: float = 24.0
    fps: float = 5.0
    speakers_min: int = 1
    speakers_max: int = 3
    speaking_ratio: float = 0.30
    turn_min: float = 0.6
    turn_max: float = 2.4
    distractor_silent: float = 0.35
    distractor_voiced: float = 0.06
    face_min: int = 40
    face_max: int = 200
    crop_px: int = 96
    pixel_noise: float = 12.0
    tone_hz: float = 880.0
    tone_amp: float = 0.3
    noise_rms: float = 0.02
    sample_rate: int = 16000
    video_width: int = 640
    video_height: int = 360

    @classmethod
    def from_flat(cls, cfg: dict[str, Any]) -> "SyntheticConfig":
        return cls(
            train_videos=cfg["synth_train_videos"],
            val_videos=cfg["synth_val_videos"],
            duration=cfg["synth_duration"],
            fps=cfg["synth_fps"],
            speakers_min=cfg["synth_speakers_min"],
            speakers_max=cfg["synth_speakers_max"],
            speaking_ratio=cfg["synth_speaking_ratio"],
            turn_min=cfg["synth_turn_min"],
            turn_max=cfg["synth_turn_max"],
            distractor_silent=cfg["synth_distractor_silent"],
            distractor_voiced=cfg["synth_distractor_voiced"],
            face_min=cfg["synth_face_min"],
            face_max=cfg["synth_face_max"],
            crop_px=cfg["synth_crop_px"],
            pixel_noise=cfg["synth_pixel_noise"],
            tone_hz=cfg["synth_tone_hz"],
            noise_rms=cfg["synth_noise_rms"],
            sample_rate=cfg["sample_rate"],
            video_width=cfg["synth_video_width"],
            video_height=cfg["synth_video_height"],
        )

    def validate(self) -> None:
        if self.train_videos < 0 or self.val_videos < 0:
            raise SyntheticError("video counts must be non-negative")
        if self.duration <= 0 or self.fps <= 0:
            raise SyntheticError("duration and fps must be positive")
        if not 0 <= self.speakers_min <= self.speakers_max <= 5:
            raise SyntheticError(
                f"speaker range must satisfy 0 <= min <= max <= 5, got "
                f"[{self.speakers_min}, {self.speakers_max}]"
            )
        if not 0.0 <= self.speaking_ratio <= 1.0:
            raise SyntheticError("speaking_ratio must lie in [0, 1]")
        if not 0.0 < self.turn_min <= self.turn_max:
            raise SyntheticError("turn lengths must satisfy 0 < min <= max")
        for name in ("distractor_silent", "distractor_voiced"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SyntheticError(f"{name} must lie in [0, 1]")
        if not 1 <= self.face_min <= self.face_max:
            raise SyntheticError("face size range must satisfy 1 <= min <= max")
        if self.face_max > min(self.video_width, self.video_height):
            raise SyntheticError("faces must fit inside the video frame")
        if self.sample_rate <= 0:
            raise SyntheticError("sample_rate must be positive")


@dataclass
class SplitSummary:
    name: str
    videos: int = 0
    tracks: int = 0
    records: int = 0
    positives: int = 0
    target_positives: int = 0


@dataclass
class DatasetSummary:
    root: Path
    splits: dict[str, SplitSummary] = field(default_factory=dict)


@dataclass
class _Video:
    video_id: str
    split: str
    num_speakers: int
    num_frames: int
    turns: list[tuple[int, int]]  # (start_frame, length)
    rng: np.random.Generator
    speaker_at: np.ndarray | None = None  # (F,) int, -1 = silence
    face_px: list[int] = field(default_factory=list)
    centers: list[float] = field(default_factory=list)


def _plan_turns(num_frames: int, cfg: SyntheticConfig,
                rng: np.random.Generator) -> list[tuple[int, int]]:
    lo = max(1, int(round(cfg.turn_min * cfg.fps)))
    hi = max(lo, int(round(cfg.turn_max * cfg.fps)))
    turns = []
    pos = 0
    while pos < num_frames:
        length = int(rng.integers(lo, hi + 1))
        length = min(length, num_frames - pos)
        turns.append((pos, length))
        pos += length
    return turns


def _assign_voicing(videos: list[_Video], cfg: SyntheticConfig,
                    master: np.random.Generator) -> int:
    """Voice a subset of turns so positives hit the split quota exactly."""
    total_labels = sum(v.num_speakers * v.num_frames for v in videos)
    target = int(round(cfg.speaking_ratio * total_labels))
    capacity = sum(v.num_frames for v in videos if v.num_speakers > 0)
    if target > capacity:
        raise SyntheticError(
            f"speaking_ratio {cfg.speaking_ratio} needs {target} voiced frames "
            f"but only {capacity} are available; at most one entity speaks per "
            "frame, so the feasible ratio shrinks as speaker count grows"
        )
    for v in videos:
        v.speaker_at = np.full(v.num_frames, -1, dtype=np.int64)

    candidates = [
        (vi, start, length)
        for vi, v in enumerate(videos) if v.num_speakers > 0
        for start, length in v.turns
    ]
    order = master.permutation(len(candidates))
    voiced = 0
    for idx in order:
        if voiced >= target:
            break
        vi, start, length = candidates[idx]
        take = min(length, target - voiced)
        speaker = int(master.integers(videos[vi].num_speakers))
        videos[vi].speaker_at[start:start + take] = speaker
        voiced += take
    return target


def _base_faces(s: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Closed-mouth and open-mouth face images, (3, s, s) uint8 each."""
    bg = rng.integers(90, 150, size=3)
    skin = np.array([rng.integers(150, 221), rng.integers(110, 181),
                     rng.integers(90, 161)])
    img = np.empty((3, s, s), dtype=np.uint8)
    img[:] = bg[:, None, None]
    m = max(1, s // 8)
    img[:, m:s - m, m:s - m] = skin[:, None, None]

    eye_y = (3 * s) // 8
    r = max(1, s // 14)
    for ex in ((5 * s) // 16, (11 * s) // 16):
        img[:, eye_y - r:eye_y + r, ex - r:ex + r] = 25

    closed = img.copy()
    opened = img.copy()
    mx0, mx1 = (5 * s) // 16, (11 * s) // 16
    my = (11 * s) // 16
    h_closed = max(1, s // 24)
    h_open = max(2, s // 5)
    closed[:, my:my + h_closed, mx0:mx1] = 30
    opened[:, my:my + h_open, mx0:mx1] = 30
    return closed, opened


def _render_entity(video: _Video, mouth_open: np.ndarray,
                   cfg: SyntheticConfig) -> np.ndarray:
    s = cfg.crop_px
    closed, opened = _base_faces(s, video.rng)
    frames = np.where(mouth_open[:, None, None, None], opened[None], closed[None])
    noisy = frames.astype(np.float32)
    if cfg.pixel_noise > 0:
        noisy += video.rng.normal(0.0, cfg.pixel_noise, size=noisy.shape)
    return np.clip(noisy, 0.0, 255.0).astype(np.uint8)


def _synthesize_audio(video: _Video, cfg: SyntheticConfig) -> np.ndarray:
    n = int(round(video.num_frames / cfg.fps * cfg.sample_rate))
    wave = video.rng.normal(0.0, cfg.noise_rms, size=n).astype(np.float64)
    speaker_at = video.speaker_at
    ramp = int(0.005 * cfg.sample_rate)
    f = 0
    while f < video.num_frames:
        if speaker_at[f] < 0:
            f += 1
            continue
        end = f
        while end < video.num_frames and speaker_at[end] == speaker_at[f]:
            end += 1
        lo = int(round(f / cfg.fps * cfg.sample_rate))
        hi = min(n, int(round(end / cfg.fps * cfg.sample_rate)))
        t = np.arange(lo, hi) / cfg.sample_rate
        tone = cfg.tone_amp * np.sin(2.0 * np.pi * cfg.tone_hz * t)
        if hi - lo > 2 * ramp:
            tone[:ramp] *= np.linspace(0.0, 1.0, ramp)
            tone[-ramp:] *= np.linspace(1.0, 0.0, ramp)
        wave[lo:hi] += tone
        f = end
    return wave


def _mouth_schedule(video: _Video, k: int, cfg: SyntheticConfig) -> np.ndarray:
    """Frames where entity k's mouth is open: speech turns plus silent mouthing."""
    F = video.num_frames
    speaker_at = video.speaker_at
    flutter = (np.arange(F) % 2) == 0
    is_open = (speaker_at == k) & flutter

    for start, length in video.turns:
        owner = speaker_at[start]
        if owner == k:
            continue
        prob = cfg.distractor_voiced if owner >= 0 else cfg.distractor_silent
        if video.rng.random() >= prob:
            continue
        sub_len = max(1, int(round(length * video.rng.uniform(0.4, 0.8))))
        sub_start = start + int(video.rng.integers(0, length - sub_len + 1))
        span = np.zeros(F, dtype=bool)
        span[sub_start:sub_start + sub_len] = True
        is_open |= span & flutter
    return is_open


def generate_synthetic(root: str | Path, cfg: SyntheticConfig,
                       seed: int) -> DatasetSummary:
    """Write a complete dataset under root; byte-identical per (cfg, seed)."""
    cfg.validate()
    root = Path(root)
    (root / "annotations").mkdir(parents=True, exist_ok=True)
    (root / "audio").mkdir(exist_ok=True)
    (root / "crops").mkdir(exist_ok=True)

    num_frames = int(round(cfg.duration * cfg.fps))
    if num_frames < 1:
        raise SyntheticError("duration * fps must give at least one frame")

    summary = DatasetSummary(root=root)
    plans: dict[str, list[_Video]] = {}
    counts = {"train": cfg.train_videos, "val": cfg.val_videos}
    vidx = 0
    for split, count in counts.items():
        videos = []
        for i in range(count):
            rng = np.random.default_rng([seed, 7, vidx])
            video = _Video(
                video_id=f"{split[:2]}{i:03d}",
                split=split,
                num_speakers=int(rng.integers(cfg.speakers_min, cfg.speakers_max + 1)),
                num_frames=num_frames,
                turns=[],
                rng=rng,
            )
            video.turns = _plan_turns(num_frames, cfg, rng)
            k = video.num_speakers
            for j in range(k):
                video.face_px.append(int(rng.integers(cfg.face_min, cfg.face_max + 1)))
                video.centers.append((j + 1) / (k + 1))
            videos.append(video)
            vidx += 1
        plans[split] = videos

    videos_rows = []
    for split, videos in plans.items():
        master = np.random.default_rng([seed, 11, 0 if split == "train" else 1])
        target = _assign_voicing(videos, cfg, master)
        stats = SplitSummary(name=split, target_positives=target)

        ann_rows = []
        for video in videos:
            videos_rows.append([
                video.video_id, split, f"{cfg.fps:g}", str(video.num_frames),
                str(cfg.video_width), str(cfg.video_height),
            ])
            crop_dir = root / "crops" / video.video_id
            if video.num_speakers > 0:
                crop_dir.mkdir(parents=True, exist_ok=True)
            for k in range(video.num_speakers):
                mouth_open = _mouth_schedule(video, k, cfg)
                crops = _render_entity(video, mouth_open, cfg)
                entity_id = f"{video.video_id}_s{k}"
                np.save(crop_dir / f"{entity_id}.npy", crops)

                half_w = video.face_px[k] / (2.0 * cfg.video_width)
                half_h = video.face_px[k] / (2.0 * cfg.video_height)
                cx, cy = video.centers[k], 0.5
                for f in range(video.num_frames):
                    label = int(video.speaker_at[f] == k)
                    ann_rows.append([
                        video.video_id,
                        f"{f / cfg.fps:.4f}",
                        f"{cx - half_w:.6f}", f"{cy - half_h:.6f}",
                        f"{cx + half_w:.6f}", f"{cy + half_h:.6f}",
                        label_name(label),
                        entity_id,
                    ])
                    stats.records += 1
                    stats.positives += label
                stats.tracks += 1

            wave = _synthesize_audio(video, cfg)
            save_wav(root / "audio" / f"{video.video_id}.wav", wave, cfg.sample_rate)
            stats.videos += 1

        with (root / "annotations" / f"{split}.csv").open("w", newline="") as fh:
            csv.writer(fh).writerows(ann_rows)
        summary.splits[split] = stats

    with (root / "videos.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "split", "fps", "num_frames", "width", "height"])
        writer.writerows(videos_rows)
    return summary
