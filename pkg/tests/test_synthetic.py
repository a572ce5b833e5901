import hashlib
from pathlib import Path

import numpy as np
import pytest

from avasd.data.annotations import load_annotations
from avasd.data.audio import load_wav
from avasd.data.dataset import load_split, load_video_index
from avasd.data.synthetic import SyntheticConfig, SyntheticError, generate_synthetic

from conftest import micro_synth_config


def tree_digest(root: Path) -> dict[str, str]:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(
                path.read_bytes()).hexdigest()
    return out


def test_layout_complete(micro_dataset):
    root, summary = micro_dataset
    assert (root / "videos.csv").exists()
    assert (root / "annotations" / "train.csv").exists()
    assert (root / "annotations" / "val.csv").exists()
    index = load_video_index(root)
    assert summary.splits["train"].videos == 2
    assert summary.splits["val"].videos == 1
    for vid, meta in index.items():
        assert (root / "audio" / f"{vid}.wav").exists()
        wave, rate = load_wav(root / "audio" / f"{vid}.wav")
        assert rate == 16000
        assert len(wave) == round(meta.num_frames / meta.fps * rate)


def test_byte_identical_across_runs(tmp_path):
    cfg = micro_synth_config()
    generate_synthetic(tmp_path / "a", cfg, seed=3)
    generate_synthetic(tmp_path / "b", cfg, seed=3)
    da, db = tree_digest(tmp_path / "a"), tree_digest(tmp_path / "b")
    assert da == db
    generate_synthetic(tmp_path / "c", cfg, seed=4)
    assert tree_digest(tmp_path / "c") != da


def test_speaking_quota_exact(tmp_path):
    cfg = micro_synth_config(train_videos=3, val_videos=2, duration=10.0,
                             speaking_ratio=0.27)
    summary = generate_synthetic(tmp_path, cfg, seed=11)
    for split in summary.splits.values():
        assert abs(split.positives - split.target_positives) <= 1
        # target itself must match the configured ratio of all labels
        assert split.target_positives == round(0.27 * split.records)


def test_at_most_one_speaker_per_frame(micro_dataset):
    root, _ = micro_dataset
    tracks = load_annotations(root / "annotations" / "train.csv")
    speaking: dict[tuple[str, float], int] = {}
    for track in tracks:
        for r in track.records:
            if r.label:
                key = (r.video_id, r.timestamp)
                speaking[key] = speaking.get(key, 0) + 1
    assert speaking, "dataset must contain positives"
    assert max(speaking.values()) == 1


def test_crops_match_annotations(micro_dataset):
    root, _ = micro_dataset
    videos = load_split(root, "train")
    for video in videos:
        assert video.tracks, "every generated video should have tracks"
        for track in video.tracks:
            crops = video.crops[track.entity_id]
            assert crops.shape == (len(track), 3, 48, 48)
            assert crops.dtype == np.uint8


def test_tone_present_only_during_speech(tmp_path):
    cfg = micro_synth_config(train_videos=1, val_videos=0, duration=12.0,
                             pixel_noise=0.0, noise_rms=0.0)
    generate_synthetic(tmp_path, cfg, seed=5)
    tracks = load_annotations(tmp_path / "annotations" / "train.csv")
    video_id = tracks[0].video_id
    wave, rate = load_wav(tmp_path / "audio" / f"{video_id}.wav")
    fps = 5.0
    voiced = {}
    for track in tracks:
        for r in track.records:
            f = round(r.timestamp * fps)
            voiced[f] = voiced.get(f, 0) or r.label
    for f, has_speech in voiced.items():
        lo, hi = round(f / fps * rate), round((f + 1) / fps * rate)
        rms = float(np.sqrt(np.mean(wave[lo:hi] ** 2)))
        if has_speech:
            assert rms > 0.05, f"frame {f} voiced but silent (rms={rms})"
        else:
            assert rms < 0.02, f"frame {f} silent but audible (rms={rms})"


def test_face_sizes_span_buckets(micro_dataset):
    root, _ = micro_dataset
    index = load_video_index(root)
    widths = []
    for split in ("train", "val"):
        for track in load_annotations(root / "annotations" / f"{split}.csv"):
            r = track.records[0]
            widths.append((r.bbox[2] - r.bbox[0]) * index[track.video_id].width)
    assert min(widths) >= 40 - 1e-6
    assert max(widths) <= 200 + 1e-6


def test_zero_speaker_videos_have_no_tracks(tmp_path):
    cfg = micro_synth_config(train_videos=2, val_videos=0, speakers_min=0,
                             speakers_max=0, speaking_ratio=0.0)
    summary = generate_synthetic(tmp_path, cfg, seed=0)
    assert summary.splits["train"].tracks == 0
    assert (tmp_path / "annotations" / "train.csv").read_text() == ""
    assert load_video_index(tmp_path)


def test_infeasible_ratio_raises(tmp_path):
    cfg = micro_synth_config(speakers_min=4, speakers_max=4,
                             speaking_ratio=0.9)
    with pytest.raises(SyntheticError, match="at most one entity speaks"):
        generate_synthetic(tmp_path, cfg, seed=0)


def test_invalid_config_rejected():
    with pytest.raises(SyntheticError):
        SyntheticConfig(speakers_min=3, speakers_max=2).validate()
    with pytest.raises(SyntheticError):
        SyntheticConfig(speaking_ratio=1.5).validate()
    with pytest.raises(SyntheticError):
        SyntheticConfig(turn_min=0.0).validate()
    with pytest.raises(SyntheticError):
        SyntheticConfig(face_min=500, face_max=600).validate()
