"""Flat key=value configuration with include support.

A config file is a YAML mapping from string keys to scalars or short lists.
Nesting is not allowed; every tunable has a single flat name. A file may
name other files under the ``include`` key (string or list of strings,
resolved relative to the including file). Includes are applied first, in
order, and the file's own keys override them.

The defaults below are the reference training recipe at full scale.
Desk-scale presets in configs/ override the expensive ones.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    """Raised for unknown keys, type mismatches, or inconsistent settings."""


DEFAULTS: dict[str, Any] = {
    # -- shared -------------------------------------------------------------
    "seed": 0,
    "sample_rate": 16000,
    "fps": 25.0,
    "crop_size": 160,
    "clip_length": 16,
    # "center" places the labeled frame mid-clip, "end" makes the clip
    # strictly non-anticipating (used by causal mode).
    "clip_reference": "center",
    "workers": 0,
    # -- video backbone -----------------------------------------------------
    "video_family": "resnet3d",
    "video_depth": 18,
    "video_widths": [16, 32, 64, 128],
    "video_cardinality": 8,
    "video_width_mult": 1.0,
    "video_embed_dim": 512,
    "video_norm_mean": [0.45, 0.45, 0.45],
    "video_norm_std": [0.225, 0.225, 0.225],
    # -- audio encoder ------------------------------------------------------
    "audio_num_filters": 80,
    "audio_kernel_length": 251,
    "audio_stride": 32,
    "audio_block_channels": [128, 192, 256, 160],
    "audio_block_kernel": 9,
    "audio_block_stride": 2,
    "audio_min_low_hz": 30.0,
    "audio_embed_dim": 160,
    # -- augmentation (training only) ---------------------------------------
    "augment": True,
    "augment_pad": 8,
    "augment_flip_prob": 0.5,
    "augment_brightness": 0.25,
    "augment_contrast": 0.25,
    "augment_saturation": 0.25,
    # -- encoder training ---------------------------------------------------
    "encoder_epochs": 70,
    "encoder_lr": 3.0e-4,
    "encoder_lr_step": 30,
    "encoder_lr_decay": 0.1,
    "encoder_batch": 192,
    "encoder_device_batch": 16,
    # -- inter-speaker context ----------------------------------------------
    "isrm_speakers": 3,
    "isrm_window": 9,
    "isrm_dim": 128,
    "isrm_include_audio": True,
    "isrm_selection_seed": 1234,
    # -- temporal head ------------------------------------------------------
    "temporal_cell": "gru",
    "temporal_bidirectional": True,
    "temporal_layers": 2,
    "temporal_hidden": 128,
    "temporal_seq_len": 64,
    "temporal_causal": False,
    # -- head training ------------------------------------------------------
    "head_epochs": 10,
    "head_lr": 3.0e-6,
    "head_lr_step": 5,
    "head_lr_decay": 0.1,
    "head_batch": 256,
    # -- pipeline toggles ---------------------------------------------------
    "use_video": True,
    "use_audio": True,
    "use_isrm": True,
    "use_temporal": True,
    "stage_order": "isrm_first",
    # -- evaluation ---------------------------------------------------------
    "eval_per_video_ap": False,
    # -- synthetic data -----------------------------------------------------
    "synth_train_videos": 12,
    "synth_val_videos": 4,
    "synth_duration": 24.0,
    "synth_fps": 5.0,
    "synth_speakers_min": 1,
    "synth_speakers_max": 3,
    "synth_speaking_ratio": 0.30,
    "synth_turn_min": 0.6,
    "synth_turn_max": 2.4,
    "synth_distractor_silent": 0.35,
    "synth_distractor_voiced": 0.06,
    "synth_face_min": 40,
    "synth_face_max": 200,
    "synth_crop_px": 96,
    "synth_pixel_noise": 12.0,
    "synth_tone_hz": 880.0,
    "synth_noise_rms": 0.02,
    "synth_video_width": 640,
    "synth_video_height": 360,
}

_CHOICES: dict[str, tuple] = {
    "clip_reference": ("center", "end"),
    "video_family": ("tiny3d", "resnet3d", "resnext3d", "mobilenet3d"),
    "temporal_cell": ("gru", "lstm"),
    "stage_order": ("isrm_first", "temporal_first"),
}


def default_config() -> dict[str, Any]:
    return copy.deepcopy(DEFAULTS)


def _check_value(key: str, value: Any) -> Any:
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key: {key!r}")
    ref = DEFAULTS[key]
    if isinstance(ref, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"config key {key!r} expects bool, got {value!r}")
        return value
    if isinstance(ref, int) and not isinstance(value, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key {key!r} expects int, got {value!r}")
        return value
    if isinstance(ref, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key!r} expects number, got {value!r}")
        return float(value)
    if isinstance(ref, str):
        if not isinstance(value, str):
            raise ConfigError(f"config key {key!r} expects str, got {value!r}")
        if key in _CHOICES and value not in _CHOICES[key]:
            raise ConfigError(
                f"config key {key!r} must be one of {_CHOICES[key]}, got {value!r}"
            )
        return value
    if isinstance(ref, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"config key {key!r} expects list, got {value!r}")
        return [type(ref[0])(v) for v in value]
    raise ConfigError(f"unsupported config key type for {key!r}")


def _read_file(path: Path, seen: tuple[Path, ...]) -> dict[str, Any]:
    path = path.resolve()
    if path in seen:
        chain = " -> ".join(str(p) for p in seen + (path,))
        raise ConfigError(f"circular config include: {chain}")
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must be a flat mapping")

    merged: dict[str, Any] = {}
    includes = raw.pop("include", [])
    if isinstance(includes, str):
        includes = [includes]
    for inc in includes:
        merged.update(_read_file(path.parent / inc, seen + (path,)))
    for key, value in raw.items():
        if not isinstance(key, str):
            raise ConfigError(f"config file {path}: non-string key {key!r}")
        merged[key] = _check_value(key, value)
    return merged


def load_config(path: str | Path | None = None,
                overrides: dict[str, Any] | None = None) -> dict[str, Any]:
    """Resolve file + overrides on top of the defaults; returns a flat dict."""
    cfg = default_config()
    if path is not None:
        cfg.update(_read_file(Path(path), ()))
    for key, value in (overrides or {}).items():
        cfg[key] = _check_value(key, value)
    validate_config(cfg)
    return cfg


def parse_override(text: str) -> tuple[str, Any]:
    """Parse one ``key=value`` string, YAML-typed on the value side."""
    if "=" not in text:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    key, _, value = text.partition("=")
    key = key.strip()
    try:
        parsed = yaml.safe_load(value)
    except yaml.YAMLError:
        parsed = value
    if isinstance(parsed, str):
        # YAML leaves shorthand floats like "1e-3" as strings.
        try:
            parsed = float(parsed)
        except ValueError:
            pass
    return key, parsed


def validate_config(cfg: dict[str, Any]) -> None:
    if cfg["temporal_causal"] and cfg["temporal_bidirectional"]:
        raise ConfigError(
            "temporal_causal=true requires temporal_bidirectional=false: a "
            "bidirectional head reads frames after the prediction point"
        )
    if cfg["temporal_causal"] and cfg["clip_reference"] != "end":
        raise ConfigError(
            "temporal_causal=true requires clip_reference=end so encoder "
            "clips stop at the labeled frame"
        )
    if not (cfg["use_video"] or cfg["use_audio"]):
        raise ConfigError("at least one of use_video / use_audio must be true")
    if cfg["encoder_batch"] % cfg["encoder_device_batch"] != 0:
        raise ConfigError(
            "encoder_batch must be a multiple of encoder_device_batch "
            f"(got {cfg['encoder_batch']} / {cfg['encoder_device_batch']})"
        )
    if cfg["isrm_window"] % 2 != 1 or cfg["isrm_window"] < 1:
        raise ConfigError(f"isrm_window must be odd and >= 1, got {cfg['isrm_window']}")
    if not 0 <= cfg["isrm_speakers"] <= 5:
        raise ConfigError(f"isrm_speakers must be in [0, 5], got {cfg['isrm_speakers']}")
    if cfg["clip_length"] < 1:
        raise ConfigError(f"clip_length must be positive, got {cfg['clip_length']}")
    if cfg["temporal_seq_len"] < 1:
        raise ConfigError(f"temporal_seq_len must be positive, got {cfg['temporal_seq_len']}")
    if cfg["synth_speakers_min"] > cfg["synth_speakers_max"]:
        raise ConfigError("synth_speakers_min must not exceed synth_speakers_max")
    if not 0 <= cfg["synth_speakers_min"] or cfg["synth_speakers_max"] > 5:
        raise ConfigError("synthetic speaker counts must lie in [0, 5]")


def config_hash(cfg: dict[str, Any]) -> str:
    """Stable hash of a resolved config, for manifests and artifact naming."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
