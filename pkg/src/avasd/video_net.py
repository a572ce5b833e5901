"""3D-CNN face-clip encoders producing a 512-d embedding.

Four families share one interface: a full-scale residual network, a
grouped-convolution variant, a depthwise-separable variant, and a small
plain-convolution network for desk-scale experiments. Temporal
downsampling adapts to the clip length so that every family reduces 8,
16, or 32 input frames to the same final temporal extent: the 8-frame
variant drops the first temporal stride, the 32-frame variant adds one
in the stem. Strides carry no parameters, so all three clip lengths of a
family have identical parameter counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import torch
from torch import nn


class VideoConfigError(ValueError):
    """Unsupported family / depth / clip-length combination."""


SUPPORTED_CLIP_LENGTHS = (8, 16, 32)


@dataclass
class VideoBackboneConfig:
    family: str = "resnet3d"
    clip_length: int = 16
    depth: int = 18
    widths: list[int] = field(default_factory=lambda: [16, 32, 64, 128])
    cardinality: int = 8
    width_mult: float = 1.0
    embed_dim: int = 512

    @classmethod
    def from_flat(cls, cfg: dict[str, Any]) -> "VideoBackboneConfig":
        return cls(
            family=cfg["video_family"],
            clip_length=cfg["clip_length"],
            depth=cfg["video_depth"],
            widths=list(cfg["video_widths"]),
            cardinality=cfg["video_cardinality"],
            width_mult=cfg["video_width_mult"],
            embed_dim=cfg["video_embed_dim"],
        )

    def validate(self) -> None:
        if self.clip_length not in SUPPORTED_CLIP_LENGTHS:
            raise VideoConfigError(
                f"clip_length must be one of {SUPPORTED_CLIP_LENGTHS}, got "
                f"{self.clip_length}"
            )
        if self.family not in ("tiny3d", "resnet3d", "resnext3d", "mobilenet3d"):
            raise VideoConfigError(f"unknown video family {self.family!r}")
        if self.family == "resnet3d" and self.depth != 18:
            raise VideoConfigError(
                f"resnet3d supports depth 18, got {self.depth}"
            )
        if self.family == "tiny3d" and len(self.widths) != 4:
            raise VideoConfigError("tiny3d needs exactly 4 stage widths")


def temporal_schedule(clip_length: int) -> tuple[int, int, int, int]:
    """(stem stride, stage2..4 strides) in the temporal dimension.

    16 frames is the reference: one stride-2 step in the stem pool and in
    each later stage. 8 frames skips the stem step; 32 frames adds one.
    """
    if clip_length == 8:
        return (1, 2, 2, 2)
    if clip_length == 16:
        return (2, 2, 2, 2)
    if clip_length == 32:
        return (4, 2, 2, 2)
    raise VideoConfigError(f"unsupported clip length {clip_length}")


class _Embed(nn.Module):
    """Global average pool + optional projection to the embedding width."""

    def __init__(self, native_dim: int, embed_dim: int):
        super().__init__()
        self.pool = nn.AdaptiveAvgPool3d(1)
        self.project = (nn.Identity() if native_dim == embed_dim
                        else nn.Linear(native_dim, embed_dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.project(self.pool(x).flatten(1))


class BasicBlock3d(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, stride: tuple[int, int, int]):
        super().__init__()
        self.conv1 = nn.Conv3d(in_ch, out_ch, 3, stride=stride, padding=1,
                               bias=False)
        self.bn1 = nn.BatchNorm3d(out_ch)
        self.conv2 = nn.Conv3d(out_ch, out_ch, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm3d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        if stride != (1, 1, 1) or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv3d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm3d(out_ch),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.shortcut(x))


class ResNeXtBlock3d(nn.Module):
    """Bottleneck with grouped 3x3x3 convolution, expansion 2."""

    def __init__(self, in_ch: int, out_ch: int, cardinality: int,
                 stride: tuple[int, int, int]):
        super().__init__()
        mid = out_ch // 2
        self.conv1 = nn.Conv3d(in_ch, mid, 1, bias=False)
        self.bn1 = nn.BatchNorm3d(mid)
        self.conv2 = nn.Conv3d(mid, mid, 3, stride=stride, padding=1,
                               groups=cardinality, bias=False)
        self.bn2 = nn.BatchNorm3d(mid)
        self.conv3 = nn.Conv3d(mid, out_ch, 1, bias=False)
        self.bn3 = nn.BatchNorm3d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        if stride != (1, 1, 1) or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv3d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm3d(out_ch),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.relu(self.bn2(self.conv2(out)))
        out = self.bn3(self.conv3(out))
        return self.relu(out + self.shortcut(x))


class _ClipNet(nn.Module):
    """Shared wrapper: validates input shape, exposes embed_dim."""

    def __init__(self, body: nn.Module, head: _Embed, embed_dim: int,
                 clip_length: int):
        super().__init__()
        self.body = body
        self.head = head
        self.embed_dim = embed_dim
        self.clip_length = clip_length

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 5 or x.shape[1] != 3:
            raise ValueError(
                f"expected clips shaped (batch, 3, frames, H, W), got "
                f"{tuple(x.shape)}"
            )
        if x.shape[2] != self.clip_length:
            raise ValueError(
                f"model was built for {self.clip_length}-frame clips, got "
                f"{x.shape[2]}"
            )
        return self.head(self.body(x))


def _build_resnet3d(cfg: VideoBackboneConfig) -> _ClipNet:
    t_stem, t2, t3, t4 = temporal_schedule(cfg.clip_length)
    stem_stride = (1, 2, 2) if t_stem == 1 else (t_stem // 2, 2, 2)
    pool_t = 1 if t_stem == 1 else 2
    layers: list[nn.Module] = [
        nn.Conv3d(3, 64, 7, stride=stem_stride, padding=3, bias=False),
        nn.BatchNorm3d(64),
        nn.ReLU(inplace=True),
        nn.MaxPool3d(3, stride=(pool_t, 2, 2), padding=1),
    ]
    widths = [64, 128, 256, 512]
    strides = [(1, 1, 1), (t2, 2, 2), (t3, 2, 2), (t4, 2, 2)]
    in_ch = 64
    for w, s in zip(widths, strides):
        layers.append(BasicBlock3d(in_ch, w, s))
        layers.append(BasicBlock3d(w, w, (1, 1, 1)))
        in_ch = w
    body = nn.Sequential(*layers)
    return _ClipNet(body, _Embed(512, cfg.embed_dim), cfg.embed_dim,
                    cfg.clip_length)


def _build_resnext3d(cfg: VideoBackboneConfig) -> _ClipNet:
    t_stem, t2, t3, t4 = temporal_schedule(cfg.clip_length)
    stem_stride = (1, 2, 2) if t_stem == 1 else (t_stem // 2, 2, 2)
    pool_t = 1 if t_stem == 1 else 2
    layers: list[nn.Module] = [
        nn.Conv3d(3, 64, 7, stride=stem_stride, padding=3, bias=False),
        nn.BatchNorm3d(64),
        nn.ReLU(inplace=True),
        nn.MaxPool3d(3, stride=(pool_t, 2, 2), padding=1),
    ]
    widths = [64, 128, 256, 512]
    strides = [(1, 1, 1), (t2, 2, 2), (t3, 2, 2), (t4, 2, 2)]
    in_ch = 64
    for w, s in zip(widths, strides):
        layers.append(ResNeXtBlock3d(in_ch, w, cfg.cardinality, s))
        in_ch = w
    body = nn.Sequential(*layers)
    return _ClipNet(body, _Embed(512, cfg.embed_dim), cfg.embed_dim,
                    cfg.clip_length)


def _build_mobilenet3d(cfg: VideoBackboneConfig) -> _ClipNet:
    def c(width):
        return max(8, int(round(width * cfg.width_mult)))

    t_stem, t2, t3, t4 = temporal_schedule(cfg.clip_length)

    def ds_block(in_ch, out_ch, stride):
        return nn.Sequential(
            nn.Conv3d(in_ch, in_ch, 3, stride=stride, padding=1,
                      groups=in_ch, bias=False),
            nn.BatchNorm3d(in_ch),
            nn.ReLU(inplace=True),
            nn.Conv3d(in_ch, out_ch, 1, bias=False),
            nn.BatchNorm3d(out_ch),
            nn.ReLU(inplace=True),
        )

    body = nn.Sequential(
        nn.Conv3d(3, c(32), 3, stride=(t_stem, 2, 2), padding=1, bias=False),
        nn.BatchNorm3d(c(32)),
        nn.ReLU(inplace=True),
        ds_block(c(32), c(64), (1, 1, 1)),
        ds_block(c(64), c(128), (t2, 2, 2)),
        ds_block(c(128), c(256), (t3, 2, 2)),
        ds_block(c(256), c(512), (t4, 2, 2)),
    )
    return _ClipNet(body, _Embed(c(512), cfg.embed_dim), cfg.embed_dim,
                    cfg.clip_length)


def _build_tiny3d(cfg: VideoBackboneConfig) -> _ClipNet:
    t_stem, t2, t3, t4 = temporal_schedule(cfg.clip_length)
    w0, w1, w2, w3 = cfg.widths

    def stage(in_ch, out_ch, t_stride):
        return nn.Sequential(
            nn.Conv3d(in_ch, out_ch, 3, stride=(t_stride, 2, 2), padding=1),
            nn.BatchNorm3d(out_ch),
            nn.LeakyReLU(0.01),
        )

    body = nn.Sequential(
        nn.Conv3d(3, w0, (1, 5, 5), stride=(t_stem, 4, 4), padding=(0, 2, 2)),
        nn.BatchNorm3d(w0),
        nn.LeakyReLU(0.01),
        nn.MaxPool3d((1, 2, 2)),
        stage(w0, w1, t2),
        stage(w1, w2, t3),
        stage(w2, w3, t4),
    )
    return _ClipNet(body, _Embed(w3, cfg.embed_dim), cfg.embed_dim,
                    cfg.clip_length)


_BUILDERS = {
    "resnet3d": _build_resnet3d,
    "resnext3d": _build_resnext3d,
    "mobilenet3d": _build_mobilenet3d,
    "tiny3d": _build_tiny3d,
}


def build_video_net(cfg: VideoBackboneConfig) -> _ClipNet:
    cfg.validate()
    return _BUILDERS[cfg.family](cfg)
