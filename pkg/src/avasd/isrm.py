"""Inter-speaker context: compress the other visible faces into 128-d.

For a reference face at frame t, up to m background speakers are chosen
from the rest of the frame. Their (v, a) features over a temporal window
around t - slot-major, window-position-minor - feed a single affine layer
with LeakyReLU that outputs the fixed 128-d context vector b, regardless
of how many real speakers filled the slots. Empty slots and window frames
outside the video (or, in causal mode, after the prediction point) are
zero vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
import torch
from torch import nn

from avasd.features import FeatureStore


@dataclass
class ISRMConfig:
    num_speakers: int = 3  # m: background slots
    window: int = 9  # frames, odd, centered on t
    output_dim: int = 128
    v_dim: int = 512
    a_dim: int = 160
    include_audio: bool = True  # audio part of each background slot vector
    selection_seed: int = 1234

    @classmethod
    def from_flat(cls, cfg: dict[str, Any]) -> "ISRMConfig":
        return cls(
            num_speakers=cfg["isrm_speakers"],
            window=cfg["isrm_window"],
            output_dim=cfg["isrm_dim"],
            include_audio=cfg["isrm_include_audio"],
            selection_seed=cfg["isrm_selection_seed"],
        )

    def validate(self) -> None:
        if self.window < 1 or self.window % 2 != 1:
            raise ValueError(f"window must be odd and >= 1, got {self.window}")
        if not 0 <= self.num_speakers <= 5:
            raise ValueError(
                f"background slots must lie in [0, 5], got {self.num_speakers}"
            )
        if self.output_dim < 1:
            raise ValueError("output_dim must be positive")

    @property
    def slot_dim(self) -> int:
        return self.v_dim + (self.a_dim if self.include_audio else 0)

    @property
    def input_dim(self) -> int:
        return self.num_speakers * self.window * self.slot_dim


def select_background(context: Sequence[str], reference: str, m: int,
                      rng: np.random.Generator) -> list[str | None]:
    """Pick the m background slots for a reference face.

    Fewer than m other faces: all of them, ascending entity id, then None
    padding. Exactly m: all of them, ascending. More than m: a uniform
    sample without replacement, ascending.
    """
    if reference not in context:
        raise KeyError(f"reference {reference!r} not present in frame context")
    others = sorted(e for e in context if e != reference)
    if len(others) > m:
        idx = rng.choice(len(others), size=m, replace=False)
        others = sorted(others[i] for i in idx)
    return others + [None] * (m - len(others))


def background_input(store: FeatureStore, video_id: str,
                     timeline: Sequence[float], t_pos: int,
                     slots: Sequence[str | None], cfg: ISRMConfig,
                     causal: bool = False) -> np.ndarray:
    """Assemble the flat ISRM input for frame timeline[t_pos].

    timeline is the video's ordered frame timestamps; the window walks
    over neighboring entries. Slot-frames with no stored feature are
    zero. With causal=True, window positions after t_pos are zero.
    """
    cfg.validate()
    half = cfg.window // 2
    slot_dim = cfg.slot_dim
    out = np.zeros((cfg.num_speakers, cfg.window, slot_dim), dtype=np.float32)
    for si, entity in enumerate(slots):
        if entity is None:
            continue
        for wi, offset in enumerate(range(-half, half + 1)):
            pos = t_pos + offset
            if pos < 0 or pos >= len(timeline):
                continue
            if causal and pos > t_pos:
                continue
            ts = timeline[pos]
            if not store.has_entity(video_id, ts, entity):
                continue
            out[si, wi, :cfg.v_dim] = store.get_v(video_id, ts, entity)
            if cfg.include_audio:
                out[si, wi, cfg.v_dim:] = store.get_a(video_id, ts)
    return out.reshape(-1)


class BackgroundEncoder(nn.Module):
    """Single affine layer + LeakyReLU onto the fixed context width."""

    def __init__(self, cfg: ISRMConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.fc = nn.Linear(cfg.input_dim, cfg.output_dim)
        self.act = nn.LeakyReLU(0.01)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.cfg.input_dim:
            raise ValueError(
                f"expected {self.cfg.input_dim}-d background input, got "
                f"{x.shape[-1]}"
            )
        return self.act(self.fc(x))


def assemble(v: torch.Tensor, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Final per-face feature: v (512) + a (160) + b (128) -> 800."""
    for name, x, dim in (("v", v, 512), ("a", a, 160), ("b", b, 128)):
        if x.shape[-1] != dim:
            raise ValueError(f"{name} must have dim {dim}, got {x.shape[-1]}")
    return torch.cat([v, a, b], dim=-1)
