"""Recurrent temporal head over per-frame fused features.

A track's features form a sequence; each prediction reads a fixed-length
window. Bidirectional windows center on the prediction frame and the
head scores the concatenated forward/backward states there; causal
(unidirectional) windows end at the prediction frame and never touch
later features. Windows reaching past the track edges replicate the
nearest existing frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
import torch
from torch import nn


@dataclass
class TemporalConfig:
    cell: str = "gru"  # "gru" | "lstm"
    bidirectional: bool = True
    layers: int = 2
    hidden: int = 128
    seq_len: int = 64
    input_dim: int = 800
    causal: bool = False

    @classmethod
    def from_flat(cls, cfg: dict[str, Any], input_dim: int) -> "TemporalConfig":
        return cls(
            cell=cfg["temporal_cell"],
            bidirectional=cfg["temporal_bidirectional"],
            layers=cfg["temporal_layers"],
            hidden=cfg["temporal_hidden"],
            seq_len=cfg["temporal_seq_len"],
            input_dim=input_dim,
            causal=cfg["temporal_causal"],
        )

    def validate(self) -> None:
        if self.cell not in ("gru", "lstm"):
            raise ValueError(f"cell must be 'gru' or 'lstm', got {self.cell!r}")
        if self.causal and self.bidirectional:
            raise ValueError("causal mode requires a unidirectional cell")
        if self.seq_len < 1 or self.layers < 1 or self.hidden < 1:
            raise ValueError("seq_len, layers, and hidden must be positive")

    @property
    def reference_position(self) -> int:
        return self.seq_len // 2 if self.bidirectional else self.seq_len - 1


def window_indices(track_length: int, t: int, seq_len: int,
                   bidirectional: bool) -> np.ndarray:
    """Frame indices feeding the prediction at track position t.

    Unidirectional windows cover (t - seq_len, t]; bidirectional windows
    cover [t - seq_len/2, t + seq_len/2). Out-of-track indices clamp to
    the nearest frame.
    """
    if track_length < 1:
        raise ValueError("empty track")
    if not 0 <= t < track_length:
        raise ValueError(f"position {t} outside track of length {track_length}")
    if bidirectional:
        start = t - seq_len // 2
    else:
        start = t - seq_len + 1
    idx = np.arange(start, start + seq_len)
    return np.clip(idx, 0, track_length - 1)


def build_window(features: np.ndarray, t: int, cfg: TemporalConfig) -> np.ndarray:
    """(T, D) track features -> (seq_len, D) window for position t."""
    if features.ndim != 2:
        raise ValueError(f"expected (frames, dim) features, got {features.shape}")
    if cfg.causal:
        # Slice first so frames after t are unreachable by construction.
        features = features[:t + 1]
        t = features.shape[0] - 1
    idx = window_indices(features.shape[0], t, cfg.seq_len, cfg.bidirectional)
    return features[idx]


class TemporalHead(nn.Module):
    def __init__(self, cfg: TemporalConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        rnn_cls = nn.GRU if cfg.cell == "gru" else nn.LSTM
        self.rnn = rnn_cls(cfg.input_dim, cfg.hidden, num_layers=cfg.layers,
                           batch_first=True, bidirectional=cfg.bidirectional)
        out_dim = cfg.hidden * (2 if cfg.bidirectional else 1)
        self.fc = nn.Linear(out_dim, 2)

    def forward(self, windows: torch.Tensor) -> torch.Tensor:
        """(B, seq_len, D) windows -> (B, 2) logits at the reference frame."""
        if windows.dim() != 3 or windows.shape[1] != self.cfg.seq_len:
            raise ValueError(
                f"expected (batch, {self.cfg.seq_len}, {self.cfg.input_dim}) "
                f"windows, got {tuple(windows.shape)}"
            )
        states, _ = self.rnn(windows)
        return self.fc(states[:, self.cfg.reference_position])

    def states(self, sequence: torch.Tensor) -> torch.Tensor:
        """Per-frame recurrent states for a full (B, T, D) sequence."""
        out, _ = self.rnn(sequence)
        return out
