"""Fixed-length face clips cut from a track's crop sequence.

A clip gathers ``n`` consecutive crops around a reference frame. Indices
falling outside the track are replaced by the nearest existing frame
(edge replication), so every track position yields a full-length clip.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np
import torch


@dataclass
class ClipSample:
    """One model-ready face clip.

    crops: uint8 array (n, 3, H, W), RGB.
    reference_index: position of the labeled frame inside the clip.
    """

    crops: np.ndarray
    reference_index: int
    entity_id: str
    label: int
    video_id: str = ""
    timestamp: float = 0.0


def clip_frame_indices(track_length: int, t: int, n: int,
                       reference: str = "center") -> np.ndarray:
    """Indices of the n clip frames for track position t, edge-replicated.

    ``reference='center'`` places t at position n // 2 (n must be even, so
    the window spans [t - n/2, t + n/2)). ``reference='end'`` places t
    last, i.e. the clip covers (t - n, t].
    """
    if track_length < 1:
        raise ValueError("empty track")
    if n < 1:
        raise ValueError(f"clip length must be positive, got {n}")
    if not 0 <= t < track_length:
        raise ValueError(f"frame index {t} outside track of length {track_length}")
    if reference == "center":
        if n % 2 != 0:
            raise ValueError(f"centered clips need an even length, got {n}")
        start = t - n // 2
    elif reference == "end":
        start = t - n + 1
    else:
        raise ValueError(f"reference must be 'center' or 'end', got {reference!r}")
    idx = np.arange(start, start + n)
    return np.clip(idx, 0, track_length - 1)


def build_clip(crops: np.ndarray, t: int, n: int, *, entity_id: str = "",
               label: int = 0, video_id: str = "", timestamp: float = 0.0,
               reference: str = "center") -> ClipSample:
    """Gather a clip from a (T, 3, H, W) uint8 crop array."""
    if crops.ndim != 4 or crops.shape[1] != 3:
        raise ValueError(f"crops must be (T, 3, H, W), got {crops.shape}")
    idx = clip_frame_indices(crops.shape[0], t, n, reference)
    ref_pos = n // 2 if reference == "center" else n - 1
    return ClipSample(
        crops=np.ascontiguousarray(crops[idx]),
        reference_index=ref_pos,
        entity_id=entity_id,
        label=label,
        video_id=video_id,
        timestamp=timestamp,
    )


def resize_clip(crops: np.ndarray, size: int) -> np.ndarray:
    """Bilinear-resize every frame of a (n, 3, H, W) uint8 clip to size x size."""
    if crops.shape[2] == size and crops.shape[3] == size:
        return crops
    out = np.empty((crops.shape[0], 3, size, size), dtype=np.uint8)
    for i, frame in enumerate(crops):
        hwc = frame.transpose(1, 2, 0)
        resized = cv2.resize(hwc, (size, size), interpolation=cv2.INTER_LINEAR)
        out[i] = resized.transpose(2, 0, 1)
    return out


def clip_to_tensor(crops: np.ndarray, mean, std) -> torch.Tensor:
    """uint8 (n, 3, H, W) -> float32 (3, n, H, W), scaled to [0,1], normalized."""
    x = torch.from_numpy(np.ascontiguousarray(crops)).float().div_(255.0)
    mean_t = torch.tensor(mean, dtype=torch.float32).view(1, 3, 1, 1)
    std_t = torch.tensor(std, dtype=torch.float32).view(1, 3, 1, 1)
    x = (x - mean_t) / std_t
    return x.permute(1, 0, 2, 3).contiguous()
