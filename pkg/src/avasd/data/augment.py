"""Clip-level training augmentation.

One random draw is made per clip and applied to every frame, so the
augmented clip stays temporally coherent: a single crop offset, a single
flip decision, and a single color jitter. All draws come from a generator
seeded by the caller, which makes augmentation a pure function of
(clip, seed, params).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from avasd.data.clips import ClipSample, resize_clip


@dataclass
class AugmentParams:
    size: int = 160
    pad: int = 8  # clip is resized to size + 2*pad before the random crop
    flip_prob: float = 0.5
    brightness: float = 0.25
    contrast: float = 0.25
    saturation: float = 0.25

    def validate(self) -> None:
        if self.size < 1 or self.pad < 0:
            raise ValueError("size must be positive and pad non-negative")
        for name in ("flip_prob", "brightness", "contrast", "saturation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


_GRAY = np.array([0.299, 0.587, 0.114], dtype=np.float32)


def augment_clip(clip: ClipSample, seed: int, params: AugmentParams) -> ClipSample:
    """Random crop + horizontal flip + color jitter, same transform per frame."""
    params.validate()
    rng = np.random.default_rng(seed)
    big = resize_clip(clip.crops, params.size + 2 * params.pad)

    max_off = 2 * params.pad
    dx = int(rng.integers(0, max_off + 1)) if max_off else 0
    dy = int(rng.integers(0, max_off + 1)) if max_off else 0
    out = big[:, :, dy:dy + params.size, dx:dx + params.size]

    if rng.random() < params.flip_prob:
        out = out[:, :, :, ::-1]

    x = out.astype(np.float32)
    b = 1.0 + params.brightness * float(rng.uniform(-1.0, 1.0))
    c = 1.0 + params.contrast * float(rng.uniform(-1.0, 1.0))
    s = 1.0 + params.saturation * float(rng.uniform(-1.0, 1.0))
    x = x * b
    mean = x.mean()
    x = (x - mean) * c + mean
    gray = np.einsum("nchw,c->nhw", x, _GRAY)[:, None]
    x = x * s + gray * (1.0 - s)

    return ClipSample(
        crops=np.clip(x, 0.0, 255.0).astype(np.uint8),
        reference_index=clip.reference_index,
        entity_id=clip.entity_id,
        label=clip.label,
        video_id=clip.video_id,
        timestamp=clip.timestamp,
    )
