"""Waveform IO and clip-aligned audio slicing.

Audio lives as one mono track per video. Slices are addressed in video
frame units so that an n-frame face clip and its audio segment cover the
same wall-clock span; samples requested outside the waveform are zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile


@dataclass
class AudioSegment:
    samples: np.ndarray  # float32 in [-1, 1]
    sample_rate: int
    start_time: float  # seconds, relative to the video start


def load_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a WAV file as float32 mono in [-1, 1]; stereo is averaged."""
    rate, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        x = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:
        x = data.astype(np.float32) / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float32) - 128.0) / 128.0
    else:
        x = data.astype(np.float32)
    if x.ndim == 2:
        x = x.mean(axis=1)
    return x, int(rate)


def save_wav(path: str | Path, samples: np.ndarray, sample_rate: int) -> None:
    """Write float samples as 16-bit PCM, clipping to [-1, 1]."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(clipped * 32767.0).astype(np.int16)
    wavfile.write(str(path), sample_rate, pcm)


def segment_length(n: int, fps: float, sample_rate: int) -> int:
    """Number of samples covering n video frames."""
    return int(round(n / fps * sample_rate))


def slice_audio(waveform: np.ndarray, t: int, n: int, fps: float,
                sample_rate: int, reference: str = "center") -> AudioSegment:
    """Cut the audio span matching an n-frame clip at video frame t.

    t is an absolute frame index in the video timeline. The slice always
    has exactly ``segment_length(n, fps, sample_rate)`` samples; parts
    before the first or after the last sample are zero-filled.
    """
    if n < 1:
        raise ValueError(f"clip length must be positive, got {n}")
    if fps <= 0 or sample_rate <= 0:
        raise ValueError("fps and sample_rate must be positive")
    if reference == "center":
        start_frame = t - n // 2
    elif reference == "end":
        start_frame = t - n + 1
    else:
        raise ValueError(f"reference must be 'center' or 'end', got {reference!r}")

    length = segment_length(n, fps, sample_rate)
    start_sample = int(round(start_frame / fps * sample_rate))
    out = np.zeros(length, dtype=np.float32)
    lo = max(start_sample, 0)
    hi = min(start_sample + length, len(waveform))
    if hi > lo:
        out[lo - start_sample:hi - start_sample] = waveform[lo:hi]
    return AudioSegment(out, sample_rate, start_frame / fps)
