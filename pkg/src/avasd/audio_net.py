"""Raw-waveform audio encoder built on a learnable band-pass filterbank.

The first layer convolves the waveform with parametrized sinc band-pass
kernels; each filter learns only its low cutoff and bandwidth. Filter
outputs are log-compressed and refined by depthwise-separable 1-D
convolution blocks, then average-pooled over time into a 160-d embedding.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn


def hamming_window(length: int) -> np.ndarray:
    """Symmetric Hamming window, exactly mirror-symmetric in float64."""
    half = np.abs(np.arange(length) - (length - 1) / 2.0)
    return 0.54 + 0.46 * np.cos(2.0 * np.pi * half / (length - 1))


def sinc_kernel(f_low: float, f_high: float, length: int,
                sample_rate: int) -> np.ndarray:
    """Windowed band-pass kernel: low-pass(f_high) minus low-pass(f_low).

    Requires odd length and 0 <= f_low <= f_high <= Nyquist. The result is
    exactly symmetric about its center tap; the center tap equals
    2 * (f_high - f_low) / sample_rate times the window peak.
    """
    if length % 2 != 1:
        raise ValueError(f"kernel length must be odd, got {length}")
    nyquist = sample_rate / 2.0
    if not 0.0 <= f_low <= f_high <= nyquist:
        raise ValueError(
            f"cutoffs must satisfy 0 <= f_low <= f_high <= {nyquist}, got "
            f"({f_low}, {f_high})"
        )
    # Even functions evaluated on |n - center| so symmetry holds bit-exactly.
    half = np.abs(np.arange(length) - (length - 1) / 2.0)
    band = (
        2.0 * f_high / sample_rate * np.sinc(2.0 * f_high * half / sample_rate)
        - 2.0 * f_low / sample_rate * np.sinc(2.0 * f_low * half / sample_rate)
    )
    return band * hamming_window(length)


def log_compress(x: torch.Tensor) -> torch.Tensor:
    """y = log(1 + |x|); compresses dynamic range, keeps gradients bounded."""
    return torch.log1p(torch.abs(x))


def mel_spaced_cutoffs(num_filters: int, min_hz: float,
                       sample_rate: int) -> tuple[np.ndarray, np.ndarray]:
    """Adjacent mel-scale bands covering [min_hz, Nyquist]."""
    nyquist = sample_rate / 2.0

    def to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    edges = from_mel(np.linspace(to_mel(min_hz), to_mel(nyquist), num_filters + 1))
    return edges[:-1].copy(), edges[1:].copy()


class SincConv(nn.Module):
    """Conv1d whose kernels are sinc band-passes with learnable cutoffs.

    Raw parameters are unconstrained; realized cutoffs are
    f1 = clamp(|low|, 0, Nyquist - min_band) and
    f2 = clamp(f1 + |band|, f1 + min_band, Nyquist), which keeps
    0 <= f1 < f2 <= Nyquist for any parameter values. min_band is a 1 Hz
    floor that rules out degenerate zero-width filters.
    """

    def __init__(self, num_filters: int, kernel_length: int, stride: int,
                 sample_rate: int, min_low_hz: float = 30.0,
                 min_band_hz: float = 1.0):
        super().__init__()
        if kernel_length % 2 != 1:
            raise ValueError(f"kernel length must be odd, got {kernel_length}")
        self.num_filters = num_filters
        self.kernel_length = kernel_length
        self.stride = stride
        self.sample_rate = sample_rate
        self.min_band_hz = min_band_hz

        low, high = mel_spaced_cutoffs(num_filters, min_low_hz, sample_rate)
        self.low_hz = nn.Parameter(torch.tensor(low, dtype=torch.float32))
        self.band_hz = nn.Parameter(torch.tensor(high - low, dtype=torch.float32))

        half = np.abs(np.arange(kernel_length) - (kernel_length - 1) / 2.0)
        self.register_buffer(
            "half_offsets", torch.tensor(half, dtype=torch.float32))
        self.register_buffer(
            "window",
            torch.tensor(hamming_window(kernel_length), dtype=torch.float32))

    def cutoffs(self) -> tuple[torch.Tensor, torch.Tensor]:
        nyquist = self.sample_rate / 2.0
        f1 = torch.clamp(torch.abs(self.low_hz), 0.0, nyquist - self.min_band_hz)
        band = torch.clamp(torch.abs(self.band_hz), min=self.min_band_hz)
        f2 = torch.clamp(f1 + band, max=nyquist)
        return f1, f2

    def filters(self) -> torch.Tensor:
        f1, f2 = self.cutoffs()
        half = self.half_offsets.to(self.low_hz.dtype)
        window = self.window.to(self.low_hz.dtype)
        sr = self.sample_rate

        def lowpass(f):
            arg = 2.0 * f[:, None] * half[None, :] / sr
            return 2.0 * f[:, None] / sr * torch.special.sinc(arg)

        kernels = (lowpass(f2) - lowpass(f1)) * window[None, :]
        return kernels[:, None, :]  # (filters, 1, length)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] < self.kernel_length:
            raise ValueError(
                f"waveform has {x.shape[-1]} samples but the filterbank needs "
                f"at least {self.kernel_length}"
            )
        return nn.functional.conv1d(x, self.filters(), stride=self.stride)


class DSConvBlock(nn.Module):
    """Depthwise temporal conv + pointwise channel mix, each batch-normed.

    Without the normalization the stack attenuates input-dependent variation
    multiplicatively at init (bias terms dominate every layer) and the encoder
    starts out as a near-constant function of the waveform.
    """

    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int,
                 slope: float = 0.01):
        super().__init__()
        self.depthwise = nn.Conv1d(in_ch, in_ch, kernel, stride=stride,
                                   padding=kernel // 2, groups=in_ch)
        self.norm_dw = nn.BatchNorm1d(in_ch)
        self.pointwise = nn.Conv1d(in_ch, out_ch, 1)
        self.norm_pw = nn.BatchNorm1d(out_ch)
        self.act = nn.LeakyReLU(slope)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.act(self.norm_dw(self.depthwise(x)))
        return self.act(self.norm_pw(self.pointwise(x)))


@dataclass
class AudioNetConfig:
    num_filters: int = 80
    kernel_length: int = 251
    stride: int = 32
    block_channels: list[int] = field(default_factory=lambda: [128, 192, 256, 160])
    block_kernel: int = 9
    block_stride: int = 2
    sample_rate: int = 16000
    min_low_hz: float = 30.0
    slope: float = 0.01

    @property
    def embed_dim(self) -> int:
        return self.block_channels[-1]

    @classmethod
    def from_flat(cls, cfg: dict) -> "AudioNetConfig":
        return cls(
            num_filters=cfg["audio_num_filters"],
            kernel_length=cfg["audio_kernel_length"],
            stride=cfg["audio_stride"],
            block_channels=list(cfg["audio_block_channels"]),
            block_kernel=cfg["audio_block_kernel"],
            block_stride=cfg["audio_block_stride"],
            sample_rate=cfg["sample_rate"],
            min_low_hz=cfg["audio_min_low_hz"],
        )


class SincDSNet(nn.Module):
    """Waveform -> 160-d embedding via sinc filterbank + separable convs."""

    def __init__(self, config: AudioNetConfig | None = None):
        super().__init__()
        self.config = config or AudioNetConfig()
        c = self.config
        self.sinc = SincConv(c.num_filters, c.kernel_length, c.stride,
                             c.sample_rate, min_low_hz=c.min_low_hz)
        blocks = []
        in_ch = c.num_filters
        for out_ch in c.block_channels:
            blocks.append(DSConvBlock(in_ch, out_ch, c.block_kernel,
                                      c.block_stride, c.slope))
            in_ch = out_ch
        self.blocks = nn.Sequential(*blocks)
        self.embed_dim = c.embed_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 2:
            x = x[:, None, :]
        if x.dim() != 3 or x.shape[1] != 1:
            raise ValueError(f"expected (batch, samples) waveforms, got {tuple(x.shape)}")
        x = log_compress(self.sinc(x))
        x = self.blocks(x)
        return x.mean(dim=2)

    def complexity(self, input_samples: int) -> tuple[int, float]:
        """(parameter count, MFLOP for one input of input_samples samples).

        FLOPs are counted as 2 x multiply-accumulates of the convolutions;
        activations, normalization, bias adds, and pooling are ignored as
        negligible.
        """
        params = count_parameters(self)
        c = self.config
        length = conv_output_length(input_samples, c.kernel_length, c.stride, 0)
        macs = c.num_filters * c.kernel_length * length
        in_ch = c.num_filters
        for out_ch in c.block_channels:
            length_out = conv_output_length(length, c.block_kernel, c.block_stride,
                                            c.block_kernel // 2)
            macs += in_ch * c.block_kernel * length_out  # depthwise
            macs += in_ch * out_ch * length_out  # pointwise
            in_ch = out_ch
            length = length_out
        return params, macs * 2.0 / 1.0e6

    def export_filterbank(self, path: str | Path, freq_points: int = 128) -> None:
        """CSV of realized cutoffs and sampled magnitude responses."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with torch.no_grad():
            f1, f2 = (t.numpy() for t in self.sinc.cutoffs())
            kernels = self.sinc.filters().numpy()[:, 0, :]
        freqs = np.linspace(0.0, self.config.sample_rate / 2.0, freq_points)
        n = np.arange(kernels.shape[1])
        phases = np.exp(-2j * np.pi * freqs[:, None] * n[None, :]
                        / self.config.sample_rate)
        response = np.abs(phases @ kernels.T)  # (freq_points, filters)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["filter", "f_low_hz", "f_high_hz"]
                            + [f"mag_{f:.1f}hz" for f in freqs])
            for i in range(kernels.shape[0]):
                writer.writerow([i, f"{f1[i]:.4f}", f"{f2[i]:.4f}"]
                                + [f"{m:.6e}" for m in response[:, i]])


def conv_output_length(length: int, kernel: int, stride: int, padding: int) -> int:
    return (length + 2 * padding - kernel) // stride + 1


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
