"""Per-speaker audio-visual encoder and its training loop.

The video and audio backbones produce v (512-d) and a (160-d); a single
affine layer on their concatenation predicts speaking/not-speaking.
Auxiliary affine heads on v alone and a alone are trained jointly,
supervising each modality directly; the total loss is the sum of the
three cross-entropies.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import torch
from torch import nn
from torch.utils.data import DataLoader

from avasd.audio_net import AudioNetConfig, SincDSNet
from avasd.video_net import VideoBackboneConfig, build_video_net

logger = logging.getLogger("avasd")


class TrainingDivergedError(RuntimeError):
    """Loss became NaN/Inf during optimization."""


@dataclass
class EncoderOutput:
    v: torch.Tensor  # (B, 512)
    a: torch.Tensor  # (B, 160)
    logits_av: torch.Tensor  # (B, 2)
    logits_v: torch.Tensor  # (B, 2)
    logits_a: torch.Tensor  # (B, 2)


class AVEncoder(nn.Module):
    def __init__(self, video_cfg: VideoBackboneConfig, audio_cfg: AudioNetConfig):
        super().__init__()
        self.video_net = build_video_net(video_cfg)
        self.audio_net = SincDSNet(audio_cfg)
        self.v_dim = self.video_net.embed_dim
        self.a_dim = self.audio_net.embed_dim
        self.head_av = nn.Linear(self.v_dim + self.a_dim, 2)
        self.head_v = nn.Linear(self.v_dim, 2)
        self.head_a = nn.Linear(self.a_dim, 2)

    def fuse_and_predict(self, v: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
        if v.shape[-1] != self.v_dim or a.shape[-1] != self.a_dim:
            raise ValueError(
                f"expected embeddings of dim ({self.v_dim}, {self.a_dim}), got "
                f"({v.shape[-1]}, {a.shape[-1]})"
            )
        return self.head_av(torch.cat([v, a], dim=-1))

    def forward(self, clips: torch.Tensor, waves: torch.Tensor) -> EncoderOutput:
        v = self.video_net(clips)
        a = self.audio_net(waves)
        return EncoderOutput(
            v=v,
            a=a,
            logits_av=self.fuse_and_predict(v, a),
            logits_v=self.head_v(v),
            logits_a=self.head_a(a),
        )


def encoder_loss(out: EncoderOutput, labels: torch.Tensor) -> torch.Tensor:
    """Sum of fused and per-modality cross-entropies (batch means)."""
    ce = nn.functional.cross_entropy
    return (ce(out.logits_av, labels) + ce(out.logits_a, labels)
            + ce(out.logits_v, labels))


@dataclass
class EncoderTrainConfig:
    epochs: int = 70
    lr: float = 3.0e-4
    lr_step: int = 30
    lr_decay: float = 0.1
    batch: int = 192  # effective batch, reached by gradient accumulation
    device_batch: int = 16
    workers: int = 0

    @classmethod
    def from_flat(cls, cfg: dict) -> "EncoderTrainConfig":
        return cls(
            epochs=cfg["encoder_epochs"],
            lr=cfg["encoder_lr"],
            lr_step=cfg["encoder_lr_step"],
            lr_decay=cfg["encoder_lr_decay"],
            batch=cfg["encoder_batch"],
            device_batch=cfg["encoder_device_batch"],
            workers=cfg["workers"],
        )

    def validate(self) -> None:
        if self.batch % self.device_batch != 0:
            raise ValueError(
                f"effective batch {self.batch} must be a multiple of the "
                f"device batch {self.device_batch}"
            )
        if self.epochs < 1 or self.lr <= 0:
            raise ValueError("epochs must be >= 1 and lr > 0")


def train_encoder(model: AVEncoder, dataset, cfg: EncoderTrainConfig,
                  seed: int = 0) -> dict:
    """Optimize the encoder; returns summary stats. Deterministic per seed."""
    cfg.validate()
    torch.manual_seed(seed)
    accum = cfg.batch // cfg.device_batch
    generator = torch.Generator().manual_seed(seed)
    # drop_last keeps batch-norm away from stray size-1 micro-batches
    loader = DataLoader(dataset, batch_size=cfg.device_batch, shuffle=True,
                        generator=generator, num_workers=cfg.workers,
                        drop_last=True)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)

    model.train()
    step = 0
    last_loss = float("nan")
    for epoch in range(cfg.epochs):
        if hasattr(dataset, "set_epoch"):
            dataset.set_epoch(epoch)
        lr = cfg.lr * (cfg.lr_decay ** (epoch // cfg.lr_step))
        for group in optimizer.param_groups:
            group["lr"] = lr
        epoch_loss, epoch_batches = 0.0, 0
        optimizer.zero_grad()
        for i, (clips, waves, labels) in enumerate(loader):
            out = model(clips, waves)
            loss = encoder_loss(out, labels)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} batch {i}; last finite "
                    f"loss was {last_loss:.4f} (lr={lr:g})"
                )
            (loss / accum).backward()
            if (i + 1) % accum == 0:
                optimizer.step()
                optimizer.zero_grad()
                step += 1
            last_loss = float(loss.detach())
            epoch_loss += last_loss
            epoch_batches += 1
        if epoch_batches % accum != 0:
            optimizer.step()  # flush the tail micro-batches
            optimizer.zero_grad()
            step += 1
        mean_loss = epoch_loss / max(1, epoch_batches)
        logger.info("stage=encoder epoch=%d lr=%g loss=%.6f steps=%d",
                    epoch, lr, mean_loss, step)
    return {"epochs": cfg.epochs, "steps": step, "final_loss": mean_loss}
