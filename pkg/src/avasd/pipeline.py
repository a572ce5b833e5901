"""Stage orchestration: artifacts, checkpoints, head training, ablation.

A run directory accumulates the artifacts of successive stages::

    run/
      config.yaml        resolved configuration
      manifest.jsonl     one entry per completed stage, with content hashes
      encoder.pt         trained audio-visual encoder
      features_{split}.npz
      head.pt            context + temporal head (or plain frame head)
      predictions_{split}.csv
      metrics/*.csv
      ablation.csv

Each stage checks that its inputs exist and fails with the stage to run
first; re-running a stage with the same seed rewrites artifacts with
identical values.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch
import yaml
from torch import nn

from avasd.audio_net import AudioNetConfig
from avasd.config import ConfigError, config_hash
from avasd.data.augment import AugmentParams
from avasd.data.dataset import AVClipDataset, load_split
from avasd.data.synthetic import SyntheticConfig, generate_synthetic
from avasd.encoder import AVEncoder, EncoderTrainConfig, train_encoder
from avasd.evaluation import (
    GroupResult,
    PredictionRecord,
    format_table,
    join_predictions,
    mean_ap,
    write_metrics_csv,
    write_predictions_csv,
)
from avasd.features import FeatureStore, extract_features
from avasd.isrm import BackgroundEncoder, ISRMConfig, background_input, select_background
from avasd.temporal import TemporalConfig, TemporalHead, build_window
from avasd.video_net import VideoBackboneConfig

logger = logging.getLogger("avasd")

CHECKPOINT_FORMAT = 1


class DependencyError(FileNotFoundError):
    """A stage's input artifact is missing; names the stage to run first."""


def derive_seed(master: int, *scope: str) -> int:
    """Stable per-stage seed derived from the master seed."""
    text = f"{master}:" + ":".join(scope)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "big")


# -- checkpoints ------------------------------------------------------------


def save_checkpoint(path: str | Path, stage: str, model: nn.Module,
                    cfg: dict[str, Any], seed: int,
                    extra: dict[str, Any] | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "format_version": CHECKPOINT_FORMAT,
            "stage": stage,
            "config": cfg,
            "seed": seed,
            "extra": extra or {},
            "state": model.state_dict(),
        },
        path,
    )


def load_checkpoint(path: str | Path, expect_stage: str) -> dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise DependencyError(f"checkpoint not found: {path}")
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("format_version") != CHECKPOINT_FORMAT:
        raise ConfigError(
            f"{path} has checkpoint format {blob.get('format_version')}, "
            f"expected {CHECKPOINT_FORMAT}"
        )
    if blob.get("stage") != expect_stage:
        raise ConfigError(
            f"{path} holds a {blob.get('stage')!r} checkpoint, expected "
            f"{expect_stage!r}"
        )
    return blob


def build_encoder(cfg: dict[str, Any]) -> AVEncoder:
    return AVEncoder(VideoBackboneConfig.from_flat(cfg),
                     AudioNetConfig.from_flat(cfg))


# -- feature assembly -------------------------------------------------------


@dataclass
class TrackFeatures:
    video_id: str
    entity_id: str
    timestamps: list[float]
    base: np.ndarray  # (T, Dbase)
    bg: np.ndarray | None  # (T, isrm input dim) or None
    labels: np.ndarray  # (T,)


@dataclass
class FeatureSet:
    tracks: list[TrackFeatures]
    base_dim: int
    bg_dim: int  # 0 when the context stage is off

    def samples(self) -> list[tuple[int, int]]:
        return [(ti, pos) for ti, tf in enumerate(self.tracks)
                for pos in range(len(tf.timestamps))]


def base_dim_of(cfg: dict[str, Any]) -> int:
    return 512 * bool(cfg["use_video"]) + 160 * bool(cfg["use_audio"])


def assemble_features(store: FeatureStore, cfg: dict[str, Any],
                      rng: np.random.Generator | None = None) -> FeatureSet:
    """Per-track base features and context-stage inputs.

    rng drives background-speaker selection; pass None to freeze it at
    the configured selection seed (evaluation behavior). Causal mode
    zero-fills context window positions after each frame.
    """
    isrm_cfg = ISRMConfig.from_flat(cfg)
    causal = bool(cfg["temporal_causal"])
    use_isrm = bool(cfg["use_isrm"])
    if rng is None:
        rng = np.random.default_rng([isrm_cfg.selection_seed])

    timelines: dict[str, list[float]] = {}

    def timeline_of(video_id: str) -> list[float]:
        if video_id not in timelines:
            timelines[video_id] = store.video_timeline(video_id)
        return timelines[video_id]

    ent_rows = store.entity_rows()
    tracks = []
    for (video_id, entity_id), rows in sorted(store.tracks().items()):
        ts_list = [ts for ts, _ in rows]
        base_rows, bg_rows, labels = [], [], []
        timeline = timeline_of(video_id)
        index = {ts: i for i, ts in enumerate(timeline)}
        for ts, row_idx in rows:
            parts = []
            if cfg["use_video"]:
                parts.append(store.get_v(video_id, ts, entity_id))
            if cfg["use_audio"]:
                parts.append(store.get_a(video_id, ts))
            base_rows.append(np.concatenate(parts) if parts
                             else np.zeros(0, np.float32))
            labels.append(ent_rows[row_idx][3])
            if use_isrm:
                context = store.frame_context(video_id, ts)
                slots = select_background(context, entity_id,
                                          isrm_cfg.num_speakers, rng)
                bg_rows.append(background_input(
                    store, video_id, timeline, index[ts], slots, isrm_cfg,
                    causal=causal))
        tracks.append(TrackFeatures(
            video_id=video_id,
            entity_id=entity_id,
            timestamps=ts_list,
            base=np.stack(base_rows).astype(np.float32),
            bg=np.stack(bg_rows).astype(np.float32) if use_isrm else None,
            labels=np.array(labels, dtype=np.int64),
        ))
    return FeatureSet(tracks=tracks, base_dim=base_dim_of(cfg),
                      bg_dim=isrm_cfg.input_dim if use_isrm else 0)


# -- head models ------------------------------------------------------------


class HeadModel(nn.Module):
    """Classification head over stored features.

    Four shapes, depending on the pipeline toggles:
    context + temporal (context features enter the recurrent input, or the
    recurrent state when stage_order puts the temporal stage first),
    context only, temporal only, or a plain affine frame head.
    """

    def __init__(self, cfg: dict[str, Any]):
        super().__init__()
        self.use_isrm = bool(cfg["use_isrm"])
        self.use_temporal = bool(cfg["use_temporal"])
        self.stage_order = cfg["stage_order"]
        self.base_dim = base_dim_of(cfg)
        self.bg_encoder = BackgroundEncoder(ISRMConfig.from_flat(cfg)) \
            if self.use_isrm else None
        b_dim = ISRMConfig.from_flat(cfg).output_dim if self.use_isrm else 0

        if self.use_temporal:
            if self.use_isrm and self.stage_order == "isrm_first":
                rnn_input = self.base_dim + b_dim
                self.temporal = TemporalHead(
                    TemporalConfig.from_flat(cfg, input_dim=rnn_input))
                self.fc = None
            else:
                self.temporal = TemporalHead(
                    TemporalConfig.from_flat(cfg, input_dim=self.base_dim))
                if self.use_isrm:  # temporal_first: context joins the state
                    state_dim = self.temporal.fc.in_features
                    self.temporal.fc = nn.Identity()
                    self.fc = nn.Linear(state_dim + b_dim, 2)
                else:
                    self.fc = None
        else:
            self.temporal = None
            self.fc = nn.Linear(self.base_dim + b_dim, 2)

    def forward(self, base: torch.Tensor,
                bg: torch.Tensor | None = None) -> torch.Tensor:
        """base: (B, L, Dbase) with temporal, else (B, Dbase).
        bg: matching (B, L, bg_in) / (B, bg_in) when the context stage is on.
        """
        if self.use_isrm and bg is None:
            raise ValueError("context stage is enabled but no bg input given")
        if self.use_temporal:
            if self.use_isrm and self.stage_order == "isrm_first":
                b = self.bg_encoder(bg)
                return self.temporal(torch.cat([base, b], dim=-1))
            if self.use_isrm:  # temporal_first
                state = self.temporal(base)
                ref = self.temporal.cfg.reference_position
                b = self.bg_encoder(bg[:, ref])
                return self.fc(torch.cat([state, b], dim=-1))
            return self.temporal(base)
        if self.use_isrm:
            b = self.bg_encoder(bg)
            return self.fc(torch.cat([base, b], dim=-1))
        return self.fc(base)


@dataclass
class HeadTrainConfig:
    epochs: int = 10
    lr: float = 3.0e-6
    lr_step: int = 5
    lr_decay: float = 0.1
    batch: int = 256

    @classmethod
    def from_flat(cls, cfg: dict[str, Any]) -> "HeadTrainConfig":
        return cls(epochs=cfg["head_epochs"], lr=cfg["head_lr"],
                   lr_step=cfg["head_lr_step"], lr_decay=cfg["head_lr_decay"],
                   batch=cfg["head_batch"])


def _head_batches(feature_set: FeatureSet, cfg: dict[str, Any],
                  order: np.ndarray, batch: int):
    """Yield (base, bg, labels) tensors over samples in the given order."""
    temporal = bool(cfg["use_temporal"])
    tcfg = TemporalConfig.from_flat(cfg, input_dim=1)
    samples = feature_set.samples()
    for lo in range(0, len(order), batch):
        chunk = [samples[i] for i in order[lo:lo + batch]]
        base_rows, bg_rows, labels = [], [], []
        for ti, pos in chunk:
            tf = feature_set.tracks[ti]
            labels.append(tf.labels[pos])
            if temporal:
                base_rows.append(build_window(tf.base, pos, tcfg))
                if tf.bg is not None:
                    bg_rows.append(build_window(tf.bg, pos, tcfg))
            else:
                base_rows.append(tf.base[pos])
                if tf.bg is not None:
                    bg_rows.append(tf.bg[pos])
        base = torch.from_numpy(np.stack(base_rows))
        bg = torch.from_numpy(np.stack(bg_rows)) if bg_rows else None
        yield base, bg, torch.tensor(labels, dtype=torch.long)


def train_head(store: FeatureStore, cfg: dict[str, Any], seed: int) -> HeadModel:
    """Train the context + temporal head on stored features.

    Background-speaker selection is re-drawn every epoch during training
    and frozen at the configured selection seed for evaluation.
    """
    tcfg = HeadTrainConfig.from_flat(cfg)
    torch.manual_seed(seed)
    model = HeadModel(cfg)
    optimizer = torch.optim.Adam(model.parameters(), lr=tcfg.lr)
    shuffle_rng = np.random.default_rng([seed, 99])
    sel_seed = cfg["isrm_selection_seed"]

    model.train()
    for epoch in range(tcfg.epochs):
        lr = tcfg.lr * (tcfg.lr_decay ** (epoch // tcfg.lr_step))
        for group in optimizer.param_groups:
            group["lr"] = lr
        selection = np.random.default_rng([sel_seed, epoch]) \
            if cfg["use_isrm"] else None
        feature_set = assemble_features(store, cfg, rng=selection)
        order = shuffle_rng.permutation(len(feature_set.samples()))
        losses = []
        for base, bg, labels in _head_batches(feature_set, cfg, order,
                                              tcfg.batch):
            optimizer.zero_grad()
            logits = model(base, bg)
            loss = nn.functional.cross_entropy(logits, labels)
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        logger.info("stage=head epoch=%d lr=%g loss=%.6f", epoch, lr,
                    float(np.mean(losses)))
    return model


@torch.no_grad()
def predict_scores(store: FeatureStore, model: HeadModel,
                   cfg: dict[str, Any]) -> list[tuple[str, float, str, float]]:
    """Speaking scores for every stored face, frozen selection seed."""
    model.eval()
    feature_set = assemble_features(store, cfg, rng=None)
    rows = []
    order = np.arange(len(feature_set.samples()))
    samples = feature_set.samples()
    scores = []
    for base, bg, _ in _head_batches(feature_set, cfg, order, 128):
        probs = torch.softmax(model(base, bg), dim=1)[:, 1]
        scores.extend(float(p) for p in probs)
    for (ti, pos), score in zip(samples, scores):
        tf = feature_set.tracks[ti]
        rows.append((tf.video_id, tf.timestamps[pos], tf.entity_id, score))
    return rows


# -- manifest ---------------------------------------------------------------


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def append_manifest(run_dir: Path, stage: str, cfg: dict[str, Any],
                    inputs: dict[str, Path], outputs: dict[str, Path]) -> None:
    entry = {
        "stage": stage,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "inputs": {k: file_sha256(p) for k, p in sorted(inputs.items())},
        "outputs": {k: file_sha256(p) for k, p in sorted(outputs.items())},
    }
    with (run_dir / "manifest.jsonl").open("a") as fh:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def read_manifest(run_dir: Path) -> list[dict[str, Any]]:
    path = run_dir / "manifest.jsonl"
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line]


def verify_manifest(run_dir: str | Path) -> list[tuple[str, str, bool]]:
    """(stage, artifact name, hash still matches) for every manifest entry."""
    run_dir = Path(run_dir)
    name_to_path = {
        "encoder": run_dir / "encoder.pt",
        "head": run_dir / "head.pt",
    }
    report = []
    for entry in read_manifest(run_dir):
        for name, recorded in entry["outputs"].items():
            path = name_to_path.get(name, run_dir / name)
            ok = path.exists() and file_sha256(path) == recorded
            report.append((entry["stage"], name, ok))
    return report


# -- stages -----------------------------------------------------------------


def _write_config(run_dir: Path, cfg: dict[str, Any]) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.yaml").write_text(
        yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False))


def stage_synth_data(cfg: dict[str, Any], out_dir: str | Path):
    summary = generate_synthetic(out_dir, SyntheticConfig.from_flat(cfg),
                                 seed=cfg["seed"])
    for split in summary.splits.values():
        logger.info(
            "stage=synth split=%s videos=%d tracks=%d records=%d positives=%d "
            "target=%d", split.name, split.videos, split.tracks, split.records,
            split.positives, split.target_positives)
    return summary


def stage_train_encoder(cfg: dict[str, Any], data_root: str | Path,
                        run_dir: str | Path) -> Path:
    run_dir = Path(run_dir)
    _write_config(run_dir, cfg)
    videos = load_split(data_root, "train")
    dataset = AVClipDataset(
        videos,
        clip_length=cfg["clip_length"],
        crop_size=cfg["crop_size"],
        sample_rate=cfg["sample_rate"],
        reference=cfg["clip_reference"],
        augment=cfg["augment"],
        augment_params=AugmentParams(
            size=cfg["crop_size"], pad=cfg["augment_pad"],
            flip_prob=cfg["augment_flip_prob"],
            brightness=cfg["augment_brightness"],
            contrast=cfg["augment_contrast"],
            saturation=cfg["augment_saturation"]),
        norm_mean=cfg["video_norm_mean"], norm_std=cfg["video_norm_std"],
        seed=cfg["seed"],
    )
    model = build_encoder(cfg)
    seed = derive_seed(cfg["seed"], "encoder")
    stats = train_encoder(model, dataset, EncoderTrainConfig.from_flat(cfg),
                          seed=seed)
    out = run_dir / "encoder.pt"
    save_checkpoint(out, "encoder", model, cfg, seed, extra=stats)
    append_manifest(run_dir, "train-encoder", cfg, {}, {"encoder": out})
    return out


def stage_extract_features(cfg: dict[str, Any], data_root: str | Path,
                           run_dir: str | Path, split: str) -> Path:
    run_dir = Path(run_dir)
    ckpt_path = run_dir / "encoder.pt"
    if not ckpt_path.exists():
        raise DependencyError(
            f"{ckpt_path} missing: run the train-encoder stage first")
    blob = load_checkpoint(ckpt_path, "encoder")
    model = build_encoder(blob["config"])
    model.load_state_dict(blob["state"])

    videos = load_split(data_root, split)
    store = extract_features(
        model, videos,
        clip_length=cfg["clip_length"], crop_size=cfg["crop_size"],
        sample_rate=cfg["sample_rate"], reference=cfg["clip_reference"],
        norm_mean=cfg["video_norm_mean"], norm_std=cfg["video_norm_std"],
    )
    out = run_dir / f"features_{split}.npz"
    store.save(out)
    logger.info("stage=extract split=%s faces=%d frames=%d", split,
                len(store), store.num_frames)
    append_manifest(run_dir, f"extract-features-{split}", cfg,
                    {"encoder": ckpt_path}, {f"features_{split}.npz": out})
    return out


def stage_train_head(cfg: dict[str, Any], run_dir: str | Path) -> Path:
    run_dir = Path(run_dir)
    feat_path = run_dir / "features_train.npz"
    if not feat_path.exists():
        raise DependencyError(
            f"{feat_path} missing: run extract-features --split train first")
    store = FeatureStore.load(feat_path)
    seed = derive_seed(cfg["seed"], "head")
    model = train_head(store, cfg, seed)
    out = run_dir / "head.pt"
    save_checkpoint(out, "head", model, cfg, seed)
    append_manifest(run_dir, "train-head", cfg,
                    {"features_train.npz": feat_path}, {"head": out})
    return out


def _load_head(cfg: dict[str, Any], run_dir: Path) -> HeadModel:
    blob = load_checkpoint(run_dir / "head.pt", "head")
    stored = blob["config"]
    for key in ("use_video", "use_audio", "use_isrm", "use_temporal",
                "stage_order", "temporal_causal"):
        if stored[key] != cfg[key]:
            raise ConfigError(
                f"head checkpoint was trained with {key}={stored[key]!r} but "
                f"the current config has {key}={cfg[key]!r}"
            )
    model = HeadModel(stored)
    model.load_state_dict(blob["state"])
    return model


def stage_predict(cfg: dict[str, Any], run_dir: str | Path,
                  split: str = "val") -> Path:
    run_dir = Path(run_dir)
    feat_path = run_dir / f"features_{split}.npz"
    if not feat_path.exists():
        raise DependencyError(
            f"{feat_path} missing: run extract-features --split {split} first")
    if not (run_dir / "head.pt").exists():
        raise DependencyError(
            f"{run_dir / 'head.pt'} missing: run the train-head stage first")
    store = FeatureStore.load(feat_path)
    model = _load_head(cfg, run_dir)
    rows = predict_scores(store, model, cfg)
    out = run_dir / f"predictions_{split}.csv"
    write_predictions_csv(out, rows)
    append_manifest(run_dir, f"predict-{split}", cfg,
                    {"head": run_dir / "head.pt",
                     f"features_{split}.npz": feat_path},
                    {f"predictions_{split}.csv": out})
    return out


def evaluate_predictions(gt_path: str | Path, pred_path: str | Path,
                         videos_path: str | Path | None,
                         per_video: bool = False
                         ) -> dict[str, list[GroupResult]]:
    records = join_predictions(gt_path, pred_path, videos_path)
    tables = {
        "overall": mean_ap(records, "none", per_video=per_video),
        "faces_in_frame": mean_ap(records, "faces_in_frame",
                                  per_video=per_video),
    }
    if videos_path is not None:
        tables["face_size"] = mean_ap(records, "face_size",
                                      per_video=per_video)
    return tables


TABLE_TITLES = {
    "overall": "mAP (all faces pooled)",
    "faces_in_frame": "mAP by faces in frame",
    "face_size": "mAP by face size (S < 64px <= M < 128px <= L)",
}


def render_tables(tables: dict[str, list[GroupResult]]) -> str:
    parts = [format_table(TABLE_TITLES[name], rows)
             for name, rows in tables.items()]
    return "\n\n".join(parts) + "\n"


def stage_evaluate(cfg: dict[str, Any], data_root: str | Path,
                   run_dir: str | Path, split: str = "val") -> str:
    run_dir = Path(run_dir)
    data_root = Path(data_root)
    pred_path = run_dir / f"predictions_{split}.csv"
    if not pred_path.exists():
        raise DependencyError(
            f"{pred_path} missing: run the predict stage first")
    gt_path = data_root / "annotations" / f"{split}.csv"
    videos_path = data_root / "videos.csv"
    tables = evaluate_predictions(
        gt_path, pred_path, videos_path if videos_path.exists() else None,
        per_video=cfg["eval_per_video_ap"])
    metrics_dir = run_dir / "metrics"
    outputs = {}
    for name, rows in tables.items():
        out = metrics_dir / f"{name}.csv"
        write_metrics_csv(out, rows)
        outputs[f"metrics/{name}.csv"] = out
    append_manifest(run_dir, f"evaluate-{split}", cfg,
                    {f"predictions_{split}.csv": pred_path}, outputs)
    return render_tables(tables)


def report(run_dir: str | Path) -> str:
    """Re-render the evaluation tables from stored metrics."""
    import csv as _csv

    run_dir = Path(run_dir)
    metrics_dir = run_dir / "metrics"
    if not metrics_dir.exists():
        raise DependencyError(
            f"{metrics_dir} missing: run the evaluate stage first")
    tables = {}
    for name in TABLE_TITLES:
        path = metrics_dir / f"{name}.csv"
        if not path.exists():
            continue
        with path.open(newline="") as fh:
            rows = [GroupResult(r["group"], float(r["ap"]), int(r["support"]))
                    for r in _csv.DictReader(fh)]
        tables[name] = rows
    if not tables:
        raise DependencyError(
            f"no metrics CSVs under {metrics_dir}: run the evaluate stage first")
    return render_tables(tables)


# -- ablation ---------------------------------------------------------------


ABLATION_ROWS: list[tuple[str, dict[str, Any]]] = [
    ("V", {"use_video": True, "use_audio": False, "use_isrm": False,
           "use_temporal": False}),
    ("A", {"use_video": False, "use_audio": True, "use_isrm": False,
           "use_temporal": False}),
    ("AV", {"use_video": True, "use_audio": True, "use_isrm": False,
            "use_temporal": False}),
    ("AV+T", {"use_video": True, "use_audio": True, "use_isrm": False,
              "use_temporal": True}),
    ("AV+C", {"use_video": True, "use_audio": True, "use_isrm": True,
              "use_temporal": False}),
    ("A+C", {"use_video": False, "use_audio": True, "use_isrm": True,
             "use_temporal": False}),
    ("A+C+T", {"use_video": False, "use_audio": True, "use_isrm": True,
               "use_temporal": True}),
    ("AV+C+T", {"use_video": True, "use_audio": True, "use_isrm": True,
                "use_temporal": True}),
]


def ablation_suite(cfg: dict[str, Any], run_dir: str | Path,
                   rows: list[str] | None = None) -> list[tuple[str, float]]:
    """Train a head per feature combination and report validation mAP.

    The encoder and the extracted features are shared; only the head is
    retrained per row. V/A/AV rows are affine frame heads, +T rows add
    the recurrent stage, +C rows add inter-speaker context.
    """
    run_dir = Path(run_dir)
    train_path = run_dir / "features_train.npz"
    val_path = run_dir / "features_val.npz"
    for path, split in ((train_path, "train"), (val_path, "val")):
        if not path.exists():
            raise DependencyError(
                f"{path} missing: run extract-features --split {split} first")
    store_train = FeatureStore.load(train_path)
    store_val = FeatureStore.load(val_path)

    wanted = dict(ABLATION_ROWS)
    names = rows if rows is not None else [n for n, _ in ABLATION_ROWS]
    unknown = [n for n in names if n not in wanted]
    if unknown:
        raise ConfigError(
            f"unknown ablation rows {unknown}; available: {list(wanted)}")

    results = []
    for name in names:
        row_cfg = dict(cfg)
        row_cfg.update(wanted[name])
        seed = derive_seed(cfg["seed"], "ablation", name)
        model = train_head(store_train, row_cfg, seed)
        scored = predict_scores(store_val, model, row_cfg)
        labels = {(vid, f"{ts:.4f}", ent): lab
                  for vid, ts, ent, lab in store_val.entity_rows()}
        records = [
            PredictionRecord(vid, ts, ent, score,
                             labels[(vid, f"{ts:.4f}", ent)])
            for vid, ts, ent, score in scored
        ]
        result = mean_ap(records, "none")[0].ap
        logger.info("stage=ablate row=%s map=%.4f", name, result)
        results.append((name, result))

    out = run_dir / "ablation.csv"
    with out.open("w", newline="") as fh:
        import csv as _csv
        writer = _csv.writer(fh)
        writer.writerow(["row", "use_video", "use_audio", "use_isrm",
                         "use_temporal", "map"])
        for name, value in results:
            flags = wanted[name]
            writer.writerow([name, int(flags["use_video"]),
                             int(flags["use_audio"]), int(flags["use_isrm"]),
                             int(flags["use_temporal"]), f"{value:.6f}"])
    return results


def format_ablation(results: list[tuple[str, float]]) -> str:
    lines = ["ablation (validation mAP)", f"{'row':>10}  {'mAP':>8}"]
    for name, value in results:
        lines.append(f"{name:>10}  {value:8.4f}")
    return "\n".join(lines) + "\n"
