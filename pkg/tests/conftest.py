import numpy as np
import pytest

from avasd.config import load_config
from avasd.data.synthetic import SyntheticConfig, generate_synthetic


MICRO_SYNTH = dict(
    train_videos=2,
    val_videos=1,
    duration=6.0,
    fps=5.0,
    speakers_min=2,
    speakers_max=3,
    crop_px=48,
    face_min=40,
    face_max=200,
)


def micro_synth_config(**overrides) -> SyntheticConfig:
    kwargs = dict(MICRO_SYNTH)
    kwargs.update(overrides)
    return SyntheticConfig(**kwargs)


@pytest.fixture(scope="session")
def micro_dataset(tmp_path_factory):
    """A tiny but complete dataset: 2 train videos, 1 val video, 30 frames."""
    root = tmp_path_factory.mktemp("micro_data")
    summary = generate_synthetic(root, micro_synth_config(), seed=7)
    return root, summary


@pytest.fixture()
def tiny_cfg():
    cfg = load_config()
    cfg.update(
        video_family="tiny3d",
        video_widths=[4, 6, 8, 10],
        video_embed_dim=512,
        clip_length=8,
        crop_size=64,
        encoder_epochs=1,
        encoder_batch=8,
        encoder_device_batch=4,
        augment=False,
        isrm_window=1,
        temporal_seq_len=8,
        head_epochs=2,
        head_lr=1e-3,
        head_batch=32,
    )
    return cfg


def random_feature_store(rng: np.random.Generator, videos=("v0",),
                         entities=("e0", "e1", "e2"), frames=8,
                         fps=5.0, v_dim=512, a_dim=160):
    """Feature store filled with random embeddings, for head-stage tests."""
    from avasd.features import FeatureStore

    store = FeatureStore(v_dim=v_dim, a_dim=a_dim)
    for vid in videos:
        for f in range(frames):
            ts = round(f / fps, 4)
            store.add_frame(vid, ts, rng.normal(size=a_dim).astype(np.float32))
            for ent in entities:
                store.add_entity(
                    vid, ts, ent, int(rng.integers(2)),
                    rng.normal(size=v_dim).astype(np.float32))
    return store
