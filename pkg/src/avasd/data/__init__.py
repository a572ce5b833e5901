from avasd.data.annotations import (
    AnnotationError,
    AnnotationRecord,
    FaceTrack,
    load_annotations,
    write_annotations,
)
from avasd.data.audio import AudioSegment, load_wav, save_wav, slice_audio
from avasd.data.clips import ClipSample, build_clip, clip_frame_indices, clip_to_tensor, resize_clip
from avasd.data.augment import AugmentParams, augment_clip
from avasd.data.dataset import AVClipDataset, VideoData, load_split
from avasd.data.synthetic import SyntheticConfig, generate_synthetic

__all__ = [
    "AnnotationError",
    "AnnotationRecord",
    "FaceTrack",
    "load_annotations",
    "write_annotations",
    "AudioSegment",
    "load_wav",
    "save_wav",
    "slice_audio",
    "ClipSample",
    "build_clip",
    "clip_frame_indices",
    "clip_to_tensor",
    "resize_clip",
    "AugmentParams",
    "augment_clip",
    "AVClipDataset",
    "VideoData",
    "load_split",
    "SyntheticConfig",
    "generate_synthetic",
]
