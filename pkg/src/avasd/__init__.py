"""Audio-visual active speaker detection.

Three-stage pipeline: per-speaker audio-visual encoding, inter-speaker
context modeling, and recurrent temporal modeling.
"""

__version__ = "0.1.0"
