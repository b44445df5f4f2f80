"""Physical-correctness auditing of generated audio.

Per-hit acoustic metrics, onset alignment scores, seed-voted directional
tests, anchor-based time warping and ELO aggregation of preference logs.
"""

from .config import METRIC_NAMES, RunConfig, load_config
from .dsp import AudioClip
from .metrics import MetricVector, compute_all
from .onset import HitAnnotations, detect_onsets, score_clip

__version__ = "0.1.0"

__all__ = [
    "AudioClip",
    "HitAnnotations",
    "METRIC_NAMES",
    "MetricVector",
    "RunConfig",
    "compute_all",
    "detect_onsets",
    "load_config",
    "score_clip",
]
