"""Onset detection, hit matching and the alignment scores built on them."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy import signal as sps

from . import dsp
from .config import OnsetConfig
from .stats import mad

logger = logging.getLogger(__name__)

__all__ = [
    "HitAnnotations",
    "OnsetMatch",
    "AlignmentScores",
    "annotate_candidates",
    "detect_onsets",
    "onset_novelty",
    "adaptive_tolerance",
    "match",
    "alignment_scores",
    "perfect_align_rate",
]

HIT_SOURCES = ("manual", "semi_auto")


@dataclass(frozen=True)
class HitAnnotations:
    """Annotated event times in seconds, strictly increasing."""

    times: tuple[float, ...]
    source: str = "manual"

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if any(not np.isfinite(t) or t < 0 for t in times):
            raise ValueError("hit times must be finite and non-negative")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("hit times must be strictly increasing")
        if self.source not in HIT_SOURCES:
            raise ValueError(f"hit source must be one of {HIT_SOURCES}, got {self.source!r}")
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return len(self.times)

    def first(self, n: int) -> HitAnnotations:
        return HitAnnotations(self.times[:n], self.source)

    def check_within(self, duration: float) -> None:
        late = [t for t in self.times if t > duration]
        if late:
            raise ValueError(f"hit times {late} exceed clip duration {duration:.3f} s")


@dataclass(frozen=True)
class OnsetMatch:
    annotated: tuple[float, ...]
    matched: tuple[Optional[float], ...]
    tolerance: float

    @property
    def deviations(self) -> list[float]:
        return [abs(m - a) for a, m in zip(self.annotated, self.matched) if m is not None]

    @property
    def n_matched(self) -> int:
        return sum(m is not None for m in self.matched)


@dataclass(frozen=True)
class AlignmentScores:
    hit_coverage: float
    timing_error: Optional[float]
    perfect: bool

    def to_dict(self) -> dict:
        return {"hit_coverage": self.hit_coverage, "timing_error": self.timing_error,
                "perfect": self.perfect}


def annotate_candidates(clip: dsp.AudioClip, config: OnsetConfig = OnsetConfig()) -> HitAnnotations:
    """Propose hit times from peaks of the STFT energy envelope.

    Peaks need a prominence of ``annotate_prominence_mads`` MADs of the
    envelope. Peaks are accepted loudest first and any peak closer than
    ``annotate_min_gap`` to an accepted one is rejected. Candidates are meant
    for manual review.
    """
    if clip.samples.size == 0:
        raise ValueError("empty clip")
    audio = dsp.resample(clip, config.annotate_rate)
    if audio.samples.size < config.annotate_window:
        raise ValueError(f"clip too short for annotation: {audio.samples.size} samples "
                         f"< {config.annotate_window}")
    env = dsp.rms_envelope(dsp.stft(audio, config.annotate_window, config.annotate_hop))
    values = env.values
    if not np.any(values > 0):
        return HitAnnotations((), "semi_auto")
    floor = config.annotate_prominence_mads * mad(values)
    floor = max(floor, 1e-9 * float(values.max()))
    peaks, _ = sps.find_peaks(values, prominence=floor)
    # strongest first, so a weak noise peak cannot shadow a louder hit right after it
    order = peaks[np.argsort(-values[peaks], kind="stable")]
    accepted: list[float] = []
    for t in env.times[order]:
        if any(abs(t - a) < config.annotate_min_gap for a in accepted):
            continue
        accepted.append(float(t))
    return HitAnnotations(tuple(sorted(accepted)), "semi_auto")


def onset_novelty(clip: dsp.AudioClip, config: OnsetConfig = OnsetConfig()) -> dsp.Envelope:
    """Positive spectral flux per frame at the analysis rate.

    Value ``i`` compares frame ``i + 1`` with frame ``i``; its time stamp is the
    start of frame ``i + 1``.
    """
    spec = dsp.stft(clip, config.fft_size, config.hop)
    flux = np.maximum(0.0, np.diff(spec.magnitudes, axis=0)).sum(axis=1)
    return dsp.Envelope(flux, clip.sample_rate / config.hop, config.hop / clip.sample_rate)


def _pick(values: np.ndarray, rate: float, min_distance: float, config: OnsetConfig) -> np.ndarray:
    """Indices of local maxima clearing the adaptive threshold.

    The threshold is the largest of ``median + k MAD`` over the whole curve,
    ``(1 + relative_floor)`` times a moving median (which keeps decaying noise
    tails from firing) and ``peak_fraction`` of the curve maximum.
    """
    if values.size < 3 or not np.any(values > 0):
        return np.empty(0, dtype=int)
    med = float(np.median(values))
    half = max(1, int(round(config.local_window * rate)))
    local = ndimage.median_filter(values, size=2 * half + 1, mode="nearest")
    threshold = np.maximum(med + config.threshold_mads * mad(values),
                           (1 + config.relative_floor) * local)
    threshold = np.maximum(threshold, max(config.peak_fraction * float(values.max()), 1e-12))
    peaks, _ = sps.find_peaks(values, distance=max(1, int(np.ceil(min_distance * rate))))
    return peaks[values[peaks] > threshold[peaks]]


def _refine(slope: np.ndarray, lo: int, hi: int) -> int:
    lo = max(0, lo)
    hi = min(slope.size, hi)
    if hi <= lo:
        return max(0, min(lo, slope.size - 1))
    return lo + int(np.argmax(slope[lo:hi]))


def detect_onsets(clip: dsp.AudioClip, config: OnsetConfig = OnsetConfig()) -> list[float]:
    """Onset times in seconds.

    The primary detector peak-picks positive spectral flux (FFT 512, hop 53 at
    16 kHz) against ``median + 3 MAD`` with the extra floors described in
    :func:`_pick`. When that finds nothing, or more than ``max_onset_rate`` onsets per second,
    peaks of the smoothed analytic envelope are used instead. Every onset is
    snapped to the steepest rise of a lightly smoothed envelope nearby.
    """
    if clip.samples.size == 0:
        raise ValueError("empty clip")
    audio = dsp.resample(clip, config.analysis_rate)
    sr = audio.sample_rate
    if audio.duration < 0.1:
        raise ValueError(f"clip too short for onset detection: {audio.duration * 1000:.1f} ms < 100 ms")
    if not np.any(audio.samples):
        return []

    fine = dsp.gaussian_smooth(dsp.analytic_envelope(audio), config.refine_sigma).values
    slope = np.gradient(fine)

    starts: list[int] = []
    if audio.samples.size >= config.fft_size:
        novelty = onset_novelty(audio, config)
        peaks = _pick(novelty.values, novelty.rate, config.min_separation, config)
        # flux value i measures content entering the window of frame i + 1
        starts = [_refine(slope, (p + 1) * config.hop, (p + 1) * config.hop + config.fft_size)
                  for p in peaks]
    if not starts or len(starts) / audio.duration > config.max_onset_rate:
        logger.debug("onset detector fell back to envelope peaks (%d primary onsets)", len(starts))
        env = dsp.gaussian_smooth(dsp.analytic_envelope(audio), config.fallback_sigma).values
        step = max(1, sr // 1000)
        coarse = env[::step]
        peaks = _pick(coarse, sr / step, config.fallback_min_separation, config) * step
        back = int(round(config.fallback_min_separation * sr))
        starts = [_refine(slope, p - back, p + step) for p in peaks]

    onsets: list[int] = []
    min_gap = config.min_separation * sr
    for s in sorted(starts):
        if onsets and s - onsets[-1] < min_gap:
            continue
        onsets.append(s)
    return [float(s) / sr for s in onsets]


def adaptive_tolerance(annotated: Sequence[float], config: OnsetConfig = OnsetConfig()) -> float:
    """Matching window: a quarter of the median hit gap, clamped to [100, 250] ms."""
    if len(annotated) < 2:
        return config.single_hit_tolerance
    gap = float(np.median(np.diff(np.asarray(annotated, dtype=float))))
    return float(np.clip(config.tolerance_fraction * gap, config.tolerance_min, config.tolerance_max))


def match(detected: Sequence[float], annotated: HitAnnotations,
          config: OnsetConfig = OnsetConfig()) -> OnsetMatch:
    """Greedy matching: annotations in time order take the nearest unused detection.

    Equidistant detections resolve to the earlier one.
    """
    if len(annotated) == 0:
        raise ValueError("annotated hits must be non-empty")
    tol = adaptive_tolerance(annotated.times, config)
    pool = sorted(float(d) for d in detected)
    used = [False] * len(pool)
    matched: list[Optional[float]] = []
    for t in annotated.times:
        best = None
        best_dist = np.inf
        for k, d in enumerate(pool):
            if used[k]:
                continue
            dist = abs(d - t)
            if dist <= tol + 1e-12 and dist < best_dist:
                best, best_dist = k, dist
        if best is None:
            matched.append(None)
        else:
            used[best] = True
            matched.append(pool[best])
    return OnsetMatch(annotated.times, tuple(matched), tol)


def alignment_scores(m: OnsetMatch) -> AlignmentScores:
    total = len(m.annotated)
    if total == 0:
        raise ValueError("match has no annotations")
    coverage = 100.0 * m.n_matched / total
    devs = m.deviations
    timing = 1000.0 * float(np.mean(devs)) if devs else None
    return AlignmentScores(coverage, timing, m.n_matched == total)


def perfect_align_rate(per_seed: Sequence[AlignmentScores]) -> float:
    if not per_seed:
        raise ValueError("no alignment scores given")
    return 100.0 * sum(s.perfect for s in per_seed) / len(per_seed)


def score_clip(clip: dsp.AudioClip, annotated: HitAnnotations,
               config: OnsetConfig = OnsetConfig()) -> tuple[OnsetMatch, AlignmentScores]:
    """Detect, match and score one generated clip against its annotations."""
    m = match(detect_onsets(clip, config), annotated, config)
    return m, alignment_scores(m)
