"""Hit segmentation and the nine physical-acoustic metric extractors.

Every extractor works on 16 kHz audio. Public functions return ``nan`` when a
metric cannot be computed; :func:`measure` additionally reports why, using the
reason codes in :data:`REASONS`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import signal as sps

from . import dsp
from .config import METRIC_NAMES, PER_HIT_METRICS, MetricsConfig, OnsetConfig
from .onset import HitAnnotations, detect_onsets, match
from .stats import linfit_r2, mad, theil_sen, trimmed_mean

__all__ = [
    "REASONS",
    "DroppedHitWarning",
    "HitSegment",
    "Measurement",
    "F0Estimate",
    "MetricVector",
    "segment_window",
    "segment_hits",
    "whole_clip_segment",
    "attack_time",
    "decay_rate",
    "fundamental_frequency",
    "f0_estimate",
    "octave_correct",
    "spectral_centroid",
    "spectral_rolloff",
    "frame_centroid",
    "frame_rolloff",
    "spectral_flux",
    "rt60",
    "drr",
    "temporal_modulation",
    "measure",
    "compute_all",
]

REASONS = {
    "insufficient_hits": "fewer valid hits than required for per-hit averaging",
    "no_hits": "no valid hit to anchor the measurement",
    "too_short": "analysis window shorter than the extractor needs",
    "silent": "no signal energy in the analysis window",
    "no_onset": "no sample passed the attack onset gate",
    "no_decay_fit": "no decay range produced a usable fit",
    "no_pitch": "neither pitch tier found a fundamental",
    "no_rt60": "no energy-decay range met the fit criteria",
    "no_reverb_window": "reverberant window is empty",
}

_TINY = 1e-300


class DroppedHitWarning(UserWarning):
    """A hit lies at or beyond the end of the clip and was skipped."""


class _Unavailable(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class HitSegment:
    """Audio around one hit.

    ``onset_offset`` is the hit time measured from the segment start and
    ``start`` is the segment start within the source clip, both in seconds.
    """

    clip: dsp.AudioClip
    onset_offset: float
    hit_index: int = 0
    start: float = 0.0

    def __post_init__(self):
        if self.clip.samples.size == 0:
            raise ValueError("hit segment is empty")
        if not 0 <= self.onset_offset <= self.clip.duration:
            raise ValueError("onset_offset must fall inside the segment")

    @property
    def samples(self) -> np.ndarray:
        return self.clip.samples

    @property
    def sample_rate(self) -> int:
        return self.clip.sample_rate

    @property
    def onset_index(self) -> int:
        return min(int(round(self.onset_offset * self.sample_rate)), self.samples.size - 1)

    @property
    def hit_time(self) -> float:
        return self.start + self.onset_offset

    @property
    def end(self) -> float:
        return self.start + self.clip.duration


@dataclass(frozen=True)
class Measurement:
    value: float
    reason: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.reason is None and math.isfinite(self.value)


@dataclass(frozen=True)
class F0Estimate:
    """Pitch result with the tier that produced it (1 autocorrelation, 2 spectral peaks)."""

    value: float
    tier: Optional[int]
    voiced_ratio: float
    raw: float = float("nan")


def _analysis(clip: dsp.AudioClip, config: MetricsConfig) -> dsp.AudioClip:
    return dsp.resample(clip, config.analysis_rate)


def _as_segment(obj, config: MetricsConfig) -> HitSegment:
    if isinstance(obj, HitSegment):
        if obj.sample_rate == config.analysis_rate:
            return obj
        return HitSegment(_analysis(obj.clip, config), obj.onset_offset, obj.hit_index, obj.start)
    if isinstance(obj, dsp.AudioClip):
        return whole_clip_segment(obj, 0.0, config)
    raise TypeError(f"expected HitSegment or AudioClip, got {type(obj).__name__}")


# ---------------------------------------------------------------- segmentation

def segment_window(rt60_hint: Optional[float], config: MetricsConfig = MetricsConfig()) -> float:
    """Post-hit window length: ``clamp(1.5 * rt60_hint, 0.2, 2.0)`` seconds, 0.5 s without a hint."""
    if rt60_hint is None or not math.isfinite(rt60_hint) or rt60_hint <= 0:
        return config.window_default
    return float(np.clip(config.window_rt60_factor * rt60_hint, config.window_min, config.window_max))


def whole_clip_segment(clip: dsp.AudioClip, onset: float,
                       config: MetricsConfig = MetricsConfig()) -> HitSegment:
    """Treat an entire clip as one segment whose hit sits at ``onset`` seconds."""
    audio = _analysis(clip, config)
    return HitSegment(audio, min(max(onset, 0.0), audio.duration), 0, 0.0)


def segment_hits(clip: dsp.AudioClip, hits: HitAnnotations | Sequence[float],
                 rt60_hint: Optional[float] = None, config: MetricsConfig = MetricsConfig(),
                 window: Optional[float] = None) -> list[HitSegment]:
    """Cut one segment per hit.

    Segment ``i`` spans ``[max(0, t_i - 50 ms), min(t_{i+1} - 20 ms, t_i + w_dur)]``,
    further capped at the clip end. ``window`` overrides the RT60-derived
    ``w_dur``. Hits at or past the clip end are skipped with a
    :class:`DroppedHitWarning`.
    """
    times = list(hits.times if isinstance(hits, HitAnnotations) else hits)
    if not times:
        raise ValueError("hits must be non-empty")
    audio = _analysis(clip, config)
    sr = audio.sample_rate
    w_dur = segment_window(rt60_hint, config) if window is None else float(window)
    if w_dur <= 0:
        raise ValueError("window must be positive")
    duration = audio.duration
    segments = []
    for i, t in enumerate(times):
        if t >= duration:
            warnings.warn(f"hit {i} at {t:.3f} s is at or beyond the clip end ({duration:.3f} s); dropped",
                          DroppedHitWarning, stacklevel=2)
            continue
        start = max(0.0, t - config.pre_onset)
        stop = t + w_dur
        if i + 1 < len(times):
            stop = min(stop, times[i + 1] - config.next_hit_guard)
        i0 = int(round(start * sr))
        i1 = min(int(round(stop * sr)), audio.samples.size)
        if i1 <= i0:
            i1 = min(i0 + 1, audio.samples.size)
        seg = dsp.AudioClip(audio.samples[i0:i1], sr)
        offset = min(t - i0 / sr, seg.duration)
        segments.append(HitSegment(seg, max(offset, 0.0), i, i0 / sr))
    return segments


# ---------------------------------------------------------------- envelopes

def _smoothed_envelope(seg: HitSegment, sigma: float) -> np.ndarray:
    return dsp.gaussian_smooth(dsp.analytic_envelope(seg.clip), sigma).values


def _attack(seg: HitSegment, config: MetricsConfig) -> tuple[float, int]:
    """Attack time in ms and the peak index it used."""
    sr = seg.sample_rate
    if seg.clip.duration < 0.060 or seg.onset_offset < 0.010:
        raise _Unavailable("too_short")
    if not np.any(seg.samples):
        raise _Unavailable("no_onset")
    env = _smoothed_envelope(seg, config.attack_sigma)
    deriv = np.gradient(env)
    pre = slice(0, seg.onset_index)
    mu, sigma = float(np.median(env[pre])), mad(env[pre])
    sigma_der = mad(deriv[pre])
    gate = (env > mu + 3 * sigma) & (deriv > 3 * sigma_der)
    # the gate has to fire on the hit itself, not on pre-onset ripples
    gate[:max(0, seg.onset_index - int(round(config.pre_onset * sr)))] = False
    hits = np.flatnonzero(gate)
    if hits.size == 0:
        raise _Unavailable("no_onset")
    i_on = int(hits[0])
    stop = min(env.size, i_on + int(round(config.attack_peak_search * sr)) + 1)
    i_peak = i_on + int(np.argmax(env[i_on:stop]))
    if i_peak == i_on:
        return 0.0, i_peak
    mono = np.maximum.accumulate(env[i_on:i_peak + 1])
    peak = mono[-1]
    i10 = int(np.argmax(mono >= 0.10 * peak))
    i90 = int(np.argmax(mono >= 0.90 * peak))
    return 1000.0 * (i90 - i10) / sr, i_peak


def attack_time(seg: HitSegment, config: MetricsConfig = MetricsConfig()) -> float:
    """10-90% rise time in milliseconds of the smoothed analytic envelope.

    Noise statistics come from the pre-onset part of the segment. The onset
    is the first sample above ``median + 3 MAD`` whose slope also exceeds
    three MADs of the pre-onset slope; the peak is the envelope maximum
    within 200 ms of it.
    """
    return measure("attack_time", seg, config).value


def _crossings(db: np.ndarray, upper: float, lower: float) -> Optional[tuple[int, int]]:
    above = db <= upper
    below = db <= lower
    if not below.any():
        return None
    return int(np.argmax(above)), int(np.argmax(below))


def _decay(seg: HitSegment, config: MetricsConfig) -> float:
    if seg.clip.duration - seg.onset_offset < 0.010:
        raise _Unavailable("too_short")
    env = _smoothed_envelope(seg, config.attack_sigma)
    tail = env[seg.onset_index:]
    if tail.size == 0 or tail.max() <= 0:
        raise _Unavailable("no_decay_fit")
    i_peak = int(np.argmax(tail))
    norm = np.minimum.accumulate(tail[i_peak:] / tail[i_peak])
    db = 20 * np.log10(np.maximum(norm, _TINY))
    t = np.arange(db.size) / seg.sample_rate
    for upper, lower in config.decay_ranges:
        span = _crossings(db, upper, lower)
        if span is None or span[1] - span[0] < config.decay_min_points:
            continue
        i0, i1 = span
        step = max(1, (i1 - i0) // config.decay_max_fit_points)
        slope = theil_sen(t[i0:i1:step], db[i0:i1:step])
        if slope < 0 and abs(slope) > 1e-6:
            lam = -slope / (20 / math.log(10))
            return float(np.clip(lam, *config.decay_clip))
    raise _Unavailable("no_decay_fit")


def decay_rate(seg: HitSegment, config: MetricsConfig = MetricsConfig()) -> float:
    """Exponential amplitude decay constant in 1/s, clipped to [0.02, 50].

    The post-peak envelope is made monotone by a running minimum, expressed
    in dB and fitted with Theil-Sen over the first of the ranges
    ``[-5, -35]``, ``[-10, -30]`` and ``[-5, -25]`` dB that spans enough points.
    """
    return measure("decay_rate", seg, config).value


# ---------------------------------------------------------------- pitch

def _lag_autocorr(frames: np.ndarray, oversample: int) -> np.ndarray:
    """Linear autocorrelation of each row sampled at ``1/oversample`` lag steps."""
    n = frames.shape[-1]
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    power = np.abs(np.fft.rfft(frames, nfft, axis=-1)) ** 2
    return np.fft.irfft(power, nfft * oversample, axis=-1) * oversample


def _frame_candidates(x: np.ndarray, sr: int, config: MetricsConfig):
    """Per-frame pitch candidates ``(freqs, strengths)`` and unvoiced strengths.

    Strengths follow the usual autocorrelation pitch recipe: the normalised
    peak height plus a small bonus per octave up, and an unvoiced strength
    that grows for frames much quieter than the loudest part of ``x``.
    """
    frame = int(round(config.f0_frame * sr))
    hop = int(round(config.f0_hop * sr))
    over = config.f0_oversample
    frames = np.lib.stride_tricks.sliding_window_view(x, frame)[::hop]
    frames = frames - frames.mean(axis=1, keepdims=True)
    taper = np.hanning(frame + 2)[1:-1]
    r_a = _lag_autocorr(frames * taper, over)
    r_w = _lag_autocorr(taper[None, :], over)[0]
    min_lag = max(1, int(np.floor(sr / config.f0_max * over)))
    max_lag = int(np.ceil(min(sr / config.f0_min, config.f0_max_lag_fraction * frame) * over))
    global_peak = float(np.max(np.abs(x))) or 1.0
    vt, st = config.f0_voicing_threshold, config.f0_silence_threshold
    cands = []
    unvoiced = np.empty(frames.shape[0])
    for k in range(frames.shape[0]):
        local = float(np.max(np.abs(frames[k])))
        unvoiced[k] = vt + max(0.0, 2.0 - (local / global_peak) / (st / (1.0 + vt)))
        if r_a[k, 0] <= 0:
            cands.append((np.empty(0), np.empty(0)))
            continue
        r = (r_a[k, :max_lag + 2] / r_a[k, 0]) / (r_w[:max_lag + 2] / r_w[0])
        seg = r[min_lag:max_lag + 1]
        idx = np.flatnonzero((seg[1:-1] > seg[:-2]) & (seg[1:-1] >= seg[2:])) + min_lag + 1
        if idx.size == 0:
            cands.append((np.empty(0), np.empty(0)))
            continue
        a, b, c = r[idx - 1], r[idx], r[idx + 1]
        denom = a - 2 * b + c
        shift = np.where(denom != 0, 0.5 * (a - c) / np.where(denom != 0, denom, 1), 0.0)
        lag = (idx + shift) / over
        height = np.minimum(b - 0.25 * (a - c) * shift, 1.0)
        strength = height - config.f0_octave_cost * np.log2(config.f0_min * lag / sr)
        keep = np.argsort(strength)[::-1][:config.f0_max_candidates]
        cands.append((sr / lag[keep], strength[keep]))
    return cands, unvoiced


def _pitch_track(x: np.ndarray, sr: int, config: MetricsConfig) -> tuple[np.ndarray, int]:
    """Per-frame pitch in Hz (nan when unvoiced) and the number of frames.

    The track is the best path through the frame candidates, with costs for
    octave jumps and for switching between voiced and unvoiced.
    """
    if x.size < int(round(config.f0_frame * sr)):
        return np.empty(0), 0
    cands, unvoiced = _frame_candidates(x, sr, config)
    n = len(cands)
    # state 0 is unvoiced, states 1.. are the frame's candidates
    freqs = [np.concatenate(([np.nan], f)) for f, _ in cands]
    local = [np.concatenate(([u], s)) for (_, s), u in zip(cands, unvoiced)]
    score = local[0].copy()
    back = []
    for k in range(1, n):
        prev_f, cur_f = freqs[k - 1], freqs[k]
        with np.errstate(invalid="ignore"):
            jump = config.f0_octave_jump_cost * np.abs(np.log2(cur_f[:, None] / prev_f[None, :]))
        prev_v = np.isfinite(prev_f)[None, :]
        cur_v = np.isfinite(cur_f)[:, None]
        cost = np.where(cur_v & prev_v, jump,
                        np.where(cur_v ^ prev_v, config.f0_voiced_unvoiced_cost, 0.0))
        total = score[None, :] - cost
        best = np.argmax(total, axis=1)
        back.append(best)
        score = total[np.arange(total.shape[0]), best] + local[k]
    state = int(np.argmax(score))
    path = [state]
    for b in reversed(back):
        state = int(b[state])
        path.append(state)
    path.reverse()
    pitches = np.array([freqs[k][s] for k, s in enumerate(path)])
    return pitches, n


def _spectral_peaks(x: np.ndarray, sr: int, config: MetricsConfig) -> tuple[np.ndarray, dsp.PowerSpectrum]:
    psd = dsp.welch_psd(dsp.AudioClip(x, sr), min(config.f0_fallback_segment, x.size))
    dens = psd.densities
    threshold = float(np.median(dens)) + config.f0_fallback_mads * mad(dens)
    peaks, _ = sps.find_peaks(dens)
    lo, hi = config.f0_fallback_band
    keep = peaks[(psd.frequencies[peaks] >= lo) & (psd.frequencies[peaks] <= hi)
                 & (dens[peaks] > threshold)]
    return keep, psd


def _supported(freq: float, x: np.ndarray, sr: int, config: MetricsConfig) -> bool:
    """True when ``freq`` shows up as a significant, not-too-weak spectral peak."""
    peaks, psd = _spectral_peaks(x, sr, replace(config, f0_fallback_band=(0.0, sr / 2)))
    if peaks.size == 0:
        return False
    floor = float(psd.densities.max()) * 10 ** (-config.f0_octave_support_db / 10)
    tol = max(2 * psd.resolution, 0.03 * freq)
    near = peaks[np.abs(psd.frequencies[peaks] - freq) <= tol]
    return bool(np.any(psd.densities[near] >= floor))


def octave_correct(f0: float, config: MetricsConfig = MetricsConfig(),
                   support: Optional[Callable[[float], bool]] = None) -> float:
    """Divide an implausibly high pitch down into the expected range.

    Above ``f0_octave_threshold`` the divisors 2, 3, 4, 6 and 8 are tried in
    order and the first quotient inside ``f0_octave_range`` is returned. When
    ``support`` is given, a quotient is only accepted if ``support(quotient)``
    is true; without an accepted quotient the input comes back unchanged.
    """
    if not math.isfinite(f0) or f0 <= config.f0_octave_threshold:
        return f0
    lo, hi = config.f0_octave_range
    for d in config.f0_octave_divisors:
        q = f0 / d
        if lo <= q <= hi and (support is None or support(q)):
            return q
    return f0


def f0_estimate(seg: HitSegment, config: MetricsConfig = MetricsConfig()) -> F0Estimate:
    """Two-tier pitch estimate for one hit.

    Tier 1 tracks autocorrelation pitch over 300 ms from the onset (skipping
    the first 10 ms); with enough voiced frames the result is their 10%
    trimmed mean, followed by octave correction. Tier 2 returns the lowest
    significant Welch-PSD peak between 80 and 4000 Hz in the 20-110 ms window.
    """
    seg = _as_segment(seg, config)
    sr = seg.sample_rate
    x = seg.samples
    on = seg.onset_index
    if seg.clip.duration - seg.onset_offset < 0.030:
        return F0Estimate(float("nan"), None, 0.0)
    window = x[on + int(round(config.f0_skip * sr)):on + int(round(config.f0_window * sr))]
    ratio = 0.0
    if window.size and np.any(window):
        pitches, n_frames = _pitch_track(window, sr, config)
        voiced = pitches[np.isfinite(pitches)]
        ratio = voiced.size / n_frames if n_frames else 0.0
        if n_frames and ratio >= config.f0_min_voiced_ratio and voiced.size >= config.f0_min_voiced_frames:
            raw = trimmed_mean(voiced, config.trim_fraction)
            mode = config.f0_octave_check
            if mode == "off":
                value = raw
            elif mode == "always":
                value = octave_correct(raw, config)
            else:
                value = octave_correct(raw, config, lambda q: _supported(q, window, sr, config))
            return F0Estimate(float(value), 1, ratio, float(raw))
    lo, hi = config.f0_fallback_window
    short = x[on + int(round(lo * sr)):on + int(round(hi * sr))]
    if short.size >= 16 and np.any(short):
        peaks, psd = _spectral_peaks(short, sr, config)
        if peaks.size:
            f = float(psd.frequencies[peaks[0]])
            return F0Estimate(f, 2, ratio, f)
    return F0Estimate(float("nan"), None, ratio)


def _f0(seg: HitSegment, config: MetricsConfig) -> float:
    if seg.clip.duration - seg.onset_offset < 0.030:
        raise _Unavailable("too_short")
    est = f0_estimate(seg, config)
    if est.tier is None:
        raise _Unavailable("no_pitch")
    return est.value


def fundamental_frequency(seg: HitSegment, config: MetricsConfig = MetricsConfig()) -> float:
    """Fundamental frequency in Hz (see :func:`f0_estimate`)."""
    return measure("f0", seg, config).value


# ---------------------------------------------------------------- spectral shape

def frame_centroid(magnitudes: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Magnitude-weighted mean frequency per row; nan for silent rows."""
    mags = np.atleast_2d(np.asarray(magnitudes, dtype=np.float64))
    total = mags.sum(axis=1)
    out = np.full(mags.shape[0], np.nan)
    ok = total >= 1e-12
    out[ok] = mags[ok] @ np.asarray(freqs, dtype=np.float64) / total[ok]
    return out


def frame_rolloff(magnitudes: np.ndarray, freqs: np.ndarray, fraction: float = 0.85) -> np.ndarray:
    """Lowest bin frequency whose cumulative magnitude reaches ``fraction`` of the row total."""
    mags = np.atleast_2d(np.asarray(magnitudes, dtype=np.float64))
    freqs = np.asarray(freqs, dtype=np.float64)
    cum = np.cumsum(mags, axis=1)
    total = cum[:, -1]
    out = np.full(mags.shape[0], np.nan)
    ok = total >= 1e-12
    idx = np.argmax(cum[ok] >= fraction * total[ok, None] * (1 - 1e-12), axis=1)
    out[ok] = freqs[idx]
    return out


def _timbre_spectrogram(seg: HitSegment, config: MetricsConfig) -> dsp.Spectrogram:
    sr = seg.sample_rate
    lo, hi = config.spectral_window
    i0 = seg.onset_index + int(round(lo * sr))
    i1 = min(seg.samples.size, seg.onset_index + int(round(hi * sr)))
    if i1 - i0 < int(round((hi - lo) / 2 * sr)):
        raise _Unavailable("too_short")
    x = seg.samples[i0:i1]
    x = x - x.mean()
    if x.size < config.spectral_fft:
        x = np.pad(x, (0, config.spectral_fft - x.size))
    return dsp.stft(dsp.AudioClip(x, sr), config.spectral_fft, config.spectral_hop)


def _spectral_shape(seg: HitSegment, config: MetricsConfig, which: str) -> float:
    spec = _timbre_spectrogram(seg, config)
    if which == "centroid":
        values = frame_centroid(spec.magnitudes, spec.bin_frequencies)
    else:
        values = frame_rolloff(spec.magnitudes, spec.bin_frequencies, config.rolloff_fraction)
    values = values[np.isfinite(values)]
    if values.size == 0:
        raise _Unavailable("silent")
    return trimmed_mean(values, config.trim_fraction)


def spectral_centroid(seg: HitSegment, config: MetricsConfig = MetricsConfig()) -> float:
    """Trimmed mean frame centroid in Hz over 60-180 ms after the onset."""
    return measure("spectral_centroid", seg, config).value


def spectral_rolloff(seg: HitSegment, config: MetricsConfig = MetricsConfig()) -> float:
    """Trimmed mean 85% rolloff frequency in Hz over 60-180 ms after the onset."""
    return measure("spectral_rolloff", seg, config).value


def _flux(seg: HitSegment, config: MetricsConfig) -> float:
    sr = seg.sample_rate
    x = seg.samples[seg.onset_index:seg.onset_index + int(round(config.flux_window * sr))]
    if x.size < config.spectral_fft + config.spectral_hop:
        raise _Unavailable("too_short")
    rms = float(np.sqrt(np.mean(x ** 2)))
    if rms == 0:
        raise _Unavailable("silent")
    spec = dsp.stft(dsp.AudioClip(x / rms, sr), config.spectral_fft, config.spectral_hop)
    strength = np.maximum(0.0, np.diff(spec.magnitudes, axis=0)).sum(axis=1)
    strength = strength[strength > 0]
    if strength.size == 0:
        return 0.0
    med = float(np.median(strength))
    spread = mad(strength)
    if spread > 0:
        strength = strength[np.abs(strength - med) <= config.flux_mads * spread]
    return float(np.mean(strength))


def spectral_flux(seg: HitSegment, config: MetricsConfig = MetricsConfig()) -> float:
    """Mean positive spectral change over the first 180 ms, after RMS normalisation.

    Frames further than three MADs from the median are discarded first.
    """
    return measure("spectral_flux", seg, config).value


# ---------------------------------------------------------------- room acoustics

def _rt60(seg: HitSegment, config: MetricsConfig) -> float:
    sr = seg.sample_rate
    y = seg.samples
    frame = max(1, int(round(config.rt60_frame * sr)))
    n_frames = y.size // frame
    tail = y[int(np.floor(0.9 * y.size)):]
    if n_frames < 2 or tail.size == 0:
        raise _Unavailable("too_short")
    power = np.mean(y[:n_frames * frame].reshape(n_frames, frame) ** 2, axis=1)
    floor = float(np.mean(tail ** 2))
    k_peak = int(np.argmax(power))
    if power[k_peak] <= 0:
        raise _Unavailable("silent")
    if power[k_peak] < floor * 10 ** (config.rt60_min_dynamic_range / 10):
        raise _Unavailable("no_rt60")
    # stop integrating where the decay meets the noise floor (plus a margin)
    limit = floor * 10 ** (config.rt60_noise_margin / 10)
    below = np.flatnonzero(power[k_peak:] <= limit)
    cut = y.size if below.size == 0 else (k_peak + int(below[0]) + 1) * frame
    i_peak = k_peak * frame + int(np.argmax(np.abs(y[k_peak * frame:(k_peak + 1) * frame])))
    energy = np.cumsum((y[i_peak:cut] ** 2)[::-1])[::-1]
    if energy.size == 0 or energy[0] <= 0:
        raise _Unavailable("silent")
    db = 10 * np.log10(np.maximum(energy / energy[0], _TINY))
    t = np.arange(db.size) / sr
    for upper, lower in config.rt60_ranges:
        span = _crossings(db, upper, lower)
        if span is None:
            continue
        i0, i1 = span
        if i1 - i0 < config.rt60_min_points or (i1 - i0) / sr < config.rt60_min_duration:
            continue
        slope, _, r2 = linfit_r2(t[i0:i1 + 1], db[i0:i1 + 1])
        if slope < 0 and r2 >= config.rt60_min_r2:
            return -60.0 / slope
    raise _Unavailable("no_rt60")


def rt60(clip_or_seg, config: MetricsConfig = MetricsConfig()) -> float:
    """Reverberation time in seconds from the Schroeder energy-decay curve.

    Integration runs backwards from the point where the short-term power
    falls to the noise floor (estimated from the last 10% of the signal) plus
    a margin. The first of T30, T20 and T10 with an OLS fit of R^2 >= 0.9
    gives ``-60 / slope``.
    """
    return measure("rt60", clip_or_seg, config).value


def _drr(seg: HitSegment, config: MetricsConfig, rt60_est: Optional[float]) -> float:
    sr = seg.sample_rate
    if seg.samples.size < 2:
        raise _Unavailable("too_short")
    lo, hi = config.drr_band
    y = dsp.bandpass(seg.clip, lo, min(hi, 0.45 * sr), zero_phase=False).samples
    on = seg.onset_index
    mid = on + int(round(config.drr_direct * sr))
    end = y.size
    if rt60_est is not None and math.isfinite(rt60_est) and rt60_est > 0:
        span = float(np.clip(rt60_est, config.drr_reverb_min, config.drr_reverb_max))
        end = min(end, on + int(round(span * sr)))
    if end <= mid:
        raise _Unavailable("no_reverb_window")
    direct = float(np.sum(y[on:mid] ** 2))
    reverb = float(np.sum(y[mid:end] ** 2))
    low, high = config.drr_clip
    if direct == 0 and reverb == 0:
        raise _Unavailable("silent")
    if reverb == 0:
        return high
    if direct == 0:
        return low
    return float(np.clip(10 * math.log10(direct / reverb), low, high))


def drr(seg: HitSegment, rt60_est: Optional[float] = None,
        config: MetricsConfig = MetricsConfig()) -> float:
    """Direct-to-reverberant energy ratio in dB, clipped to [-20, 40].

    The segment is band-passed to 125-4000 Hz with a causal filter, so no
    direct energy is smeared ahead of the onset. The direct part is the first
    40 ms after the onset; the reverberant part runs on to
    ``onset + clamp(rt60_est, 0.2, 2.0)`` or the segment end, whichever is first.
    """
    return measure("drr", seg, config, rt60_est=rt60_est).value


def _modulation(clip: dsp.AudioClip, config: MetricsConfig) -> float:
    audio = _analysis(clip, config)
    if not np.any(audio.samples):
        return 0.0
    if audio.duration < config.min_modulation_duration:
        raise _Unavailable("too_short")
    env = dsp.analytic_envelope(audio)
    env = dsp.resample(dsp.AudioClip(env.values, audio.sample_rate), config.modulation_rate).samples
    env = np.maximum(env, 0.0)
    mean = float(env.mean())
    if mean <= 0:
        return 0.0
    rate = config.modulation_rate
    sos = sps.butter(2, config.modulation_highpass, btype="highpass", fs=rate, output="sos")
    cv = float(np.std(sps.sosfiltfilt(sos, env))) / mean
    pf = float(np.percentile(env, 99)) / float(np.sqrt(np.mean(env ** 2)))
    power = np.abs(np.fft.rfft(env - mean)) ** 2
    freqs = np.fft.rfftfreq(env.size, 1.0 / rate)
    total = float(power[freqs > 0].sum())
    lo, hi = config.modulation_band
    e_mod = float(power[(freqs >= lo) & (freqs <= hi)].sum()) / total if total > 0 else 0.0
    cv_norm = min(cv / config.cv_divisor, 1.0)
    pf_lo, pf_hi = config.pf_range
    pf_norm = float(np.clip((pf - pf_lo) / (pf_hi - pf_lo), 0.0, 1.0))
    w = config.modulation_weights
    return config.modulation_scale * (w[0] * cv_norm + w[1] * pf_norm + w[2] * e_mod)


def temporal_modulation(clip: dsp.AudioClip, config: MetricsConfig = MetricsConfig()) -> float:
    """Composite envelope-modulation score over the whole clip.

    ``0.85 * (0.4 CV_norm + 0.3 PF_norm + 0.6 E_mod)`` with the envelope taken
    at 200 Hz. Silent clips score 0.
    """
    return measure("temporal_modulation", clip, config).value


# ---------------------------------------------------------------- dispatch

_SEGMENT_METRICS = {
    "attack_time": lambda seg, cfg: _attack(seg, cfg)[0],
    "decay_rate": _decay,
    "f0": _f0,
    "spectral_centroid": lambda seg, cfg: _spectral_shape(seg, cfg, "centroid"),
    "spectral_rolloff": lambda seg, cfg: _spectral_shape(seg, cfg, "rolloff"),
    "spectral_flux": _flux,
    "rt60": _rt60,
}


def measure(name: str, target, config: MetricsConfig = MetricsConfig(),
            rt60_est: Optional[float] = None) -> Measurement:
    """Run one extractor and keep the reason code when it yields no value.

    ``target`` is a :class:`HitSegment` (an :class:`~physaudit.dsp.AudioClip`
    is treated as a segment with its hit at time 0), except for
    ``temporal_modulation`` which takes the whole clip.
    """
    if name not in METRIC_NAMES:
        raise ValueError(f"unknown metric {name!r}")
    try:
        if name == "temporal_modulation":
            clip = target.clip if isinstance(target, HitSegment) else target
            if clip.samples.size == 0:
                raise ValueError("empty clip")
            value = _modulation(clip, config)
        else:
            seg = _as_segment(target, config)
            if name == "drr":
                value = _drr(seg, config, rt60_est)
            else:
                value = _SEGMENT_METRICS[name](seg, config)
    except _Unavailable as exc:
        return Measurement(float("nan"), exc.reason)
    return Measurement(float(value))


# ---------------------------------------------------------------- whole clip

@dataclass(frozen=True)
class MetricVector:
    """All nine metrics for one clip.

    ``values`` maps metric name to a float (nan when unavailable, with the
    reason code in ``reasons``). ``per_hit`` keeps the hit-level values of the
    six per-hit metrics plus RT60 and DRR, in hit order.
    """

    values: Mapping[str, float]
    reasons: Mapping[str, str] = field(default_factory=dict)
    per_hit: Mapping[str, tuple] = field(default_factory=dict)
    hit_times: tuple = ()
    rt60_hint: Optional[float] = None

    def __post_init__(self):
        vals = {name: float(self.values.get(name, float("nan"))) for name in METRIC_NAMES}
        unknown = set(self.values) - set(METRIC_NAMES)
        if unknown:
            raise ValueError(f"unknown metrics {sorted(unknown)}")
        reasons = dict(self.reasons)
        for name, v in vals.items():
            if not math.isfinite(v):
                reasons.setdefault(name, "no_hits")
            else:
                reasons.pop(name, None)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "reasons", reasons)
        object.__setattr__(self, "per_hit", {k: tuple(float(x) for x in v) for k, v in self.per_hit.items()})
        object.__setattr__(self, "hit_times", tuple(float(t) for t in self.hit_times))

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def __getattr__(self, name: str):
        if name in METRIC_NAMES:
            return self.values[name]
        raise AttributeError(name)

    def to_dict(self) -> dict:
        def clean(v):
            return None if not math.isfinite(v) else v
        return {
            "values": {k: clean(v) for k, v in self.values.items()},
            "reasons": dict(self.reasons),
            "per_hit": {k: [clean(x) for x in v] for k, v in self.per_hit.items()},
            "hit_times": list(self.hit_times),
            "rt60_hint": None if self.rt60_hint is None or not math.isfinite(self.rt60_hint)
            else self.rt60_hint,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> MetricVector:
        def nanify(v):
            return float("nan") if v is None else float(v)
        return cls(
            values={k: nanify(v) for k, v in data["values"].items()},
            reasons=dict(data.get("reasons", {})),
            per_hit={k: tuple(nanify(x) for x in v) for k, v in data.get("per_hit", {}).items()},
            hit_times=tuple(data.get("hit_times", ())),
            rt60_hint=data.get("rt60_hint"),
        )


def _aggregate(measurements: Sequence[Measurement], how: str) -> Measurement:
    finite = [m.value for m in measurements if m.ok]
    if finite:
        value = float(np.median(finite)) if how == "median" else float(np.mean(finite))
        return Measurement(value)
    reasons = [m.reason for m in measurements if m.reason]
    return Measurement(float("nan"), reasons[0] if reasons else "no_hits")


def valid_hits(clip: dsp.AudioClip, hits: HitAnnotations, generated: bool,
               onset_config: OnsetConfig = OnsetConfig()) -> list[float]:
    """Hit times to analyse: the annotations, or for generated audio the matched detections."""
    duration = clip.duration
    if not generated:
        return [t for t in hits.times if t < duration]
    if len(hits) == 0 or duration < 0.1:
        return []
    m = match(detect_onsets(clip, onset_config), hits, onset_config)
    return sorted(t for t in m.matched if t is not None and t < duration)


def compute_all(clip: dsp.AudioClip, hits: HitAnnotations | Sequence[float] = (),
                config: MetricsConfig = MetricsConfig(), generated: bool = False,
                onset_config: OnsetConfig = OnsetConfig()) -> MetricVector:
    """Every metric for one clip.

    With ``generated=True`` the clip's detected onsets, matched to the
    annotations, replace the annotated times. Per-hit metrics average the
    valid hits and need at least ``min_valid_hits`` of them. RT60 is the
    median of per-hit estimates over the longest window; that value then sets
    the segment window and the DRR reverberant window for the second pass.
    """
    if clip.samples.size == 0:
        raise ValueError("empty clip")
    if not isinstance(hits, HitAnnotations):
        hits = HitAnnotations(tuple(hits))
    audio = _analysis(clip, config)
    times = valid_hits(audio, hits, generated, onset_config)
    values: dict[str, float] = {}
    reasons: dict[str, str] = {}
    per_hit: dict[str, tuple] = {}

    modulation = measure("temporal_modulation", audio, config)
    values["temporal_modulation"] = modulation.value
    if modulation.reason:
        reasons["temporal_modulation"] = modulation.reason

    if not times:
        for name in METRIC_NAMES:
            if name != "temporal_modulation":
                values[name] = float("nan")
                reasons[name] = "insufficient_hits" if name in PER_HIT_METRICS else "no_hits"
        return MetricVector(values, reasons, per_hit, (), None)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DroppedHitWarning)
        long_segments = segment_hits(audio, times, config=config, window=config.window_max)
    rt_hits = [measure("rt60", s, config) for s in long_segments]
    rt = _aggregate(rt_hits, config.room_aggregate)
    hint = rt.value if rt.ok else None
    values["rt60"] = rt.value
    if rt.reason:
        reasons["rt60"] = rt.reason
    per_hit["rt60"] = tuple(m.value for m in rt_hits)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DroppedHitWarning)
        segments = segment_hits(audio, times, rt60_hint=hint, config=config)
    drr_hits = [measure("drr", s, config, rt60_est=hint) for s in segments]
    d = _aggregate(drr_hits, config.room_aggregate)
    values["drr"] = d.value
    if d.reason:
        reasons["drr"] = d.reason
    per_hit["drr"] = tuple(m.value for m in drr_hits)

    enough = len(segments) >= config.min_valid_hits
    for name in PER_HIT_METRICS:
        results = [measure(name, s, config) for s in segments]
        per_hit[name] = tuple(m.value for m in results)
        if not enough:
            values[name] = float("nan")
            reasons[name] = "insufficient_hits"
            continue
        agg = _aggregate(results, "mean")
        values[name] = agg.value
        if agg.reason:
            reasons[name] = agg.reason
    return MetricVector(values, reasons, per_hit, tuple(times), hint)
