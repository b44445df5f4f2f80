"""Deterministic DSP primitives shared by every metric extractor.

Everything here is a pure function over immutable containers. Sample buffers
are float64 numpy arrays; clips are mono.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import ndimage
from scipy import signal as sps

__all__ = [
    "AudioClip",
    "Spectrogram",
    "Envelope",
    "PowerSpectrum",
    "resample",
    "stft",
    "rms_envelope",
    "analytic_envelope",
    "gaussian_smooth",
    "welch_psd",
    "bandpass",
    "sinc_interpolate",
]

# Resampler design: Kaiser-windowed sinc spanning 32 periods of the lower rate.
RESAMPLE_ZERO_CROSSINGS = 32
RESAMPLE_KAISER_BETA = 8.0


def _frozen(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AudioClip:
    """Mono sample buffer plus its sample rate in Hz.

    Multichannel input of shape ``(n, channels)`` is downmixed by channel mean.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        data = np.asarray(self.samples, dtype=np.float64)
        if data.ndim == 2:
            data = data.mean(axis=1)
        elif data.ndim != 1:
            raise ValueError(f"samples must be 1-D or (n, channels), got shape {data.shape}")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        object.__setattr__(self, "samples", _frozen(data))
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def slice(self, start: float, stop: float) -> AudioClip:
        """Return the part of the clip between two times in seconds."""
        i0 = max(0, int(round(start * self.sample_rate)))
        i1 = min(self.samples.size, int(round(stop * self.sample_rate)))
        return AudioClip(self.samples[i0:max(i0, i1)], self.sample_rate)

    def scaled(self, gain: float) -> AudioClip:
        return AudioClip(self.samples * gain, self.sample_rate)


@dataclass(frozen=True)
class Spectrogram:
    """STFT magnitudes laid out as ``frames x bins``.

    ``frame_times`` holds the centre of each analysis frame in seconds.
    """

    magnitudes: np.ndarray
    frame_period: float
    bin_frequencies: np.ndarray
    frame_times: np.ndarray = field(default=None)

    def __post_init__(self):
        mags = np.asarray(self.magnitudes, dtype=np.float64)
        if mags.ndim != 2:
            raise ValueError("magnitudes must be a frames x bins matrix")
        if np.any(mags < 0):
            raise ValueError("magnitudes must be non-negative")
        freqs = np.asarray(self.bin_frequencies, dtype=np.float64)
        if freqs.size != mags.shape[1]:
            raise ValueError("one bin frequency per column is required")
        if freqs.size > 1 and np.any(np.diff(freqs) <= 0):
            raise ValueError("bin frequencies must increase")
        times = self.frame_times
        if times is None:
            times = np.arange(mags.shape[0]) * self.frame_period
        object.__setattr__(self, "magnitudes", _frozen(mags))
        object.__setattr__(self, "bin_frequencies", _frozen(freqs))
        object.__setattr__(self, "frame_times", _frozen(times))

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]


@dataclass(frozen=True)
class Envelope:
    """Non-negative envelope sampled at ``rate`` values per second.

    ``offset`` is the time in seconds of the first value.
    """

    values: np.ndarray
    rate: float
    offset: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise ValueError("envelope values must be 1-D")
        if np.any(vals < 0):
            raise ValueError("envelope values must be non-negative")
        if self.rate <= 0:
            raise ValueError("envelope rate must be positive")
        object.__setattr__(self, "values", _frozen(vals))

    @property
    def times(self) -> np.ndarray:
        return self.offset + np.arange(self.values.size) / self.rate


@dataclass(frozen=True)
class PowerSpectrum:
    densities: np.ndarray
    frequencies: np.ndarray

    def __post_init__(self):
        dens = np.asarray(self.densities, dtype=np.float64)
        freqs = np.asarray(self.frequencies, dtype=np.float64)
        if dens.shape != freqs.shape:
            raise ValueError("densities and frequencies must have the same length")
        if freqs.size > 1 and np.any(np.diff(freqs) <= 0):
            raise ValueError("frequencies must increase")
        object.__setattr__(self, "densities", _frozen(np.maximum(dens, 0.0)))
        object.__setattr__(self, "frequencies", _frozen(freqs))

    @property
    def resolution(self) -> float:
        return float(self.frequencies[1] - self.frequencies[0]) if self.frequencies.size > 1 else 0.0


def _require_samples(clip: AudioClip) -> None:
    if clip.samples.size == 0:
        raise ValueError("empty clip")


def _kaiser_filter(up: int, down: int) -> np.ndarray:
    max_rate = max(up, down)
    half_len = RESAMPLE_ZERO_CROSSINGS // 2 * max_rate
    return sps.firwin(2 * half_len + 1, 1.0 / max_rate,
                      window=("kaiser", RESAMPLE_KAISER_BETA))


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited rate conversion with a Kaiser-windowed sinc (beta 8).

    A clip already at ``target_rate`` is returned unchanged.
    """
    if target_rate <= 0 or int(target_rate) != target_rate:
        raise ValueError(f"target_rate must be a positive integer, got {target_rate!r}")
    _require_samples(clip)
    target_rate = int(target_rate)
    if target_rate == clip.sample_rate:
        return clip
    ratio = Fraction(target_rate, clip.sample_rate)
    up, down = ratio.numerator, ratio.denominator
    out = sps.resample_poly(clip.samples, up, down, window=_kaiser_filter(up, down))
    return AudioClip(out, target_rate)


def stft(clip: AudioClip, window_len: int, hop: int, window: str = "hann") -> Spectrogram:
    """Magnitude STFT without centre padding; frame 0 starts at sample 0."""
    n = clip.samples.size
    if not 0 < hop <= window_len:
        raise ValueError(f"need 0 < hop <= window_len, got hop={hop}, window_len={window_len}")
    if n < window_len:
        raise ValueError(f"clip too short: {n} samples < window of {window_len}")
    taper = sps.get_window(window, window_len, fftbins=True)
    n_frames = (n - window_len) // hop + 1
    frames = np.lib.stride_tricks.sliding_window_view(clip.samples, window_len)[::hop][:n_frames]
    mags = np.abs(np.fft.rfft(frames * taper, axis=1))
    freqs = np.fft.rfftfreq(window_len, d=1.0 / clip.sample_rate)
    times = (np.arange(n_frames) * hop + window_len / 2) / clip.sample_rate
    return Spectrogram(mags, hop / clip.sample_rate, freqs, times)


def rms_envelope(spec: Spectrogram) -> Envelope:
    """Per-frame RMS of the magnitude spectrum across frequency bins."""
    if spec.magnitudes.size == 0:
        raise ValueError("empty spectrogram")
    values = np.sqrt(np.mean(spec.magnitudes ** 2, axis=1))
    offset = float(spec.frame_times[0]) if spec.n_frames else 0.0
    return Envelope(values, 1.0 / spec.frame_period, offset)


def analytic_envelope(clip: AudioClip) -> Envelope:
    """Magnitude of the analytic signal, built in the frequency domain."""
    _require_samples(clip)
    x = clip.samples
    n = x.size
    spectrum = np.fft.fft(x)
    gain = np.zeros(n)
    gain[0] = 1.0
    if n % 2 == 0:
        gain[n // 2] = 1.0
        gain[1:n // 2] = 2.0
    else:
        gain[1:(n + 1) // 2] = 2.0
    return Envelope(np.abs(np.fft.ifft(spectrum * gain)), clip.sample_rate)


def gaussian_smooth(env: Envelope, sigma: float) -> Envelope:
    """Gaussian smoothing with ``sigma`` in seconds, kernel cut at 4 sigma.

    Edges use reflect padding. ``sigma == 0`` returns the input.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    sigma_samples = sigma * env.rate
    if sigma_samples == 0 or env.values.size == 0:
        return env
    smoothed = ndimage.gaussian_filter1d(env.values, sigma_samples, mode="reflect", truncate=4.0)
    return Envelope(np.maximum(smoothed, 0.0), env.rate, env.offset)


def welch_psd(clip: AudioClip, segment_len: int, overlap: float = 0.5) -> PowerSpectrum:
    """Welch average of Hann-tapered periodograms, density-scaled.

    The one-sided densities integrate to the mean signal power. A clip shorter
    than one segment falls back to a single tapered periodogram over the
    whole clip.
    """
    _require_samples(clip)
    if not 0 <= overlap < 1:
        raise ValueError("overlap must lie in [0, 1)")
    if segment_len <= 0:
        raise ValueError("segment_len must be positive")
    x = clip.samples
    if x.size < segment_len:
        freqs, dens = sps.periodogram(x, fs=clip.sample_rate, window="hann",
                                      detrend=False, scaling="density")
    else:
        freqs, dens = sps.welch(x, fs=clip.sample_rate, window="hann", nperseg=segment_len,
                                noverlap=int(round(overlap * segment_len)),
                                detrend=False, scaling="density")
    return PowerSpectrum(dens, freqs)


def bandpass(clip: AudioClip, lo: float, hi: float, order: int = 4,
             zero_phase: bool = True) -> AudioClip:
    """Butterworth band-pass.

    ``zero_phase`` runs the filter forward and backward; the causal variant
    keeps all ringing after the excitation, which matters when energy is
    later split at a time boundary.
    """
    nyquist = clip.sample_rate / 2
    if not 0 < lo < hi < nyquist:
        raise ValueError(f"invalid band [{lo}, {hi}] Hz for Nyquist {nyquist} Hz")
    _require_samples(clip)
    sos = sps.butter(order, [lo, hi], btype="bandpass", fs=clip.sample_rate, output="sos")
    x = clip.samples
    if not zero_phase:
        return AudioClip(sps.sosfilt(sos, x), clip.sample_rate)
    # sosfiltfilt needs padlen < len(x); very short inputs get shorter padding
    padlen = min(3 * (2 * len(sos) + 1), x.size - 1)
    return AudioClip(sps.sosfiltfilt(sos, x, padlen=padlen), clip.sample_rate)


def sinc_interpolate(x: np.ndarray, positions: np.ndarray, cutoff: float = 1.0,
                     zero_crossings: int = RESAMPLE_ZERO_CROSSINGS,
                     beta: float = RESAMPLE_KAISER_BETA, chunk: int = 8192) -> np.ndarray:
    """Evaluate a band-limited reconstruction of ``x`` at fractional sample positions.

    ``cutoff`` is relative to the Nyquist rate of ``x``; values below 1 low-pass
    the signal, which is required when reading it faster than real time.
    Positions outside the buffer read zeros.
    """
    x = np.asarray(x, dtype=np.float64)
    positions = np.asarray(positions, dtype=np.float64)
    if not 0 < cutoff <= 1:
        raise ValueError("cutoff must lie in (0, 1]")
    half = int(np.ceil(zero_crossings / 2 / cutoff))
    out = np.empty(positions.size)
    offsets = np.arange(-half + 1, half + 1)
    for start in range(0, positions.size, chunk):
        pos = positions[start:start + chunk]
        base = np.floor(pos).astype(np.int64)
        idx = base[:, None] + offsets[None, :]
        dist = pos[:, None] - idx
        taper = _kaiser(dist, half, beta)
        kernel = cutoff * np.sinc(cutoff * dist) * taper
        valid = (idx >= 0) & (idx < x.size)
        vals = np.where(valid, x[np.clip(idx, 0, max(x.size - 1, 0))], 0.0)
        out[start:start + chunk] = np.sum(vals * kernel, axis=1)
    return out


def _kaiser(dist: np.ndarray, half: float, beta: float) -> np.ndarray:
    ratio = np.clip(dist / half, -1.0, 1.0)
    return np.i0(beta * np.sqrt(1.0 - ratio ** 2)) / np.i0(beta)
