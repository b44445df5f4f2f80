"""Synthetic test signals with known ground truth.

Each generator returns a :class:`SynthResult` whose ``truth`` mapping holds the
parameters an estimator should recover. Output is bit-reproducible for a given
``seed``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import signal as sps

from .dsp import AudioClip

DEFAULT_RATE = 16000


@dataclass(frozen=True)
class SynthResult:
    clip: AudioClip
    truth: Mapping[str, Any] = field(default_factory=dict)


def _check_rate(sample_rate: int) -> None:
    if sample_rate <= 0:
        raise ValueError("sample_rate must be positive")


def _time(duration: float, sample_rate: int) -> np.ndarray:
    if duration <= 0:
        raise ValueError("duration must be positive")
    return np.arange(int(round(duration * sample_rate))) / sample_rate


def _add_noise(x: np.ndarray, signal_power: float, snr_db: float | None, rng) -> np.ndarray:
    if snr_db is None:
        return x
    noise_power = signal_power / 10 ** (snr_db / 10)
    return x + rng.standard_normal(x.size) * np.sqrt(noise_power)


def _normalize(x: np.ndarray, peak: float) -> np.ndarray:
    top = np.max(np.abs(x)) if x.size else 0.0
    return x if top == 0 else x * (peak / top)


def impact_envelope(t: np.ndarray, onset: float, attack_ms: float, decay: float) -> np.ndarray:
    """Linear rise over ``attack_ms`` from ``onset``, then ``exp(-decay * t)``."""
    rel = t - onset
    attack = attack_ms / 1000.0
    env = np.zeros_like(t)
    if attack > 0:
        rising = (rel >= 0) & (rel < attack)
        env[rising] = rel[rising] / attack
    after = rel >= attack
    env[after] = np.exp(-decay * (rel[after] - attack))
    return env


def click_train(times: Sequence[float], duration: float | None = None,
                sample_rate: int = DEFAULT_RATE, snr_db: float | None = None,
                style: str = "burst", amplitude: float = 0.8, seed: int = 0) -> SynthResult:
    """Clicks at ``times``.

    ``style="impulse"`` writes single-sample clicks; ``"burst"`` writes 30 ms
    noise bursts decaying with a 5 ms time constant. ``snr_db`` adds white
    noise relative to the mean power of the click bodies.
    """
    _check_rate(sample_rate)
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise ValueError("click times must be non-negative")
    if duration is None:
        duration = (max(times) if times else 0.0) + 1.0
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    x = np.zeros(n)
    body = int(0.030 * sample_rate)
    for t in times:
        i = int(round(t * sample_rate))
        if i >= n:
            raise ValueError(f"click at {t} s lies beyond the clip end")
        if style == "impulse":
            x[i] += amplitude
        elif style == "burst":
            k = np.arange(min(body, n - i))
            x[i:i + k.size] += amplitude * rng.standard_normal(k.size) * np.exp(-k / (0.005 * sample_rate))
        else:
            raise ValueError(f"unknown click style {style!r}")
    if style == "impulse":
        power = amplitude ** 2 / body
    else:
        power = float(np.mean(x[np.abs(x) > 0] ** 2)) if np.any(x) else 0.0
    x = _add_noise(x, power, snr_db, rng)
    return SynthResult(AudioClip(x, sample_rate), {"onsets": tuple(times), "snr_db": snr_db})


def damped_sine(f0: float, decay: float, attack_ms: float = 5.0, duration: float = 1.0,
                onset: float = 0.1, sample_rate: int = DEFAULT_RATE, amplitude: float = 0.8,
                harmonics: Sequence[float] = (), phase: float = 0.0) -> SynthResult:
    """Sinusoid at ``f0`` under a linear attack and exponential decay.

    ``harmonics`` gives relative amplitudes for partials 2, 3, ...
    """
    _check_rate(sample_rate)
    if f0 <= 0 or f0 >= sample_rate / 2:
        raise ValueError("f0 must lie in (0, Nyquist)")
    if decay < 0 or attack_ms < 0:
        raise ValueError("decay and attack_ms must be non-negative")
    t = _time(duration, sample_rate)
    carrier = np.sin(2 * np.pi * f0 * (t - onset) + phase)
    for k, a in enumerate(harmonics, start=2):
        if k * f0 < sample_rate / 2:
            carrier = carrier + a * np.sin(2 * np.pi * k * f0 * (t - onset) + phase)
    x = amplitude * impact_envelope(t, onset, attack_ms, decay) * carrier
    return SynthResult(AudioClip(x, sample_rate), {
        "f0": f0, "decay_rate": decay, "attack_time": 0.8 * attack_ms, "onset": onset})


def noise_burst(duration: float = 0.6, onset: float = 0.1, decay: float = 8.0,
                attack_ms: float = 2.0, lowpass: float | None = None, highpass: float | None = None,
                sample_rate: int = DEFAULT_RATE, amplitude: float = 0.8, seed: int = 0) -> SynthResult:
    """White noise under an impact envelope, optionally band-limited."""
    _check_rate(sample_rate)
    rng = np.random.default_rng(seed)
    t = _time(duration, sample_rate)
    noise = rng.standard_normal(t.size)
    nyq = sample_rate / 2
    if lowpass is not None:
        noise = sps.sosfiltfilt(sps.butter(8, lowpass / nyq, output="sos"), noise)
    if highpass is not None:
        noise = sps.sosfiltfilt(sps.butter(8, highpass / nyq, btype="high", output="sos"), noise)
    x = noise * impact_envelope(t, onset, attack_ms, decay)
    x = _normalize(x, amplitude)
    return SynthResult(AudioClip(x, sample_rate), {
        "onset": onset, "decay_rate": decay, "lowpass": lowpass, "highpass": highpass})


def am_tone(f_mod: float, depth: float = 1.0, carrier: float = 1000.0, duration: float = 2.0,
            sample_rate: int = DEFAULT_RATE, amplitude: float = 0.8) -> SynthResult:
    """Carrier tone with sinusoidal amplitude modulation (``depth`` in [0, 1])."""
    _check_rate(sample_rate)
    if not 0 <= depth <= 1:
        raise ValueError("depth must lie in [0, 1]")
    if f_mod < 0:
        raise ValueError("f_mod must be non-negative")
    t = _time(duration, sample_rate)
    env = (1 + depth * np.sin(2 * np.pi * f_mod * t)) / (1 + depth)
    x = amplitude * env * np.sin(2 * np.pi * carrier * t)
    return SynthResult(AudioClip(x, sample_rate), {"f_mod": f_mod, "depth": depth})


def reverb_tail(rt60: float, duration: float | None = None, onset: float = 0.05,
                direct_gain: float = 0.0, sample_rate: int = DEFAULT_RATE,
                amplitude: float = 0.8, seed: int = 0) -> SynthResult:
    """Exponentially decaying white noise reaching -60 dB ``rt60`` seconds after onset.

    ``direct_gain`` adds a unit impulse of that amplitude at the onset.
    """
    _check_rate(sample_rate)
    if rt60 <= 0:
        raise ValueError("rt60 must be positive")
    if duration is None:
        duration = onset + 1.5 * rt60 + 0.1
    rng = np.random.default_rng(seed)
    t = _time(duration, sample_rate)
    rel = t - onset
    env = np.where(rel >= 0, 10 ** (-3 * np.maximum(rel, 0) / rt60), 0.0)
    x = rng.standard_normal(t.size) * env
    i0 = int(round(onset * sample_rate))
    if direct_gain and i0 < x.size:
        x[i0] += direct_gain
    x = _normalize(x, amplitude)
    return SynthResult(AudioClip(x, sample_rate), {"rt60": rt60, "onset": onset})


def resonant_burst(f_res: float, decay: float = 150.0, excitation_ms: float = 5.0,
                   duration: float = 0.5, onset: float = 0.1, sample_rate: int = DEFAULT_RATE,
                   amplitude: float = 0.8, seed: int = 0) -> SynthResult:
    """Short white-noise burst driving a two-pole resonator at ``f_res``.

    ``decay`` is the resonator's amplitude decay rate in 1/s.
    """
    _check_rate(sample_rate)
    if not 0 < f_res < sample_rate / 2:
        raise ValueError("f_res must lie in (0, Nyquist)")
    rng = np.random.default_rng(seed)
    t = _time(duration, sample_rate)
    exc = np.zeros(t.size)
    i0 = int(round(onset * sample_rate))
    n_exc = int(round(excitation_ms / 1000 * sample_rate))
    exc[i0:i0 + n_exc] = rng.standard_normal(min(n_exc, t.size - i0))
    r = np.exp(-decay / sample_rate)
    theta = 2 * np.pi * f_res / sample_rate
    x = sps.lfilter([1.0], [1.0, -2 * r * np.cos(theta), r * r], exc)
    x = _normalize(x, amplitude)
    return SynthResult(AudioClip(x, sample_rate), {"f_res": f_res, "onset": onset})


def impact_train(times: Sequence[float], duration: float, *, f0: float | Sequence[float] = 440.0,
                 decay: float = 10.0, attack_ms: float = 3.0, noise_mix: float = 0.0,
                 lowpass: float | None = None, rt60: float | None = None, reverb_gain: float = 0.3,
                 floor_db: float | None = None, sample_rate: int = DEFAULT_RATE,
                 amplitude: float = 0.8, seed: int = 0) -> SynthResult:
    """A sequence of impacts: tonal ring plus optional noise, reverb and noise floor.

    ``f0`` may be one frequency or one per hit. ``noise_mix`` blends a noise
    burst into each hit (filtered by ``lowpass`` when given). ``rt60`` adds an
    exponentially decaying diffuse tail per hit at ``reverb_gain`` relative
    amplitude. ``floor_db`` adds stationary noise that many dB below the peak.
    """
    _check_rate(sample_rate)
    rng = np.random.default_rng(seed)
    t = _time(duration, sample_rate)
    f0s = [float(f0)] * len(times) if np.isscalar(f0) else [float(f) for f in f0]
    if len(f0s) != len(times):
        raise ValueError("need one f0 per hit")
    nyq = sample_rate / 2
    sos = sps.butter(8, lowpass / nyq, output="sos") if lowpass else None
    x = np.zeros(t.size)
    for hit, f in zip(times, f0s):
        if hit >= duration:
            raise ValueError(f"hit at {hit} s lies beyond the clip end")
        env = impact_envelope(t, hit, attack_ms, decay)
        tone = np.sin(2 * np.pi * f * (t - hit))
        part = (1 - noise_mix) * tone
        if noise_mix:
            n = rng.standard_normal(t.size)
            if sos is not None:
                n = sps.sosfiltfilt(sos, n)
                n /= np.std(n) or 1.0
            part = part + noise_mix * n
        x += env * part
        if rt60:
            rel = t - hit
            tail = np.where(rel >= 0, 10 ** (-3 * np.maximum(rel, 0) / rt60), 0.0)
            diffuse = rng.standard_normal(t.size)
            if sos is not None:
                diffuse = sps.sosfiltfilt(sos, diffuse)
                diffuse /= np.std(diffuse) or 1.0
            x += reverb_gain * tail * diffuse
    x = _normalize(x, amplitude)
    if floor_db is not None:
        x = x + rng.standard_normal(t.size) * amplitude * 10 ** (-floor_db / 20)
    return SynthResult(AudioClip(x, sample_rate), {
        "onsets": tuple(float(h) for h in times), "f0": tuple(f0s), "decay_rate": decay,
        "rt60": rt60})


GENERATORS = {
    "click_train": click_train,
    "damped_sine": damped_sine,
    "noise_burst": noise_burst,
    "am_tone": am_tone,
    "reverb_tail": reverb_tail,
    "resonant_burst": resonant_burst,
    "impact_train": impact_train,
}


def synth(kind: str, **params) -> SynthResult:
    """Dispatch to a named generator; unknown kinds or parameters raise ``ValueError``."""
    try:
        gen = GENERATORS[kind]
    except KeyError:
        raise ValueError(f"unknown synth kind {kind!r}; expected one of {sorted(GENERATORS)}") from None
    try:
        return gen(**params)
    except TypeError as exc:
        raise ValueError(f"invalid parameters for {kind}: {exc}") from exc
