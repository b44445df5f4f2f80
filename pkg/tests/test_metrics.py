import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from physaudit import metrics as M
from physaudit import synth
from physaudit.config import METRIC_NAMES, PER_HIT_METRICS, MetricsConfig
from physaudit.dsp import AudioClip

SR = 16000


def whole(result, onset):
    return M.whole_clip_segment(result.clip, onset)


def sine(f, dur=1.0, amp=0.5):
    t = np.arange(int(SR * dur)) / SR
    return AudioClip(amp * np.sin(2 * np.pi * f * t), SR)


def brute_rolloff(x, fraction=0.85):
    mags = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(x.size, 1 / SR)
    total = mags.sum()
    acc = 0.0
    for f, m in zip(freqs, mags):
        acc += m
        if acc >= fraction * total:
            return f
    return freqs[-1]


class TestSegmentation:
    def test_window_formula(self):
        assert M.segment_window(None) == 0.5
        assert M.segment_window(0.1) == 0.2
        assert M.segment_window(1.0) == 1.5
        assert M.segment_window(5.0) == 2.0

    def test_bounds(self):
        clip = AudioClip(np.zeros(SR * 3), SR)
        segs = M.segment_hits(clip, [0.5, 1.0, 2.9], rt60_hint=1.0)
        assert segs[0].start == pytest.approx(0.45)
        assert segs[0].end == pytest.approx(0.98)
        assert segs[1].end == pytest.approx(2.5)
        assert segs[2].end == pytest.approx(3.0)
        assert [s.hit_time for s in segs] == pytest.approx([0.5, 1.0, 2.9])

    def test_hit_at_zero(self):
        seg = M.segment_hits(AudioClip(np.zeros(SR), SR), [0.0])[0]
        assert seg.start == 0.0 and seg.onset_offset == 0.0

    def test_late_hit_dropped(self):
        with pytest.warns(M.DroppedHitWarning):
            segs = M.segment_hits(AudioClip(np.zeros(SR), SR), [0.5, 1.0])
        assert len(segs) == 1

    def test_empty_hits(self):
        with pytest.raises(ValueError):
            M.segment_hits(AudioClip(np.zeros(SR), SR), [])


class TestOracles:
    @pytest.mark.parametrize("lam", [1, 5, 20])
    def test_decay_rate(self, lam):
        r = synth.damped_sine(440, lam, duration=3.0 if lam == 1 else 1.0)
        assert M.decay_rate(whole(r, 0.1)) == pytest.approx(lam, rel=0.10)

    @pytest.mark.parametrize("f0", [110, 440, 1760])
    def test_f0(self, f0):
        r = synth.damped_sine(f0, 5)
        assert M.fundamental_frequency(whole(r, 0.1)) == pytest.approx(f0, rel=0.01)

    def test_octave_divisor_rule(self):
        assert M.octave_correct(2600.0) == 1300.0
        assert M.octave_correct(1000.0) == 1000.0
        assert M.octave_correct(2600.0, support=lambda q: q < 1000) == pytest.approx(2600 / 3)
        assert math.isnan(M.octave_correct(float("nan")))

    @pytest.mark.parametrize("T", [0.3, 0.8, 1.5])
    def test_rt60(self, T):
        r = synth.reverb_tail(T, seed=1)
        assert M.rt60(whole(r, 0.05)) == pytest.approx(T, rel=0.10)

    def test_attack_ordering(self):
        values = [M.attack_time(whole(synth.damped_sine(440, 5, a), 0.1)) for a in (5, 20, 50)]
        assert values[0] < values[1] < values[2]

    def test_attack_closed_form(self):
        r = synth.damped_sine(440, 5, 20)
        assert M.attack_time(whole(r, 0.1)) == pytest.approx(r.truth["attack_time"], rel=0.25)

    def test_centroid_of_tone(self):
        assert M.spectral_centroid(M.whole_clip_segment(sine(2000), 0.0)) == pytest.approx(2000, abs=50)

    def test_rolloff_of_white_noise(self):
        x = np.random.default_rng(0).normal(0, 0.3, SR)
        got = M.spectral_rolloff(M.whole_clip_segment(AudioClip(x, SR), 0.0))
        assert got == pytest.approx(brute_rolloff(x), rel=0.05)

    def test_frame_functions_match_brute_force(self):
        rng = np.random.default_rng(3)
        mags = rng.random((5, 33))
        freqs = np.linspace(0, 8000, 33)
        cen = M.frame_centroid(mags, freqs)
        roll = M.frame_rolloff(mags, freqs, 0.85)
        for k in range(5):
            assert cen[k] == pytest.approx(np.sum(mags[k] * freqs) / np.sum(mags[k]), rel=1e-12)
            cs = np.cumsum(mags[k])
            assert roll[k] == freqs[np.argmax(cs >= 0.85 * cs[-1])]

    def test_flux_rougher_is_higher(self):
        slow = M.spectral_flux(whole(synth.noise_burst(seed=1, decay=2.0), 0.1))
        fast = M.spectral_flux(whole(synth.noise_burst(seed=1, decay=30.0), 0.1))
        assert slow > fast > 0

    def test_drr_orders_by_reverb_level(self):
        tail = synth.reverb_tail(0.5, onset=0.05, seed=2, amplitude=1.0).clip.samples
        direct = np.zeros_like(tail)
        direct[800] = 5.0
        values = [M.drr(M.whole_clip_segment(AudioClip(direct + g * tail, SR), 0.05), 0.5)
                  for g in (0.05, 0.2, 1.0)]
        assert values[0] > values[1] > values[2]
        dry = M.drr(M.whole_clip_segment(AudioClip(direct, SR), 0.05), 0.5)
        assert dry == MetricsConfig().drr_clip[1]

    def test_modulation_peaks_in_band(self):
        values = {f: M.temporal_modulation(synth.am_tone(f, 1.0).clip) for f in (2, 8, 30)}
        assert values[8] > values[2]
        assert values[8] > values[30]

    def test_modulation_bounded(self):
        cfg = MetricsConfig()
        top = cfg.modulation_scale * sum(cfg.modulation_weights)
        for f in (2, 8, 30):
            assert 0 <= M.temporal_modulation(synth.am_tone(f, 1.0).clip) <= top


class TestReasons:
    def test_silence(self):
        mv = M.compute_all(AudioClip(np.zeros(SR), SR), [0.1, 0.5])
        assert mv.temporal_modulation == 0.0
        for name in METRIC_NAMES:
            if name != "temporal_modulation":
                assert math.isnan(mv[name])
                assert mv.reasons[name] in M.REASONS

    def test_single_sample(self):
        m = M.measure("f0", AudioClip(np.zeros(1), SR))
        assert math.isnan(m.value) and m.reason == "too_short"
        assert M.measure("temporal_modulation", AudioClip(np.ones(1), SR)).reason == "too_short"

    def test_one_hit_clip(self):
        mv = M.compute_all(synth.damped_sine(440, 5).clip, [0.1])
        for name in PER_HIT_METRICS:
            assert math.isnan(mv[name])
            assert mv.reasons[name] == "insufficient_hits"
        for name in ("rt60", "drr", "temporal_modulation"):
            assert math.isfinite(mv[name])

    def test_no_hits(self):
        mv = M.compute_all(synth.damped_sine(440, 5).clip, [])
        assert mv.reasons["rt60"] == "no_hits"
        assert math.isfinite(mv.temporal_modulation)

    def test_unknown_metric(self):
        with pytest.raises(ValueError):
            M.measure("loudness", sine(440))

    def test_empty_clip(self):
        with pytest.raises(ValueError):
            M.compute_all(AudioClip(np.zeros(0), SR), [0.1])

    def test_late_hits_ignored(self):
        mv = M.compute_all(synth.damped_sine(440, 5).clip, [0.1, 5.0])
        assert mv.hit_times == (0.1,)


class TestComputeAll:
    def test_two_hits_averages(self):
        r = synth.impact_train([0.2, 1.4], 2.6, f0=[300.0, 600.0], decay=8.0)
        mv = M.compute_all(r.clip, [0.2, 1.4])
        assert mv.f0 == pytest.approx(450, rel=0.01)
        assert mv.per_hit["f0"] == pytest.approx((300, 600), rel=0.01)
        assert mv.decay_rate == pytest.approx(8.0, rel=0.1)

    def test_vector_round_trip(self):
        mv = M.compute_all(synth.damped_sine(440, 5).clip, [0.1])
        again = M.MetricVector.from_dict(mv.to_dict())
        assert again.reasons == mv.reasons
        for name in METRIC_NAMES:
            a, b = mv[name], again[name]
            assert (math.isnan(a) and math.isnan(b)) or a == b

    def test_unknown_metric_in_vector(self):
        with pytest.raises(ValueError):
            M.MetricVector({"loudness": 1.0})

    def test_resamples_input(self):
        r = synth.damped_sine(440, 5, duration=1.0, sample_rate=44100)
        seg = M.whole_clip_segment(r.clip, 0.1)
        assert seg.sample_rate == SR
        assert M.fundamental_frequency(seg) == pytest.approx(440, rel=0.01)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.1, 0.9), st.integers(0, 2 ** 16))
    def test_never_crashes_on_noise(self, scale, seed):
        x = np.random.default_rng(seed).normal(0, scale, SR // 2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            mv = M.compute_all(AudioClip(x, SR), [0.05, 0.3])
        for name in METRIC_NAMES:
            v = mv[name]
            assert math.isfinite(v) or mv.reasons[name] in M.REASONS
