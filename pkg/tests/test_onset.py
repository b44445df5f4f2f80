import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from physaudit import synth
from physaudit.config import OnsetConfig
from physaudit.dsp import AudioClip
from physaudit.onset import (
    AlignmentScores,
    HitAnnotations,
    adaptive_tolerance,
    alignment_scores,
    annotate_candidates,
    detect_onsets,
    match,
    perfect_align_rate,
    score_clip,
)

SR = 16000


class TestHitAnnotations:
    def test_validation(self):
        with pytest.raises(ValueError):
            HitAnnotations((0.5, 0.2))
        with pytest.raises(ValueError):
            HitAnnotations((-0.1,))
        with pytest.raises(ValueError):
            HitAnnotations((0.1,), "auto")

    def test_first_and_within(self):
        h = HitAnnotations((0.1, 0.5, 0.9))
        assert h.first(2).times == (0.1, 0.5)
        with pytest.raises(ValueError):
            h.check_within(0.8)


class TestTolerance:
    def test_quarter_gap_clamped(self):
        assert adaptive_tolerance([0.0, 0.6, 1.2]) == pytest.approx(0.15)
        assert adaptive_tolerance([0.0, 0.2]) == 0.1
        assert adaptive_tolerance([0.0, 2.0]) == 0.25
        assert adaptive_tolerance([1.0]) == OnsetConfig().single_hit_tolerance


class TestMatch:
    def test_greedy_nearest(self):
        m = match([0.48, 0.55, 1.3], HitAnnotations((0.5, 1.0)))
        assert m.matched == (0.48, None)

    def test_tie_goes_earlier(self):
        m = match([0.4, 0.6], HitAnnotations((0.5, 2.0)))
        assert m.matched[0] == 0.4

    def test_detection_used_once(self):
        m = match([0.5], HitAnnotations((0.45, 0.55)))
        assert m.n_matched == 1

    def test_scores(self):
        m = match([0.51, 1.02], HitAnnotations((0.5, 1.0, 1.5)))
        s = alignment_scores(m)
        assert s.hit_coverage == pytest.approx(200 / 3)
        assert s.timing_error == pytest.approx(15.0)
        assert not s.perfect

    def test_perfect_rate(self):
        seeds = [AlignmentScores(100.0, 1.0, True), AlignmentScores(50.0, 1.0, False)]
        assert perfect_align_rate(seeds) == 50.0
        with pytest.raises(ValueError):
            perfect_align_rate([])

    def test_empty_annotations(self):
        with pytest.raises(ValueError):
            match([0.1], HitAnnotations(()))

    @settings(max_examples=60)
    @given(st.lists(st.floats(0, 5), max_size=10), st.lists(st.floats(0.01, 5), min_size=1, max_size=8,
                                                             unique=True))
    def test_match_invariants(self, detected, annotated):
        ann = HitAnnotations(tuple(sorted(annotated)))
        m = match(detected, ann)
        used = [d for d in m.matched if d is not None]
        assert len(used) <= len(detected)
        assert all(dev <= m.tolerance + 1e-12 for dev in m.deviations)
        s = alignment_scores(m)
        assert 0 <= s.hit_coverage <= 100
        assert s.perfect == (m.n_matched == len(ann))


class TestDetect:
    def test_clicks(self):
        times = [0.3, 0.8, 1.4, 2.0]
        found = detect_onsets(synth.click_train(times, 2.5, snr_db=30, seed=1).clip)
        assert len(found) == 4
        assert np.max(np.abs(np.array(found) - times)) < 0.01

    def test_impacts(self):
        times = [0.2, 0.9, 1.6]
        r = synth.impact_train(times, 2.4, f0=500.0, decay=12.0, seed=3)
        found = detect_onsets(r.clip)
        assert np.max(np.abs(np.array(found) - times)) < 0.02

    def test_single_impact(self):
        r = synth.impact_train([0.5], 1.0, attack_ms=5.0, decay=10.0, seed=0)
        found = detect_onsets(r.clip)
        assert len(found) == 1
        assert 0.49 <= found[0] <= 0.52

    def test_stationary_noise_rarely_fires(self):
        total = 0
        for seed in range(10):
            x = np.random.default_rng(seed).normal(0, 0.1, 10 * SR)
            total += len(detect_onsets(AudioClip(x, SR)))
        assert total <= 10

    def test_silence(self):
        assert detect_onsets(AudioClip(np.zeros(SR), SR)) == []

    def test_too_short(self):
        with pytest.raises(ValueError, match="too short"):
            detect_onsets(AudioClip(np.ones(100), SR))

    def test_resampled_input(self):
        r = synth.click_train([0.5, 1.0], 1.5, sample_rate=44100, snr_db=30, seed=2)
        found = detect_onsets(r.clip)
        assert np.max(np.abs(np.array(found) - [0.5, 1.0])) < 0.01

    def test_score_clip(self):
        r = synth.click_train([0.5, 1.0, 1.5], 2.0, snr_db=25, seed=4)
        _, s = score_clip(r.clip, HitAnnotations((0.5, 1.0, 1.5)))
        assert s.perfect and s.timing_error < 10


class TestAnnotate:
    def test_candidates_near_truth(self):
        times = [0.3, 0.9, 1.5]
        for seed in range(5):
            ann = annotate_candidates(synth.click_train(times, 2.0, snr_db=20, seed=seed).clip)
            assert ann.source == "semi_auto"
            assert len(ann) == 3
            assert np.max(np.abs(np.array(ann.times) - times)) < 0.012

    def test_echo_suppressed(self):
        x = synth.click_train([1.0], 2.0, seed=0).clip.samples.copy()
        x[int(1.3 * SR):int(1.3 * SR) + 480] += x[SR:SR + 480] * 10 ** (-3 / 20)
        ann = annotate_candidates(AudioClip(x, SR))
        assert len(ann) == 1
        assert ann.times[0] == pytest.approx(1.0, abs=0.012)

    def test_too_short(self):
        with pytest.raises(ValueError):
            annotate_candidates(AudioClip(np.ones(200), SR))

    def test_silent(self):
        assert len(annotate_candidates(AudioClip(np.zeros(SR), SR))) == 0
