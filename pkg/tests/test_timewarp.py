import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from physaudit import synth
from physaudit.dsp import AudioClip
from physaudit.onset import detect_onsets
from physaudit.timewarp import (
    FrameRemapPlan,
    WarpError,
    WarpMap,
    build_warp_map,
    frame_remap_plan,
    warp_audio,
)

SR = 16000


def increasing(min_size=2, max_size=6):
    return st.lists(st.floats(0.05, 3.0), min_size=min_size, max_size=max_size, unique=True).map(
        lambda xs: sorted(xs)).filter(lambda xs: np.all(np.diff(xs) > 0.01))


class TestWarpMap:
    def test_anchors_and_tail(self):
        w = build_warp_map([1.0, 2.0], [1.2, 2.4], 3.0)
        assert w.source_anchors == (0.0, 1.0, 2.0, 3.0)
        assert w.target_anchors == pytest.approx((0.0, 1.2, 2.4, 3.6))
        assert w(1.5) == pytest.approx(1.8)

    def test_single_hit_translation(self):
        w = build_warp_map([0.5], [0.7], 2.0)
        assert w(0.0) == pytest.approx(0.2)
        assert w(2.0) == pytest.approx(2.2)
        assert np.allclose(w.stretches, 1.0)

    def test_extrapolates_linearly(self):
        w = WarpMap((0.0, 1.0), (0.0, 2.0))
        assert w(-1.0) == -2.0
        assert w(3.0) == 6.0

    def test_inverse_round_trip(self):
        w = build_warp_map([0.3, 0.9, 1.7], [0.4, 1.1, 1.6], 2.5)
        t = np.linspace(0, 2.5, 50)
        assert np.allclose(w.inverse()(w(t)), t)

    def test_compose(self):
        a = build_warp_map([1.0, 2.0], [1.2, 2.4], 3.0)
        b = build_warp_map([0.5, 2.0], [0.6, 2.1], 3.6)
        c = a.compose(b)
        t = np.linspace(0, 3.0, 97)
        assert np.allclose(c(t), b(a(t)))

    def test_compose_with_inverse_is_identity(self):
        a = build_warp_map([0.4, 1.3], [0.5, 1.1], 2.0)
        assert a.compose(a.inverse()).is_identity(1e-9)

    def test_json_shape(self):
        d = build_warp_map([1.0], [1.0], 2.0).to_dict()
        assert set(d) == {"source_anchors", "target_anchors"}

    @pytest.mark.parametrize("src,tgt,reason", [
        ([1.0, 2.0], [1.0], "hit_count_mismatch"),
        ([2.0, 1.0], [1.0, 2.0], "non_monotonic"),
        ([], [], "bad_anchors"),
        ([0.0, 1.0], [0.5, 1.0], "bad_anchors"),
        ([1.0, 5.0], [1.0, 2.0], "bad_anchors"),
    ])
    def test_errors(self, src, tgt, reason):
        with pytest.raises(WarpError) as info:
            build_warp_map(src, tgt, 3.0)
        assert info.value.reason == reason

    @settings(max_examples=60)
    @given(increasing(), st.data())
    def test_hits_land_on_targets(self, src, data):
        tgt = data.draw(increasing(len(src), len(src)))
        w = build_warp_map(src, tgt, src[-1] + 0.5)
        assert np.allclose(w(np.array(src)), tgt, atol=1e-9)
        assert np.all(np.diff(w(np.linspace(0, src[-1] + 0.5, 200))) > 0)


class TestWarpAudio:
    def test_clicks_redetected(self):
        clip = synth.click_train([1.0, 2.0], 3.0, snr_db=30, seed=0).clip
        out = warp_audio(clip, build_warp_map([1.0, 2.0], [1.2, 2.4], 3.0))
        found = detect_onsets(out)
        assert len(found) == 2
        assert np.max(np.abs(np.array(found) - [1.2, 2.4])) < 0.010

    def test_identity_warp(self):
        clip = synth.damped_sine(440, 5).clip
        out = warp_audio(clip, build_warp_map([0.1, 0.5], [0.1, 0.5], 1.0))
        assert np.max(np.abs(out.samples - clip.samples)) < 1e-3

    def test_near_identity_is_close(self):
        clip = synth.damped_sine(440, 5).clip
        out = warp_audio(clip, WarpMap((0.0, 0.5, 1.0), (0.0, 0.5 + 1e-9, 1.0)))
        assert np.max(np.abs(out.samples - clip.samples)) < 1e-3

    def test_output_length(self):
        clip = AudioClip(np.random.default_rng(0).normal(size=SR), SR)
        out = warp_audio(clip, build_warp_map([0.5], [0.6], 1.0))
        assert out.samples.size == round(1.1 * SR)

    def test_extreme_rejected(self):
        with pytest.raises(WarpError) as info:
            warp_audio(synth.damped_sine(440, 5).clip, build_warp_map([0.1, 0.2], [0.1, 0.9], 1.0))
        assert info.value.reason == "extreme_warp"


class TestFramePlan:
    def test_twofold_slowdown(self):
        w = WarpMap((0.0, 1.0), (0.0, 2.0))
        plan = frame_remap_plan(w, 30.0, 30)
        assert len(plan) == 60
        assert plan.indices[:8] == (0, 1, 1, 2, 2, 3, 3, 4)
        assert plan.indices == tuple(min(int(np.floor(k / 2 + 0.5)), 29) for k in range(60))

    def test_identity_plan(self):
        plan = frame_remap_plan(WarpMap((0.0, 1.0), (0.0, 1.0)), 24.0, 24)
        assert plan.indices == tuple(range(24))

    def test_clamped(self):
        plan = frame_remap_plan(WarpMap((0.0, 1.0), (0.5, 1.5)), 10.0, 10)
        assert min(plan.indices) == 0 and max(plan.indices) == 9

    def test_json_round_trip(self, tmp_path):
        plan = frame_remap_plan(WarpMap((0.0, 1.0), (0.0, 1.5)), 30.0, 30)
        assert FrameRemapPlan.from_json(plan.to_json()) == plan
        plan.save(tmp_path / "p.json")
        assert json.loads((tmp_path / "p.json").read_text())["fps"] == 30.0

    def test_invalid(self):
        w = WarpMap((0.0, 1.0), (0.0, 1.0))
        with pytest.raises(ValueError):
            frame_remap_plan(w, 0, 10)
        with pytest.raises(ValueError):
            frame_remap_plan(w, 30, 0)
