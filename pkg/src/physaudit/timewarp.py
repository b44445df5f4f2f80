"""Anchor-based piecewise-linear time warping of audio and video frame plans.

Audio is warped by plain resampling per segment, so pitch moves with the
stretch factor. That is fine for building synthetic test pairs; it is not a
pitch-preserving time stretch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dsp

__all__ = [
    "WarpError",
    "WarpMap",
    "FrameRemapPlan",
    "build_warp_map",
    "warp_audio",
    "frame_remap_plan",
    "STRETCH_LIMITS",
]

# segments stretched beyond these factors are rejected as audibly broken
STRETCH_LIMITS = (0.25, 4.0)


class WarpError(ValueError):
    """A warp request that cannot be honoured; ``reason`` is a short code."""

    def __init__(self, reason: str, message: str):
        super().__init__(f"{reason}: {message}")
        self.reason = reason


def _increasing(values: np.ndarray, name: str) -> None:
    if values.ndim != 1 or values.size < 2:
        raise WarpError("bad_anchors", f"{name} needs at least two anchors")
    if not np.all(np.isfinite(values)):
        raise WarpError("bad_anchors", f"{name} must be finite")
    if np.any(np.diff(values) <= 0):
        raise WarpError("non_monotonic", f"{name} must be strictly increasing")


@dataclass(frozen=True)
class WarpMap:
    """Continuous, strictly increasing piecewise-linear map from source to target time.

    Outside the anchor span the first and last segments are extended linearly.
    """

    source_anchors: tuple[float, ...]
    target_anchors: tuple[float, ...]

    def __post_init__(self):
        src = np.asarray(self.source_anchors, dtype=np.float64)
        tgt = np.asarray(self.target_anchors, dtype=np.float64)
        if src.shape != tgt.shape:
            raise WarpError("bad_anchors", "source and target anchors differ in length")
        _increasing(src, "source anchors")
        _increasing(tgt, "target anchors")
        object.__setattr__(self, "source_anchors", tuple(float(v) for v in src))
        object.__setattr__(self, "target_anchors", tuple(float(v) for v in tgt))

    @property
    def stretches(self) -> np.ndarray:
        return np.diff(self.target_anchors) / np.diff(self.source_anchors)

    @property
    def source_duration(self) -> float:
        return self.source_anchors[-1]

    @property
    def target_duration(self) -> float:
        return self.target_anchors[-1]

    def __call__(self, t):
        return _piecewise(np.asarray(t, dtype=np.float64), self.source_anchors, self.target_anchors)

    def inverse(self) -> WarpMap:
        return WarpMap(self.target_anchors, self.source_anchors)

    def compose(self, then: WarpMap) -> WarpMap:
        """The map ``then(self(t))``."""
        joints = np.union1d(self.source_anchors, self.inverse()(np.asarray(then.source_anchors)))
        lo, hi = self.source_anchors[0], self.source_anchors[-1]
        joints = joints[(joints >= lo - 1e-12) & (joints <= hi + 1e-12)]
        # merge joints that collapse onto each other numerically
        keep = np.concatenate(([True], np.diff(joints) > 1e-12))
        joints = joints[keep]
        return WarpMap(tuple(joints), tuple(then(self(joints))))

    def is_identity(self, tol: float = 1e-12) -> bool:
        return bool(np.allclose(self.source_anchors, self.target_anchors, atol=tol, rtol=0))

    def to_dict(self) -> dict:
        return {"source_anchors": list(self.source_anchors), "target_anchors": list(self.target_anchors)}


def _piecewise(t: np.ndarray, xs: Sequence[float], ys: Sequence[float]) -> np.ndarray:
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    out = np.interp(t, xs, ys)
    first = (ys[1] - ys[0]) / (xs[1] - xs[0])
    last = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    out = np.where(t < xs[0], ys[0] + (t - xs[0]) * first, out)
    out = np.where(t > xs[-1], ys[-1] + (t - xs[-1]) * last, out)
    return out if out.ndim else float(out)


def build_warp_map(source_hits: Sequence[float], target_hits: Sequence[float],
                   source_duration: float) -> WarpMap:
    """Map source hit times onto target hit times.

    Anchors are ``0``, the hits and the clip end; the tail after the last hit
    keeps the last segment's stretch. A single hit gives a pure translation
    (the whole clip shifts, so the start is padded or trimmed).
    """
    src = np.asarray(source_hits, dtype=np.float64)
    tgt = np.asarray(target_hits, dtype=np.float64)
    if src.size != tgt.size:
        raise WarpError("hit_count_mismatch",
                        f"{src.size} source hits vs {tgt.size} target hits; truncate to the first N hits first")
    if src.size == 0:
        raise WarpError("bad_anchors", "need at least one hit")
    for arr, name in ((src, "source hits"), (tgt, "target hits")):
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise WarpError("bad_anchors", f"{name} must be finite and non-negative")
        if np.any(np.diff(arr) <= 0):
            raise WarpError("non_monotonic", f"{name} must be strictly increasing")
    if not source_duration > src[-1]:
        raise WarpError("bad_anchors", "the last source hit must lie before the clip end")
    if src.size == 1:
        shift = float(tgt[0] - src[0])
        return WarpMap((0.0, float(src[0]), source_duration),
                       (shift, float(tgt[0]), source_duration + shift))
    if (src[0] == 0) != (tgt[0] == 0):
        raise WarpError("bad_anchors", "a hit at time 0 must map to time 0")
    xs = list(src) if src[0] == 0 else [0.0] + list(src)
    ys = list(tgt) if tgt[0] == 0 else [0.0] + list(tgt)
    last = (tgt[-1] - tgt[-2]) / (src[-1] - src[-2])
    xs.append(source_duration)
    ys.append(float(tgt[-1] + (source_duration - src[-1]) * last))
    return WarpMap(tuple(xs), tuple(ys))


def warp_audio(clip: dsp.AudioClip, warp: WarpMap) -> dsp.AudioClip:
    """Resample each anchor segment so source events land on their target times.

    The output spans ``[0, warp.target_duration]``; output time before the
    first anchor's image reads silence. Segments compressed in time are
    low-passed to avoid aliasing.
    """
    if clip.samples.size == 0:
        raise ValueError("empty clip")
    stretches = warp.stretches
    lo, hi = STRETCH_LIMITS
    bad = stretches[(stretches < lo) | (stretches > hi)]
    if bad.size:
        raise WarpError("extreme_warp", f"stretch factor {float(bad[0]):.3f} outside [{lo}, {hi}]")
    if warp.target_duration <= 0:
        raise WarpError("bad_anchors", "target ends before time 0")
    if warp.is_identity():
        return clip
    sr = clip.sample_rate
    n_out = int(round(warp.target_duration * sr))
    t_out = np.arange(n_out) / sr
    src_pos = np.asarray(warp.inverse()(t_out)) * sr
    out = np.zeros(n_out)
    edges = np.asarray(warp.target_anchors)
    # each output sample belongs to the segment whose target span contains it
    seg = np.clip(np.searchsorted(edges, t_out, side="right") - 1, 0, stretches.size - 1)
    for k, stretch in enumerate(stretches):
        idx = np.flatnonzero(seg == k)
        if idx.size:
            out[idx] = dsp.sinc_interpolate(clip.samples, src_pos[idx], cutoff=min(1.0, float(stretch)))
    return dsp.AudioClip(out, sr)


@dataclass(frozen=True)
class FrameRemapPlan:
    """Source frame index to show at each target frame."""

    fps: float
    indices: tuple[int, ...]

    def __post_init__(self):
        if not self.fps > 0:
            raise ValueError("fps must be positive")
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 for i in idx):
            raise ValueError("frame indices must be non-negative")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)

    def to_json(self) -> str:
        return json.dumps({"fps": self.fps, "indices": list(self.indices)})

    @classmethod
    def from_json(cls, text: str) -> FrameRemapPlan:
        data = json.loads(text)
        return cls(float(data["fps"]), tuple(data["indices"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def frame_remap_plan(warp: WarpMap, fps: float, n_frames: int) -> FrameRemapPlan:
    """Nearest source frame for every target frame.

    Target frame ``k`` at ``k / fps`` reads source frame
    ``floor(inverse(k / fps) * fps + 0.5)``, clamped to ``[0, n_frames)``.
    """
    if not fps > 0:
        raise ValueError("fps must be positive")
    if n_frames < 1:
        raise ValueError("n_frames must be at least 1")
    count = int(round(warp.target_duration * fps))
    times = np.arange(count) / fps
    src = np.asarray(warp.inverse()(times)) * fps
    # the tiny offset keeps exact half-frame positions from rounding down through float error
    idx = np.floor(src + 0.5 + 1e-9).astype(np.int64)
    return FrameRemapPlan(float(fps), tuple(np.clip(idx, 0, n_frames - 1)))
