"""Tunable constants for every stage, with loading from TOML/JSON files.

Defaults reproduce the published constants where those exist; the remaining
values are local choices and can be overridden per run.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

CONFIG_ENV_VAR = "PHYSAUDIT_CONFIG"

METRIC_NAMES = (
    "attack_time",
    "decay_rate",
    "f0",
    "spectral_centroid",
    "spectral_rolloff",
    "spectral_flux",
    "temporal_modulation",
    "rt60",
    "drr",
)
PER_HIT_METRICS = METRIC_NAMES[:6]


class ConfigError(ValueError):
    """Raised when a configuration file or override is invalid."""


@dataclass(frozen=True)
class OnsetConfig:
    analysis_rate: int = 16000
    fft_size: int = 512
    hop: int = 53
    threshold_mads: float = 3.0
    # peaks must also exceed (1 + relative_floor) x the moving median within +-local_window
    relative_floor: float = 1.0
    local_window: float = 0.1
    peak_fraction: float = 0.05
    min_separation: float = 0.03
    fallback_sigma: float = 0.003
    fallback_min_separation: float = 0.05
    max_onset_rate: float = 20.0
    refine_sigma: float = 0.001
    tolerance_fraction: float = 0.25
    tolerance_min: float = 0.10
    tolerance_max: float = 0.25
    single_hit_tolerance: float = 0.25
    # candidate annotation aid
    annotate_rate: int = 44100
    annotate_window: int = 1024
    annotate_hop: int = 256
    annotate_prominence_mads: float = 4.0
    annotate_min_gap: float = 0.5


@dataclass(frozen=True)
class MetricsConfig:
    analysis_rate: int = 16000
    pre_onset: float = 0.050
    next_hit_guard: float = 0.020
    window_rt60_factor: float = 1.5
    window_min: float = 0.2
    window_max: float = 2.0
    window_default: float = 0.5
    attack_sigma: float = 0.003
    attack_peak_search: float = 0.200
    decay_ranges: tuple = ((-5.0, -35.0), (-10.0, -30.0), (-5.0, -25.0))
    decay_min_points: int = 6
    # Theil-Sen runs on a strided subsample of at most this many points
    decay_max_fit_points: int = 256
    decay_clip: tuple = (0.02, 50.0)
    f0_min: float = 27.5
    f0_max: float = 4186.0
    f0_window: float = 0.300
    f0_skip: float = 0.010
    f0_frame: float = 0.040
    f0_hop: float = 0.010
    f0_voicing_threshold: float = 0.45
    f0_octave_cost: float = 0.01
    f0_silence_threshold: float = 0.03
    f0_octave_jump_cost: float = 0.35
    f0_voiced_unvoiced_cost: float = 0.14
    f0_max_candidates: int = 15
    f0_oversample: int = 8
    # longest lag searched, as a fraction of the frame length
    f0_max_lag_fraction: float = 0.5
    f0_min_voiced_ratio: float = 0.1
    f0_min_voiced_frames: int = 3
    f0_octave_threshold: float = 1200.0
    f0_octave_divisors: tuple = (2, 3, 4, 6, 8)
    f0_octave_range: tuple = (80.0, 1500.0)
    # "spectral" only divides when the quotient shows up as a spectral peak; "always" or "off"
    f0_octave_check: str = "spectral"
    f0_octave_support_db: float = 40.0
    f0_fallback_window: tuple = (0.020, 0.110)
    f0_fallback_band: tuple = (80.0, 4000.0)
    f0_fallback_mads: float = 2.5
    f0_fallback_segment: int = 1024
    spectral_fft: int = 1024
    spectral_hop: int = 128
    spectral_window: tuple = (0.060, 0.180)
    rolloff_fraction: float = 0.85
    flux_window: float = 0.180
    flux_mads: float = 3.0
    trim_fraction: float = 0.1
    rt60_frame: float = 0.010
    rt60_ranges: tuple = ((-5.0, -35.0), (-5.0, -25.0), (-5.0, -15.0))
    rt60_noise_margin: float = 5.0
    rt60_min_points: int = 6
    rt60_min_duration: float = 0.050
    rt60_min_r2: float = 0.9
    rt60_min_dynamic_range: float = 20.0
    drr_direct: float = 0.040
    drr_band: tuple = (125.0, 4000.0)
    drr_reverb_min: float = 0.2
    drr_reverb_max: float = 2.0
    drr_clip: tuple = (-20.0, 40.0)
    modulation_rate: int = 200
    modulation_highpass: float = 1.0
    modulation_band: tuple = (4.0, 16.0)
    modulation_scale: float = 0.85
    modulation_weights: tuple = (0.4, 0.3, 0.6)
    cv_divisor: float = 2.0
    pf_range: tuple = (1.0, 10.0)
    min_modulation_duration: float = 1.0
    room_aggregate: str = "median"
    min_valid_hits: int = 2


DEFAULT_JND = {
    "f0": 0.01,
    "spectral_centroid": 0.05,
    "spectral_rolloff": 0.05,
    "attack_time": 0.10,
    "decay_rate": 0.10,
    "spectral_flux": 0.15,
    "temporal_modulation": 0.15,
    "rt60": 0.10,
    "drr": 1.0,
}
# metrics whose JND is an absolute spread (same unit as the metric) rather than a ratio
ABSOLUTE_JND = frozenset({"drr"})


@dataclass(frozen=True)
class AuditConfig:
    tau_mean_fraction: float = 0.02
    tau_std_fraction: float = 0.25
    tau_reference: str = "factual"
    tau_eq_multiplier: float = 1.5
    ci_method: str = "t"
    denominator: str = "weights"
    jnd: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_JND))
    neutral_weight: float = 0.5
    semantic_default: float = 1.0
    monotonic_metric: str = "f0"


@dataclass(frozen=True)
class RunConfig:
    onset: OnsetConfig = field(default_factory=OnsetConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)
    seeds: int = 10
    jobs: int = field(default_factory=lambda: os.cpu_count() or 1)

    def validate(self) -> RunConfig:
        _check(self.seeds >= 1, "seeds must be >= 1")
        _check(self.jobs >= 1, "jobs must be >= 1")
        o, m, a = self.onset, self.metrics, self.audit
        _check(0 < o.hop <= o.fft_size, "onset.hop must lie in (0, fft_size]")
        _check(0 < o.tolerance_min <= o.tolerance_max, "onset tolerance bounds are inverted")
        _check(o.relative_floor >= 0, "onset.relative_floor must be >= 0")
        _check(0 < m.window_min <= m.window_max, "metrics window bounds are inverted")
        _check(m.f0_octave_check in ("spectral", "always", "off"),
               "metrics.f0_octave_check must be spectral, always or off")
        _check(m.room_aggregate in ("median", "mean"), "metrics.room_aggregate must be median or mean")
        _check(0 < m.rolloff_fraction < 1, "metrics.rolloff_fraction must lie in (0, 1)")
        _check(0 <= m.trim_fraction < 0.5, "metrics.trim_fraction must lie in [0, 0.5)")
        _check(a.tau_reference in ("factual", "pooled"), "audit.tau_reference must be factual or pooled")
        _check(a.denominator in ("weights", "count"), "audit.denominator must be weights or count")
        _check(a.ci_method in ("t", "normal"), "audit.ci_method must be t or normal")
        _check(a.tau_eq_multiplier >= 1, "audit.tau_eq_multiplier must be >= 1")
        unknown = set(a.jnd) - set(METRIC_NAMES)
        _check(not unknown, f"audit.jnd has unknown metrics: {sorted(unknown)}")
        _check(all(v > 0 for v in a.jnd.values()), "audit.jnd thresholds must be positive")
        return self

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["audit"]["jnd"] = dict(self.audit.jnd)
        return out


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _merge_section(section, values: Mapping[str, Any], prefix: str):
    known = {f.name: f for f in fields(section)}
    updates = {}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"unknown config key {prefix}{key}")
        current = getattr(section, key)
        if key == "jnd":
            merged = dict(current)
            merged.update({str(k): float(v) for k, v in value.items()})
            value = merged
        elif isinstance(current, tuple):
            value = tuple(tuple(v) if isinstance(v, (list, tuple)) else v for v in value)
        elif isinstance(current, bool) or current is None:
            pass
        elif isinstance(current, int) and not isinstance(value, bool):
            if float(value) != int(value):
                raise ConfigError(f"{prefix}{key} must be an integer")
            value = int(value)
        elif isinstance(current, float):
            value = float(value)
        updates[key] = value
    return replace(section, **updates)


def config_from_mapping(data: Mapping[str, Any], base: RunConfig | None = None) -> RunConfig:
    """Apply a nested mapping (``{"onset": {...}, "seeds": 10, ...}``) onto a config."""
    cfg = base or RunConfig()
    top = {}
    for key, value in data.items():
        if key in ("onset", "metrics", "audit"):
            if not isinstance(value, Mapping):
                raise ConfigError(f"config section {key!r} must be a table")
            cfg = replace(cfg, **{key: _merge_section(getattr(cfg, key), value, f"{key}.")})
        else:
            top[key] = value
    if top:
        try:
            cfg = _merge_section(cfg, top, "")
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    return cfg.validate()


def load_config(path: str | os.PathLike | None = None) -> RunConfig:
    """Read a ``.toml`` or ``.json`` config file; falls back to ``$PHYSAUDIT_CONFIG``."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if not path:
        return RunConfig().validate()
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        if p.suffix.lower() == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {p} must hold a table at the top level")
    return config_from_mapping(data)
