"""Corpus manifest: clips, pair and single tests, and per-seed generations.

A manifest is one JSON file. Audio paths are relative to the manifest's
directory (clips) or to the generations root (generated seeds). Loading either
returns a fully validated, immutable :class:`Corpus` or raises
:class:`ManifestError` listing every problem with its JSON path.

Example::

    {
      "clips": [
        {"id": "pot_a", "audio_path": "clips/pot_a.wav", "duration": 4.0,
         "hits": [0.8, 1.6, 2.4], "caption": "a spoon taps a steel pot"}
      ],
      "pair_tests": [
        {"id": "pot_size", "factual_id": "pot_a", "counterfactual_id": "pot_b",
         "expectations": [{"metric": "f0", "trend": "decrease"}]}
      ],
      "single_tests": [
        {"id": "glasses", "clip_id": "glass_row",
         "expectations": [{"metric": "f0", "trend": "ascending"}]}
      ],
      "generations": [
        {"test_id": "pot_size", "seeds": [
          {"seed": "0", "factual": "pot_size/0/factual.wav",
           "counterfactual": "pot_size/0/counterfactual.wav",
           "semantic_factual": 0.61, "semantic_counterfactual": 0.58}]}
      ]
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping, Optional, Sequence

import jsonschema

from .audit import PAIR_TRENDS, SINGLE_TRENDS, DirectionalExpectation
from .config import METRIC_NAMES
from .onset import HIT_SOURCES, HitAnnotations

__all__ = [
    "MANIFEST_SCHEMA",
    "ManifestError",
    "ClipRecord",
    "PairTest",
    "SingleTest",
    "SeedPaths",
    "GenerationSet",
    "Corpus",
    "parse_manifest",
    "load_manifest",
    "discover_generations",
]

_EXPECTATION = {
    "type": "object",
    "required": ["metric", "trend"],
    "additionalProperties": False,
    "properties": {
        "metric": {"enum": list(METRIC_NAMES)},
        "trend": {"type": "string"},
    },
}
_SCORE = {"type": ["number", "null"], "minimum": 0, "maximum": 1}
_HITS = {
    "oneOf": [
        {"type": "array", "items": {"type": "number", "minimum": 0}},
        {
            "type": "object",
            "required": ["times"],
            "additionalProperties": False,
            "properties": {
                "times": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "source": {"enum": list(HIT_SOURCES)},
            },
        },
    ]
}
_ID = {"type": "string", "minLength": 1}

MANIFEST_SCHEMA: dict = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "version": {"type": "integer", "const": 1},
        "clips": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "audio_path", "hits"],
                "additionalProperties": False,
                "properties": {
                    "id": _ID,
                    "audio_path": {"type": "string", "minLength": 1},
                    "hits": _HITS,
                    "caption": {"type": "string"},
                    "duration": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
        "pair_tests": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "factual_id", "counterfactual_id", "expectations"],
                "additionalProperties": False,
                "properties": {
                    "id": _ID,
                    "factual_id": _ID,
                    "counterfactual_id": _ID,
                    "expectations": {"type": "array", "minItems": 1, "items": _EXPECTATION},
                },
            },
        },
        "single_tests": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "clip_id", "expectations"],
                "additionalProperties": False,
                "properties": {
                    "id": _ID,
                    "clip_id": _ID,
                    "expectations": {"type": "array", "minItems": 1, "items": _EXPECTATION},
                },
            },
        },
        "generations": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["test_id", "seeds"],
                "additionalProperties": False,
                "properties": {
                    "test_id": _ID,
                    "seeds": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "required": ["seed", "factual"],
                            "additionalProperties": False,
                            "properties": {
                                "seed": {"type": ["string", "integer"]},
                                "factual": {"type": "string", "minLength": 1},
                                "counterfactual": {"type": "string", "minLength": 1},
                                "semantic_factual": _SCORE,
                                "semantic_counterfactual": _SCORE,
                            },
                        },
                    },
                },
            },
        },
    },
}


class ManifestError(ValueError):
    """One or more manifest problems; ``issues`` holds ``(json_path, message)`` pairs."""

    def __init__(self, issues: Sequence[tuple[str, str]]):
        self.issues = tuple(issues)
        lines = [f"{path}: {msg}" for path, msg in self.issues]
        super().__init__("invalid manifest:\n  " + "\n  ".join(lines))


@dataclass(frozen=True)
class ClipRecord:
    id: str
    audio_path: Path
    hits: HitAnnotations
    caption: Optional[str] = None
    duration: Optional[float] = None


@dataclass(frozen=True)
class PairTest:
    id: str
    factual_id: str
    counterfactual_id: str
    expectations: tuple[DirectionalExpectation, ...]

    kind = "pair"


@dataclass(frozen=True)
class SingleTest:
    id: str
    clip_id: str
    expectations: tuple[DirectionalExpectation, ...]

    kind = "single"


@dataclass(frozen=True)
class SeedPaths:
    seed: str
    factual: Path
    counterfactual: Optional[Path] = None
    semantic_factual: Optional[float] = None
    semantic_counterfactual: Optional[float] = None


@dataclass(frozen=True)
class GenerationSet:
    test_id: str
    seeds: tuple[SeedPaths, ...]

    @property
    def n_seeds(self) -> int:
        return len(self.seeds)


@dataclass(frozen=True)
class Corpus:
    clips: Mapping[str, ClipRecord]
    pair_tests: tuple[PairTest, ...]
    single_tests: tuple[SingleTest, ...]
    generations: Mapping[str, GenerationSet]
    root: Path

    @property
    def tests(self) -> tuple:
        """All tests sorted by id."""
        return tuple(sorted(self.pair_tests + self.single_tests, key=lambda t: t.id))

    def test(self, test_id: str):
        for t in self.pair_tests + self.single_tests:
            if t.id == test_id:
                return t
        raise KeyError(test_id)


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def _schema_issues(data: Any) -> list[tuple[str, str]]:
    validator = jsonschema.Draft7Validator(MANIFEST_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    return [(_json_path(e.absolute_path), e.message) for e in errors]


def _expectations(raw: list, allowed: tuple, where: str, issues: list) -> tuple:
    out = []
    for k, e in enumerate(raw):
        path = f"{where}.expectations[{k}]"
        if e["trend"] not in allowed:
            issues.append((f"{path}.trend", f"trend {e['trend']!r} is not one of {allowed}"))
            continue
        try:
            out.append(DirectionalExpectation(e["metric"], e["trend"]))
        except ValueError as exc:
            issues.append((path, str(exc)))
    return tuple(out)


def parse_manifest(data: Any, root: str | Path = ".", generations_root: str | Path | None = None) -> Corpus:
    """Validate a decoded manifest document and build the corpus."""
    issues = _schema_issues(data)
    if issues:
        raise ManifestError(issues)
    root = Path(root)
    gen_root = Path(generations_root) if generations_root is not None else root

    clips: dict[str, ClipRecord] = {}
    for i, c in enumerate(data.get("clips", [])):
        where = f"$.clips[{i}]"
        if c["id"] in clips:
            issues.append((f"{where}.id", f"duplicate clip id {c['id']!r}"))
            continue
        raw_hits = c["hits"]
        times, source = (raw_hits, "manual") if isinstance(raw_hits, list) else (
            raw_hits["times"], raw_hits.get("source", "manual"))
        try:
            hits = HitAnnotations(tuple(times), source)
        except ValueError as exc:
            issues.append((f"{where}.hits", str(exc)))
            continue
        duration = c.get("duration")
        if duration is not None and any(t > duration for t in hits.times):
            issues.append((f"{where}.hits", f"hit times exceed the clip duration {duration}"))
            continue
        clips[c["id"]] = ClipRecord(c["id"], root / c["audio_path"], hits, c.get("caption"), duration)

    test_ids: set[str] = set()
    pairs = []
    for i, t in enumerate(data.get("pair_tests", [])):
        where = f"$.pair_tests[{i}]"
        if t["id"] in test_ids:
            issues.append((f"{where}.id", f"duplicate test id {t['id']!r}"))
        test_ids.add(t["id"])
        exps = _expectations(t["expectations"], PAIR_TRENDS, where, issues)
        ok = True
        for key in ("factual_id", "counterfactual_id"):
            if t[key] not in clips:
                issues.append((f"{where}.{key}", f"unknown clip id {t[key]!r}"))
                ok = False
        if ok and t["factual_id"] == t["counterfactual_id"]:
            issues.append((where, "factual and counterfactual must be different clips"))
        elif ok and len(clips[t["counterfactual_id"]].hits) < len(clips[t["factual_id"]].hits):
            issues.append((f"{where}.counterfactual_id",
                           f"counterfactual {t['counterfactual_id']!r} has fewer annotated hits "
                           f"({len(clips[t['counterfactual_id']].hits)}) than factual {t['factual_id']!r} "
                           f"({len(clips[t['factual_id']].hits)}); the counterfactual must have at least as "
                           "many so its first hits can be warped onto the factual timeline"))
        pairs.append(PairTest(t["id"], t["factual_id"], t["counterfactual_id"], exps))

    singles = []
    for i, t in enumerate(data.get("single_tests", [])):
        where = f"$.single_tests[{i}]"
        if t["id"] in test_ids:
            issues.append((f"{where}.id", f"duplicate test id {t['id']!r}"))
        test_ids.add(t["id"])
        exps = _expectations(t["expectations"], SINGLE_TRENDS, where, issues)
        if t["clip_id"] not in clips:
            issues.append((f"{where}.clip_id", f"unknown clip id {t['clip_id']!r}"))
        singles.append(SingleTest(t["id"], t["clip_id"], exps))

    pair_ids = {p.id for p in pairs}
    generations: dict[str, GenerationSet] = {}
    for i, g in enumerate(data.get("generations", [])):
        where = f"$.generations[{i}]"
        tid = g["test_id"]
        if tid not in test_ids:
            issues.append((f"{where}.test_id", f"unknown test id {tid!r}"))
            continue
        if tid in generations:
            issues.append((f"{where}.test_id", f"duplicate generations for test {tid!r}"))
            continue
        seeds = []
        seen = set()
        for k, s in enumerate(g["seeds"]):
            spath = f"{where}.seeds[{k}]"
            name = str(s["seed"])
            if name in seen:
                issues.append((f"{spath}.seed", f"duplicate seed {name!r}"))
            seen.add(name)
            has_cf = "counterfactual" in s
            if tid in pair_ids and not has_cf:
                issues.append((spath, "pair test seeds need a counterfactual path"))
            if tid not in pair_ids and (has_cf or s.get("semantic_counterfactual") is not None):
                issues.append((spath, "single test seeds have no counterfactual side"))
            seeds.append(SeedPaths(
                name, gen_root / s["factual"],
                gen_root / s["counterfactual"] if has_cf else None,
                s.get("semantic_factual"), s.get("semantic_counterfactual"),
            ))
        generations[tid] = GenerationSet(tid, tuple(seeds))

    if issues:
        raise ManifestError(issues)
    return Corpus(
        MappingProxyType(dict(sorted(clips.items()))),
        tuple(sorted(pairs, key=lambda t: t.id)),
        tuple(sorted(singles, key=lambda t: t.id)),
        MappingProxyType(dict(sorted(generations.items()))),
        root,
    )


def load_manifest(path: str | Path, generations_root: str | Path | None = None) -> Corpus:
    """Read and validate a manifest file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ManifestError([("$", f"cannot read {p}: {exc}")]) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError([("$", f"not valid JSON: {exc.msg} at line {exc.lineno} column {exc.colno}")]) from exc
    return parse_manifest(data, p.parent, generations_root)


def discover_generations(corpus: Corpus, generations_root: str | Path) -> dict[str, GenerationSet]:
    """Generations per test: manifest entries first, then ``<root>/<test_id>/<seed>/`` folders.

    A folder seed needs ``factual.wav``; pair tests also need
    ``counterfactual.wav``, which is reported as missing rather than skipped.
    """
    root = Path(generations_root)
    out = dict(corpus.generations)
    for test in corpus.tests:
        if test.id in out:
            continue
        base = root / test.id
        if not base.is_dir():
            continue
        seeds = []
        for d in sorted((p for p in base.iterdir() if p.is_dir()), key=lambda p: _seed_key(p.name)):
            sem = _semantic_scores(d)
            seeds.append(SeedPaths(
                d.name, d / "factual.wav",
                d / "counterfactual.wav" if test.kind == "pair" else None,
                sem.get("factual"), sem.get("counterfactual") if test.kind == "pair" else None,
            ))
        if seeds:
            out[test.id] = GenerationSet(test.id, tuple(seeds))
    return dict(sorted(out.items()))


def _seed_key(name: str):
    return (0, int(name), "") if name.isdigit() else (1, 0, name)


def _semantic_scores(seed_dir: Path) -> dict:
    path = seed_dir / "semantic.json"
    if not path.is_file():
        return {}
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError([(str(path), f"bad semantic score file: {exc}")]) from exc
    out = {}
    for side in ("factual", "counterfactual"):
        v = data.get(side)
        if v is not None:
            if not isinstance(v, (int, float)) or not 0 <= v <= 1:
                raise ManifestError([(f"{path}:{side}", "semantic score must be a number in [0, 1]")])
            out[side] = float(v)
    return out
