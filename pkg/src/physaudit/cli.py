"""Command-line entry point: ``physaudit <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from . import elo as elo_mod
from .audit import SeedObservation, TestVerdict, run_test
from .config import ConfigError, RunConfig, load_config
from .manifest import GenerationSet, ManifestError, discover_generations, load_manifest
from .metrics import compute_all
from .onset import AlignmentScores, HitAnnotations, annotate_candidates, detect_onsets, score_clip
from .report import QuarantinedCase, RunReport, emit_report, report_from_json
from .timewarp import WarpError, build_warp_map, frame_remap_plan, warp_audio
from .wavio import WavError, load_wav, write_wav

log = logging.getLogger("physaudit")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- helpers

def _read_hits(path: str | Path) -> HitAnnotations:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValueError(f"cannot read hits file {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"hits file {path} is not valid JSON: {exc.msg}") from exc
    source = "manual"
    if isinstance(data, dict):
        source = data.get("source", "manual")
        data = data.get("hits", data.get("times"))
    if not isinstance(data, list) or not all(isinstance(t, (int, float)) for t in data):
        raise ValueError(f"hits file {path} must hold a list of times in seconds")
    return HitAnnotations(tuple(data), source)


def _emit(files: dict[str, str], out: Optional[str]) -> None:
    """Write each file into ``out`` (a directory), or print them to stdout."""
    if out is None:
        if len(files) == 1:
            sys.stdout.write(next(iter(files.values())))
            return
        for k, (name, text) in enumerate(files.items()):
            if k:
                sys.stdout.write("\n")
            sys.stdout.write(f"# {name}\n{text}")
        return
    target = Path(out)
    target.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (target / name).write_text(text, encoding="utf-8")


def _write_single(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        path = Path(out)
        if path.parent != Path("."):
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    updates = {}
    if getattr(args, "seeds", None) is not None:
        updates["seeds"] = args.seeds
    if getattr(args, "jobs", None) is not None:
        updates["jobs"] = args.jobs
    return replace(cfg, **updates).validate() if updates else cfg


# ---------------------------------------------------------------- per-case work

@dataclass(frozen=True)
class CaseJob:
    test_id: str
    kind: str
    hits: HitAnnotations
    expectations: tuple
    generations: Optional[GenerationSet]


@dataclass(frozen=True)
class CaseResult:
    test_id: str
    verdicts: tuple = ()
    alignment: tuple = ()
    semantic: tuple = ()
    missing: tuple = ()
    error: Optional[QuarantinedCase] = None


def _jobs(corpus, generations) -> list[CaseJob]:
    jobs = []
    for test in corpus.tests:
        clip_id = test.factual_id if test.kind == "pair" else test.clip_id
        jobs.append(CaseJob(test.id, test.kind, corpus.clips[clip_id].hits, test.expectations,
                            generations.get(test.id)))
    return jobs


def _missing_seeds(job: CaseJob, expected: int) -> list[str]:
    if job.generations is None:
        return [f"{job.test_id}: no generations"]
    missing = []
    have = job.generations.n_seeds
    if have < expected:
        missing.append(f"{job.test_id}: {have} of {expected} seeds")
    for s in job.generations.seeds:
        for side, path in (("factual", s.factual), ("counterfactual", s.counterfactual)):
            if path is not None and not path.is_file():
                missing.append(f"{job.test_id}/{s.seed}/{side}: {path}")
    return missing


def _available_seeds(job: CaseJob):
    return [s for s in job.generations.seeds
            if s.factual.is_file() and (s.counterfactual is None or s.counterfactual.is_file())]


def _align_case(job: CaseJob, cfg: RunConfig) -> CaseResult:
    missing = _missing_seeds(job, cfg.seeds)
    if job.generations is None:
        return CaseResult(job.test_id, missing=tuple(missing))
    try:
        scores = []
        for s in _available_seeds(job):
            # counterfactual generations follow the factual timeline after warping
            for path in (s.factual, s.counterfactual):
                if path is not None:
                    scores.append(score_clip(load_wav(path), job.hits, cfg.onset)[1])
        return CaseResult(job.test_id, alignment=tuple(scores), missing=tuple(missing))
    except Exception as exc:  # quarantined per case
        return CaseResult(job.test_id, missing=tuple(missing), error=_quarantine(job.test_id, exc))


def _audit_case(job: CaseJob, cfg: RunConfig) -> CaseResult:
    missing = _missing_seeds(job, cfg.seeds)
    if job.generations is None:
        return CaseResult(job.test_id, missing=tuple(missing))
    try:
        observations, alignment, semantic = [], [], []
        for s in _available_seeds(job):
            clip_f = load_wav(s.factual)
            m_f = compute_all(clip_f, job.hits, cfg.metrics, generated=True, onset_config=cfg.onset)
            a_f = score_clip(clip_f, job.hits, cfg.onset)[1]
            m_c = a_c = None
            if s.counterfactual is not None:
                clip_c = load_wav(s.counterfactual)
                m_c = compute_all(clip_c, job.hits, cfg.metrics, generated=True, onset_config=cfg.onset)
                a_c = score_clip(clip_c, job.hits, cfg.onset)[1]
            observations.append(SeedObservation(
                s.seed, m_f, m_c, a_f, a_c, s.semantic_factual,
                s.semantic_counterfactual if s.counterfactual is not None else None))
            alignment += [a for a in (a_f, a_c) if a is not None]
            semantic += [v for v in (s.semantic_factual, s.semantic_counterfactual) if v is not None]
        if not observations:
            return CaseResult(job.test_id, missing=tuple(missing))
        verdicts = run_test(observations, job.expectations, cfg.audit, job.test_id)
        return CaseResult(job.test_id, tuple(verdicts), tuple(alignment), tuple(semantic), tuple(missing))
    except Exception as exc:  # quarantined per case
        return CaseResult(job.test_id, missing=tuple(missing), error=_quarantine(job.test_id, exc))


def _quarantine(case: str, exc: Exception) -> QuarantinedCase:
    reason = getattr(exc, "reason", None) or type(exc).__name__
    return QuarantinedCase(case, str(reason), str(exc))


def _run_cases(worker, jobs: Sequence[CaseJob], cfg: RunConfig) -> list[CaseResult]:
    if cfg.jobs <= 1 or len(jobs) <= 1:
        results = [worker(j, cfg) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(jobs))) as pool:
            results = list(pool.map(worker, jobs, [cfg] * len(jobs)))
    return sorted(results, key=lambda r: r.test_id)


def _collect(results: Sequence[CaseResult], method: str) -> RunReport:
    verdicts: list[TestVerdict] = []
    alignment: list[AlignmentScores] = []
    semantic: list[float] = []
    errors, missing = [], []
    for r in results:
        verdicts += r.verdicts
        alignment += r.alignment
        semantic += r.semantic
        missing += r.missing
        if r.error is not None:
            errors.append(r.error)
    return RunReport(method, tuple(verdicts), tuple(alignment), tuple(semantic), tuple(errors), tuple(missing))


# ---------------------------------------------------------------- commands

def cmd_annotate(args) -> int:
    cfg = _config(args)
    hits = annotate_candidates(load_wav(args.audio), cfg.onset)
    doc = {"audio": str(args.audio), "hits": list(hits.times), "source": hits.source}
    _write_single(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _config(args)
    clip = load_wav(args.audio)
    if args.hits is not None:
        hits = _read_hits(args.hits)
        provenance = "file"
    else:
        hits = HitAnnotations(tuple(detect_onsets(clip, cfg.onset)), "semi_auto")
        provenance = "detected"
    mv = compute_all(clip, hits, cfg.metrics, generated=args.generated, onset_config=cfg.onset)
    doc = {"audio": str(args.audio), "hits_source": provenance, "hits": list(hits.times), **mv.to_dict()}
    _write_single(json.dumps(doc, indent=2) + "\n", args.out)
    return EXIT_OK


def _corpus_jobs(args, cfg):
    gen_root = args.generations
    corpus = load_manifest(args.manifest, gen_root)
    gens = discover_generations(corpus, gen_root) if gen_root is not None else dict(corpus.generations)
    return _jobs(corpus, gens)


def cmd_align(args) -> int:
    cfg = _config(args)
    results = _run_cases(_align_case, _corpus_jobs(args, cfg), cfg)
    report = _collect(results, args.method)
    for m in report.missing:
        log.warning("missing: %s", m)
    _emit(emit_report(report, args.format), args.out)
    return EXIT_OK


def cmd_audit(args) -> int:
    cfg = _config(args)
    results = _run_cases(_audit_case, _corpus_jobs(args, cfg), cfg)
    report = _collect(results, args.method)
    for m in report.missing:
        log.warning("missing: %s", m)
    for e in report.errors:
        log.warning("quarantined %s: %s", e.case, e.message)
    _emit(emit_report(report, args.format), args.out)
    return EXIT_OK


def cmd_warp(args) -> int:
    target = _read_hits(args.factual_hits)
    source = _read_hits(args.counterfactual_hits)
    if len(source) < len(target):
        raise WarpError("hit_count_mismatch",
                        f"counterfactual has {len(source)} hits but factual has {len(target)}; "
                        "the counterfactual must have at least as many hits as the factual")
    clip = load_wav(args.counterfactual)
    # only the first N counterfactual hits act as anchors
    warp = build_warp_map(source.times[:len(target)], target.times, clip.duration)
    warped = warp_audio(clip, warp)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_wav(out / "warped.wav", warped, bits=args.bits)
    (out / "warp_map.json").write_text(json.dumps(warp.to_dict(), indent=2) + "\n", encoding="utf-8")
    if args.fps is not None:
        n_frames = args.frames if args.frames is not None else max(1, int(round(clip.duration * args.fps)))
        frame_remap_plan(warp, args.fps, n_frames).save(out / "frame_plan.json")
    return EXIT_OK


def cmd_elo(args) -> int:
    comparisons = elo_mod.load_comparisons(args.comparisons)
    ratings = elo_mod.run_ladder(comparisons)
    correlations = {}
    if args.metrics is not None:
        try:
            table = json.loads(Path(args.metrics).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read metric file {args.metrics}: {exc}") from exc
        if not isinstance(table, dict):
            raise ValueError("metric file must map metric names to {model: value} tables")
        for name in sorted(table):
            correlations[name] = elo_mod.metric_vs_elo({m: float(v) for m, v in table[name].items()}, ratings)
    ranked = ratings.ranked()
    if args.format == "json":
        doc = {"ratings": {m: r for m, r in ranked}, "n_comparisons": len(comparisons)}
        if correlations:
            doc["metric_abs_spearman"] = correlations
        files = {"elo.json": json.dumps(doc, indent=2) + "\n"}
    else:
        lines = ["model,rating"] + [f"{m},{r!r}" for m, r in ranked]
        files = {"ratings.csv": "\n".join(lines) + "\n"}
        if correlations:
            rows = ["metric,abs_spearman"] + [f"{k},{v!r}" for k, v in correlations.items()]
            files["metric_correlation.csv"] = "\n".join(rows) + "\n"
        if comparisons:
            files["win_rates.csv"] = elo_mod.win_rate_csv(comparisons)
    _emit(files, args.out)
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        report = report_from_json(Path(args.input).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValueError(f"cannot read report {args.input}: {exc.strerror or exc}") from exc
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{args.input} is not a saved report: {exc}") from exc
    _emit(emit_report(report, args.format), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config file (default: $PHYSAUDIT_CONFIG)")
    common.add_argument("--out", help="output file or directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--seeds", type=int, help="expected seeds per test case")
    common.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="physaudit", description="Physical-correctness audit of generated audio.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("annotate", parents=[common], help="propose hit times for manual review")
    p.add_argument("audio")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("analyze", parents=[common], help="all metrics for one clip, as JSON")
    p.add_argument("audio")
    p.add_argument("--hits", help="hit times JSON; onsets are detected when omitted")
    p.add_argument("--generated", action="store_true", help="match detected onsets to the hits first")
    p.set_defaults(func=cmd_analyze)

    for name, func, text in (("align", cmd_align, "hit coverage and timing error over a corpus"),
                             ("audit", cmd_audit, "run every pair and single test")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--manifest", required=True)
        p.add_argument("--generations", help="root of generated audio (default: manifest directory)")
        p.add_argument("--method", default="run", help="row label in the summary tables")
        p.set_defaults(func=func)

    p = sub.add_parser("warp", parents=[common], help="warp a counterfactual clip onto factual hit times")
    p.add_argument("--factual-hits", required=True)
    p.add_argument("--counterfactual", required=True, help="counterfactual WAV")
    p.add_argument("--counterfactual-hits", required=True)
    p.add_argument("--fps", type=float, help="also write a frame remap plan at this frame rate")
    p.add_argument("--frames", type=int, help="source frame count (default: duration x fps)")
    p.add_argument("--bits", type=int, default=16, choices=(8, 16, 24, 32))
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("elo", parents=[common], help="ratings from a pairwise comparison log")
    p.add_argument("comparisons", help="JSON-lines comparison log")
    p.add_argument("--metrics", help="JSON {metric: {model: value}} to correlate with the ratings")
    p.set_defaults(func=cmd_elo)

    p = sub.add_parser("report", parents=[common], help="re-render a saved JSON report")
    p.add_argument("input")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    for name in ("seeds", "jobs"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            parser.error(f"--{name} must be at least 1")
    try:
        return args.func(args)
    except (ConfigError, ManifestError, WavError, WarpError, ValueError) as exc:
        print(f"physaudit: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # pragma: no cover - last-resort guard
        log.exception("runtime failure")
        print(f"physaudit: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
