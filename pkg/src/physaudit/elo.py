"""Sequential ELO ratings from pairwise preferences, and metric agreement with them."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .stats import spearman

__all__ = [
    "OUTCOMES",
    "INITIAL_RATING",
    "K_FACTOR",
    "Comparison",
    "Ratings",
    "expected_score",
    "update",
    "run_ladder",
    "metric_vs_elo",
    "load_comparisons",
    "win_rate_csv",
]

OUTCOMES = ("a_wins", "b_wins", "tie")
INITIAL_RATING = 1500.0
K_FACTOR = 32.0
_SCORES = {"a_wins": 1.0, "b_wins": 0.0, "tie": 0.5}


@dataclass(frozen=True)
class Comparison:
    model_a: str
    model_b: str
    outcome: str
    sequence_index: int = 0

    def __post_init__(self):
        if self.model_a == self.model_b:
            raise ValueError(f"a model cannot be compared with itself ({self.model_a!r})")
        if self.outcome not in OUTCOMES:
            raise ValueError(f"outcome must be one of {OUTCOMES}, got {self.outcome!r}")

    @property
    def score_a(self) -> float:
        return _SCORES[self.outcome]


@dataclass(frozen=True)
class Ratings:
    ratings: Mapping[str, float]
    k_factor: float = K_FACTOR

    @classmethod
    def initial(cls, models: Iterable[str], rating: float = INITIAL_RATING,
                k_factor: float = K_FACTOR) -> Ratings:
        return cls({m: rating for m in models}, k_factor)

    def __getitem__(self, model: str) -> float:
        return self.ratings[model]

    def __contains__(self, model: str) -> bool:
        return model in self.ratings

    @property
    def total(self) -> float:
        return float(sum(self.ratings.values()))

    def ranked(self) -> list[tuple[str, float]]:
        return sorted(self.ratings.items(), key=lambda kv: (-kv[1], kv[0]))


def expected_score(ra: float, rb: float) -> float:
    """Logistic expected score of A against B: ``1 / (1 + 10^((rb - ra) / 400))``."""
    if not (np.isfinite(ra) and np.isfinite(rb)):
        raise ValueError("ratings must be finite")
    return 1.0 / (1.0 + 10.0 ** ((rb - ra) / 400.0))


def update(ratings: Ratings, comparison: Comparison) -> Ratings:
    """Apply one comparison to both models at once, from their pre-update ratings."""
    a, b = comparison.model_a, comparison.model_b
    for m in (a, b):
        if m not in ratings:
            raise KeyError(f"unknown model {m!r}")
    ra, rb = ratings[a], ratings[b]
    change = ratings.k_factor * (comparison.score_a - expected_score(ra, rb))
    new = dict(ratings.ratings)
    new[a] = ra + change
    new[b] = rb - change
    return Ratings(new, ratings.k_factor)


def run_ladder(comparisons: Sequence[Comparison], models: Iterable[str] = (),
               initial: float = INITIAL_RATING, k_factor: float = K_FACTOR) -> Ratings:
    """Fold :func:`update` over the comparisons in ``sequence_index`` order.

    Ties in ``sequence_index`` keep their input order. Every model named in a
    comparison or in ``models`` starts at ``initial``.
    """
    names = dict.fromkeys(models)
    for c in comparisons:
        names.setdefault(c.model_a)
        names.setdefault(c.model_b)
    ratings = Ratings.initial(names, initial, k_factor)
    for c in sorted(comparisons, key=lambda c: c.sequence_index):
        ratings = update(ratings, c)
    return ratings


def metric_vs_elo(metric_scores: Mapping[str, float], ratings: Ratings | Mapping[str, float]) -> float:
    """Absolute Spearman correlation between a per-model metric and the ratings."""
    table = ratings.ratings if isinstance(ratings, Ratings) else ratings
    if set(metric_scores) != set(table):
        missing = sorted(set(metric_scores) ^ set(table))
        raise ValueError(f"metric and rating model sets differ: {missing}")
    if len(table) < 3:
        raise ValueError("need at least 3 models")
    models = sorted(table)
    rho = spearman([metric_scores[m] for m in models], [table[m] for m in models])
    return abs(rho)


def load_comparisons(path: str | Path) -> list[Comparison]:
    """Read a JSON-lines log of ``{model_a, model_b, outcome, sequence_index}`` records."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(Comparison(str(rec["model_a"]), str(rec["model_b"]), str(rec["outcome"]),
                                      int(rec.get("sequence_index", lineno))))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad comparison record: {exc}") from exc
    return out


def win_rate_csv(comparisons: Sequence[Comparison]) -> str:
    """Row model's win rate against each column model (ties count half); blank when unplayed."""
    models = sorted({m for c in comparisons for m in (c.model_a, c.model_b)})
    wins: dict[tuple[str, str], float] = {}
    games: dict[tuple[str, str], int] = {}
    for c in comparisons:
        for me, other, score in ((c.model_a, c.model_b, c.score_a), (c.model_b, c.model_a, 1 - c.score_a)):
            wins[me, other] = wins.get((me, other), 0.0) + score
            games[me, other] = games.get((me, other), 0) + 1
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model"] + models)
    for row in models:
        cells = []
        for col in models:
            n = games.get((row, col), 0)
            cells.append(f"{wins[row, col] / n:.4f}" if n else "")
        writer.writerow([row] + cells)
    return buf.getvalue()
