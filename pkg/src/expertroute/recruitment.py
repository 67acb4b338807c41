"""Query classification and per-query top-N recruitment from the expertise table."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from .backends import Backend, Step
from .errors import BackendError, ClassificationFailure, ConfigError, EmptyTable, ParseFailure
from .expertise import ExpertiseTable, query_bindings
from .parsing import parse_classification
from .prompts import load_template, render
from .taxonomy import ClassificationPrediction, QueryRecord

TRUSTED_LABELS = "(trusted-labels)"
STRATEGIES = ("expertise_aware", "random_k", "task_top_k")


@dataclass(frozen=True)
class RecruitmentConfig:
    beta: float = 0.7
    n_agents: int = 4
    n_max: int | None = None  # resource cap; None means no cap beyond the pool
    classifier_override: str | None = None
    trust_labels: bool = False
    max_attempts: int = 3

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must be in [0, 1], got {self.beta}")
        if self.n_agents < 1:
            raise ConfigError(f"n_agents must be >= 1, got {self.n_agents}")
        if self.n_max is not None and self.n_max < self.n_agents:
            raise ConfigError(f"n_max ({self.n_max}) must be >= n_agents ({self.n_agents})")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")


@dataclass(frozen=True)
class RecruitmentResult:
    query_id: str
    classification: ClassificationPrediction
    classifier_id: str
    scores: Mapping[str, float]
    recruited: tuple[str, ...]
    strategy: str = "expertise_aware"

    def to_json(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "classification": self.classification.to_json(),
            "classifier_id": self.classifier_id,
            "strategy": self.strategy,
            "scores": {b: self.scores[b] for b in sorted(self.scores)},
            "recruited": list(self.recruited),
        }


def select_classifier(table: ExpertiseTable) -> str:
    """Backend with the largest acc_dept + acc_diff; ties go to the smaller id."""
    if not table.profiles:
        raise EmptyTable("expertise table has no profiles")
    return min(table.profiles.values(), key=lambda p: (-(p.acc_dept + p.acc_diff), p.backend_id)).backend_id


async def classify_query(
    query: QueryRecord,
    classifier: Backend | None,
    *,
    trust_labels: bool = False,
    max_attempts: int = 3,
    aliases=None,
) -> ClassificationPrediction:
    if trust_labels and query.labeled:
        return ClassificationPrediction(query.dept_label, query.diff_label)
    if classifier is None:
        raise ClassificationFailure(query.id, "no classifier backend and no trusted labels")
    prompt = render(load_template("classify"), query_bindings(query))
    last = "no attempts"
    for attempt in range(max_attempts):
        try:
            raw = await classifier.complete(prompt, Step("classify", query.id, attempt=attempt))
        except BackendError as exc:
            raise ClassificationFailure(query.id, str(exc)) from exc
        try:
            return parse_classification(raw, aliases)
        except ParseFailure as exc:
            last = str(exc)
    raise ClassificationFailure(query.id, f"{max_attempts} unparseable replies, last: {last}")


def score_backends(
    table: ExpertiseTable,
    cls: ClassificationPrediction,
    cfg: RecruitmentConfig | float = 0.7,
) -> dict[str, float]:
    """beta * dept-cell accuracy + (1 - beta) * difficulty-cell accuracy, per backend."""
    beta = cfg.beta if isinstance(cfg, RecruitmentConfig) else float(cfg)
    return {
        b: beta * p.acc_ans_by_dept[cls.dept] + (1 - beta) * p.acc_ans_by_diff[cls.diff]
        for b, p in table.profiles.items()
    }


def rank(scores: Mapping[str, float], ids: Iterable[str] | None = None) -> list[str]:
    """Ids by descending score, ascending id on ties."""
    ids = scores.keys() if ids is None else ids
    return sorted(ids, key=lambda b: (-scores[b], b))


def top_n(scores: Mapping[str, float], n: int) -> list[str]:
    return rank(scores)[:n]


def task_level_ranking(table: ExpertiseTable) -> list[str]:
    """Backends by overall validation accuracy, independent of the query."""
    return sorted(table.profiles, key=lambda b: (-table.profiles[b].overall_accuracy, b))


def _n_recruits(cfg: RecruitmentConfig, pool_size: int) -> int:
    n = cfg.n_agents if cfg.n_max is None else min(cfg.n_agents, cfg.n_max)
    return min(n, pool_size)


def choose(
    strategy: str,
    scores: Mapping[str, float],
    n: int,
    *,
    table: ExpertiseTable | None = None,
    rng: random.Random | None = None,
    fixed: Sequence[str] | None = None,
) -> tuple[str, ...]:
    """Pick ``n`` backends under a recruitment strategy, returned in score order."""
    if strategy == "expertise_aware":
        picked = top_n(scores, n)
    elif strategy == "random_k":
        if fixed is not None:
            picked = list(fixed)
        else:
            if rng is None:
                raise ValueError("random_k needs a seeded rng")
            picked = rng.sample(sorted(scores), n)
    elif strategy == "task_top_k":
        if fixed is not None:
            picked = list(fixed)
        else:
            if table is None:
                raise ValueError("task_top_k needs the expertise table")
            picked = task_level_ranking(table)[:n]
    else:
        raise ConfigError(f"unknown recruitment strategy {strategy!r}")
    return tuple(rank(scores, picked))


async def recruit(
    table: ExpertiseTable,
    query: QueryRecord,
    classifier: Backend | None,
    cfg: RecruitmentConfig = RecruitmentConfig(),
    *,
    strategy: str = "expertise_aware",
    rng: random.Random | None = None,
    fixed: Sequence[str] | None = None,
    aliases=None,
) -> RecruitmentResult:
    if not table.profiles:
        raise EmptyTable("expertise table has no profiles")
    cls = await classify_query(query, classifier, trust_labels=cfg.trust_labels,
                               max_attempts=cfg.max_attempts, aliases=aliases)
    used_labels = cfg.trust_labels and query.labeled
    scores = score_backends(table, cls, cfg)
    n = _n_recruits(cfg, len(scores))
    picked = choose(strategy, scores, n, table=table, rng=rng, fixed=fixed)
    return RecruitmentResult(
        query_id=query.id,
        classification=cls,
        classifier_id=TRUSTED_LABELS if used_labels else classifier.backend_id,
        scores=scores,
        recruited=picked,
        strategy=strategy,
    )
