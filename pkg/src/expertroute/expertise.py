"""Profiling a backend pool into a persisted expertise table.

The table records, per backend, how well it classifies queries into the
department/difficulty taxonomy and how often it answers correctly within each
department and each difficulty level of a labeled validation corpus.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .backends import Backend, Step
from .errors import (
    BackendError,
    BackendUnavailable,
    CorruptTable,
    EmptyCorpus,
    FormatVersionMismatch,
    LabelerUnavailable,
    LabelParseFailure,
    ParseFailure,
)
from .parsing import parse_answer, parse_classification
from .prompts import load_template, render
from .taxonomy import ClassificationPrediction, Department, Difficulty, QueryRecord

logger = logging.getLogger(__name__)

TABLE_VERSION = "1"
DEFAULT_LABEL_ATTEMPTS = 3

DEPARTMENT_LIST = ", ".join(f"{d.display} ({d.code})" for d in Department)


def query_bindings(query: QueryRecord) -> dict[str, Any]:
    return {"stem": query.stem, "options": query.options, "departments": DEPARTMENT_LIST}


@dataclass(frozen=True)
class BackendProfile:
    backend_id: str
    acc_dept: float
    acc_diff: float
    acc_ans_by_dept: Mapping[Department, float]
    acc_ans_by_diff: Mapping[Difficulty, float]
    support_by_dept: Mapping[Department, int]
    support_by_diff: Mapping[Difficulty, int]

    @property
    def classification_score(self) -> float:
        return self.acc_dept + self.acc_diff

    @property
    def overall_accuracy(self) -> float:
        """Support-weighted mean of the department-cell accuracies."""
        total = sum(self.support_by_dept.values())
        if total == 0:
            return 0.0
        return sum(self.support_by_dept[d] * self.acc_ans_by_dept[d] for d in Department) / total

    def to_json(self) -> dict[str, Any]:
        return {
            "backend_id": self.backend_id,
            "acc_dept": self.acc_dept,
            "acc_diff": self.acc_diff,
            "acc_ans_by_dept": {d.code: self.acc_ans_by_dept[d] for d in Department},
            "acc_ans_by_diff": {l.code: self.acc_ans_by_diff[l] for l in Difficulty},
            "support_by_dept": {d.code: self.support_by_dept[d] for d in Department},
            "support_by_diff": {l.code: self.support_by_diff[l] for l in Difficulty},
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "BackendProfile":
        return cls(
            backend_id=obj["backend_id"],
            acc_dept=float(obj["acc_dept"]),
            acc_diff=float(obj["acc_diff"]),
            acc_ans_by_dept={d: float(obj["acc_ans_by_dept"][d.code]) for d in Department},
            acc_ans_by_diff={l: float(obj["acc_ans_by_diff"][l.code]) for l in Difficulty},
            support_by_dept={d: int(obj["support_by_dept"][d.code]) for d in Department},
            support_by_diff={l: int(obj["support_by_diff"][l.code]) for l in Difficulty},
        )


@dataclass(frozen=True)
class ExpertiseTable:
    corpus_id: str
    profiles: Mapping[str, BackendProfile]
    created_at: str
    version: str = TABLE_VERSION

    @property
    def backend_ids(self) -> list[str]:
        return sorted(self.profiles)

    def to_json(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "corpus_id": self.corpus_id,
            "created_at": self.created_at,
            "profiles": {b: self.profiles[b].to_json() for b in self.backend_ids},
        }


@dataclass(frozen=True)
class EvalOutcome:
    """One backend's classification and answer for one validation query.

    ``prediction`` / ``answer`` are ``None`` when the reply could not be
    parsed; both count as wrong when the table is built.
    """

    query_id: str
    backend_id: str
    prediction: ClassificationPrediction | None
    answer: str | None
    raw: Mapping[str, str] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "backend_id": self.backend_id,
            "prediction": self.prediction.to_json() if self.prediction else None,
            "answer": self.answer,
            "raw": dict(self.raw),
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "EvalOutcome":
        pred = obj.get("prediction")
        return cls(obj["query_id"], obj["backend_id"],
                   ClassificationPrediction.from_json(pred) if pred else None,
                   obj.get("answer"), obj.get("raw", {}))


@dataclass(frozen=True)
class CoverageGap:
    backend_id: str
    query_id: str
    reason: str


def corpus_id(corpus: Iterable[QueryRecord]) -> str:
    h = hashlib.sha256()
    for rec in sorted(corpus, key=lambda r: r.id):
        h.update(json.dumps(rec.to_json(), sort_keys=True, ensure_ascii=False).encode("utf-8"))
        h.update(b"\n")
    return "sha256:" + h.hexdigest()


async def _label_one(rec: QueryRecord, labeler: Backend, max_attempts: int, aliases) -> QueryRecord:
    if rec.labeled:
        return rec
    prompt = render(load_template("pseudo_label"), query_bindings(rec))
    for attempt in range(max_attempts):
        try:
            raw = await labeler.complete(prompt, Step("pseudo_label", rec.id, attempt=attempt))
        except BackendError as exc:
            raise LabelerUnavailable(f"labeler {labeler.backend_id} failed on {rec.id}: {exc}") from exc
        try:
            pred = parse_classification(raw, aliases)
        except ParseFailure:
            logger.debug("unparseable label for %s (attempt %d)", rec.id, attempt + 1)
            continue
        return rec.with_labels(pred.dept, pred.diff)
    raise LabelParseFailure(rec.id, max_attempts)


async def pseudo_label(
    corpus: Sequence[QueryRecord],
    labeler: Backend | None,
    max_attempts: int = DEFAULT_LABEL_ATTEMPTS,
    aliases=None,
) -> list[QueryRecord]:
    """Fill in department/difficulty labels using ``labeler``.

    Already-labeled records pass through untouched; with ``labeler=None`` the
    corpus must be fully labeled.
    """
    if not corpus:
        raise EmptyCorpus("cannot label an empty corpus")
    if labeler is None:
        missing = [r.id for r in corpus if not r.labeled]
        if missing:
            raise LabelerUnavailable(f"no labeler configured and {len(missing)} records are unlabeled")
        return list(corpus)
    return list(await asyncio.gather(*(_label_one(r, labeler, max_attempts, aliases) for r in corpus)))


async def _profile_pair(rec: QueryRecord, backend: Backend, aliases, precheck=None) -> EvalOutcome:
    bindings = query_bindings(rec)
    cls_raw = await backend.complete(render(load_template("classify"), bindings), Step("classify", rec.id),
                                     precheck)
    ans_raw = await backend.complete(render(load_template("answer_l1"), bindings),
                                     Step("answer_l1", rec.id, layer=1), precheck)
    try:
        pred = parse_classification(cls_raw, aliases)
    except ParseFailure:
        pred = None
    try:
        answer, _ = parse_answer(ans_raw, rec.letters)
    except ParseFailure:
        answer = None
    return EvalOutcome(rec.id, backend.backend_id, pred, answer, {"classify": cls_raw, "answer": ans_raw})


class _Skipped(Exception):
    pass


async def evaluate_pool(
    corpus: Sequence[QueryRecord],
    pool: Mapping[str, Backend] | Iterable[Backend],
    aliases=None,
) -> tuple[list[EvalOutcome], list[CoverageGap]]:
    """Ask every backend to classify and answer every record.

    Returns the outcomes (sorted by backend, then query) and the pairs that
    produced no outcome. A backend reporting itself unavailable is dropped for
    the rest of the run; other transport errors lose only the affected pair.
    """
    backends = list(pool.values()) if isinstance(pool, Mapping) else list(pool)
    for rec in corpus:
        if not rec.labeled or rec.gold is None:
            raise ValueError(f"record {rec.id} needs dept/diff labels and a gold answer")
    down: set[str] = set()
    gaps: list[CoverageGap] = []

    async def run(rec: QueryRecord, backend: Backend) -> EvalOutcome | None:
        def precheck() -> None:
            if backend.backend_id in down:
                raise _Skipped(backend.backend_id)

        try:
            return await _profile_pair(rec, backend, aliases, precheck)
        except _Skipped:
            gaps.append(CoverageGap(backend.backend_id, rec.id, "backend unavailable"))
        except BackendUnavailable as exc:
            down.add(backend.backend_id)
            gaps.append(CoverageGap(backend.backend_id, rec.id, str(exc)))
        except BackendError as exc:
            gaps.append(CoverageGap(backend.backend_id, rec.id, f"{type(exc).__name__}: {exc}"))
        return None

    results = await asyncio.gather(*(run(r, b) for b in backends for r in corpus))
    outcomes = sorted((o for o in results if o is not None), key=lambda o: (o.backend_id, o.query_id))
    gaps.sort(key=lambda g: (g.backend_id, g.query_id))
    for g in gaps:
        logger.warning("coverage gap: %s on %s (%s)", g.backend_id, g.query_id, g.reason)
    return outcomes, gaps


def _ratio(num: int, den: int) -> float:
    # support-0 cells store 0.0 so recruitment never favours unprofiled cells
    return num / den if den else 0.0


def build_table(
    outcomes: Iterable[EvalOutcome],
    corpus: Sequence[QueryRecord],
    created_at: str | None = None,
) -> ExpertiseTable:
    """Fold outcomes into per-backend accuracies.

    Denominators are always the full corpus (for the classification accuracies)
    or the full cell support; a missing or unparseable outcome counts as wrong.
    """
    if not corpus:
        raise EmptyCorpus("expertise table needs a non-empty labeled corpus")
    by_id = {r.id: r for r in corpus}
    if len(by_id) != len(corpus):
        raise ValueError("corpus has duplicate query ids")
    for r in corpus:
        if not r.labeled or r.gold is None:
            raise ValueError(f"record {r.id} needs dept/diff labels and a gold answer")
    K = len(corpus)
    sup_dept = {d: 0 for d in Department}
    sup_diff = {l: 0 for l in Difficulty}
    for r in corpus:
        sup_dept[r.dept_label] += 1
        sup_diff[r.diff_label] += 1

    dept_hits: dict[str, int] = defaultdict(int)
    diff_hits: dict[str, int] = defaultdict(int)
    ans_dept: dict[str, dict[Department, int]] = defaultdict(lambda: {d: 0 for d in Department})
    ans_diff: dict[str, dict[Difficulty, int]] = defaultdict(lambda: {l: 0 for l in Difficulty})
    seen: set[tuple[str, str]] = set()
    for o in outcomes:
        key = (o.backend_id, o.query_id)
        if key in seen:
            raise ValueError(f"duplicate outcome for {key}")
        seen.add(key)
        rec = by_id.get(o.query_id)
        if rec is None:
            raise ValueError(f"outcome for unknown query {o.query_id}")
        b = o.backend_id
        ans_dept[b]  # materialise the column even if every answer is wrong
        if o.prediction is not None:
            dept_hits[b] += o.prediction.dept == rec.dept_label
            diff_hits[b] += o.prediction.diff == rec.diff_label
        if o.answer is not None and o.answer == rec.gold:
            ans_dept[b][rec.dept_label] += 1
            ans_diff[b][rec.diff_label] += 1
    if not ans_dept:
        raise ValueError("no outcomes to build a table from")

    profiles = {}
    for b in sorted(ans_dept):
        profiles[b] = BackendProfile(
            backend_id=b,
            acc_dept=_ratio(dept_hits[b], K),
            acc_diff=_ratio(diff_hits[b], K),
            acc_ans_by_dept={d: _ratio(ans_dept[b][d], sup_dept[d]) for d in Department},
            acc_ans_by_diff={l: _ratio(ans_diff[b][l], sup_diff[l]) for l in Difficulty},
            support_by_dept=dict(sup_dept),
            support_by_diff=dict(sup_diff),
        )
    if created_at is None:
        created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return ExpertiseTable(corpus_id=corpus_id(corpus), profiles=profiles, created_at=created_at)


def save_table(table: ExpertiseTable, path: str | Path) -> None:
    Path(path).write_text(json.dumps(table.to_json(), indent=2) + "\n", encoding="utf-8")


def table_from_json(obj: Any, expected_version: str = TABLE_VERSION) -> ExpertiseTable:
    if not isinstance(obj, dict):
        raise CorruptTable("table document is not a JSON object")
    if "version" not in obj:
        raise CorruptTable("table document has no version")
    if str(obj["version"]) != expected_version:
        raise FormatVersionMismatch(f"table version {obj['version']!r}, reader expects {expected_version!r}")
    try:
        profiles = {b: BackendProfile.from_json(p) for b, p in obj["profiles"].items()}
        for b, p in profiles.items():
            if p.backend_id != b:
                raise CorruptTable(f"profile key {b!r} does not match backend_id {p.backend_id!r}")
        return ExpertiseTable(corpus_id=obj["corpus_id"], profiles=profiles,
                              created_at=obj["created_at"], version=str(obj["version"]))
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CorruptTable(f"malformed table: {exc!r}") from exc


def load_table(path: str | Path, expected_version: str = TABLE_VERSION) -> ExpertiseTable:
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptTable(f"{path}: {exc}") from exc
    return table_from_json(obj, expected_version)


def render_grid(table: ExpertiseTable) -> str:
    """Text grid: one row per backend, classification accuracies then answer
    accuracy per department and per difficulty level, in percent."""
    head = ["backend", "cls_dept", "cls_diff"] + [d.code for d in Department] + [l.code for l in Difficulty]
    rows = [head]
    for b in table.backend_ids:
        p = table.profiles[b]
        vals = [p.acc_dept, p.acc_diff] + [p.acc_ans_by_dept[d] for d in Department] \
            + [p.acc_ans_by_diff[l] for l in Difficulty]
        rows.append([b] + [f"{100 * v:.1f}" for v in vals])
    widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
    lines = [" ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(r, widths))).rstrip()
             for r in rows]
    return "\n".join(lines) + "\n"
