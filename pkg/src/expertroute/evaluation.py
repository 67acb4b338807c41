"""Batch evaluation over a corpus and the ablation grid."""

from __future__ import annotations

import asyncio
import itertools
import json
import logging
import random
import re
from collections import defaultdict
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .backends import Backend
from .collaboration import CollabConfig, CollabTranscript, run_pipeline
from .errors import ConfigError, ExpertRouteError
from .expertise import ExpertiseTable
from .metrics import compute_metrics, confusion_matrix
from .recruitment import STRATEGIES, RecruitmentConfig, task_level_ranking
from .taxonomy import QueryRecord

logger = logging.getLogger(__name__)

COLLAB_VARIANTS = ("baseline", "no_confidence", "no_adversarial", "full")
RANDOM_MODES = ("per_query", "per_run")


@dataclass(frozen=True)
class QueryOutcome:
    query_id: str
    answer: str | None
    gold: str | None
    correct: bool
    failed: bool = False
    error: str | None = None
    transcript_path: str | None = None
    category: str | None = None

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class RunReport:
    run_id: str
    created_at: str
    config: Mapping[str, Any]
    seed: int
    per_query: tuple[QueryOutcome, ...]
    labels: tuple[str, ...]
    confusion: tuple[tuple[int, ...], ...]
    by_category: tuple[dict, ...]
    metrics: Mapping[str, float]

    @property
    def accuracy(self) -> float:
        return self.metrics["acc"]

    def to_json(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "created_at": self.created_at,
            "seed": self.seed,
            "config": dict(self.config),
            "metrics": dict(self.metrics),
            "by_category": [dict(r) for r in self.by_category],
            "confusion": {"labels": list(self.labels), "matrix": [list(r) for r in self.confusion]},
            "per_query": [q.to_json() for q in self.per_query],
        }

    def render_table(self) -> str:
        """Per-category accuracy columns followed by the overall metrics."""
        cats = [r["category"] for r in self.by_category]
        head = ["run"] + cats + ["Acc.", "F1", "PRE", "SPE", "MCC", "CK"]
        row = [self.config.get("variant") or self.run_id]
        row += [f"{100 * r['acc']:.2f}" for r in self.by_category]
        m = self.metrics
        row += [f"{100 * m['acc']:.2f}", f"{100 * m['weighted_f1']:.2f}", f"{100 * m['precision']:.2f}",
                f"{100 * m['specificity']:.2f}", f"{m['mcc']:.4f}", f"{m['kappa']:.4f}"]
        widths = [max(len(h), len(v)) for h, v in zip(head, row)]
        line = lambda cells: " | ".join(c.ljust(w) for c, w in zip(cells, widths))
        return "\n".join([line(head), "-+-".join("-" * w for w in widths), line(row)])


def _category(rec: QueryRecord) -> str | None:
    if rec.subject:
        return rec.subject
    if rec.dept_label is not None:
        return rec.dept_label.code
    return None


def _safe_name(query_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", query_id)


def fold_report(
    outcomes: Iterable[QueryOutcome],
    *,
    run_id: str,
    config: Mapping[str, Any],
    seed: int,
    created_at: str | None = None,
) -> RunReport:
    """Deterministic report assembly from graded outcomes (order-independent)."""
    per_query = tuple(sorted(outcomes, key=lambda q: q.query_id))
    graded = [(q.gold, q.answer if not q.failed else None) for q in per_query if q.gold is not None]
    metrics = compute_metrics(graded)
    labels, cm = confusion_matrix([g for g, _ in graded], [p for _, p in graded])
    cats: dict[str, list[QueryOutcome]] = defaultdict(list)
    for q in per_query:
        if q.category is not None:
            cats[q.category].append(q)
    by_category = tuple(
        {"category": c, "support": len(qs), "correct": sum(q.correct for q in qs),
         "acc": sum(q.correct for q in qs) / len(qs)}
        for c, qs in sorted(cats.items())
    )
    return RunReport(
        run_id=run_id,
        created_at=created_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        config=dict(config),
        seed=seed,
        per_query=per_query,
        labels=tuple(labels),
        confusion=tuple(tuple(int(x) for x in r) for r in cm),
        by_category=by_category,
        metrics=metrics,
    )


def query_rng(seed: int, query_id: str) -> random.Random:
    """Per-query generator derived from the run seed, so draws do not depend
    on the order in which concurrent queries happen to start."""
    return random.Random(f"{seed}:{query_id}")


async def evaluate(
    corpus: Sequence[QueryRecord],
    table: ExpertiseTable,
    pool: Mapping[str, Backend],
    recruitment_cfg: RecruitmentConfig = RecruitmentConfig(),
    collab_cfg: CollabConfig = CollabConfig(),
    *,
    strategy: str = "expertise_aware",
    seed: int = 0,
    random_mode: str = "per_query",
    max_concurrency: int = 8,
    out_dir: str | Path | None = None,
    run_id: str | None = None,
    variant: str | None = None,
) -> tuple[RunReport, dict[str, CollabTranscript]]:
    """Run the pipeline on every query and grade against gold.

    Pipeline failures are graded as incorrect and flagged; they never abort
    the run. Returns the report and the transcripts keyed by query id.
    """
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown recruitment strategy {strategy!r}")
    if random_mode not in RANDOM_MODES:
        raise ConfigError(f"unknown random mode {random_mode!r}")
    if not corpus:
        raise ConfigError("corpus is empty")
    n = min(recruitment_cfg.n_agents if recruitment_cfg.n_max is None
            else min(recruitment_cfg.n_agents, recruitment_cfg.n_max), len(table.profiles))
    fixed = None
    if strategy == "task_top_k":
        fixed = task_level_ranking(table)[:n]
    elif strategy == "random_k" and random_mode == "per_run":
        fixed = random.Random(seed).sample(sorted(table.profiles), n)

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "transcripts").mkdir(parents=True, exist_ok=True)
    sem = asyncio.Semaphore(max(1, max_concurrency))
    transcripts: dict[str, CollabTranscript] = {}

    async def one(rec: QueryRecord) -> QueryOutcome:
        async with sem:
            try:
                tr = await run_pipeline(
                    rec, table, pool, recruitment_cfg, collab_cfg, strategy=strategy,
                    rng=query_rng(seed, rec.id) if strategy == "random_k" else None, fixed=fixed,
                )
            except ConfigError:
                raise
            except ExpertRouteError as exc:
                logger.warning("%s failed: %s", rec.id, exc)
                return QueryOutcome(rec.id, None, rec.gold, False, True, f"{type(exc).__name__}: {exc}",
                                    None, _category(rec))
        transcripts[rec.id] = tr
        path = None
        if out is not None:
            p = out / "transcripts" / f"{_safe_name(rec.id)}.json"
            p.write_text(tr.dumps(), encoding="utf-8")
            path = str(p.relative_to(out))
        answer = tr.final.answer
        return QueryOutcome(rec.id, answer, rec.gold, rec.gold is not None and answer == rec.gold,
                            False, None, path, _category(rec))

    outcomes = await asyncio.gather(*(one(r) for r in corpus))
    config = {
        "variant": variant,
        "strategy": strategy,
        "random_mode": random_mode,
        "recruitment": asdict(recruitment_cfg),
        "collaboration": asdict(collab_cfg),
        "table_corpus_id": table.corpus_id,
    }
    if fixed is not None:
        config["fixed_recruits"] = list(fixed)
    stamp = datetime.now(timezone.utc)
    rid = run_id or f"{variant or strategy}-{stamp.strftime('%Y%m%dT%H%M%S')}"
    report = fold_report(outcomes, run_id=rid, config=config, seed=seed,
                         created_at=stamp.isoformat(timespec="seconds"))
    if out is not None:
        (out / "report.json").write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
        (out / "report.txt").write_text(report.render_table() + "\n", encoding="utf-8")
    return report, transcripts


# --- ablation grid -----------------------------------------------------------

_STRATEGY_SHORT = {"random_k": "random", "task_top_k": "task_top", "expertise_aware": "expertise"}


@dataclass(frozen=True)
class Variant:
    strategy: str
    collab: str
    agents: int
    layers: int

    @property
    def name(self) -> str:
        return f"{_STRATEGY_SHORT[self.strategy]}-{self.agents}/{self.collab}/L{self.layers}"

    def configs(self, base_r: RecruitmentConfig, base_c: CollabConfig) -> tuple[RecruitmentConfig, CollabConfig, str]:
        n_max = base_r.n_max if base_r.n_max is None or base_r.n_max >= self.agents else self.agents
        rc = replace(base_r, n_agents=self.agents, n_max=n_max)
        cc = replace(base_c, layers=self.layers,
                     drop_confidence=self.collab in ("baseline", "no_confidence"),
                     drop_adversarial=self.collab in ("baseline", "no_adversarial"))
        return rc, cc, self.strategy


@dataclass(frozen=True)
class AblationGrid:
    variants: tuple[Variant, ...]

    @classmethod
    def product(cls, strategies=STRATEGIES, collabs=COLLAB_VARIANTS,
                agents=range(1, 6), layers=range(1, 4)) -> "AblationGrid":
        return cls(tuple(Variant(s, c, a, l) for s, c, a, l in itertools.product(strategies, collabs, agents, layers)))

    def filter(self, **allowed) -> "AblationGrid":
        keep = [v for v in self.variants
                if all(getattr(v, k) in (vals if isinstance(vals, (list, tuple, set, range)) else [vals])
                       for k, vals in allowed.items())]
        return AblationGrid(tuple(keep))

    def __len__(self) -> int:
        return len(self.variants)

    def __iter__(self):
        return iter(self.variants)


# ablation tables: recruitment/collaboration variants, then agent and layer counts
PRESETS: dict[str, tuple[Variant, ...]] = {
    "recruitment": (
        Variant("random_k", "full", 3, 2), Variant("random_k", "full", 4, 2),
        Variant("task_top_k", "full", 3, 2), Variant("task_top_k", "full", 4, 2),
        Variant("expertise_aware", "full", 4, 2),
    ),
    "collaboration": tuple(Variant("expertise_aware", c, 4, 2) for c in COLLAB_VARIANTS),
    "agents": tuple(Variant("expertise_aware", "full", a, 2) for a in range(1, 6)),
    "layers": tuple(Variant("expertise_aware", "full", 4, l) for l in range(1, 4)),
}
PRESETS["table3"] = PRESETS["recruitment"] + PRESETS["collaboration"]
PRESETS["table4"] = PRESETS["agents"] + PRESETS["layers"]


def _ints(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        if "-" in part:
            lo, hi = part.split("-", 1)
            out += list(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def parse_grid(spec: str) -> AblationGrid:
    """Parse a grid selection.

    Accepts a preset name (``table3``, ``table4``, ``recruitment``,
    ``collaboration``, ``agents``, ``layers``, ``all``), a JSON file holding a
    list of ``{strategy, collab, agents, layers}`` objects, or a filter such as
    ``strategy=random_k,expertise_aware;collab=full;agents=3-4;layers=2``.
    """
    spec = spec.strip()
    if spec in PRESETS:
        return AblationGrid(PRESETS[spec])
    if spec == "all":
        return AblationGrid.product()
    path = Path(spec)
    if spec.endswith(".json") or path.is_file():
        try:
            items = json.loads(path.read_text("utf-8"))
            return AblationGrid(tuple(Variant(**it) for it in items))
        except (OSError, ValueError, TypeError) as exc:
            raise ConfigError(f"bad grid file {spec}: {exc}") from None
    filt: dict[str, Any] = {}
    for clause in filter(None, spec.split(";")):
        if "=" not in clause:
            raise ConfigError(f"bad grid clause {clause!r}")
        key, vals = (s.strip() for s in clause.split("=", 1))
        if key in ("agents", "layers"):
            try:
                filt[key] = _ints(vals)
            except ValueError:
                raise ConfigError(f"bad integer range {vals!r} for {key}") from None
            if min(filt[key], default=0) < 1:
                raise ConfigError(f"{key} must be >= 1")
        elif key in ("strategy", "collab"):
            filt[key] = [v.strip() for v in vals.split(",")]
        else:
            raise ConfigError(f"unknown grid key {key!r}")
    for s in filt.get("strategy", []):
        if s not in STRATEGIES:
            raise ConfigError(f"unknown strategy {s!r}")
    for c in filt.get("collab", []):
        if c not in COLLAB_VARIANTS:
            raise ConfigError(f"unknown collaboration variant {c!r}")
    grid = AblationGrid.product(
        strategies=filt.pop("strategy", STRATEGIES), collabs=filt.pop("collab", COLLAB_VARIANTS),
        agents=filt.pop("agents", range(1, 6)), layers=filt.pop("layers", range(1, 4)),
    )
    if not len(grid):
        raise ConfigError(f"grid selection {spec!r} is empty")
    return grid


async def run_ablation(
    grid: Iterable[Variant],
    corpus: Sequence[QueryRecord],
    table: ExpertiseTable,
    pool: Mapping[str, Backend],
    base_recruitment: RecruitmentConfig = RecruitmentConfig(),
    base_collab: CollabConfig = CollabConfig(),
    *,
    seed: int = 0,
    random_mode: str = "per_query",
    max_concurrency: int = 8,
    out_dir: str | Path | None = None,
) -> list[RunReport]:
    reports = []
    for v in grid:
        rc, cc, strategy = v.configs(base_recruitment, base_collab)
        sub = None if out_dir is None else Path(out_dir) / re.sub(r"[^A-Za-z0-9._-]", "_", v.name)
        report, _ = await evaluate(corpus, table, pool, rc, cc, strategy=strategy, seed=seed,
                                   random_mode=random_mode, max_concurrency=max_concurrency,
                                   out_dir=sub, variant=v.name)
        reports.append(report)
    return reports


def summary_table(reports: Sequence[RunReport]) -> str:
    rows = [("variant", "n", "Acc.", "F1", "MCC", "CK")]
    for r in reports:
        m = r.metrics
        rows.append((str(r.config.get("variant")), str(len(r.per_query)), f"{100 * m['acc']:.2f}",
                     f"{100 * m['weighted_f1']:.2f}", f"{m['mcc']:.4f}", f"{m['kappa']:.4f}"))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    return "\n".join(" | ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows)
