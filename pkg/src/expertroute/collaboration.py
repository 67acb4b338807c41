"""Multi-layer collaboration: answer, fuse confidences, verify, refine, aggregate."""

from __future__ import annotations

import asyncio
import json
import logging
import random
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from .backends import Backend, Step
from .errors import AllAgentsFailed, BackendError, ConfigError, MissingScore, ParseFailure
from .expertise import ExpertiseTable
from .parsing import Issue, parse_answer, parse_final, parse_judge, parse_rationale
from .prompts import load_template, render
from .recruitment import RecruitmentConfig, RecruitmentResult, recruit, select_classifier
from .taxonomy import QueryRecord

logger = logging.getLogger(__name__)

JUDGE_DISABLED = "(disabled)"
AGGREGATOR_POLICIES = ("highest_expertise", "judge", "fixed")


@dataclass(frozen=True)
class CollabConfig:
    alpha: float = 0.5
    layers: int = 2
    aggregator_policy: str = "highest_expertise"
    aggregator_id: str | None = None  # used by the "fixed" policy
    drop_confidence: bool = False
    drop_adversarial: bool = False
    max_attempts: int = 3

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        if self.aggregator_policy not in AGGREGATOR_POLICIES:
            raise ConfigError(f"unknown aggregator policy {self.aggregator_policy!r}")
        if self.aggregator_policy == "fixed" and not self.aggregator_id:
            raise ConfigError("the fixed aggregator policy needs aggregator_id")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")


@dataclass(frozen=True)
class AgentResponse:
    backend_id: str
    layer: int
    answer: str
    rationale: str
    self_confidence: float
    raw: str

    def to_json(self) -> dict[str, Any]:
        return {"backend_id": self.backend_id, "layer": self.layer, "answer": self.answer,
                "self_confidence": self.self_confidence, "rationale": self.rationale, "raw": self.raw}


@dataclass(frozen=True)
class AgentFailure:
    backend_id: str
    layer: int
    reason: str

    def to_json(self) -> dict[str, Any]:
        return {"backend_id": self.backend_id, "layer": self.layer, "reason": self.reason}


@dataclass(frozen=True)
class FusedConfidence:
    backend_id: str
    self_confidence: float
    expertise_score: float
    fused: float

    def to_json(self) -> dict[str, Any]:
        return {"backend_id": self.backend_id, "self_confidence": self.self_confidence,
                "expertise_score": self.expertise_score, "fused": self.fused}


@dataclass(frozen=True)
class JudgeReport:
    judge_id: str
    per_response: Mapping[str, Sequence[Issue]]
    raw: str = ""
    warning: str | None = None

    @property
    def consistent(self) -> bool:
        return all(not issues for issues in self.per_response.values())

    def issues_for(self, backend_id: str) -> Sequence[Issue]:
        return self.per_response.get(backend_id, ())

    def to_json(self) -> dict[str, Any]:
        return {
            "judge_id": self.judge_id,
            "consistent": self.consistent,
            "per_response": {b: [i.to_json() for i in self.per_response[b]] for b in sorted(self.per_response)},
            "raw": self.raw,
            "warning": self.warning,
        }


def all_clear(judge_id: str, agent_ids, raw: str = "", warning: str | None = None) -> JudgeReport:
    return JudgeReport(judge_id, {a: [] for a in agent_ids}, raw, warning)


@dataclass(frozen=True)
class LayerState:
    layer: int
    responses: tuple[AgentResponse, ...]
    failures: tuple[AgentFailure, ...]
    fused: tuple[FusedConfidence, ...]
    judge: JudgeReport

    def fused_for(self, backend_id: str) -> float:
        for f in self.fused:
            if f.backend_id == backend_id:
                return f.fused
        raise KeyError(backend_id)

    def by_confidence(self) -> list[AgentResponse]:
        """Responses in descending fused confidence, ascending id on ties."""
        fused = {f.backend_id: f.fused for f in self.fused}
        return sorted(self.responses, key=lambda r: (-fused[r.backend_id], r.backend_id))

    def to_json(self) -> dict[str, Any]:
        return {
            "layer": self.layer,
            "responses": [r.to_json() for r in self.responses],
            "failures": [f.to_json() for f in self.failures],
            "fused": [f.to_json() for f in self.fused],
            "judge": self.judge.to_json(),
        }


@dataclass(frozen=True)
class FinalAnswer:
    answer: str
    rationale: str
    aggregator_id: str
    fallback: bool = False
    raw: str = ""

    def to_json(self) -> dict[str, Any]:
        return {"answer": self.answer, "rationale": self.rationale, "aggregator_id": self.aggregator_id,
                "fallback": self.fallback, "raw": self.raw}


@dataclass(frozen=True)
class CollabTranscript:
    query_id: str
    recruitment: RecruitmentResult
    layers: tuple[LayerState, ...]
    final: FinalAnswer
    warnings: tuple[str, ...] = ()

    def to_json(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "recruitment": self.recruitment.to_json(),
            "layers": [l.to_json() for l in self.layers],
            "final": self.final.to_json(),
            "warnings": list(self.warnings),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False) + "\n"


def _query_bindings(query: QueryRecord) -> dict[str, Any]:
    return {"stem": query.stem, "options": query.options}


def _issue_text(issues: Sequence[Issue]) -> str:
    return "; ".join(f"{i.severity}: {i.note}" for i in issues) if issues else "none"


def render_triples(state: LayerState) -> str:
    """Answer / overall confidence / issues block per response, highest confidence first."""
    blocks = []
    for r in state.by_confidence():
        blocks.append(
            f"[Agent {r.backend_id}] Answer: {r.answer} | Overall confidence: {state.fused_for(r.backend_id):.2f}"
            f" | Issues: {_issue_text(state.judge.issues_for(r.backend_id))}\n"
            f"Rationale: {r.rationale}"
        )
    return "\n\n".join(blocks)


def render_candidates(responses: Sequence[AgentResponse]) -> str:
    return "\n\n".join(
        f"[Agent {r.backend_id}] Answer: {r.answer} (self-confidence {round(r.self_confidence * 100)})\n"
        f"Rationale: {r.rationale}"
        for r in responses
    )


def answer_prompt(query: QueryRecord, context: LayerState | None) -> tuple[str, str]:
    if context is None:
        return "answer_l1", render(load_template("answer_l1"), _query_bindings(query))
    bindings = _query_bindings(query) | {"context": render_triples(context)}
    return "answer_lk", render(load_template("answer_lk"), bindings)


async def _answer_one(query: QueryRecord, agent: Backend, layer: int, template: str, prompt: str,
                      max_attempts: int) -> AgentResponse | AgentFailure:
    last = ""
    for attempt in range(max_attempts):
        try:
            raw = await agent.complete(prompt, Step(template, query.id, layer=layer, attempt=attempt))
        except BackendError as exc:
            return AgentFailure(agent.backend_id, layer, f"{type(exc).__name__}: {exc}")
        try:
            letter, conf = parse_answer(raw, query.letters)
        except ParseFailure as exc:
            last = str(exc)
            continue
        return AgentResponse(agent.backend_id, layer, letter, parse_rationale(raw), conf, raw)
    return AgentFailure(agent.backend_id, layer, f"ParseFailure after {max_attempts} attempts: {last}")


async def answer_round(
    query: QueryRecord,
    agents: Sequence[Backend],
    context: LayerState | None = None,
    max_attempts: int = 3,
) -> tuple[list[AgentResponse], list[AgentFailure]]:
    """One answering round. Layer 1 sees only the query; later layers also see
    the previous layer's responses, fused confidences and judge issues."""
    if not agents:
        raise ValueError("answer_round needs at least one agent")
    layer = 1 if context is None else context.layer + 1
    template, prompt = answer_prompt(query, context)
    results = await asyncio.gather(*(_answer_one(query, a, layer, template, prompt, max_attempts) for a in agents))
    responses = [r for r in results if isinstance(r, AgentResponse)]
    failures = [r for r in results if isinstance(r, AgentFailure)]
    if not responses:
        raise AllAgentsFailed(f"{query.id}: every agent failed in layer {layer}")
    return responses, failures


def fuse_confidence(
    responses: Sequence[AgentResponse],
    scores: Mapping[str, float],
    alpha: float = 0.5,
    drop_confidence: bool = False,
) -> list[FusedConfidence]:
    out = []
    for r in responses:
        if r.backend_id not in scores:
            raise MissingScore(r.backend_id)
        s = scores[r.backend_id]
        fused = r.self_confidence if drop_confidence else alpha * r.self_confidence + (1 - alpha) * s
        out.append(FusedConfidence(r.backend_id, r.self_confidence, s, fused))
    return out


def select_judge(recruitment: RecruitmentResult) -> str:
    if not recruitment.recruited:
        raise ValueError("no recruited agents")
    return min(recruitment.recruited, key=lambda b: (-recruitment.scores[b], b))


async def adversarial_verify(
    query: QueryRecord,
    responses: Sequence[AgentResponse],
    judge: Backend | None,
    *,
    layer: int = 1,
    disabled: bool = False,
    max_attempts: int = 3,
) -> JudgeReport:
    """One judge call over all responses. Never raises: a failed or unparseable
    judge degrades to an all-clear report carrying a warning."""
    if not responses:
        raise ValueError("nothing to verify")
    ids = [r.backend_id for r in responses]
    if disabled or judge is None:
        return all_clear(JUDGE_DISABLED, ids)
    bindings = _query_bindings(query) | {"responses": render_candidates(responses), "agent_ids": ", ".join(ids)}
    prompt = render(load_template("judge"), bindings)
    raw = ""
    for attempt in range(max_attempts):
        try:
            raw = await judge.complete(prompt, Step("judge", query.id, layer=layer, attempt=attempt))
        except BackendError as exc:
            return all_clear(judge.backend_id, ids, warning=f"judge failed: {type(exc).__name__}: {exc}")
        try:
            return JudgeReport(judge.backend_id, parse_judge(raw, ids), raw)
        except ParseFailure:
            continue
    return all_clear(judge.backend_id, ids, raw, warning=f"judge output unparseable after {max_attempts} attempts")


def fallback_answer(state: LayerState) -> AgentResponse:
    return state.by_confidence()[0]


async def aggregate(
    query: QueryRecord,
    final_layer: LayerState,
    aggregator: Backend,
    max_attempts: int = 3,
) -> FinalAnswer:
    """Ask the aggregator for the final letter; on repeated failure fall back to
    the answer with the highest fused confidence."""
    if not final_layer.responses:
        raise ValueError("final layer has no responses")
    bindings = _query_bindings(query) | {"triples": render_triples(final_layer)}
    prompt = render(load_template("aggregate"), bindings)
    raw = ""
    for attempt in range(max_attempts):
        try:
            raw = await aggregator.complete(prompt, Step("aggregate", query.id, attempt=attempt))
        except BackendError as exc:
            logger.warning("%s: aggregator %s failed: %s", query.id, aggregator.backend_id, exc)
            break
        try:
            letter = parse_final(raw, query.letters)
        except ParseFailure:
            continue
        return FinalAnswer(letter, parse_rationale(raw), aggregator.backend_id, False, raw)
    best = fallback_answer(final_layer)
    return FinalAnswer(best.answer, best.rationale, aggregator.backend_id, True, raw)


def aggregator_for(recruitment: RecruitmentResult, cfg: CollabConfig) -> str:
    if cfg.aggregator_policy == "fixed":
        return cfg.aggregator_id
    # highest_expertise and judge pick the same agent; they differ only in name
    return select_judge(recruitment)


async def collaborate(
    query: QueryRecord,
    recruitment: RecruitmentResult,
    pool: Mapping[str, Backend],
    cfg: CollabConfig = CollabConfig(),
) -> CollabTranscript:
    """Run the layers and aggregation for an already-recruited agent set."""
    agents = [pool[b] for b in recruitment.recruited]
    judge_id = select_judge(recruitment)
    warnings: list[str] = []
    layers: list[LayerState] = []
    context: LayerState | None = None
    for k in range(1, cfg.layers + 1):
        responses, failures = await answer_round(query, agents, context, cfg.max_attempts)
        fused = fuse_confidence(responses, recruitment.scores, cfg.alpha, cfg.drop_confidence)
        report = await adversarial_verify(query, responses, pool[judge_id], layer=k,
                                          disabled=cfg.drop_adversarial, max_attempts=cfg.max_attempts)
        warnings += [f"layer {k}: agent {f.backend_id} failed: {f.reason}" for f in failures]
        if report.warning:
            warnings.append(f"layer {k}: {report.warning}")
        context = LayerState(k, tuple(responses), tuple(failures), tuple(fused), report)
        layers.append(context)
    agg_id = aggregator_for(recruitment, cfg)
    if agg_id not in pool:
        raise ConfigError(f"aggregator {agg_id!r} is not in the pool")
    final = await aggregate(query, context, pool[agg_id], cfg.max_attempts)
    if final.fallback:
        warnings.append(f"aggregator {agg_id} gave no usable answer; fell back to highest fused confidence")
    return CollabTranscript(query.id, recruitment, tuple(layers), final, tuple(warnings))


async def run_pipeline(
    query: QueryRecord,
    table: ExpertiseTable,
    pool: Mapping[str, Backend],
    recruitment_cfg: RecruitmentConfig = RecruitmentConfig(),
    collab_cfg: CollabConfig = CollabConfig(),
    *,
    strategy: str = "expertise_aware",
    rng: random.Random | None = None,
    fixed: Sequence[str] | None = None,
    aliases=None,
) -> CollabTranscript:
    missing = sorted(set(table.profiles) - set(pool))
    if missing:
        raise ConfigError(f"table backends missing from the pool: {missing}")
    classifier_id = recruitment_cfg.classifier_override or select_classifier(table)
    if classifier_id not in pool:
        raise ConfigError(f"classifier {classifier_id!r} is not in the pool")
    result = await recruit(table, query, pool[classifier_id], recruitment_cfg,
                           strategy=strategy, rng=rng, fixed=fixed, aliases=aliases)
    return await collaborate(query, result, pool, collab_cfg)
