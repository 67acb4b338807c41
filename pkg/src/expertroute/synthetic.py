"""Synthetic corpora and scripted backend populations with known behaviour.

Used by the test suite, the acceptance checks and the offline demo scripts.
All randomness is derived from hashes of ids, so every population is fully
deterministic.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .backends import ScriptedBackend, Step
from .taxonomy import Department, Difficulty, OPTION_LETTERS, QueryRecord

DIFF_CYCLE = (Difficulty.Low, Difficulty.Medium, Difficulty.High)


def stable_int(*parts: object) -> int:
    digest = hashlib.sha256("\x1f".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def synthetic_corpus(n_per_dept: int = 10, prefix: str = "v", n_options: int = 4) -> list[QueryRecord]:
    """``n_per_dept`` labeled records per department, difficulty cycling L/M/H."""
    letters = OPTION_LETTERS[:n_options]
    out = []
    for d in Department:
        for i in range(n_per_dept):
            qid = f"{prefix}-{d.code}-{i:03d}"
            out.append(QueryRecord(
                id=qid,
                stem=f"Synthetic {d.display} case {i}: which option is correct?",
                options={l: f"{d.display} option {l} for case {i}" for l in letters},
                gold=letters[stable_int("gold", qid) % n_options],
                dept_label=d,
                diff_label=DIFF_CYCLE[i % 3],
            ))
    return out


def chance_letter(backend_id: str, query: QueryRecord) -> str:
    """Uniform over the options, deterministic per (backend, query)."""
    letters = query.letters
    return letters[stable_int("chance", backend_id, query.id) % len(letters)]


def wrong_letter(query: QueryRecord, salt: str = "") -> str:
    others = [l for l in query.letters if l != query.gold]
    return others[stable_int("wrong", salt, query.id) % len(others)]


def answer_reply(letter: str, confidence: int, rationale: str = "scripted reasoning") -> str:
    return f"Answer: {letter}\nConfidence: {confidence}\nRationale: {rationale}"


def classify_reply(dept: Department, diff: Difficulty) -> str:
    return f"Department: {dept.display}\nDifficulty: {diff.name.lower()}"


_TRIPLE_RE = re.compile(r"\[Agent ([^\]]+)\] Answer: ([A-J]) \| Overall confidence: ([0-9.]+)")


def parse_triples(prompt: str) -> list[tuple[str, str, float]]:
    return [(a, l, float(c)) for a, l, c in _TRIPLE_RE.findall(prompt)]


def plurality(triples: Sequence[tuple[str, str, float]]) -> str:
    """Most common answer; ties go to the alphabetically first letter."""
    counts = Counter(l for _, l, _ in triples)
    best = max(counts.values())
    return min(l for l, c in counts.items() if c == best)


def confidence_leader(triples: Sequence[tuple[str, str, float]]) -> str:
    return max(triples, key=lambda t: (t[2], -ord(t[1])))[1]


@dataclass
class SkillAgent:
    """A scripted agent whose correctness is a function of the query.

    ``knows(query) -> bool`` decides whether it answers correctly; otherwise it
    answers at chance. ``classifies(query) -> bool`` decides whether its
    department/difficulty prediction matches the query's labels.
    """

    backend_id: str
    knows: Callable[[QueryRecord], bool]
    classifies: Callable[[QueryRecord], bool] = lambda q: True
    confidence: int = 80
    wrong_when_unknown: bool = False

    def answer(self, q: QueryRecord) -> str:
        if self.knows(q):
            return q.gold
        return wrong_letter(q, self.backend_id) if self.wrong_when_unknown else chance_letter(self.backend_id, q)

    def classification(self, q: QueryRecord) -> tuple[Department, Difficulty]:
        if self.classifies(q):
            return q.dept_label, q.diff_label
        depts = list(Department)
        wrong_dept = depts[(depts.index(q.dept_label) + 1) % len(depts)]
        wrong_diff = DIFF_CYCLE[(DIFF_CYCLE.index(q.diff_label) + 1) % 3]
        return wrong_dept, wrong_diff


def population_backends(
    agents: Iterable[SkillAgent],
    queries: Iterable[QueryRecord],
    aggregator: Callable[[Sequence[tuple[str, str, float]]], str] = plurality,
) -> dict[str, ScriptedBackend]:
    """Scripted backends for ``agents`` over a fixed set of queries.

    Each backend answers from its skill, classifies per its classification
    skill, judges everything consistent, and aggregates with ``aggregator``.
    """
    by_id = {q.id: q for q in queries}
    pool = {}
    for agent in agents:
        def script(step: Step, prompt: str, agent=agent) -> str:
            q = by_id[step.query_id]
            if step.template in ("classify", "pseudo_label"):
                return classify_reply(*agent.classification(q))
            if step.template in ("answer_l1", "answer_lk"):
                return answer_reply(agent.answer(q), agent.confidence)
            if step.template == "judge":
                return "All candidate answers are consistent; no factual errors."
            if step.template == "aggregate":
                return f"Final Answer: {aggregator(parse_triples(prompt))}\nRationale: combined"
            raise KeyError(step.template)

        pool[agent.backend_id] = ScriptedBackend.from_script(agent.backend_id, script, max_in_flight=16)
    return pool


def complementary_population(n_backends: int = 9, depts_per_backend: int = 3) -> list[SkillAgent]:
    """Each backend is perfect in ``depts_per_backend`` departments and at chance elsewhere.

    Backend ``b`` masters departments ``b, b+1, ...`` (mod 9), so in the
    default layout every department has exactly three experts.
    """
    depts = list(Department)
    agents = []
    for b in range(n_backends):
        mastered = {depts[(b + k) % len(depts)] for k in range(depts_per_backend)}
        agents.append(SkillAgent(
            backend_id=f"m{b:02d}",
            knows=lambda q, m=frozenset(mastered): q.dept_label in m,
            confidence=80,
        ))
    return agents
