"""Structured-output parsers for backend replies.

Every parser either returns a fully valid value or raises
:class:`~expertroute.errors.ParseFailure`. The primary strategy reads
line-anchored markers (``Answer:``, ``Confidence:`` ...); the letter parsers
fall back to scanning free text for the last standalone option letter.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import ParseFailure, UnknownDepartment, UnknownDifficulty
from .taxonomy import ClassificationPrediction, Department, parse_department, parse_difficulty

SEVERITIES = ("contradiction", "factual_error", "unsupported")
DEFAULT_SEVERITY = "factual_error"
DEFAULT_CONFIDENCE = 0.5

# leading decoration models like to add: "**Answer:**", "- Answer:", "> Answer:"
_LEAD = r"^[ \t>*_#\-]*"
_SEP = r"[ \t*_]*[:：][ \t*_]*"

_DEPT_RE = re.compile(_LEAD + r"(?:department|dept)" + _SEP + r"(.+?)[ \t*_.]*$", re.I | re.M)
_DIFF_RE = re.compile(_LEAD + r"(?:difficulty|diff)(?:[ \t]+level)?" + _SEP + r"(.+?)[ \t*_.]*$", re.I | re.M)
_ANSWER_RE = re.compile(_LEAD + r"(?:final[ \t]+)?answer" + _SEP + r"\(?([A-Za-z])\b", re.I | re.M)
_FINAL_RE = re.compile(_LEAD + r"final[ \t]+answer" + _SEP + r"\(?([A-Za-z])\b", re.I | re.M)
_CONF_RE = re.compile(_LEAD + r"confidence" + _SEP + r"(-?\d+(?:\.\d+)?)[ \t]*(%?)", re.I | re.M)
_RATIONALE_RE = re.compile(_LEAD + r"(?:rationale|reasoning|explanation)" + _SEP + r"(.*)", re.I | re.M | re.S)
_ISSUES_RE = re.compile(_LEAD + r"issues?[ \t]*\[([^\]]+)\]" + _SEP + r"(.*)$", re.I | re.M)
_ALL_CLEAR_RE = re.compile(
    r"\b(?:all|fully|mutually)\s+consistent\b|\bno\s+(?:factual\s+)?(?:errors?|issues?|contradictions?)\b", re.I
)
_NO_ISSUE = {"", "none", "no issues", "no issue", "-", "n/a", "na", "ok", "no errors", "nothing"}


@dataclass(frozen=True)
class Issue:
    severity: str
    note: str

    def to_json(self) -> dict[str, str]:
        return {"severity": self.severity, "note": self.note}


def _strip_md(text: str) -> str:
    return text.strip().strip("*_`\"' ").strip()


def parse_classification(raw: str, aliases: Mapping[str, Department] | None = None) -> ClassificationPrediction:
    dept_m = _DEPT_RE.findall(raw)
    diff_m = _DIFF_RE.findall(raw)
    if not dept_m or not diff_m:
        raise ParseFailure(raw, "missing Department: or Difficulty: marker")
    try:
        dept = parse_department(_strip_md(dept_m[-1]), aliases)
        diff = parse_difficulty(_strip_md(diff_m[-1]))
    except (UnknownDepartment, UnknownDifficulty) as exc:
        raise ParseFailure(raw, str(exc)) from exc
    return ClassificationPrediction(dept, diff)


# Fallback letter scan, strongest phrasing first.
_PHRASE_RE = re.compile(
    r"(?:answer|choice|option)\s*(?:is|would\s+be)?\s*:?\s*(?:option\s+)?\(?([A-J])\)?(?![A-Za-z0-9])"
    r"|(?:choose|select|pick|go\s+with)\s+(?:option\s+)?\(?([A-J])\)?(?![A-Za-z0-9])",
    re.I,
)
_MARKED_RE = re.compile(r"\(([A-J])\)|(?<![A-Za-z0-9])([A-J])[).](?![A-Za-z0-9])|\*\*([A-J])\*\*")
_BARE_RE = re.compile(r"(?<![A-Za-z0-9'])([A-J])(?![A-Za-z0-9'])")


def _bare_ok(text: str, m: re.Match) -> bool:
    # "A patient ...", "I think ..." are words, not option letters
    after = text[m.end():m.end() + 2]
    return not (m.group(1) in "AI" and re.match(r"\s[a-z]", after))


def scan_last_letter(raw: str, letters: Iterable[str]) -> str:
    valid = set(letters)
    for tier in (_PHRASE_RE, _MARKED_RE):
        hits = [next(g for g in m.groups() if g) for m in tier.finditer(raw)]
        hits = [h.upper() for h in hits if h.upper() in valid]
        if hits:
            return hits[-1]
    hits = [m.group(1) for m in _BARE_RE.finditer(raw) if m.group(1) in valid and _bare_ok(raw, m)]
    if hits:
        return hits[-1]
    raise ParseFailure(raw, "no option letter found")


def _marked_letter(raw: str, pattern: re.Pattern, letters: Sequence[str]) -> str | None:
    found = pattern.findall(raw)
    if not found:
        return None
    letter = found[-1].upper()
    if letter not in letters:
        raise ParseFailure(raw, f"answer letter {letter!r} is not one of {''.join(letters)}")
    return letter


def parse_confidence(raw: str) -> float | None:
    found = _CONF_RE.findall(raw)
    if not found:
        return None
    number, pct = found[-1]
    value = float(number)
    if not pct and "." in number and 0.0 <= value <= 1.0:
        return value
    return min(max(value, 0.0), 100.0) / 100.0


def parse_answer(raw: str, letters: Sequence[str], default_confidence: float = DEFAULT_CONFIDENCE) -> tuple[str, float]:
    """Return ``(letter, confidence in [0, 1])``."""
    letters = list(letters)
    letter = _marked_letter(raw, _ANSWER_RE, letters)
    if letter is None:
        letter = scan_last_letter(raw, letters)
    conf = parse_confidence(raw)
    return letter, default_confidence if conf is None else conf


def parse_final(raw: str, letters: Sequence[str]) -> str:
    letters = list(letters)
    letter = _marked_letter(raw, _FINAL_RE, letters)
    if letter is None:
        letter = _marked_letter(raw, _ANSWER_RE, letters)
    if letter is None:
        letter = scan_last_letter(raw, letters)
    return letter


def parse_rationale(raw: str) -> str:
    m = _RATIONALE_RE.search(raw)
    return (m.group(1) if m else raw).strip()


def _parse_issue_list(text: str) -> list[Issue]:
    text = text.strip()
    if _strip_md(text).lower().rstrip(".") in _NO_ISSUE:
        return []
    issues = []
    for part in re.split(r"\s*;\s*", text):
        part = _strip_md(part)
        if not part or part.lower().rstrip(".") in _NO_ISSUE:
            continue
        m = re.match(r"(contradiction|factual[ _]error|unsupported)\s*[:\-]?\s*(.*)", part, re.I | re.S)
        if m:
            severity = m.group(1).lower().replace(" ", "_")
            issues.append(Issue(severity, m.group(2).strip()))
        else:
            issues.append(Issue(DEFAULT_SEVERITY, part))
    return issues


def parse_judge(raw: str, agent_ids: Sequence[str]) -> dict[str, list[Issue]]:
    """Map each agent id to the issues the judge raised against it.

    Lines for ids outside ``agent_ids`` are ignored. A reply with no
    ``Issues[...]`` lines is accepted only if it states overall consistency.
    """
    per: dict[str, list[Issue]] = {a: [] for a in agent_ids}
    matches = _ISSUES_RE.findall(raw)
    if not matches:
        if _ALL_CLEAR_RE.search(raw):
            return per
        raise ParseFailure(raw, "no Issues[...] lines and no consistency statement")
    seen = False
    for agent, text in matches:
        agent = agent.strip()
        if agent in per:
            seen = True
            per[agent].extend(_parse_issue_list(text))
    if not seen and not _ALL_CLEAR_RE.search(raw):
        raise ParseFailure(raw, "Issues[...] lines name no known agent")
    return per
