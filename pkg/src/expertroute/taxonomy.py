"""Department/difficulty vocabulary and the canonical multiple-choice record."""

from __future__ import annotations

import enum
import itertools
import json
import re
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterator, Mapping

from .errors import InvalidRecord, UnknownDepartment, UnknownDifficulty

OPTION_LETTERS = "ABCDEFGHIJ"
MIN_OPTIONS, MAX_OPTIONS = 2, len(OPTION_LETTERS)


class Department(enum.Enum):
    """The nine departments. Declaration order is the canonical iteration order."""

    InternalMedicine = ("IM", "Internal Medicine")
    Surgery = ("Su", "Surgery")
    ObstetricsGynecology = ("OG", "Obstetrics and Gynecology")
    Pediatrics = ("Pe", "Pediatrics")
    Neurology = ("Ne", "Neurology")
    Oncology = ("On", "Oncology")
    Otolaryngology = ("Ot", "Otolaryngology")
    PsychiatryPsychology = ("PP", "Psychiatry and Psychology")
    EmergencyCriticalCare = ("EC", "Emergency and Critical Care")

    @property
    def code(self) -> str:
        return self.value[0]

    @property
    def display(self) -> str:
        return self.value[1]

    @property
    def canonical_id(self) -> str:
        return self.name

    @classmethod
    def from_code(cls, code: str) -> "Department":
        for d in cls:
            if d.code == code:
                return d
        raise UnknownDepartment(code)


class Difficulty(enum.Enum):
    Low = "L"
    Medium = "M"
    High = "H"

    @property
    def code(self) -> str:
        return self.value

    @property
    def canonical_id(self) -> str:
        return self.value

    @property
    def rank(self) -> int:
        return _DIFF_RANK[self]

    def __lt__(self, other: "Difficulty") -> bool:
        if not isinstance(other, Difficulty):
            return NotImplemented
        return self.rank < other.rank

    def __le__(self, other: "Difficulty") -> bool:
        if not isinstance(other, Difficulty):
            return NotImplemented
        return self.rank <= other.rank


_DIFF_RANK = {Difficulty.Low: 0, Difficulty.Medium: 1, Difficulty.High: 2}


def cells() -> Iterator[tuple[Department, Difficulty]]:
    """All 27 (department, difficulty) cells in canonical order."""
    return itertools.product(Department, Difficulty)


def _norm(label: str) -> str:
    # "Obstetrics & Gynecology", "obstetrics and gynecology", "ObstetricsGynecology" all collapse
    tokens = re.findall(r"[a-z0-9]+", label.lower())
    return "".join(t for t in tokens if t != "and")


DEFAULT_ALIAS_FILE = "aliases.json"


def load_aliases(path: str | Path | None = None) -> dict[str, Department]:
    """Read an alias file mapping free-text labels to canonical department ids."""
    if path is None:
        text = resources.files("expertroute.data").joinpath(DEFAULT_ALIAS_FILE).read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    raw = json.loads(text)
    out = {}
    for alias, target in raw.get("departments", {}).items():
        out[_norm(alias)] = Department[target]
    return out


@lru_cache(maxsize=1)
def _default_aliases() -> dict[str, Department]:
    return load_aliases()


def _lookup(key: str, aliases: Mapping[str, Department]) -> Department | None:
    if not key:
        return None
    for d in Department:
        if key in (_norm(d.canonical_id), _norm(d.code), _norm(d.display)):
            return d
    return aliases.get(key)


def parse_department(label: str, aliases: Mapping[str, Department] | None = None) -> Department:
    """Resolve a department from its canonical id, 2-letter code, display name or alias.

    A trailing parenthesised code, as in ``"Internal Medicine (IM)"``, is accepted;
    the name part wins over the code if both resolve.
    """
    if aliases is None:
        aliases = _default_aliases()
    text = label.strip()
    candidates = [text]
    m = re.fullmatch(r"(.*?)\s*\(([^()]*)\)\s*", text)
    if m:
        candidates += [m.group(1), m.group(2)]
    for cand in candidates:
        d = _lookup(_norm(cand), aliases)
        if d is not None:
            return d
    raise UnknownDepartment(label)


_DIFF_WORDS = {"low": Difficulty.Low, "l": Difficulty.Low, "medium": Difficulty.Medium,
               "m": Difficulty.Medium, "high": Difficulty.High, "h": Difficulty.High}


def parse_difficulty(label: str) -> Difficulty:
    text = label.strip()
    m = re.fullmatch(r"(.*?)\s*\(([^()]*)\)\s*", text)
    for cand in ([text, m.group(1), m.group(2)] if m else [text]):
        d = _DIFF_WORDS.get(cand.strip().lower())
        if d is not None:
            return d
    raise UnknownDifficulty(label)


@dataclass(frozen=True)
class ClassificationPrediction:
    dept: Department
    diff: Difficulty

    def to_json(self) -> dict[str, str]:
        return {"dept": self.dept.code, "diff": self.diff.code}

    @classmethod
    def from_json(cls, obj: Mapping[str, str]) -> "ClassificationPrediction":
        return cls(Department.from_code(obj["dept"]), parse_difficulty(obj["diff"]))


@dataclass(frozen=True)
class QueryRecord:
    """One multiple-choice question.

    ``options`` maps consecutive letters starting at ``A`` to option text.
    ``subject`` is the source dataset's own category (e.g. an MMLU-Pro subfield),
    used only for per-category reporting.
    """

    id: str
    stem: str
    options: Mapping[str, str]
    gold: str | None = None
    dept_label: Department | None = None
    diff_label: Difficulty | None = None
    subject: str | None = None

    def __post_init__(self) -> None:
        letters = list(self.options)
        n = len(letters)
        if not MIN_OPTIONS <= n <= MAX_OPTIONS:
            raise InvalidRecord(f"{self.id}: expected {MIN_OPTIONS}-{MAX_OPTIONS} options, got {n}")
        if letters != list(OPTION_LETTERS[:n]):
            raise InvalidRecord(f"{self.id}: option letters must be consecutive from A, got {letters}")
        if self.gold is not None and self.gold not in self.options:
            raise InvalidRecord(f"{self.id}: gold {self.gold!r} is not an option letter")
        # freeze a private copy so callers cannot mutate the record afterwards
        object.__setattr__(self, "options", dict(self.options))

    @property
    def letters(self) -> tuple[str, ...]:
        return tuple(self.options)

    @property
    def labeled(self) -> bool:
        return self.dept_label is not None and self.diff_label is not None

    def with_labels(self, dept: Department, diff: Difficulty) -> "QueryRecord":
        return replace(self, dept_label=dept, diff_label=diff)

    def to_json(self) -> dict[str, Any]:
        obj: dict[str, Any] = {"id": self.id, "stem": self.stem, "options": dict(self.options)}
        if self.gold is not None:
            obj["gold"] = self.gold
        if self.dept_label is not None:
            obj["dept"] = self.dept_label.code
        if self.diff_label is not None:
            obj["diff"] = self.diff_label.code
        if self.subject is not None:
            obj["subject"] = self.subject
        return obj

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "QueryRecord":
        dept = obj.get("dept")
        diff = obj.get("diff")
        return cls(
            id=str(obj["id"]),
            stem=obj["stem"],
            options=dict(obj["options"]),
            gold=obj.get("gold"),
            dept_label=parse_department(dept) if dept else None,
            diff_label=parse_difficulty(diff) if diff else None,
            subject=obj.get("subject"),
        )


def write_jsonl(records, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), ensure_ascii=False) + "\n")
