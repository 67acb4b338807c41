import asyncio
import json
import os
import random
from pathlib import Path

import pytest

from expertroute.backends import load_pool
from expertroute.expertise import BackendProfile, ExpertiseTable, load_table
from expertroute.taxonomy import Department, Difficulty, QueryRecord

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"
SCENARIO = FIXTURES / "scenario"


def check_golden(name: str, text: str) -> None:
    """Compare against tests/golden/<name>; UPDATE_GOLDEN=1 rewrites the file."""
    path = GOLDEN / name
    if os.environ.get("UPDATE_GOLDEN"):
        path.write_text(text)
    assert text == path.read_text()


def run(coro):
    return asyncio.run(coro)


def make_query(qid="q1", n=4, gold="A", dept=None, diff=None, subject=None):
    letters = "ABCDEFGHIJ"[:n]
    return QueryRecord(id=qid, stem=f"stem of {qid}", options={l: f"option {l}" for l in letters},
                       gold=gold, dept_label=dept, diff_label=diff, subject=subject)


def random_profile(rng: random.Random, backend_id: str, grid=None) -> BackendProfile:
    """Random profile; ``grid`` quantises accuracies so ties actually happen."""
    def acc():
        return rng.choice(grid) if grid else rng.random()
    return BackendProfile(
        backend_id=backend_id, acc_dept=acc(), acc_diff=acc(),
        acc_ans_by_dept={d: acc() for d in Department},
        acc_ans_by_diff={l: acc() for l in Difficulty},
        support_by_dept={d: rng.randint(0, 20) for d in Department},
        support_by_diff={l: rng.randint(0, 60) for l in Difficulty},
    )


def random_table(rng: random.Random, n: int, grid=None) -> ExpertiseTable:
    ids = rng.sample([f"m{i:02d}" for i in range(40)], n)
    return ExpertiseTable(corpus_id="sha256:rand", created_at="t",
                          profiles={b: random_profile(rng, b, grid) for b in ids})


@pytest.fixture
def scenario_pool():
    return load_pool(SCENARIO / "pool.json")


@pytest.fixture
def scenario_table():
    return load_table(SCENARIO / "table.json")


@pytest.fixture
def scenario_query():
    return QueryRecord.from_json(json.loads((SCENARIO / "query.json").read_text()))


# Five scripted backends with hand-specified per-query behaviour, used by the
# expertise-table oracle tests. Each behaviour maps a query to
# (predicted labels or None, answer letter or None); None means the backend
# emits something unparseable for that step.

def _b0(q, i):
    return (q.dept_label, q.diff_label), q.gold


def _b1(q, i):
    depts = list(Department)
    good = depts.index(q.dept_label) < 3
    diff = Difficulty.Medium if q.diff_label is Difficulty.High else q.diff_label
    return (q.dept_label, diff), (q.gold if good else _wrong(q))


def _b2(q, i):
    if q.dept_label is Department.Neurology:
        labels = None
    else:
        labels = (Department.Surgery if i % 2 == 0 else q.dept_label, q.diff_label)
    return labels, (q.gold if q.diff_label is Difficulty.Low else _wrong(q))


def _b3(q, i):
    if i % 4 == 0:
        return (q.dept_label, q.diff_label), None
    return (q.dept_label, q.diff_label), (q.gold if i % 3 else _wrong(q))


def _b4(q, i):
    # always says Cardiology, which the alias file maps to Internal Medicine
    return ("Cardiology", Difficulty.High), _wrong(q)


def _wrong(q):
    return next(l for l in q.letters if l != q.gold)


BEHAVIOURS = {"b0": _b0, "b1": _b1, "b2": _b2, "b3": _b3, "b4": _b4}


def _label_text(labels):
    if labels is None:
        return "I would rather not say."
    dept, diff = labels
    dept = dept if isinstance(dept, str) else dept.display
    return f"Department: {dept}\nDifficulty: {diff.name.lower()}"


def population_scripts(corpus):
    """Scenario-entry scripts for the five behaviour backends over ``corpus``."""
    scripts = {b: [] for b in BEHAVIOURS}
    for i, q in enumerate(corpus):
        for b, fn in BEHAVIOURS.items():
            labels, letter = fn(q, i)
            scripts[b].append({"match": {"template": "classify", "query_id": q.id}, "reply": _label_text(labels)})
            ans = f"Answer: {letter}\nConfidence: 70" if letter else "Honestly unsure, maybe look it up."
            scripts[b].append({"match": {"template": "answer_l1", "query_id": q.id}, "reply": ans})
    return scripts


def write_population(corpus, directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    for b, script in population_scripts(corpus).items():
        (directory / f"{b}.json").write_text(json.dumps(script))
    pool = {"backends": [{"backend_id": b, "kind": "scripted", "script": f"{b}.json"} for b in BEHAVIOURS]}
    (directory / "pool.json").write_text(json.dumps(pool))
    return directory / "pool.json"


def naive_table_oracle(corpus):
    """Recount every field straight from the behaviour functions, with Fractions."""
    from fractions import Fraction

    out = {}
    for b, fn in BEHAVIOURS.items():
        dept_ok = diff_ok = 0
        right = {}
        seen = {}
        for i, q in enumerate(corpus):
            labels, letter = fn(q, i)
            if labels is not None:
                dept, diff = labels
                if dept == "Cardiology":
                    dept = Department.InternalMedicine
                dept_ok += dept is q.dept_label
                diff_ok += diff is q.diff_label
            for key in (q.dept_label, q.diff_label):
                seen[key] = seen.get(key, 0) + 1
                right[key] = right.get(key, 0) + (letter == q.gold)
        n = len(corpus)
        out[b] = {
            "acc_dept": Fraction(dept_ok, n),
            "acc_diff": Fraction(diff_ok, n),
            "dept": {d: Fraction(right.get(d, 0), seen[d]) if seen.get(d) else Fraction(0) for d in Department},
            "diff": {l: Fraction(right.get(l, 0), seen[l]) if seen.get(l) else Fraction(0) for l in Difficulty},
            "sup_dept": {d: seen.get(d, 0) for d in Department},
            "sup_diff": {l: seen.get(l, 0) for l in Difficulty},
        }
    return out


def assert_table_matches_oracle(table, oracle):
    assert sorted(table.profiles) == sorted(oracle)
    for b, exp in oracle.items():
        p = table.profiles[b]
        assert p.acc_dept == float(exp["acc_dept"]), b
        assert p.acc_diff == float(exp["acc_diff"]), b
        for d in Department:
            assert p.acc_ans_by_dept[d] == float(exp["dept"][d]), (b, d)
            assert p.support_by_dept[d] == exp["sup_dept"][d]
        for l in Difficulty:
            assert p.acc_ans_by_diff[l] == float(exp["diff"][l]), (b, l)
            assert p.support_by_diff[l] == exp["sup_diff"][l]


def prof_with_overall(backend_id: str, acc: float) -> BackendProfile:
    """Profile whose every answer cell (hence overall accuracy) equals ``acc``."""
    return BackendProfile(
        backend_id=backend_id, acc_dept=0.5, acc_diff=0.5,
        acc_ans_by_dept={d: acc for d in Department}, acc_ans_by_diff={l: acc for l in Difficulty},
        support_by_dept={d: 10 for d in Department}, support_by_diff={l: 30 for l in Difficulty},
    )
