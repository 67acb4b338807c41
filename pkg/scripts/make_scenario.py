"""Write the scripted four-agent scenario used by the golden-transcript tests.

    python scripts/make_scenario.py tests/fixtures/scenario

Five backends a..e. For the cardiology/high query, the table makes ``a`` the
classifier, recruits a, b, c, d (scores .87 .77 .67 .57), and ``a`` judges.
In layer 1 ``b`` answers B and the judge flags it; in layer 2 ``b`` switches
to C only if that flag reaches it.
"""

import json
import sys
from pathlib import Path

from expertroute.expertise import BackendProfile, ExpertiseTable, save_table
from expertroute.taxonomy import Department, Difficulty

QUERY = {
    "id": "q1",
    "stem": ("A 58-year-old man has crushing substernal chest pain radiating to the left arm for 40 minutes. "
             "ECG shows ST elevation in leads II, III and aVF. Which coronary artery is most likely occluded?"),
    "options": {"A": "Left anterior descending artery", "B": "Left circumflex artery",
                "C": "Right coronary artery", "D": "Left main coronary artery"},
    "gold": "C",
}

FLAG = "factual_error: contradicts lab values"


def ans(letter, conf, why):
    return f"Answer: {letter}\nConfidence: {conf}\nRationale: {why}"


SCRIPTS = {
    "a": [
        {"match": {"template": "classify", "query_id": "q1"}, "reply": "Dept: Cardiology\nDifficulty: high"},
        {"match": {"template": "answer_l1", "query_id": "q1"},
         "reply": ans("C", 85, "Inferior ST elevation points to the right coronary artery.")},
        {"match": {"template": "answer_lk", "query_id": "q1"},
         "reply": ans("C", 90, "Inferior leads II, III, aVF are supplied by the RCA in most patients.")},
        {"match": {"template": "judge", "query_id": "q1", "layer": 1},
         "reply": f"Issues[a]: none\nIssues[b]: {FLAG}\nIssues[c]: none\nIssues[d]: none"},
        {"match": {"template": "judge", "query_id": "q1", "layer": 2},
         "reply": "All four answers are consistent; no factual errors found."},
        {"match": {"template": "aggregate", "query_id": "q1"},
         "reply": "Final Answer: C\nRationale: All experts agree on the right coronary artery."},
    ],
    "b": [
        {"match": {"template": "answer_l1", "query_id": "q1"},
         "reply": ans("B", 70, "The circumflex can supply the inferior wall.")},
        {"match": {"template": "answer_lk", "query_id": "q1",
                   "prompt_contains": ["[Agent b] Answer: B", FLAG]},
         "reply": ans("C", 75, "Reviewer is right; right dominance is typical, so the RCA.")},
        {"match": {"template": "answer_lk", "query_id": "q1"},
         "reply": ans("B", 70, "Keeping the circumflex.")},
    ],
    "c": [
        {"match": {"template": "answer_l1", "query_id": "q1"}, "reply": ans("C", 80, "Inferior MI means RCA.")},
        {"match": {"template": "answer_lk", "query_id": "q1"}, "reply": ans("C", 82, "Still the RCA.")},
    ],
    "d": [
        {"match": {"template": "answer_l1", "query_id": "q1"}, "reply": ans("C", 75, "RCA occlusion.")},
        {"match": {"template": "answer_lk", "query_id": "q1"}, "reply": ans("C", 78, "RCA occlusion, agreed.")},
    ],
    "e": [],
}

# (acc_dept, acc_diff, IM cell, High cell); other cells are 0.5
ROWS = {"a": (0.9, 0.8, 0.9, 0.8), "b": (0.7, 0.7, 0.8, 0.7), "c": (0.6, 0.6, 0.7, 0.6),
        "d": (0.5, 0.5, 0.6, 0.5), "e": (0.4, 0.9, 0.3, 0.4)}


def table() -> ExpertiseTable:
    profiles = {}
    for b, (cd, cf, im, hi) in ROWS.items():
        profiles[b] = BackendProfile(
            backend_id=b, acc_dept=cd, acc_diff=cf,
            acc_ans_by_dept={d: (im if d is Department.InternalMedicine else 0.5) for d in Department},
            acc_ans_by_diff={l: (hi if l is Difficulty.High else 0.5) for l in Difficulty},
            support_by_dept={d: 10 for d in Department},
            support_by_diff={l: 30 for l in Difficulty},
        )
    return ExpertiseTable(corpus_id="sha256:scenario", profiles=profiles, created_at="2025-01-01T00:00:00+00:00")


def main(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for b, script in SCRIPTS.items():
        (out / f"{b}.json").write_text(json.dumps(script, indent=2) + "\n")
    pool = {"backends": [{"backend_id": b, "kind": "scripted", "script": f"{b}.json", "timeout": 5}
                         for b in SCRIPTS]}
    (out / "pool.json").write_text(json.dumps(pool, indent=2) + "\n")
    (out / "query.json").write_text(json.dumps(QUERY, indent=2) + "\n")
    save_table(table(), out / "table.json")
    (out / "config.json").write_text(json.dumps({"collaboration": {"layers": 2}}, indent=2) + "\n")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/scenario"))
