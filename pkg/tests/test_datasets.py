import json

import pytest

from expertroute.datasets import SCHEMAS, ingest
from expertroute.errors import SchemaViolation
from expertroute.taxonomy import QueryRecord, write_jsonl

from conftest import FIXTURES

DATA = FIXTURES / "datasets"


def medqa_shaped(path, n):
    with open(path, "w") as fh:
        for i in range(n):
            opts = {l: f"choice {l} of item {i}" for l in "ABCDE"}
            gold = "ABCDE"[i % 5]
            fh.write(json.dumps({"question": f"Vignette {i}?", "answer": opts[gold], "options": opts,
                                 "meta_info": "step1" if i % 2 else "step2&3", "answer_idx": gold}) + "\n")


def nejm_shaped(path, n):
    with open(path, "w") as fh:
        for i in range(n):
            fh.write(json.dumps({"id": f"nejm-{i:04d}", "question": f"Case {i}?",
                                 "options": [f"opt {k}" for k in range(5)], "answer": "ABCDE"[i % 5],
                                 "subject": ["Internal Medicine", "Surgery", "Pediatrics"][i % 3]}) + "\n")


def test_full_medqa_shaped_file(tmp_path):
    medqa_shaped(tmp_path / "test.jsonl", 1273)
    recs = ingest(tmp_path / "test.jsonl", "medqa")
    assert len(recs) == 1273
    assert recs[0].id == "medqa-1" and recs[7].gold == "C" and recs[0].subject == "step2&3"


def test_full_nejm_shaped_file(tmp_path):
    nejm_shaped(tmp_path / "nejm.jsonl", 655)
    recs = ingest(tmp_path / "nejm.jsonl", "nejm")
    assert len(recs) == 655 and len({r.id for r in recs}) == 655
    assert recs[1].options == {l: f"opt {k}" for k, l in enumerate("ABCDE")}


def test_medqa_missing_answer_idx_reports_line():
    with pytest.raises(SchemaViolation) as exc:
        ingest(DATA / "medqa_truncated.jsonl", "medqa")
    assert exc.value.line_no == 5 and "answer_idx" in exc.value.reason


def test_nejm_multi_letter_answer_reports_line():
    with pytest.raises(SchemaViolation) as exc:
        ingest(DATA / "nejm_truncated.jsonl", "nejm")
    assert exc.value.line_no == 3


def test_invalid_json_reports_line():
    with pytest.raises(SchemaViolation) as exc:
        ingest(DATA / "canonical_bad.jsonl", "canonical")
    assert exc.value.line_no == 2


def test_mmlupro_small():
    recs = ingest(DATA / "mmlupro_small.jsonl", "mmlupro")
    assert [r.id for r in recs] == ["7001", "7002", "7003"]
    assert len(recs[0].options) == 10 and recs[0].gold == "B"
    assert recs[0].subject == "clinical_knowledge" and recs[2].subject == "health"
    assert list(recs[2].options) == ["A", "B", "C"]


def test_ids_and_option_order_preserved(tmp_path):
    lines = (DATA / "medqa_truncated.jsonl").read_text().splitlines()[:2]
    (tmp_path / "m.jsonl").write_text("\n".join(lines) + "\n")
    recs = ingest(tmp_path / "m.jsonl", "medqa")
    src = [json.loads(l) for l in lines]
    assert [list(r.options.values()) for r in recs] == [list(s["options"].values()) for s in src]


def test_canonical_round_trip(tmp_path):
    recs = [QueryRecord("a", "s", {"A": "x", "B": "y"}, gold="B"), QueryRecord("b", "t", {"A": "x", "B": "y"})]
    write_jsonl(recs, tmp_path / "c.jsonl")
    assert ingest(tmp_path / "c.jsonl") == recs


def test_json_array_input(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps([{"id": "a", "stem": "s", "options": {"A": "x", "B": "y"}},
                                                 {"id": "b", "stem": "s", "options": {"A": "x"}}]))
    with pytest.raises(SchemaViolation) as exc:
        ingest(tmp_path / "c.json")
    assert exc.value.line_no == 2


def test_duplicate_ids(tmp_path):
    line = json.dumps({"id": "a", "stem": "s", "options": {"A": "x", "B": "y"}})
    (tmp_path / "d.jsonl").write_text(line + "\n" + line + "\n")
    with pytest.raises(SchemaViolation) as exc:
        ingest(tmp_path / "d.jsonl")
    assert exc.value.line_no == 2


def test_unknown_schema():
    assert set(SCHEMAS) == {"canonical", "medqa", "mmlupro", "nejm"}
    with pytest.raises(ValueError):
        ingest(DATA / "mmlupro_small.jsonl", "pubmedqa")
