import pytest

from expertroute.collaboration import FusedConfidence, JudgeReport, LayerState, AgentResponse, answer_prompt
from expertroute.errors import MissingBinding
from expertroute.parsing import Issue
from expertroute.prompts import TEMPLATE_NAMES, format_options, load_template, parse_template, render

from conftest import check_golden, make_query


EXPECTED_PLACEHOLDERS = {
    "classify": {"stem", "options", "departments"},
    "pseudo_label": {"stem", "options", "departments"},
    "answer_l1": {"stem", "options"},
    "answer_lk": {"stem", "options", "context"},
    "judge": {"stem", "options", "responses", "agent_ids"},
    "aggregate": {"stem", "options", "triples"},
}


@pytest.mark.parametrize("name", TEMPLATE_NAMES)
def test_templates_are_versioned(name):
    t = load_template(name)
    assert t.version == "1"
    assert t.placeholders == EXPECTED_PLACEHOLDERS[name]


def test_missing_binding():
    with pytest.raises(MissingBinding):
        render(load_template("answer_l1"), {"stem": "x"})


def test_extra_bindings_ignored():
    t = parse_template("t", "# version: 2\nHello $who")
    assert t.version == "2"
    assert render(t, {"who": "you", "unused": 1}) == "Hello you"


def test_format_options():
    assert format_options({"A": "one", "B": "two"}) == "A. one\nB. two"


def test_answer_l1_golden():
    query = make_query("q7", n=4, gold="B")
    template, prompt = answer_prompt(query, None)
    assert template == "answer_l1"
    assert "A. option A\nB. option B\nC. option C\nD. option D" in prompt
    check_golden("answer_l1_q7.txt", prompt)


def _response(bid, letter, conf):
    return AgentResponse(bid, 1, letter, f"because {bid}", conf, f"Answer: {letter}")


def test_answer_lk_golden_orders_by_fused_confidence():
    query = make_query("q7", n=4, gold="B")
    responses = (_response("x", "A", 0.9), _response("y", "B", 0.6), _response("z", "B", 0.7))
    fused = (FusedConfidence("x", 0.9, 0.3, 0.6), FusedConfidence("y", 0.6, 0.9, 0.75),
             FusedConfidence("z", 0.7, 0.5, 0.6))
    judge = JudgeReport("y", {"x": [Issue("unsupported", "no evidence cited")], "y": [], "z": []})
    state = LayerState(1, responses, (), fused, judge)
    template, prompt = answer_prompt(query, state)
    assert template == "answer_lk"
    # y (0.75) first; x and z tie at 0.60 and fall back to id order
    assert prompt.index("[Agent y]") < prompt.index("[Agent x]") < prompt.index("[Agent z]")
    assert "[Agent x] Answer: A | Overall confidence: 0.60 | Issues: unsupported: no evidence cited" in prompt
    check_golden("answer_lk_q7.txt", prompt)
