import dataclasses
import functools
import random

import pytest
from hypothesis import given, settings, strategies as st

from expertroute.backends import ScriptedBackend
from expertroute.errors import ClassificationFailure, ConfigError, EmptyTable
from expertroute.expertise import ExpertiseTable
from expertroute.recruitment import (
    TRUSTED_LABELS, RecruitmentConfig, choose, classify_query, recruit, score_backends, select_classifier,
    task_level_ranking,
)
from expertroute.taxonomy import ClassificationPrediction, Department, Difficulty

from conftest import make_query, random_profile, random_table, run

GRID = [0.0, 0.25, 0.5, 0.6, 0.7, 0.75, 1.0]
CLASSES = [ClassificationPrediction(d, l) for d in Department for l in Difficulty]


def table_of(**profiles):
    return ExpertiseTable(corpus_id="c", created_at="t", profiles=profiles)


def prof(bid, acc_dept=0.5, acc_diff=0.5, dept_cell=0.5, diff_cell=0.5):
    p = random_profile(random.Random(0), bid)
    return dataclasses.replace(
        p, acc_dept=acc_dept, acc_diff=acc_diff,
        acc_ans_by_dept={d: dept_cell for d in Department}, acc_ans_by_diff={l: diff_cell for l in Difficulty})


def scripted_classifier(reply):
    return ScriptedBackend.from_script("clf", [{"match": {"template": "classify"}, "reply": reply}])


def naive_scores(table, cls, beta):
    out = {}
    for bid in table.profiles:
        p = table.profiles[bid]
        dept_cell = p.acc_ans_by_dept[cls.dept]
        diff_cell = p.acc_ans_by_diff[cls.diff]
        out[bid] = beta * dept_cell + (1 - beta) * diff_cell
    return out


def full_sort_oracle(scores, n):
    def cmp(a, b):
        if scores[a] != scores[b]:
            return -1 if scores[a] > scores[b] else 1
        return -1 if a < b else (1 if a > b else 0)
    return sorted(scores, key=functools.cmp_to_key(cmp))[:n]


# classifier selection


def test_select_classifier_examples():
    assert select_classifier(table_of(a=prof("a", 0.8, 0.7), b=prof("b", 0.9, 0.5))) == "a"
    assert select_classifier(table_of(z=prof("z"))) == "z"
    assert select_classifier(table_of(b=prof("b", 0.7, 0.5), a=prof("a", 0.6, 0.6))) == "a"


def test_select_classifier_empty():
    with pytest.raises(EmptyTable):
        select_classifier(table_of())


def test_select_classifier_pairwise_oracle():
    rng = random.Random(11)
    for _ in range(1000):
        table = random_table(rng, rng.randint(1, 8), GRID)
        w = select_classifier(table)
        sw = table.profiles[w].acc_dept + table.profiles[w].acc_diff
        for b, p in table.profiles.items():
            if b != w:
                s = p.acc_dept + p.acc_diff
                assert sw > s or (sw == s and w < b)


@given(st.integers(0, 10_000), st.sampled_from([0.5, 0.25, 0.125]))
def test_classifier_argmax_invariance(seed, c):
    # powers of two scale exactly, so ties survive the scaling
    table = random_table(random.Random(seed), 6, GRID)
    scaled = table_of(**{b: dataclasses.replace(p, acc_dept=p.acc_dept * c, acc_diff=p.acc_diff * c)
                         for b, p in table.profiles.items()})
    assert select_classifier(scaled) == select_classifier(table)


# scoring


def test_score_example():
    t = table_of(a=prof("a", dept_cell=0.8, diff_cell=0.6))
    cls = ClassificationPrediction(Department.Neurology, Difficulty.High)
    assert score_backends(t, cls, RecruitmentConfig())["a"] == pytest.approx(0.74, abs=1e-12)
    assert score_backends(t, cls, RecruitmentConfig(beta=1.0))["a"] == 0.8


def test_scores_match_straight_line_oracle():
    rng = random.Random(5)
    for _ in range(1000):
        table = random_table(rng, 8)
        cls = rng.choice(CLASSES)
        beta = rng.random()
        got = score_backends(table, cls, RecruitmentConfig(beta=beta))
        exp = naive_scores(table, cls, beta)
        assert got.keys() == exp.keys()
        assert all(abs(got[b] - exp[b]) <= 1e-12 for b in exp)


@given(st.integers(0, 10_000), st.floats(0, 1), st.sampled_from(CLASSES))
def test_scores_affine_in_beta(seed, beta, cls):
    table = random_table(random.Random(seed), 5)
    s0, s1, sb = (score_backends(table, cls, x) for x in (0.0, 1.0, beta))
    for b in table.profiles:
        assert sb[b] == pytest.approx(beta * s1[b] + (1 - beta) * s0[b], abs=1e-12)


# top-N


def test_top_n_matches_full_sort_oracle():
    rng = random.Random(9)
    for _ in range(1000):
        table = random_table(rng, rng.randint(1, 13), GRID)
        cls = rng.choice(CLASSES)
        n = rng.randint(1, 6)
        scores = score_backends(table, cls, 0.7)
        picked = choose("expertise_aware", scores, min(n, len(scores)))
        assert list(picked) == full_sort_oracle(scores, n)


def test_tie_at_the_cut_goes_to_smaller_id():
    t = table_of(c=prof("c", dept_cell=0.9), b=prof("b", dept_cell=0.5), a=prof("a", dept_cell=0.5))
    cls = ClassificationPrediction(Department.Surgery, Difficulty.Low)
    assert choose("expertise_aware", score_backends(t, cls), 2) == ("c", "a")


@given(st.integers(0, 10_000), st.sampled_from(CLASSES), st.integers(1, 8))
def test_selection_optimality(seed, cls, n):
    table = random_table(random.Random(seed), 8, GRID)
    scores = score_backends(table, cls)
    picked = choose("expertise_aware", scores, n)
    rest = [b for b in scores if b not in picked]
    if rest:
        worst = min(picked, key=lambda b: (scores[b], [-ord(ch) for ch in b]))
        assert all(scores[worst] > scores[r] or (scores[worst] == scores[r] and worst < r) for r in rest)
    assert [scores[b] for b in picked] == sorted((scores[b] for b in picked), reverse=True)


@settings(deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(CLASSES), st.integers(1, 6), st.floats(0, 1))
def test_raising_cells_keeps_backend_recruited(seed, cls, n, bump):
    table = random_table(random.Random(seed), 8, GRID)
    picked = choose("expertise_aware", score_backends(table, cls), n)
    b = picked[-1]
    p = table.profiles[b]
    raised = dataclasses.replace(
        p,
        acc_ans_by_dept={**p.acc_ans_by_dept, cls.dept: p.acc_ans_by_dept[cls.dept] + bump * (1 - p.acc_ans_by_dept[cls.dept])},
        acc_ans_by_diff={**p.acc_ans_by_diff, cls.diff: p.acc_ans_by_diff[cls.diff] + bump * (1 - p.acc_ans_by_diff[cls.diff])},
    )
    table2 = table_of(**{**table.profiles, b: raised})
    assert b in choose("expertise_aware", score_backends(table2, cls), n)


# classification and recruit


def test_classify_query_scripted():
    q = make_query()
    clf = scripted_classifier("Department: Neurology\nDifficulty: high")
    assert run(classify_query(q, clf)) == ClassificationPrediction(Department.Neurology, Difficulty.High)


def test_classify_query_alias_path():
    clf = scripted_classifier("Dept: Cardiology\nDifficulty: M")
    assert run(classify_query(make_query(), clf)).dept is Department.InternalMedicine


def test_trusted_labels_skip_the_backend():
    q = make_query(dept=Department.Oncology, diff=Difficulty.Low)
    clf = scripted_classifier("Department: Neurology\nDifficulty: high")
    got = run(classify_query(q, clf, trust_labels=True))
    assert got == ClassificationPrediction(Department.Oncology, Difficulty.Low) and clf.calls == 0


def test_classification_failure_after_retries():
    clf = scripted_classifier("no clue")
    with pytest.raises(ClassificationFailure):
        run(classify_query(make_query(), clf, max_attempts=3))
    assert clf.calls == 3


def test_recruit_thirteen_backends():
    table = random_table(random.Random(3), 13, GRID)
    clf = scripted_classifier("Department: Pediatrics\nDifficulty: low")
    res = run(recruit(table, make_query(), clf, RecruitmentConfig(n_agents=4)))
    assert len(res.recruited) == 4
    assert [res.scores[b] for b in res.recruited] == sorted((res.scores[b] for b in res.recruited), reverse=True)
    assert res.classifier_id == "clf"


def test_recruit_saturates_and_includes_classifier():
    table = table_of(x=prof("x", 0.9, 0.9, 0.1), y=prof("y", dept_cell=0.8), z=prof("z", dept_cell=0.3))
    clf = scripted_classifier("Department: Su\nDifficulty: L")
    res = run(recruit(table, make_query(), clf, RecruitmentConfig(n_agents=10)))
    assert res.recruited == ("y", "z", "x")


def test_recruit_trusted_labels_marks_classifier():
    table = table_of(x=prof("x"))
    q = make_query(dept=Department.Surgery, diff=Difficulty.High)
    res = run(recruit(table, q, None, RecruitmentConfig(trust_labels=True, n_agents=1)))
    assert res.classifier_id == TRUSTED_LABELS


def test_recruit_is_deterministic():
    table = random_table(random.Random(4), 9, GRID)
    clf = scripted_classifier("Department: Oncology\nDifficulty: medium")
    assert run(recruit(table, make_query(), clf)) == run(recruit(table, make_query(), clf))


def test_n_max_caps_recruits():
    table = random_table(random.Random(4), 9, GRID)
    res = run(recruit(table, make_query(dept=Department.Surgery, diff=Difficulty.Low), None,
                      RecruitmentConfig(n_agents=4, n_max=4, trust_labels=True)))
    assert len(res.recruited) == 4
    with pytest.raises(ConfigError):
        RecruitmentConfig(n_agents=5, n_max=4)


def test_baseline_strategies():
    table = random_table(random.Random(8), 9, GRID)
    scores = score_backends(table, CLASSES[0])
    a = choose("random_k", scores, 3, rng=random.Random(7))
    assert a == choose("random_k", scores, 3, rng=random.Random(7)) and len(set(a)) == 3
    top = choose("task_top_k", scores, 3, table=table)
    assert set(top) == set(task_level_ranking(table)[:3])
    with pytest.raises(ConfigError):
        choose("vibes", scores, 3)
