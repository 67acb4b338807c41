"""Offline experiments over scripted populations with known skills."""

from __future__ import annotations

import asyncio

from .collaboration import CollabConfig
from .evaluation import RunReport, evaluate
from .expertise import build_table, evaluate_pool
from .recruitment import RecruitmentConfig
from .synthetic import complementary_population, population_backends, synthetic_corpus

GAP_STRATEGIES = ("expertise_aware", "random_k", "task_top_k")


async def selection_gap(
    n_test: int = 500,
    valid_per_dept: int = 30,
    n_agents: int = 4,
    seed: int = 0,
    strategies=GAP_STRATEGIES,
) -> dict[str, RunReport]:
    """Compare recruitment strategies on a population whose skills are
    complementary by construction.

    Nine backends each master three departments and answer at chance
    elsewhere, so every department has exactly three experts. The table is
    profiled from a labeled validation corpus and the aggregator takes a
    plurality vote over the final layer.
    """
    valid = synthetic_corpus(valid_per_dept, prefix="val")
    per_dept = -(-n_test // 9)
    test = synthetic_corpus(per_dept, prefix="test")[:n_test]
    pool = population_backends(complementary_population(), valid + test)
    outcomes, _ = await evaluate_pool(valid, pool)
    table = build_table(outcomes, valid, created_at="synthetic")
    rc = RecruitmentConfig(n_agents=n_agents)
    cc = CollabConfig()
    reports = {}
    for s in strategies:
        reports[s], _ = await evaluate(test, table, pool, rc, cc, strategy=s, seed=seed, max_concurrency=64,
                                       variant=f"{s}-{n_agents}")
    return reports


def run_selection_gap(**kw) -> dict[str, RunReport]:
    return asyncio.run(selection_gap(**kw))
