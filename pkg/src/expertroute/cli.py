"""Command-line entry point.

Exit codes: 0 success (partial-coverage warnings go to stderr), 1 runtime
error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import config as cfgmod
from .backends import load_pool
from .collaboration import run_pipeline
from .config import RunConfig
from .datasets import SCHEMAS, ingest
from .errors import ConfigError, ExpertRouteError
from .evaluation import evaluate, parse_grid, run_ablation, summary_table
from .expertise import build_table, evaluate_pool, load_table, pseudo_label, render_grid, save_table
from .recruitment import recruit, select_classifier
from .taxonomy import QueryRecord

log = logging.getLogger("expertroute")

# flag dest -> dotted RunConfig key
_FLAG_KEYS = {
    "pool": "pool", "table": "table", "corpus": "corpus", "schema": "schema", "labeler": "labeler",
    "beta": "recruitment.beta", "agents": "recruitment.n_agents", "n_max": "recruitment.n_max",
    "classifier": "recruitment.classifier_override", "trust_labels": "recruitment.trust_labels",
    "alpha": "collaboration.alpha", "layers": "collaboration.layers",
    "aggregator": "collaboration.aggregator_policy", "aggregator_id": "collaboration.aggregator_id",
    "no_confidence": "collaboration.drop_confidence", "no_adversarial": "collaboration.drop_adversarial",
    "concurrency": "max_concurrency", "out": "out", "seed": "seed", "random_mode": "random_mode",
}


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration (flags override --config values)")
    g.add_argument("--config", help="JSON run configuration file")
    g.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")
    g.add_argument("--pool", help="pool config (JSON list of backend specs)")
    g.add_argument("--table", help="expertise table file")
    g.add_argument("--corpus", help="dataset file")
    g.add_argument("--schema", choices=SCHEMAS)
    g.add_argument("--labeler", help="backend id used for pseudo-labelling")
    g.add_argument("--beta", type=float)
    g.add_argument("--agents", type=int, help="number of recruited agents")
    g.add_argument("--n-max", dest="n_max", type=int)
    g.add_argument("--classifier", help="force this backend as the query classifier")
    g.add_argument("--trust-labels", action="store_const", const=True, default=None,
                   help="use labels already present on queries instead of classifying")
    g.add_argument("--alpha", type=float, help="weight of self-confidence in fusion")
    g.add_argument("--layers", type=int)
    g.add_argument("--aggregator", choices=("highest_expertise", "judge", "fixed"))
    g.add_argument("--aggregator-id", dest="aggregator_id")
    g.add_argument("--no-confidence", action="store_const", const=True, default=None)
    g.add_argument("--no-adversarial", action="store_const", const=True, default=None)
    g.add_argument("--concurrency", type=int, help="max queries in flight")
    g.add_argument("--out", help="output file (build-table) or directory")
    g.add_argument("--seed", type=int)
    g.add_argument("--random-mode", dest="random_mode", choices=("per_query", "per_run"))
    g.add_argument("-v", "--verbose", action="count", default=0)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="expertroute", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("build-table", parents=[common], help="profile the pool into an expertise table")
    p = sub.add_parser("classify", parents=[common], help="classify queries and show recruitment scores")
    p.add_argument("--query", required=True, help="query JSON/JSONL file, or - for stdin")
    p = sub.add_parser("answer", parents=[common], help="run the full pipeline on queries")
    p.add_argument("--query", required=True, help="query JSON/JSONL file, or - for stdin")
    sub.add_parser("evaluate", parents=[common], help="evaluate over a corpus")
    p = sub.add_parser("ablate", parents=[common], help="run an ablation grid over a corpus")
    p.add_argument("--grid", required=True, help="preset, filter expression, or JSON file")
    sub.add_parser("inspect-table", parents=[common], help="print a saved table as a grid")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    file_values = cfgmod.load_config_file(args.config) if args.config else None
    overrides = {key: getattr(args, dest, None) for dest, key in _FLAG_KEYS.items()}
    return cfgmod.resolve(file_values, overrides)


def _need(value: str | None, what: str) -> str:
    if not value:
        raise ConfigError(f"missing required setting: {what}")
    return value


def _need_file(value: str | None, what: str) -> Path:
    p = Path(_need(value, what))
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _read_queries(src: str) -> list[QueryRecord]:
    text = sys.stdin.read() if src == "-" else _need_file(src, "query file").read_text("utf-8")
    text = text.strip()
    try:
        if text.startswith("{") and "\n{" not in text:
            objs = [json.loads(text)]
        elif text.startswith("["):
            objs = json.loads(text)
        else:
            objs = [json.loads(line) for line in text.splitlines() if line.strip()]
        return [QueryRecord.from_json(o) for o in objs]
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad query input: {exc}") from None


def _load_corpus(cfg: RunConfig) -> list[QueryRecord]:
    path = _need_file(cfg.corpus, "corpus")
    return ingest(path, cfg.schema)


def cmd_build_table(cfg: RunConfig, args) -> int:
    corpus = _load_corpus(cfg)
    pool = load_pool(_need_file(cfg.pool, "pool config"))
    out = Path(_need(cfg.out, "--out table path"))
    labeler = None
    if cfg.labeler:
        if cfg.labeler not in pool:
            raise ConfigError(f"labeler {cfg.labeler!r} is not in the pool")
        labeler = pool.pop(cfg.labeler)

    async def go():
        labeled = await pseudo_label(corpus, labeler)
        outcomes, gaps = await evaluate_pool(labeled, pool)
        return labeled, outcomes, gaps

    labeled, outcomes, gaps = asyncio.run(go())
    table = build_table(outcomes, labeled)
    save_table(table, out)
    with open(out.with_suffix(".outcomes.jsonl"), "w", encoding="utf-8") as fh:
        for o in outcomes:
            fh.write(json.dumps(o.to_json(), ensure_ascii=False) + "\n")
    if gaps:
        print(f"warning: partial coverage, {len(gaps)} (backend, query) pairs produced no outcome:",
              file=sys.stderr)
        for g in gaps:
            print(f"  {g.backend_id} {g.query_id}: {g.reason}", file=sys.stderr)
    print(f"wrote {out} ({len(table.profiles)} backends, {len(labeled)} queries)")
    return 0


def _table_and_pool(cfg: RunConfig, need_pool: bool = True):
    table = load_table(_need_file(cfg.table, "expertise table"))
    pool = load_pool(_need_file(cfg.pool, "pool config")) if need_pool or cfg.pool else None
    return table, pool


def cmd_classify(cfg: RunConfig, args) -> int:
    queries = _read_queries(args.query)
    trusted = cfg.recruitment.trust_labels and all(q.labeled for q in queries)
    table, pool = _table_and_pool(cfg, need_pool=not trusted)
    cid = cfg.recruitment.classifier_override or select_classifier(table)
    if pool is not None and cid not in pool:
        raise ConfigError(f"classifier {cid!r} is not in the pool")
    classifier = pool[cid] if pool is not None else None

    async def go():
        return [await recruit(table, q, classifier, cfg.recruitment) for q in queries]

    for r in asyncio.run(go()):
        print(json.dumps(r.to_json()))
    return 0


def cmd_answer(cfg: RunConfig, args) -> int:
    queries = _read_queries(args.query)
    table, pool = _table_and_pool(cfg)
    out = Path(cfg.out) if cfg.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)

    async def go():
        sem = asyncio.Semaphore(cfg.max_concurrency)

        async def one(q):
            async with sem:
                return await run_pipeline(q, table, pool, cfg.recruitment, cfg.collaboration)

        return await asyncio.gather(*(one(q) for q in queries))

    for tr in asyncio.run(go()):
        if out:
            (out / f"{tr.query_id}.json").write_text(tr.dumps(), encoding="utf-8")
        print(json.dumps({"query_id": tr.query_id, "answer": tr.final.answer,
                          "recruited": list(tr.recruitment.recruited), "layers": len(tr.layers),
                          "fallback": tr.final.fallback}))
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    corpus = _load_corpus(cfg)
    table, pool = _table_and_pool(cfg)
    report, _ = asyncio.run(evaluate(
        corpus, table, pool, cfg.recruitment, cfg.collaboration, seed=cfg.seed,
        random_mode=cfg.random_mode, max_concurrency=cfg.max_concurrency, out_dir=cfg.out))
    print(report.render_table())
    failed = sum(q.failed for q in report.per_query)
    if failed:
        print(f"warning: {failed} queries failed and were graded incorrect", file=sys.stderr)
    return 0


def cmd_ablate(cfg: RunConfig, args) -> int:
    grid = parse_grid(args.grid)
    corpus = _load_corpus(cfg)
    table, pool = _table_and_pool(cfg)
    reports = asyncio.run(run_ablation(
        grid, corpus, table, pool, cfg.recruitment, cfg.collaboration, seed=cfg.seed,
        random_mode=cfg.random_mode, max_concurrency=cfg.max_concurrency, out_dir=cfg.out))
    text = summary_table(reports)
    print(text)
    if cfg.out:
        Path(cfg.out, "summary.txt").write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_inspect_table(cfg: RunConfig, args) -> int:
    table = load_table(_need_file(cfg.table, "expertise table"))
    sys.stdout.write(render_grid(table))
    return 0


COMMANDS = {
    "build-table": cmd_build_table,
    "classify": cmd_classify,
    "answer": cmd_answer,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "inspect-table": cmd_inspect_table,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.print_config:
            sys.stdout.write(cfg.dumps())
            return 0
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ExpertRouteError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
