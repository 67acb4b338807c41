"""Run the full pipeline over HTTP against a local chat-completions stub.

    python scripts/demo_http.py

Starts a loopback stub, points four http backends at it (distinguished only
by model name), builds a small expertise table, and answers one query. Useful
to see the wire format and the transcript without any real model server.
"""

import asyncio
import re
import sys
from dataclasses import replace

from expertroute.backends import BackendSpec, HttpBackend
from expertroute.collaboration import run_pipeline
from expertroute.expertise import build_table, evaluate_pool
from expertroute.stub import ChatStub
from expertroute.synthetic import synthetic_corpus

SKILL = {"m-good": 1.0, "m-fair": 0.75, "m-weak": 0.5, "m-poor": 0.25}


def reply(body: dict) -> str:
    prompt = body["messages"][-1]["content"]
    model = body["model"]
    if "Reply with exactly two lines" in prompt:
        dept = re.search(r"Synthetic (.+?) case", prompt)
        return f"Department: {dept.group(1) if dept else 'Internal Medicine'}\nDifficulty: medium"
    if "Issues[<agent id>]" in prompt:
        return "All candidate answers are consistent; no factual errors."
    if "Final Answer:" in prompt:
        letters = re.findall(r"\] Answer: ([A-J])", prompt)
        return f"Final Answer: {letters[0]}\nRationale: took the most confident expert."
    # every model knows the answer is in the last option line with probability SKILL
    options = re.findall(r"^([A-J])\. ", prompt, re.M)
    good = (sum(map(ord, prompt)) % 100) / 100 < SKILL[model]
    return f"Answer: {options[-1] if good else options[0]}\nConfidence: {int(SKILL[model] * 90)}\nRationale: demo"


async def demo() -> None:
    corpus = [replace(r, gold=r.letters[-1]) for r in synthetic_corpus(4, prefix="demo")]
    with ChatStub(reply=reply) as stub:
        pool = {m: HttpBackend(BackendSpec(backend_id=m, kind="http", endpoint=stub.url, model_name=m,
                                           max_in_flight=4)) for m in SKILL}
        outcomes, _ = await evaluate_pool(corpus[:-1], pool)
        table = build_table(outcomes, corpus[:-1])
        transcript = await run_pipeline(corpus[-1], table, pool)
        print(f"stub served {len(stub.requests)} requests, peak concurrency {stub.max_concurrency}",
              file=sys.stderr)
    sys.stdout.write(transcript.dumps())


if __name__ == "__main__":
    asyncio.run(demo())
