"""Regenerate the replay fixtures in this directory.

The endpoint is a deterministic stand-in so the recording is reproducible:
it overrides toward the highest-value visible object, answers the third call
with a transport error (exercising the retry path) and otherwise keeps.

    python3 tests/fixtures/record_fixtures.py
"""

import re
from pathlib import Path

from rrara.agents import AgentMemory
from rrara.harness import load_scenario, run_episode
from rrara.llm import LLMReviewer, RecordingTransport, Reply, TransportError
from rrara.reflector import build_context
from rrara.world import GoTo, action_literal, new_world, observe

HERE = Path(__file__).parent
EPISODE = dict(scenario="fig2_triage", agent="rrara:greedy", seed=0)


class StandIn:
    def __init__(self):
        self.calls = 0

    def complete(self, prompt: str) -> Reply:
        self.calls += 1
        if self.calls == 3:
            raise TransportError("timeout: read timed out", 0.2)
        objs = re.findall(r"id=(\d+) cell=\S+ value=(\S+)", prompt)
        current = re.search(r"CURRENT_ACTION: GOTO (\d+)", prompt)
        if objs and current:
            best = max(objs, key=lambda o: (float(o[1]), -int(o[0])))[0]
            if best != current.group(1):
                return Reply(f"Object {best} is worth more.\nVERDICT: OVERRIDE GOTO {best}", 0.45)
        return Reply("VERDICT: KEEP", 0.3)


class Canned:
    """Replies from a fixed list; exceptions in the list are raised."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)

    def complete(self, prompt: str) -> Reply:
        out = self.outcomes.pop(0)
        if isinstance(out, Exception):
            raise out
        return out


def fallback_context():
    return build_context(observe(new_world(load_scenario("fig2_triage"), 0)), GoTo(1), AgentMemory())


def verdict_line(v) -> str:
    action = None if v.action is None else action_literal(v.action)
    return f"{v.kind} {action} parse_failed={v.parse_failed} degraded={v.degraded} {v.latency:.3f}\n"


def record_fallbacks() -> None:
    path = HERE / "fallbacks.replay"
    path.write_text("# parse failure, retry then success, two transport failures\n")
    reviewer = LLMReviewer(RecordingTransport(Canned([
        Reply("I would rather not commit to anything.", 1.1),
        TransportError("HTTPStatusError: 503", 0.4),
        Reply("Thinking...\nVERDICT: OVERRIDE PICKUP 9", 2.35),
        TransportError("timeout: read timed out", 20.0),
        TransportError("timeout: read timed out", 20.0),
    ]), path))
    lines = [verdict_line(reviewer(fallback_context())) for _ in range(3)]
    (HERE / "fallbacks.verdicts").write_text("".join(lines))


def main() -> None:
    path = HERE / "fig2_llm.replay"
    path.write_text("# fig2_triage, rrara:greedy, seed 0\n")
    reviewer = LLMReviewer(RecordingTransport(StandIn(), path))
    log = run_episode(EPISODE["scenario"], EPISODE["agent"], EPISODE["seed"], reflector=reviewer)
    (HERE / "fig2_llm.verdicts").write_text(
        "".join(f"{e['verdict']} {e['action']} {e['latency']:.3f}\n" for e in log.of_kind("reflection_deliver"))
    )
    record_fallbacks()


if __name__ == "__main__":
    main()
