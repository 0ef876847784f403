"""Asynchronous review of the action the reflex just started.

A reviewer turns a :class:`ReflectionContext` into a Keep / Override verdict.
The :class:`ReflectorSession` runs reviews off the frame loop and hands
verdicts back through :meth:`ReflectorSession.poll`. Three reviewers ship:
a configurable mock, a planning oracle, and a chat-completion client (see
:mod:`rrara.llm`).
"""

from __future__ import annotations

import itertools
import logging
import queue
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .planning import MapView, best_plan, intact_targets, spread_deadlines
from .tcm import latency_to_frames
from .world import (
    Action,
    DropAtShelter,
    GoTo,
    GoToCell,
    Observation,
    PickUp,
    Status,
    UsageError,
    action_literal,
    action_target,
    chebyshev,
    parse_action,
)

log = logging.getLogger(__name__)

KEEP = "keep"
OVERRIDE = "override"
HISTORY = 8
# seconds a mock or oracle review takes, in virtual time
REVIEW_LATENCY = 0.5


@dataclass(frozen=True)
class ContextObject:
    id: int
    position: tuple[int, int]
    value: float
    distance: Optional[int]
    on_fire_distance: Optional[int]
    status: Status


@dataclass(frozen=True)
class ReflectionContext:
    frame: int
    action: Action
    target_id: Optional[int]
    target_value: Optional[float]
    target_distance: Optional[int]
    frames_remaining: int
    prior_actions: tuple[str, ...]
    objects: tuple[ContextObject, ...]
    carried: Optional[int]
    shelter_distance: Optional[int]
    observation: Optional[Observation] = field(default=None, compare=False, repr=False)

    def to_text(self) -> str:
        def num(x) -> str:
            return "none" if x is None else f"{x:g}" if isinstance(x, float) else str(x)

        lines = [
            f"FRAME: {self.frame}",
            f"CARRYING: {num(self.carried)}",
            f"SHELTER_DISTANCE: {num(self.shelter_distance)}",
            f"CURRENT_ACTION: {action_literal(self.action)}",
        ]
        if self.target_id is not None:
            lines.append(
                f"CURRENT_TARGET: id={self.target_id} value={num(self.target_value)} "
                f"distance={num(self.target_distance)} frames_remaining={self.frames_remaining}"
            )
        else:
            lines.append(f"CURRENT_TARGET: none frames_remaining={self.frames_remaining}")
        lines.append("PRIOR_ACTIONS: " + ("; ".join(self.prior_actions) or "none"))
        if not self.objects:
            lines.append("OBJECTS: none")
        else:
            lines.append("OBJECTS:")
            for o in self.objects:
                lines.append(
                    f"  id={o.id} cell={o.position[0]},{o.position[1]} value={num(o.value)} "
                    f"distance={num(o.distance)} fire_distance={num(o.on_fire_distance)} "
                    f"status={o.status.value}"
                )
        return "\n".join(lines)


def build_context(obs: Observation, action: Action, mem) -> ReflectionContext:
    view = MapView(obs)
    t = obs.timing
    objects = tuple(
        ContextObject(
            o.id, o.position, o.value, view.from_agent(o.position),
            o.on_fire_distance, o.status,
        )
        for o in sorted(obs.visible_objects, key=lambda o: o.id)
    )
    target = action_target(action)
    tobj = next((o for o in objects if o.id == target), None)
    if isinstance(action, GoTo):
        frames = (tobj.distance or 0) * t.frames_per_cell if tobj else 0
    elif isinstance(action, GoToCell):
        frames = (view.from_agent(action.cell) or 0) * t.frames_per_cell
    elif isinstance(action, PickUp):
        frames = t.pickup_frames
    elif isinstance(action, DropAtShelter):
        frames = t.drop_frames
    else:
        frames = 1
    leg = view.nearest_shelter(obs.position)
    prior = tuple(action_literal(d.action) for d in list(mem.decisions)[-HISTORY:]) if mem else ()
    return ReflectionContext(
        frame=obs.frame,
        action=action,
        target_id=target,
        target_value=tobj.value if tobj else None,
        target_distance=tobj.distance if tobj else None,
        frames_remaining=frames,
        prior_actions=prior,
        objects=objects,
        carried=obs.carried,
        shelter_distance=leg[0] if leg else None,
        observation=obs,
    )


@dataclass(frozen=True)
class ReflectionVerdict:
    kind: str
    action: Optional[Action] = None
    rationale: str = ""
    source: str = "mock"
    latency: float = 0.0
    parse_failed: bool = False
    degraded: bool = False
    submit_frame: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind not in (KEEP, OVERRIDE):
            raise ValueError(f"bad verdict kind {self.kind!r}")
        if self.kind == OVERRIDE and self.action is None:
            raise ValueError("override verdict needs an action")
        if self.latency < 0:
            raise ValueError("latency must be >= 0")

    @property
    def is_override(self) -> bool:
        return self.kind == OVERRIDE


# ---------------------------------------------------------------- prompt


PREAMBLE = """\
You are the reviewer for a rescue robot working in a burning building.
Fire spreads between neighbouring cells and an object burns once the fire in
its cell dies down. The robot carries one object at a time and saves it by
dropping it inside the shelter. It has just started the action below.
Decide whether that action is still the best use of its time.
Reply with reasoning if you like, but end with exactly one verdict line."""

GRAMMAR = """\
Answer format (one line):
VERDICT: KEEP
VERDICT: OVERRIDE <action>
where <action> is one of: GOTO <id> | PICKUP <id> | DROP | GOTO_CELL <row> <col>"""


def build_prompt(ctx: ReflectionContext) -> str:
    return f"{PREAMBLE}\n\n{ctx.to_text()}\n\n{GRAMMAR}\n"


_VERDICT_LINE = re.compile(r"^\s*VERDICT\s*:\s*(.*?)\s*$", re.IGNORECASE)
_OVERRIDABLE = (GoTo, PickUp, DropAtShelter, GoToCell)


def parse_verdict(text: str, source: str = "llm", latency: float = 0.0) -> ReflectionVerdict:
    """Read the last ``VERDICT:`` line of a reply.

    Anything unreadable becomes Keep with ``parse_failed`` set, so a garbled
    reply can never interrupt a running action.
    """
    body = None
    for line in text.splitlines():
        m = _VERDICT_LINE.match(line)
        if m:
            body = m.group(1)
    if body is not None:
        head, _, rest = body.partition(" ")
        if head.upper() == KEEP.upper() and not rest.strip():
            return ReflectionVerdict(KEEP, rationale=text.strip(), source=source, latency=latency)
        if head.upper() == OVERRIDE.upper():
            try:
                action = parse_action(rest)
            except ValueError:
                action = None
            if isinstance(action, _OVERRIDABLE):
                return ReflectionVerdict(
                    OVERRIDE, action, rationale=text.strip(), source=source, latency=latency
                )
    log.warning("unparseable reflector reply: %r", text[:200])
    return ReflectionVerdict(
        KEEP, rationale="parse failure", source=source, latency=latency, parse_failed=True
    )


# ---------------------------------------------------------------- reviewers

Reviewer = Callable[[ReflectionContext], ReflectionVerdict]


def _approach(obj: ContextObject, ctx: ReflectionContext) -> Action:
    pos = ctx.observation.position if ctx.observation else None
    if pos is not None and chebyshev(pos, obj.position) <= 1:
        return PickUp(obj.id)
    return GoTo(obj.id)


class MockReviewer:
    """Deterministic test double.

    ``mode`` is ``keep`` (always Keep), ``value`` (switch to the best
    value / (distance + 1) object, ties to the higher value then the lower
    id) or ``script`` (replay ``script`` verdicts in order, then Keep).
    """

    source = "mock"

    def __init__(self, mode: str = "keep", latency: float = REVIEW_LATENCY, script: Sequence = ()):
        if mode not in ("keep", "value", "script"):
            raise ValueError(f"unknown mock mode {mode!r}")
        self.mode = mode
        self.latency = latency
        self._script = [s if isinstance(s, ReflectionVerdict) else self._coerce(s) for s in script]
        self._cursor = 0

    def _coerce(self, item) -> ReflectionVerdict:
        text = item if item.upper().startswith("VERDICT") else f"VERDICT: {item}"
        v = parse_verdict(text, source=self.source)
        if v.parse_failed:
            raise ValueError(f"bad scripted verdict {item!r}")
        return v

    def __call__(self, ctx: ReflectionContext) -> ReflectionVerdict:
        if self.mode == "script":
            if self._cursor < len(self._script):
                v = self._script[self._cursor]
                self._cursor += 1
                return replace(v, source=self.source, latency=self.latency, rationale="scripted")
            return ReflectionVerdict(KEEP, rationale="script exhausted", source=self.source, latency=self.latency)
        if self.mode == "value" and ctx.carried is None:
            pool = [o for o in ctx.objects if o.status is Status.INTACT and o.distance is not None]
            if pool:
                best = min(
                    pool,
                    key=lambda o: (-Fraction(o.value) / (o.distance + 1), -o.value, o.id),
                )
                if best.id != ctx.target_id:
                    return ReflectionVerdict(
                        OVERRIDE, _approach(best, ctx),
                        rationale=f"object {best.id} is worth more per step",
                        source=self.source, latency=self.latency,
                    )
        return ReflectionVerdict(KEEP, rationale="mock", source=self.source, latency=self.latency)


class OracleReviewer:
    """Planning reviewer with a fire-front estimate.

    Overrides only when the best rescue plan saves strictly more value than
    the best plan that starts with the reflex's current target.
    """

    source = "oracle"

    def __init__(self, latency: float = REVIEW_LATENCY, depth: int = 3):
        self.latency = latency
        self.depth = depth

    def _keep(self, why: str) -> ReflectionVerdict:
        return ReflectionVerdict(KEEP, rationale=why, source=self.source, latency=self.latency)

    def __call__(self, ctx: ReflectionContext) -> ReflectionVerdict:
        obs = ctx.observation
        if obs is None or ctx.carried is not None:
            return self._keep("nothing to review")
        view = MapView(obs)
        targets = [o for o, _ in intact_targets(obs, view)]
        if not targets:
            return self._keep("no candidates")
        deadlines = spread_deadlines(obs)
        best = best_plan(obs, targets, self.depth, deadlines, view=view)
        if best.first is None or best.first == ctx.target_id:
            return self._keep("current target is on the best plan")
        if ctx.target_id is not None and any(o.id == ctx.target_id for o in targets):
            pinned = best_plan(obs, targets, self.depth, deadlines, first=ctx.target_id, view=view)
            if best.value <= pinned.value:
                return self._keep("no value gained by switching")
        obj = next(o for o in ctx.objects if o.id == best.first)
        return ReflectionVerdict(
            OVERRIDE, _approach(obj, ctx),
            rationale=f"plan {list(best.order)} saves {best.value:g}",
            source=self.source, latency=self.latency,
        )


def _safe_review(reviewer: Reviewer, ctx: ReflectionContext) -> ReflectionVerdict:
    try:
        return reviewer(ctx)
    except Exception as exc:  # fail-safe: reviewer failures never reach the frame loop
        log.warning("reviewer failed: %s", exc)
        return ReflectionVerdict(
            KEEP, rationale=f"reviewer error: {exc}",
            source=getattr(reviewer, "source", "unknown"), degraded=True,
        )


# ---------------------------------------------------------------- session


@dataclass
class _Pending:
    handle: int
    submit_frame: int
    due_frame: Optional[int] = None
    verdict: Optional[ReflectionVerdict] = None


class ReflectorSession:
    """At most one review in flight; verdicts are delivered exactly once.

    In ``virtual`` mode the verdict is computed at submit time and held back
    until ``submit_frame + latency_to_frames(latency)``. In ``wallclock`` mode
    the review runs on a worker thread and is delivered at the first poll
    after it finishes.
    """

    def __init__(self, reviewer: Reviewer, fps: float, mode: str = "virtual"):
        if mode not in ("virtual", "wallclock"):
            raise ValueError(f"unknown session mode {mode!r}")
        self.reviewer = reviewer
        self.fps = fps
        self.mode = mode
        self.closed = False
        self._pending: Optional[_Pending] = None
        self._ids = itertools.count(1)
        self._results: "queue.SimpleQueue[tuple[int, ReflectionVerdict]]" = queue.SimpleQueue()
        self._executor: Optional[ThreadPoolExecutor] = None
        if mode == "wallclock":
            self._executor = ThreadPoolExecutor(max_workers=1, thread_name_prefix="reflector")

    @property
    def pending(self) -> bool:
        return self._pending is not None

    def submit(self, ctx: ReflectionContext) -> int:
        if self.closed:
            raise UsageError("session is closed")
        if self._pending is not None:
            raise UsageError("a reflection is already in flight; cancel it first")
        handle = next(self._ids)
        pending = _Pending(handle, ctx.frame)
        if self._executor is None:
            verdict = _safe_review(self.reviewer, ctx)
            pending.verdict = verdict
            pending.due_frame = ctx.frame + latency_to_frames(verdict.latency, self.fps)
        else:
            def work() -> None:
                self._results.put((handle, _safe_review(self.reviewer, ctx)))

            self._executor.submit(work)
        self._pending = pending
        return handle

    def poll(self, frame: int) -> Optional[ReflectionVerdict]:
        p = self._pending
        if p is None:
            return None
        if self._executor is not None:
            while True:
                try:
                    handle, verdict = self._results.get_nowait()
                except queue.Empty:
                    return None
                if handle == p.handle:
                    p.verdict = verdict
                    break
        elif frame < p.due_frame:
            return None
        self._pending = None
        return replace(p.verdict, submit_frame=p.submit_frame)

    def cancel(self) -> bool:
        """Drop the in-flight review, if any. Its verdict is never delivered."""
        had = self._pending is not None
        self._pending = None
        return had

    def close(self) -> None:
        self.cancel()
        self.closed = True
        if self._executor is not None:
            self._executor.shutdown(wait=False, cancel_futures=True)
