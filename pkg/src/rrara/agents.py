"""Decision policies: reflex baselines, a slow planner, and the reflex +
asynchronous reflector composition."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import TYPE_CHECKING, Callable, Optional

from .planning import MapView, best_plan, intact_targets, no_spread_deadlines
from .tcm import LatencySource
from .world import (
    Action,
    DropAtShelter,
    GoTo,
    GoToCell,
    Idle,
    Observation,
    PickUp,
    VisibleObject,
    action_target,
    chebyshev,
)

if TYPE_CHECKING:
    from .reflector import ReflectionVerdict, ReflectorSession

MEMORY_SIZE = 32
AGENT_NAMES = ("rule", "greedy", "deliberative", "rrara:rule", "rrara:greedy")
DEFAULT_DELIBERATIVE_LATENCY = 3.26
DEFAULT_DEPTH = 3


@dataclass(frozen=True)
class Decision:
    action: Action
    t_inf: float = 0.0
    rationale: str = ""
    degraded: bool = False

    def __post_init__(self) -> None:
        if self.t_inf < 0:
            raise ValueError("t_inf must be >= 0")


@dataclass
class AgentMemory:
    size: int = MEMORY_SIZE
    decisions: deque = field(default_factory=deque)
    verdicts: deque = field(default_factory=deque)
    objective: Optional[int] = None

    def __post_init__(self) -> None:
        self.decisions = deque(self.decisions, maxlen=self.size)
        self.verdicts = deque(self.verdicts, maxlen=self.size)

    def remember(self, decision: Decision) -> None:
        self.decisions.append(decision)
        self.objective = action_target(decision.action)

    def remember_verdict(self, verdict: "ReflectionVerdict") -> None:
        self.verdicts.append(verdict)


Policy = Callable[[Observation, AgentMemory], Decision]


def _approach(obj: VisibleObject, obs: Observation) -> Action:
    if chebyshev(obs.position, obj.position) <= 1:
        return PickUp(obj.id)
    return GoTo(obj.id)


def _deliver(obs: Observation, view: MapView) -> Decision:
    if obs.position in obs.shelter:
        return Decision(DropAtShelter(), rationale="drop carried object")
    leg = view.nearest_shelter(obs.position)
    if leg is None:
        return Decision(Idle(), rationale="shelter unreachable")
    return Decision(GoToCell(leg[1]), rationale="carry to shelter")


def _wander(obs: Observation, view: MapView) -> Decision:
    center = obs.center
    if obs.position != center and view.from_agent(center) is not None:
        return Decision(GoToCell(center), rationale="nothing visible, head to centre")
    return Decision(Idle(), rationale="nothing visible")


def decide_rule(obs: Observation, mem: AgentMemory) -> Decision:
    """Nearest reachable intact object by path length, lowest id on ties."""
    view = MapView(obs)
    if obs.carried is not None:
        return _deliver(obs, view)
    targets = intact_targets(obs, view)
    if not targets:
        return _wander(obs, view)
    obj, d = min(targets, key=lambda t: (t[1], t[0].id))
    return Decision(_approach(obj, obs), rationale=f"nearest object {obj.id} at {d}")


def greedy_score(value: float, distance: int) -> Fraction:
    return Fraction(value) / (distance + 1)


def decide_greedy(obs: Observation, mem: AgentMemory) -> Decision:
    """Best value / (path length + 1), lowest id on ties."""
    view = MapView(obs)
    if obs.carried is not None:
        return _deliver(obs, view)
    targets = intact_targets(obs, view)
    if not targets:
        return _wander(obs, view)
    obj, d = min(targets, key=lambda t: (-greedy_score(t[0].value, t[1]), t[0].id))
    return Decision(
        _approach(obj, obs),
        rationale=f"best value/distance object {obj.id} ({obj.value:g} at {d})",
    )


def decide_deliberative(obs: Observation, mem: AgentMemory, depth: int = DEFAULT_DEPTH) -> Decision:
    """Exhaustive ordering search over up to ``depth`` targets.

    Plays each ordering out on the frozen observation assuming the fire does
    not spread: only objects already sitting on burning cells have a
    deadline. At depth 1 this reduces to picking the most valuable object
    that can still be saved.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    view = MapView(obs)
    if obs.carried is not None:
        return _deliver(obs, view)
    targets = [o for o, _ in intact_targets(obs, view)]
    if not targets:
        return _wander(obs, view)
    plan = best_plan(obs, targets, depth, no_spread_deadlines(obs), view=view)
    if plan.first is None:
        return Decision(Idle(), rationale="no rescuable object")
    obj = next(o for o in targets if o.id == plan.first)
    return Decision(
        _approach(obj, obs),
        rationale=f"plan {list(plan.order)} saves {plan.value:g}",
    )


REFLEXES: dict[str, Policy] = {"rule": decide_rule, "greedy": decide_greedy}


def rrara_step(
    obs: Observation,
    mem: AgentMemory,
    reflex: str,
    session: Optional["ReflectorSession"],
) -> Decision:
    """Reflex decision now, reflection in the background.

    The reflex answer is returned at once. A review of it is handed to the
    reflector session without waiting; any earlier review still in flight is
    for a superseded action and is cancelled. With no usable session the
    reflex runs alone and the decision is marked degraded.
    """
    from .reflector import build_context

    decision = REFLEXES[reflex](obs, mem)
    if session is None or session.closed:
        return replace(decision, degraded=True)
    session.cancel()
    session.submit(build_context(obs, decision.action, mem))
    return decision


class Agent:
    """Stateful wrapper binding a policy to its memory and latency source."""

    def __init__(
        self,
        name: str,
        latency: Optional[LatencySource] = None,
        depth: int = DEFAULT_DEPTH,
    ):
        if name not in AGENT_NAMES:
            raise ValueError(f"unknown agent {name!r}; expected one of {', '.join(AGENT_NAMES)}")
        self.name = name
        self.reflective = name.startswith("rrara:")
        self.reflex = name.split(":", 1)[1] if self.reflective else name
        if latency is None:
            seconds = DEFAULT_DELIBERATIVE_LATENCY if name == "deliberative" else 0.0
            latency = LatencySource(seconds=seconds)
        self.latency = latency
        self.depth = depth
        self.memory = AgentMemory()

    def _policy(self, obs: Observation) -> Decision:
        if self.reflex == "deliberative":
            return decide_deliberative(obs, self.memory, self.depth)
        return REFLEXES[self.reflex](obs, self.memory)

    def decide(self, obs: Observation, session: Optional["ReflectorSession"] = None) -> Decision:
        if self.reflective:
            decision, t_inf = self.latency.timed(
                lambda: rrara_step(obs, self.memory, self.reflex, session)
            )
        else:
            decision, t_inf = self.latency.timed(lambda: self._policy(obs))
        decision = replace(decision, t_inf=t_inf)
        self.memory.remember(decision)
        return decision
