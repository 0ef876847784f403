"""Frame-stepped fire grid world.

Cells are addressed as ``(row, col)``. A cell is unburnt, burning since some
frame, or burned out. Objects burn when the cell they sit in burns out. The
agent executes one multi-frame action at a time; any new action replaces the
one in flight.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Union

Cell = tuple[int, int]

UNBURNT = -1
BURNED = -2

# neighbour order N, E, S, W
NEIGHBOURS: tuple[Cell, ...] = ((-1, 0), (0, 1), (1, 0), (0, -1))


class ConfigError(ValueError):
    """Invalid scenario configuration. ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class UsageError(RuntimeError):
    """An operation was called outside its contract."""


class RejectReason(str, Enum):
    NO_PATH = "no_path"
    STALE_TARGET = "stale_target"
    UNKNOWN_TARGET = "unknown_target"
    PRECONDITION = "precondition"


class ActionRejected(Exception):
    def __init__(self, reason: RejectReason, detail: str = ""):
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)
        self.reason = reason
        self.detail = detail


class NoPath(ActionRejected):
    def __init__(self, detail: str = ""):
        super().__init__(RejectReason.NO_PATH, detail)


class StaleTarget(ActionRejected):
    def __init__(self, detail: str = ""):
        super().__init__(RejectReason.STALE_TARGET, detail)


class Status(str, Enum):
    INTACT = "intact"
    CARRIED = "carried"
    RESCUED = "rescued"
    BURNT = "burnt"


# ---------------------------------------------------------------- actions


@dataclass(frozen=True)
class GoTo:
    target: int


@dataclass(frozen=True)
class GoToCell:
    cell: Cell


@dataclass(frozen=True)
class PickUp:
    target: int


@dataclass(frozen=True)
class DropAtShelter:
    pass


@dataclass(frozen=True)
class Idle:
    pass


Action = Union[GoTo, GoToCell, PickUp, DropAtShelter, Idle]


def action_literal(action: Action) -> str:
    """Canonical text form, shared by logs and the reflector grammar."""
    if isinstance(action, GoTo):
        return f"GOTO {action.target}"
    if isinstance(action, GoToCell):
        return f"GOTO_CELL {action.cell[0]} {action.cell[1]}"
    if isinstance(action, PickUp):
        return f"PICKUP {action.target}"
    if isinstance(action, DropAtShelter):
        return "DROP"
    if isinstance(action, Idle):
        return "IDLE"
    raise TypeError(f"not an action: {action!r}")


def parse_action(text: str) -> Action:
    """Inverse of :func:`action_literal`. Raises ValueError on bad input."""
    parts = text.strip().upper().split()
    if not parts:
        raise ValueError("empty action literal")
    head, args = parts[0], parts[1:]
    try:
        if head == "GOTO" and len(args) == 1:
            return GoTo(int(args[0]))
        if head == "GOTO_CELL" and len(args) == 2:
            return GoToCell((int(args[0]), int(args[1])))
        if head == "PICKUP" and len(args) == 1:
            return PickUp(int(args[0]))
        if head == "DROP" and not args:
            return DropAtShelter()
        if head == "IDLE" and not args:
            return Idle()
    except ValueError:
        pass
    raise ValueError(f"malformed action literal: {text!r}")


def action_target(action: Action) -> Optional[int]:
    if isinstance(action, (GoTo, PickUp)):
        return action.target
    return None


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class Rect:
    """Inclusive cell rectangle."""

    row0: int
    col0: int
    row1: int
    col1: int

    def __contains__(self, cell: Cell) -> bool:
        r, c = cell
        return self.row0 <= r <= self.row1 and self.col0 <= c <= self.col1

    def cells(self) -> list[Cell]:
        return [
            (r, c)
            for r in range(self.row0, self.row1 + 1)
            for c in range(self.col0, self.col1 + 1)
        ]


@dataclass(frozen=True)
class ObjectSpec:
    id: int
    position: Cell
    value: float


@dataclass(frozen=True)
class ScenarioConfig:
    width: int
    height: int
    objects: tuple[ObjectSpec, ...]
    shelter: Rect
    agent_start: Cell
    initial_fires: tuple[Cell, ...] = ()
    fps: float = 30.0
    frame_budget: int = 1500
    spread_prob: float = 0.05
    ignition_frames: int = 90
    frames_per_cell: int = 6
    pickup_frames: int = 10
    drop_frames: int = 10
    visibility_radius: int = 6
    walls: tuple[Cell, ...] = ()
    name: str = "scenario"

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def validate(self) -> None:
        if self.width <= 0:
            raise ConfigError("width", "must be positive")
        if self.height <= 0:
            raise ConfigError("height", "must be positive")
        if not self.fps > 0:
            raise ConfigError("fps", "must be > 0")
        if self.frame_budget <= 0:
            raise ConfigError("frame_budget", "must be > 0")
        if not 0.0 <= self.spread_prob <= 1.0:
            raise ConfigError("spread_prob", "must be within [0, 1]")
        if self.ignition_frames < 1:
            raise ConfigError("ignition_frames", "must be >= 1")
        if self.frames_per_cell < 1:
            raise ConfigError("frames_per_cell", "must be >= 1")
        if self.pickup_frames < 1:
            raise ConfigError("pickup_frames", "must be >= 1")
        if self.drop_frames < 1:
            raise ConfigError("drop_frames", "must be >= 1")
        if self.visibility_radius < 0:
            raise ConfigError("visibility_radius", "must be >= 0")
        walls = set(self.walls)
        for cell in self.walls:
            if not self.in_bounds(cell):
                raise ConfigError("walls", f"{cell} outside grid")
        seen: set[int] = set()
        for spec in self.objects:
            if spec.id in seen:
                raise ConfigError("objects", f"duplicate object id {spec.id}")
            seen.add(spec.id)
            if not self.in_bounds(spec.position):
                raise ConfigError("objects", f"object {spec.id} at {spec.position} outside grid")
            if spec.position in walls:
                raise ConfigError("objects", f"object {spec.id} placed on a wall")
            if spec.value < 0:
                raise ConfigError("objects", f"object {spec.id} has negative value")
        for cell in self.initial_fires:
            if not self.in_bounds(cell):
                raise ConfigError("initial_fires", f"{cell} outside grid")
            if cell in walls:
                raise ConfigError("initial_fires", f"{cell} is a wall")
        s = self.shelter
        if s.row0 > s.row1 or s.col0 > s.col1:
            raise ConfigError("shelter", "empty rectangle")
        if not (self.in_bounds((s.row0, s.col0)) and self.in_bounds((s.row1, s.col1))):
            raise ConfigError("shelter", "outside grid")
        if any(cell in s for cell in self.initial_fires):
            raise ConfigError("shelter", "overlaps initial_fires")
        if all(cell in walls for cell in s.cells()):
            raise ConfigError("shelter", "fully walled")
        if not self.in_bounds(self.agent_start):
            raise ConfigError("agent_start", "outside grid")
        if self.agent_start in walls:
            raise ConfigError("agent_start", "on a wall")


# ---------------------------------------------------------------- state


@dataclass
class ObjectState:
    id: int
    position: Cell
    value: float
    status: Status = Status.INTACT


@dataclass
class ActionInProgress:
    action: Action
    frames_remaining: int
    path: list[Cell] = field(default_factory=list)
    executed: int = 0


@dataclass
class AgentState:
    position: Cell
    carried: Optional[int] = None
    current_action: Optional[ActionInProgress] = None


@dataclass
class WorldState:
    config: ScenarioConfig
    frame: int
    cell_fire: list[list[int]]
    objects: dict[int, ObjectState]
    agent: AgentState
    rng: random.Random
    walls: frozenset[Cell] = frozenset()

    def fire_at(self, cell: Cell) -> int:
        return self.cell_fire[cell[0]][cell[1]]

    def burning_cells(self) -> list[Cell]:
        return [
            (r, c)
            for r, row in enumerate(self.cell_fire)
            for c, v in enumerate(row)
            if v >= 0
        ]

    def value_by_status(self) -> dict[Status, float]:
        out = {s: 0.0 for s in Status}
        for obj in self.objects.values():
            out[obj.status] += obj.value
        return out

    def fingerprint(self) -> tuple:
        """Hashable snapshot of everything, including the rng state."""
        act = self.agent.current_action
        return (
            self.frame,
            tuple(tuple(row) for row in self.cell_fire),
            tuple(
                (o.id, o.position, o.value, o.status.value)
                for o in sorted(self.objects.values(), key=lambda o: o.id)
            ),
            self.agent.position,
            self.agent.carried,
            None if act is None else (act.action, act.frames_remaining, tuple(act.path), act.executed),
            self.rng.getstate(),
        )


@dataclass
class ActionOutcome:
    action: Action
    executed_frames: int
    ok: bool = True
    reason: Optional[RejectReason] = None


@dataclass
class FrameEvents:
    frame: int
    ignitions: list[Cell] = field(default_factory=list)
    burned_out: list[Cell] = field(default_factory=list)
    objects_burnt: list[int] = field(default_factory=list)
    status_changes: list[tuple[int, Status, Status]] = field(default_factory=list)
    action_completed: Optional[ActionOutcome] = None


@dataclass
class ActionAck:
    action: Action
    frames: int
    interrupted: Optional[ActionOutcome] = None
    completed: Optional[ActionOutcome] = None
    status_changes: list[tuple[int, Status, Status]] = field(default_factory=list)


# ---------------------------------------------------------------- geometry


def chebyshev(a: Cell, b: Cell) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def manhattan(a: Cell, b: Cell) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def distance_map(
    start: Cell, height: int, width: int, walls: Iterable[Cell] = ()
) -> list[list[int]]:
    """4-connected BFS distances from ``start``; -1 marks unreachable."""
    blocked = set(walls)
    dist = [[-1] * width for _ in range(height)]
    if start in blocked:
        return dist
    dist[start[0]][start[1]] = 0
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        d = dist[r][c] + 1
        for dr, dc in NEIGHBOURS:
            nr, nc = r + dr, c + dc
            if 0 <= nr < height and 0 <= nc < width and dist[nr][nc] < 0 and (nr, nc) not in blocked:
                dist[nr][nc] = d
                queue.append((nr, nc))
    return dist


def shortest_path(
    start: Cell, goal: Cell, height: int, width: int, walls: Iterable[Cell] = ()
) -> Optional[list[Cell]]:
    """Lexicographically smallest shortest path, excluding ``start``.

    Among all minimum-length 4-connected paths the one whose waypoint
    sequence is smallest under (row, col) ordering is returned.
    """
    walls = frozenset(walls)
    if goal in walls or not (0 <= goal[0] < height and 0 <= goal[1] < width):
        return None
    to_goal = distance_map(goal, height, width, walls)
    d = to_goal[start[0]][start[1]]
    if d < 0:
        return None
    path: list[Cell] = []
    cur = start
    while d > 0:
        options = []
        for dr, dc in NEIGHBOURS:
            nr, nc = cur[0] + dr, cur[1] + dc
            if 0 <= nr < height and 0 <= nc < width and to_goal[nr][nc] == d - 1:
                options.append((nr, nc))
        cur = min(options)
        path.append(cur)
        d -= 1
    return path


# ---------------------------------------------------------------- operations


def new_world(config: ScenarioConfig, seed: int) -> WorldState:
    config.validate()
    fire = [[UNBURNT] * config.width for _ in range(config.height)]
    for r, c in config.initial_fires:
        fire[r][c] = 0
    objects = {
        spec.id: ObjectState(spec.id, spec.position, float(spec.value))
        for spec in sorted(config.objects, key=lambda s: s.id)
    }
    return WorldState(
        config=config,
        frame=0,
        cell_fire=fire,
        objects=objects,
        agent=AgentState(position=config.agent_start),
        rng=random.Random(seed),
        walls=frozenset(config.walls),
    )


def is_terminal(world: WorldState) -> bool:
    if world.frame >= world.config.frame_budget:
        return True
    return all(o.status in (Status.RESCUED, Status.BURNT) for o in world.objects.values())


def _set_status(world: WorldState, obj: ObjectState, status: Status, changes: list) -> None:
    changes.append((obj.id, obj.status, status))
    obj.status = status


def _spread(world: WorldState, events: FrameEvents) -> None:
    cfg = world.config
    fire = world.cell_fire
    p = cfg.spread_prob
    rand = world.rng.random
    for r, c in world.burning_cells():
        for dr, dc in NEIGHBOURS:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < cfg.height and 0 <= nc < cfg.width):
                continue
            if fire[nr][nc] != UNBURNT or (nr, nc) in world.walls:
                continue
            if rand() < p:
                fire[nr][nc] = world.frame
                events.ignitions.append((nr, nc))


def _burn_out(world: WorldState, events: FrameEvents) -> None:
    limit = world.config.ignition_frames
    fire = world.cell_fire
    for r, c in world.burning_cells():
        if world.frame - fire[r][c] >= limit:
            fire[r][c] = BURNED
            events.burned_out.append((r, c))
    if not events.burned_out:
        return
    dead = set(events.burned_out)
    for obj in world.objects.values():
        if obj.status is Status.INTACT and obj.position in dead:
            _set_status(world, obj, Status.BURNT, events.status_changes)
            events.objects_burnt.append(obj.id)


def _finish(world: WorldState, act: ActionInProgress, changes: list) -> ActionOutcome:
    agent = world.agent
    action = act.action
    outcome = ActionOutcome(action, act.executed)
    if isinstance(action, PickUp):
        obj = world.objects[action.target]
        if obj.status is not Status.INTACT:
            outcome.ok, outcome.reason = False, RejectReason.STALE_TARGET
        elif agent.carried is not None or chebyshev(agent.position, obj.position) > 1:
            outcome.ok, outcome.reason = False, RejectReason.PRECONDITION
        else:
            _set_status(world, obj, Status.CARRIED, changes)
            agent.carried = obj.id
            obj.position = agent.position
    elif isinstance(action, DropAtShelter):
        obj = world.objects[agent.carried]
        _set_status(world, obj, Status.RESCUED, changes)
        obj.position = agent.position
        agent.carried = None
    agent.current_action = None
    return outcome


def _progress(world: WorldState, events: FrameEvents) -> None:
    agent = world.agent
    act = agent.current_action
    if act is None:
        return
    act.executed += 1
    act.frames_remaining -= 1
    if act.path and act.executed % world.config.frames_per_cell == 0:
        agent.position = act.path.pop(0)
        if agent.carried is not None:
            world.objects[agent.carried].position = agent.position
    if act.frames_remaining == 0:
        events.action_completed = _finish(world, act, events.status_changes)


def step_frame(world: WorldState) -> FrameEvents:
    """Advance one frame: spread, burn-out, then action progress."""
    if is_terminal(world):
        raise UsageError("cannot step a terminal world")
    world.frame += 1
    events = FrameEvents(frame=world.frame)
    _spread(world, events)
    _burn_out(world, events)
    _progress(world, events)
    return events


def _path_for(world: WorldState, goal: Cell) -> list[Cell]:
    cfg = world.config
    path = shortest_path(world.agent.position, goal, cfg.height, cfg.width, world.walls)
    if path is None:
        raise NoPath(f"no route from {world.agent.position} to {goal}")
    return path


def _target(world: WorldState, target: int) -> ObjectState:
    obj = world.objects.get(target)
    if obj is None:
        raise ActionRejected(RejectReason.UNKNOWN_TARGET, f"object {target}")
    if obj.status is not Status.INTACT:
        raise StaleTarget(f"object {target} is {obj.status.value}")
    return obj


def begin_action(world: WorldState, action: Action) -> ActionAck:
    """Install ``action`` as the agent's current action.

    Preconditions are checked against the current frame; a rejected action
    leaves any in-flight action untouched. An accepted action discards the
    in-flight one, keeping the agent at its current cell. Zero-length moves
    complete immediately.
    """
    cfg = world.config
    agent = world.agent
    path: list[Cell] = []
    if isinstance(action, GoTo):
        obj = _target(world, action.target)
        path = _path_for(world, obj.position)
        frames = len(path) * cfg.frames_per_cell
    elif isinstance(action, GoToCell):
        path = _path_for(world, tuple(action.cell))
        frames = len(path) * cfg.frames_per_cell
    elif isinstance(action, PickUp):
        obj = _target(world, action.target)
        if agent.carried is not None:
            raise ActionRejected(RejectReason.PRECONDITION, "already carrying an object")
        if chebyshev(agent.position, obj.position) > 1:
            raise ActionRejected(RejectReason.PRECONDITION, f"object {obj.id} out of reach")
        frames = cfg.pickup_frames
    elif isinstance(action, DropAtShelter):
        if agent.carried is None:
            raise ActionRejected(RejectReason.PRECONDITION, "not carrying anything")
        if agent.position not in cfg.shelter:
            raise ActionRejected(RejectReason.PRECONDITION, "not inside the shelter")
        frames = cfg.drop_frames
    elif isinstance(action, Idle):
        frames = 1
    else:
        raise TypeError(f"not an action: {action!r}")

    ack = ActionAck(action, frames)
    prior = agent.current_action
    if prior is not None:
        ack.interrupted = ActionOutcome(prior.action, prior.executed, ok=False)
    act = ActionInProgress(action, frames, path)
    agent.current_action = act
    if frames == 0:
        ack.completed = _finish(world, act, ack.status_changes)
    return ack


# ---------------------------------------------------------------- observation


@dataclass(frozen=True)
class Timing:
    """World dynamics the agent is assumed to know."""

    fps: float
    frames_per_cell: int
    pickup_frames: int
    drop_frames: int
    ignition_frames: int
    spread_prob: float
    frame_budget: int


@dataclass(frozen=True)
class VisibleObject:
    id: int
    position: Cell
    value: float
    status: Status
    on_fire_distance: Optional[int]
    burning_since: Optional[int] = None


@dataclass(frozen=True)
class Observation:
    frame: int
    position: Cell
    carried: Optional[int]
    visible_objects: tuple[VisibleObject, ...]
    visible_fire: tuple[tuple[Cell, int], ...]
    shelter: Rect
    height: int
    width: int
    walls: frozenset[Cell]
    timing: Timing

    @property
    def center(self) -> Cell:
        return (self.height // 2, self.width // 2)


def observe(world: WorldState) -> Observation:
    """Pure read of the world; never touches the rng.

    ``on_fire_distance`` is the Manhattan distance to the nearest burning
    cell anywhere on the grid (None when nothing burns).
    """
    cfg = world.config
    pos = world.agent.position
    radius = cfg.visibility_radius
    burning = world.burning_cells()
    visible = []
    for obj in world.objects.values():
        if obj.status is Status.RESCUED or chebyshev(pos, obj.position) > radius:
            continue
        fire_d = min((manhattan(obj.position, b) for b in burning), default=None)
        since = world.fire_at(obj.position)
        visible.append(
            VisibleObject(
                obj.id, obj.position, obj.value, obj.status, fire_d,
                since if since >= 0 else None,
            )
        )
    fire = tuple((b, world.fire_at(b)) for b in burning if chebyshev(pos, b) <= radius)
    return Observation(
        frame=world.frame,
        position=pos,
        carried=world.agent.carried,
        visible_objects=tuple(visible),
        visible_fire=fire,
        shelter=cfg.shelter,
        height=cfg.height,
        width=cfg.width,
        walls=world.walls,
        timing=Timing(
            cfg.fps, cfg.frames_per_cell, cfg.pickup_frames, cfg.drop_frames,
            cfg.ignition_frames, cfg.spread_prob, cfg.frame_budget,
        ),
    )
