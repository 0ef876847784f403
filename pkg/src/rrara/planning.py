"""Path distances over an observation and small exhaustive rescue planning."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import Mapping, Optional, Sequence

from .world import Cell, Observation, Status, VisibleObject, chebyshev, distance_map


class MapView:
    """Cached BFS distance maps over the static grid of an observation."""

    def __init__(self, obs: Observation):
        self.obs = obs
        self._maps: dict[Cell, list[list[int]]] = {}
        self._shelter: Optional[list[list[int]]] = None

    def dist(self, a: Cell, b: Cell) -> Optional[int]:
        m = self._maps.get(a)
        if m is None:
            m = self._maps[a] = distance_map(a, self.obs.height, self.obs.width, self.obs.walls)
        d = m[b[0]][b[1]]
        return None if d < 0 else d

    def from_agent(self, cell: Cell) -> Optional[int]:
        return self.dist(self.obs.position, cell)

    def nearest_shelter(self, src: Cell) -> Optional[tuple[int, Cell]]:
        """(distance, cell) of the closest reachable shelter cell; ties by cell."""
        best = None
        for cell in self.obs.shelter.cells():
            if cell in self.obs.walls:
                continue
            d = self.dist(src, cell)
            if d is not None and (best is None or (d, cell) < best):
                best = (d, cell)
        return best


def intact_targets(obs: Observation, view: MapView) -> list[tuple[VisibleObject, int]]:
    """Visible intact objects the agent can reach, with their path lengths."""
    out = []
    for o in obs.visible_objects:
        if o.status is not Status.INTACT:
            continue
        d = view.from_agent(o.position)
        if d is not None:
            out.append((o, d))
    return out


def no_spread_deadlines(obs: Observation) -> dict[int, Optional[int]]:
    """Burn-out frame per object if its cell already burns, assuming no spread."""
    ign = obs.timing.ignition_frames
    return {
        o.id: (o.burning_since + ign if o.burning_since is not None else None)
        for o in obs.visible_objects
    }


def spread_deadlines(obs: Observation) -> dict[int, Optional[int]]:
    """Rough burn-out estimate that lets the fire front advance.

    An unburnt object ``d`` cells from the fire is assumed to ignite after
    ``d / spread_prob`` frames, the mean wait for a single-neighbour spread.
    """
    out = no_spread_deadlines(obs)
    p = obs.timing.spread_prob
    ign = obs.timing.ignition_frames
    for o in obs.visible_objects:
        if out[o.id] is None and o.on_fire_distance is not None and p > 0:
            out[o.id] = obs.frame + int(o.on_fire_distance / p) + ign
    return out


@dataclass(frozen=True)
class Plan:
    order: tuple[int, ...]
    value: float
    finish_frame: int

    @property
    def first(self) -> Optional[int]:
        return self.order[0] if self.order else None


def _simulate(
    obs: Observation,
    view: MapView,
    order: Sequence[VisibleObject],
    deadlines: Mapping[int, Optional[int]],
) -> Plan:
    t = obs.timing
    frame = obs.frame
    pos = obs.position
    value = 0.0
    done: list[int] = []
    for o in order:
        if chebyshev(pos, o.position) <= 1:
            walk, stand = 0, pos
        else:
            d = view.dist(pos, o.position)
            if d is None:
                continue
            walk, stand = d * t.frames_per_cell, o.position
        picked = frame + walk + t.pickup_frames
        deadline = deadlines.get(o.id)
        if deadline is not None and picked >= deadline:
            continue
        leg = view.nearest_shelter(stand)
        if leg is None:
            continue
        dropped = picked + leg[0] * t.frames_per_cell + t.drop_frames
        if dropped > t.frame_budget:
            continue
        value += o.value
        done.append(o.id)
        frame, pos = dropped, leg[1]
    return Plan(tuple(done), value, frame)


def best_plan(
    obs: Observation,
    candidates: Sequence[VisibleObject],
    depth: int,
    deadlines: Mapping[int, Optional[int]],
    first: Optional[int] = None,
    view: Optional[MapView] = None,
) -> Plan:
    """Exhaustive search over target orderings of length ``min(depth, n)``.

    Each ordering is played out with pick-up / carry-to-shelter / drop legs;
    targets that would burn or overrun the frame budget are skipped at no
    cost. Maximises rescued value, then earliest finish, then the smallest
    id sequence. ``first`` pins the first target.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    view = view or MapView(obs)
    pool = sorted(candidates, key=lambda o: o.id)
    k = min(depth, len(pool))
    best: Optional[Plan] = None
    for order in permutations(pool, k):
        if first is not None and order[0].id != first:
            continue
        plan = _simulate(obs, view, order, deadlines)
        if first is not None and plan.first != first:
            plan = Plan((), 0.0, obs.frame)
        if best is None or (-plan.value, plan.finish_frame, plan.order) < (
            -best.value, best.finish_frame, best.order
        ):
            best = plan
    return best or Plan((), 0.0, obs.frame)
