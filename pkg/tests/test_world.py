import itertools

import pytest

from conftest import make_config
from rrara.world import (
    BURNED,
    UNBURNT,
    ActionRejected,
    ConfigError,
    DropAtShelter,
    GoTo,
    GoToCell,
    Idle,
    NoPath,
    ObjectSpec,
    PickUp,
    Rect,
    RejectReason,
    StaleTarget,
    Status,
    UsageError,
    begin_action,
    is_terminal,
    new_world,
    observe,
    shortest_path,
    step_frame,
)


def burning(world):
    return set(world.burning_cells())


def test_new_world_single_fire():
    cfg = make_config(width=3, height=3, initial_fires=((1, 1),), objects=(), shelter=Rect(0, 0, 0, 0),
                      agent_start=(0, 0))
    world = new_world(cfg, 7)
    assert world.frame == 0
    assert burning(world) == {(1, 1)}
    assert world.fire_at((1, 1)) == 0


def test_new_world_rejects_object_outside_grid():
    cfg = make_config(objects=(ObjectSpec(1, (9, 9), 1.0),))
    with pytest.raises(ConfigError) as err:
        new_world(cfg, 0)
    assert err.value.field == "objects"


@pytest.mark.parametrize(
    "overrides, field",
    [
        ({"spread_prob": 1.5}, "spread_prob"),
        ({"fps": 0}, "fps"),
        ({"frame_budget": 0}, "frame_budget"),
        ({"frames_per_cell": 0}, "frames_per_cell"),
        ({"objects": (ObjectSpec(1, (0, 0), 1.0), ObjectSpec(1, (0, 1), 1.0))}, "objects"),
        ({"initial_fires": ((4, 0),)}, "shelter"),
        ({"agent_start": (5, 5)}, "agent_start"),
    ],
)
def test_config_errors_name_the_field(overrides, field):
    with pytest.raises(ConfigError) as err:
        new_world(make_config(**overrides), 0)
    assert err.value.field == field


def test_same_seed_same_world():
    cfg = make_config(initial_fires=((2, 3),), spread_prob=0.4)
    a, b = new_world(cfg, 3), new_world(cfg, 3)
    assert a.fingerprint() == b.fingerprint()
    for _ in range(20):
        step_frame(a)
        step_frame(b)
    assert a.fingerprint() == b.fingerprint()


def test_zero_spread_keeps_one_fire_until_burnout():
    cfg = make_config(initial_fires=((1, 1),), ignition_frames=50)
    world = new_world(cfg, 0)
    for _ in range(49):
        step_frame(world)
        assert burning(world) == {(1, 1)}
    step_frame(world)
    assert burning(world) == set()
    assert world.fire_at((1, 1)) == BURNED


def _spread_oracle(height, width, fires):
    """Enumerate the deterministic p=1 spread rule cell by cell."""
    out = set()
    for r, c in itertools.product(range(height), range(width)):
        if (r, c) in fires:
            continue
        if any(abs(r - fr) + abs(c - fc) == 1 for fr, fc in fires):
            out.add((r, c))
    return out


def test_full_spread_hits_exactly_the_four_neighbours():
    cfg = make_config(initial_fires=((2, 2),), spread_prob=1.0, agent_start=(0, 0))
    world = new_world(cfg, 0)
    events = step_frame(world)
    expected = _spread_oracle(5, 5, {(2, 2)})
    assert expected == {(1, 2), (2, 3), (3, 2), (2, 1)}
    assert set(events.ignitions) == expected
    # neighbour draw order N, E, S, W
    assert events.ignitions == [(1, 2), (2, 3), (3, 2), (2, 1)]
    assert burning(world) == expected | {(2, 2)}


def test_object_burns_when_its_cell_burns_out():
    cfg = make_config(initial_fires=((0, 4),), ignition_frames=12)
    world = new_world(cfg, 0)
    for _ in range(11):
        assert step_frame(world).objects_burnt == []
    events = step_frame(world)
    assert world.frame == 12
    assert events.objects_burnt == [1]
    assert world.objects[1].status is Status.BURNT


def test_goto_frames_are_path_length_times_frames_per_cell():
    cfg = make_config(objects=(ObjectSpec(1, (2, 4), 1.0), ObjectSpec(2, (4, 4), 1.0)),
                      agent_start=(2, 1), frames_per_cell=2)
    world = new_world(cfg, 0)
    ack = begin_action(world, GoTo(1))
    assert ack.frames == 6
    for _ in range(5):
        assert step_frame(world).action_completed is None
    done = step_frame(world).action_completed
    assert done.ok and done.executed_frames == 6
    assert world.agent.position == (2, 4)


def test_pickup_completes_after_pickup_frames():
    cfg = make_config(objects=(ObjectSpec(1, (2, 3), 1.0),), pickup_frames=10)
    world = new_world(cfg, 0)
    begin_action(world, PickUp(1))
    for _ in range(9):
        step_frame(world)
    assert world.objects[1].status is Status.INTACT
    events = step_frame(world)
    assert world.frame == 10
    assert events.action_completed.ok
    assert world.objects[1].status is Status.CARRIED
    assert world.agent.carried == 1


def test_pickup_of_burnt_object_is_stale():
    cfg = make_config(objects=(ObjectSpec(1, (2, 3), 1.0),), initial_fires=((2, 3),), ignition_frames=3)
    world = new_world(cfg, 0)
    for _ in range(3):
        step_frame(world)
    with pytest.raises(StaleTarget) as err:
        begin_action(world, PickUp(1))
    assert err.value.reason is RejectReason.STALE_TARGET
    with pytest.raises(StaleTarget):
        begin_action(world, GoTo(1))


def test_object_burning_mid_pickup_fails_the_pickup():
    cfg = make_config(objects=(ObjectSpec(1, (2, 3), 1.0), ObjectSpec(2, (0, 0), 1.0)),
                      initial_fires=((2, 3),), ignition_frames=5, pickup_frames=10)
    world = new_world(cfg, 0)
    begin_action(world, PickUp(1))
    outcome = None
    while outcome is None:
        outcome = step_frame(world).action_completed
    assert not outcome.ok and outcome.reason is RejectReason.STALE_TARGET
    assert world.agent.carried is None


def test_unreachable_goal_is_no_path():
    walls = ((0, 3), (1, 3), (1, 4))
    cfg = make_config(walls=walls)
    world = new_world(cfg, 0)
    with pytest.raises(NoPath):
        begin_action(world, GoTo(1))
    with pytest.raises(NoPath):
        begin_action(world, GoToCell((9, 9)))


def test_interrupt_keeps_agent_where_it_is():
    cfg = make_config(agent_start=(2, 0), objects=(ObjectSpec(1, (2, 4), 1.0),), frames_per_cell=4)
    world = new_world(cfg, 0)
    begin_action(world, GoTo(1))
    for _ in range(6):
        step_frame(world)
    assert world.agent.position == (2, 1)
    ack = begin_action(world, GoToCell((0, 1)))
    assert ack.interrupted.executed_frames == 6
    assert world.agent.position == (2, 1)
    assert ack.frames == 2 * 4


def test_rejected_action_leaves_current_action_running():
    cfg = make_config(agent_start=(2, 0), objects=(ObjectSpec(1, (2, 4), 1.0),))
    world = new_world(cfg, 0)
    begin_action(world, GoTo(1))
    with pytest.raises(ActionRejected):
        begin_action(world, DropAtShelter())
    assert world.agent.current_action.action == GoTo(1)


def test_full_rescue_cycle():
    cfg = make_config(agent_start=(3, 0), objects=(ObjectSpec(1, (3, 1), 2.0),), shelter=Rect(4, 0, 4, 0))
    world = new_world(cfg, 0)

    def run(action):
        begin_action(world, action)
        while world.agent.current_action is not None:
            step_frame(world)

    run(PickUp(1))
    run(GoToCell((4, 0)))
    assert world.objects[1].position == (4, 0)
    run(DropAtShelter())
    assert world.objects[1].status is Status.RESCUED
    assert is_terminal(world)


def test_stepping_terminal_world_is_usage_error():
    cfg = make_config(frame_budget=2)
    world = new_world(cfg, 0)
    step_frame(world)
    step_frame(world)
    assert is_terminal(world)
    with pytest.raises(UsageError):
        step_frame(world)


def test_is_terminal_cases():
    world = new_world(make_config(), 0)
    assert not is_terminal(world)
    world.objects[1].status = Status.RESCUED
    assert is_terminal(world)
    world = new_world(make_config(frame_budget=5), 0)
    world.frame = 5
    assert is_terminal(world)


def test_observe_visibility():
    objs = (ObjectSpec(1, (0, 0), 1.0), ObjectSpec(2, (2, 2), 1.0), ObjectSpec(3, (4, 4), 1.0))
    full = new_world(make_config(objects=objs, visibility_radius=99), 0)
    assert {o.id for o in observe(full).visible_objects} == {1, 2, 3}
    none = new_world(make_config(objects=objs, visibility_radius=0), 0)
    assert [o.id for o in observe(none).visible_objects] == [2]
    edge = new_world(make_config(objects=objs, visibility_radius=2), 0)
    assert {o.id for o in observe(edge).visible_objects} == {1, 2, 3}
    inner = new_world(make_config(objects=objs, visibility_radius=1), 0)
    assert {o.id for o in observe(inner).visible_objects} == {2}


def test_observe_hides_rescued_and_consumes_no_rng():
    world = new_world(make_config(initial_fires=((0, 0),), spread_prob=0.5), 0)
    world.objects[1].status = Status.RESCUED
    before = world.rng.getstate()
    obs = observe(world)
    assert obs.visible_objects == ()
    assert world.rng.getstate() == before
    assert obs == observe(world)


def test_observe_fire_distance():
    world = new_world(make_config(initial_fires=((0, 1),)), 0)
    (obj,) = observe(world).visible_objects
    assert obj.on_fire_distance == 3


def _all_shortest(start, goal, h, w, walls):
    """Every minimum-length 4-connected path, by exhaustive search."""
    best, paths = None, []

    def dfs(cur, path, seen):
        nonlocal best
        if best is not None and len(path) > best:
            return
        if cur == goal:
            if best is None or len(path) < best:
                best, paths[:] = len(path), []
            paths.append(list(path))
            return
        for dr, dc in ((-1, 0), (0, 1), (1, 0), (0, -1)):
            nxt = (cur[0] + dr, cur[1] + dc)
            if 0 <= nxt[0] < h and 0 <= nxt[1] < w and nxt not in walls and nxt not in seen:
                seen.add(nxt)
                path.append(nxt)
                dfs(nxt, path, seen)
                path.pop()
                seen.discard(nxt)

    dfs(start, [], {start})
    return paths


@pytest.mark.parametrize(
    "start, goal, walls",
    [
        ((0, 0), (3, 3), ()),
        ((3, 0), (0, 3), ()),
        ((0, 0), (3, 3), ((1, 1), (2, 1), (1, 2))),
        ((2, 0), (2, 3), ((1, 1), (2, 1), (3, 1))),
        ((3, 3), (0, 0), ((0, 1),)),
    ],
)
def test_shortest_path_is_lexicographic_minimum(start, goal, walls):
    expected = min(_all_shortest(start, goal, 4, 4, set(walls)))
    assert shortest_path(start, goal, 4, 4, walls) == expected


def test_idle_takes_one_frame():
    world = new_world(make_config(), 0)
    assert begin_action(world, Idle()).frames == 1
    assert step_frame(world).action_completed.ok


def test_initial_cell_values():
    world = new_world(make_config(initial_fires=((1, 1),)), 0)
    assert world.fire_at((0, 0)) == UNBURNT
