"""Time conversion: decision latency is paid in simulation frames."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, TypeVar

from .world import FrameEvents, UsageError, WorldState, is_terminal, step_frame

T = TypeVar("T")

# float products such as 4.11 * 30 carry ~1e-14 noise; trim it before ceil
_ROUND_DIGITS = 9


def latency_to_frames(t_inf: float, fps: float) -> int:
    """Frames charged for ``t_inf`` seconds of deliberation (rounded up)."""
    if t_inf < 0:
        raise UsageError(f"negative latency: {t_inf}")
    if not fps > 0:
        raise UsageError(f"fps must be positive, got {fps}")
    return math.ceil(round(t_inf * fps, _ROUND_DIGITS))


@dataclass
class TcmClock:
    fps: float
    enabled: bool = True
    charged_frames: int = 0
    charged_seconds: float = 0.0

    def frames_for(self, t_inf: float) -> int:
        frames = latency_to_frames(t_inf, self.fps)
        return frames if self.enabled else 0


def charge_inference(
    world: WorldState,
    clock: TcmClock,
    t_inf: float,
    on_frame: Optional[Callable[[FrameEvents], None]] = None,
) -> list[FrameEvents]:
    """Let the world run on while the agent thinks for ``t_inf`` seconds.

    Any action already in flight keeps executing during the charged frames.
    Stops early if the world turns terminal. With the clock disabled the
    latency is recorded but costs no frames.
    """
    if is_terminal(world):
        raise UsageError("cannot charge inference on a terminal world")
    frames = clock.frames_for(t_inf)
    clock.charged_seconds += t_inf if clock.enabled else 0.0
    events = []
    for _ in range(frames):
        if is_terminal(world):
            break
        ev = step_frame(world)
        clock.charged_frames += 1
        events.append(ev)
        if on_frame is not None:
            on_frame(ev)
    return events


@dataclass
class LatencySource:
    """Where a decision's ``t_inf`` comes from.

    Virtual mode replays a fixed value or a per-decision schedule (the
    schedule wraps around when exhausted). Wall-clock mode times the decide
    call with a monotonic counter.
    """

    mode: str = "virtual"
    seconds: float = 0.0
    schedule: Sequence[float] = field(default_factory=tuple)
    _cursor: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("virtual", "wallclock"):
            raise ValueError(f"unknown latency mode {self.mode!r}")
        if self.seconds < 0 or any(s < 0 for s in self.schedule):
            raise ValueError("latencies must be >= 0")

    @classmethod
    def from_schedule_file(cls, path: str | Path) -> "LatencySource":
        values = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a number: {line!r}") from None
        if not values:
            raise ValueError(f"{path}: empty latency schedule")
        return cls(mode="virtual", schedule=tuple(values))

    def next_virtual(self) -> float:
        if self.schedule:
            value = self.schedule[self._cursor % len(self.schedule)]
            self._cursor += 1
            return float(value)
        return float(self.seconds)

    def timed(self, fn: Callable[[], T]) -> tuple[T, float]:
        """Run ``fn`` and return its result with the latency to charge."""
        if self.mode == "wallclock":
            start = time.perf_counter()
            result = fn()
            return result, max(0.0, time.perf_counter() - start)
        return fn(), self.next_virtual()
