"""Episode logs and the latency-aware metric suite.

A log is a list of frame-stamped events, persisted one JSON object per line.
All metrics are pure functions of that list.

Metric definitions (all value-weighted over the initial object value):

* ``vr``  - rescued value / total value
* ``dr``  - burnt value / total value
* ``rl``  - mean decision latency in seconds over policy decisions
* ``lar`` - reasoning / (reasoning + acting), where reasoning is the charged
  inference time and acting is the frames spent executing non-idle actions
  divided by fps
* ``intervention_rate`` - accepted overrides / reflex actions begun
  (reflective agents only)
"""

from __future__ import annotations

import json
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence

REQUIRED: dict[str, tuple[str, ...]] = {
    "start": ("scenario", "seed", "agent", "fps", "objects"),
    "decision": ("action", "t_inf", "charged_frames", "charged_s", "rationale"),
    "begin": ("action", "frames", "origin"),
    "complete": ("action", "executed", "ok", "reason"),
    "interrupt": ("action", "executed"),
    "reject": ("action", "reason", "origin"),
    "status": ("object", "from", "to"),
    "reflection_submit": ("action",),
    "reflection_deliver": ("verdict", "action", "latency", "submit_frame", "late", "accepted",
                           "parse_failed", "degraded", "source"),
    "reflection_cancel": (),
    "reflection_degraded": ("reason",),
    "end": ("statuses",),
}
REFLECTION_KINDS = frozenset(k for k in REQUIRED if k.startswith("reflection_"))


class LogValidationError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def encode(event: dict) -> str:
    return json.dumps(event, sort_keys=True, separators=(",", ":"))


class EpisodeLog:
    """Append-only event list, optionally mirrored line by line to a file."""

    def __init__(self, events: Optional[list[dict]] = None, sink: Optional[IO[str]] = None):
        self.events: list[dict] = list(events or [])
        self._sink = sink

    def append(self, kind: str, frame: int, **fields) -> dict:
        event = {"kind": kind, "frame": frame, **fields}
        self.events.append(event)
        if self._sink is not None:
            self._sink.write(encode(event) + "\n")
            self._sink.flush()
        return event

    def lines(self) -> list[str]:
        return [encode(e) for e in self.events]

    def to_bytes(self) -> bytes:
        return "".join(line + "\n" for line in self.lines()).encode("utf-8")

    def trajectory_bytes(self) -> bytes:
        """The log without reflection traffic or the agent label.

        Two runs whose agents took the same decisions and actions produce
        the same trajectory bytes even if one of them was being reviewed.
        """
        out = []
        for e in self.events:
            if e["kind"] in REFLECTION_KINDS:
                continue
            if e["kind"] == "start":
                e = {k: v for k, v in e.items() if k != "agent"}
            out.append(encode(e) + "\n")
        return "".join(out).encode("utf-8")

    def write(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def read(cls, path: str | Path) -> "EpisodeLog":
        text = Path(path).read_text(encoding="utf-8")
        events = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogValidationError(lineno, f"not JSON ({exc.msg})") from None
            if not isinstance(event, dict):
                raise LogValidationError(lineno, "event is not an object")
            events.append(event)
        log = cls(events)
        validate(log)
        return log

    # convenience views
    @property
    def header(self) -> dict:
        return self.events[0]

    @property
    def summary(self) -> dict:
        return self.events[-1]

    def of_kind(self, kind: str) -> list[dict]:
        return [e for e in self.events if e["kind"] == kind]


def validate(log: EpisodeLog) -> None:
    events = log.events
    if not events:
        raise LogValidationError(1, "empty log")
    last_frame = -1
    open_action = None
    transitions: dict[str, list[str]] = {}
    for i, e in enumerate(events, 1):
        kind = e.get("kind")
        if kind not in REQUIRED:
            raise LogValidationError(i, f"unknown event kind {kind!r}")
        missing = [k for k in ("frame",) + REQUIRED[kind] if k not in e]
        if missing:
            raise LogValidationError(i, f"{kind} event missing {missing[0]!r}")
        if not isinstance(e["frame"], int) or e["frame"] < last_frame:
            raise LogValidationError(i, "frame stamps must be non-decreasing integers")
        last_frame = e["frame"]
        if (kind == "start") != (i == 1):
            raise LogValidationError(i, "start event must come first, and only once")
        if kind == "end" and i != len(events):
            raise LogValidationError(i, "events after end")
        if kind == "begin":
            if open_action is not None:
                raise LogValidationError(i, "begin while another action is still open")
            open_action = e["action"]
        elif kind in ("complete", "interrupt"):
            if open_action != e["action"]:
                raise LogValidationError(i, f"{kind} of {e['action']!r} without matching begin")
            open_action = None
        elif kind == "status":
            transitions.setdefault(str(e["object"]), []).append(e["to"])
    if events[-1]["kind"] != "end":
        raise LogValidationError(len(events), "log truncated: no end event")
    for obj, tos in transitions.items():
        final = [t for t in tos if t in ("rescued", "burnt")]
        if len(final) > 1:
            raise LogValidationError(len(events), f"object {obj} has {len(final)} terminal transitions")


# ---------------------------------------------------------------- metrics


def _values(log: EpisodeLog) -> dict[str, float]:
    return {str(i): float(v) for i, v in log.header["objects"]}


def _share(log: EpisodeLog, status: str) -> float:
    values = _values(log)
    total = sum(values.values())
    if total == 0:
        return 0.0
    statuses = log.summary["statuses"]
    return sum(v for k, v in values.items() if statuses.get(k) == status) / total


def value_rate(log: EpisodeLog) -> float:
    return _share(log, "rescued")


def damage_ratio(log: EpisodeLog) -> float:
    return _share(log, "burnt")


def respond_latency(log: EpisodeLog) -> float:
    """Mean ``t_inf`` of policy decisions; 0.0 when there were none."""
    lat = [e["t_inf"] for e in log.of_kind("decision")]
    return statistics.fmean(lat) if lat else 0.0


def reflector_latency(log: EpisodeLog) -> Optional[float]:
    lat = [e["latency"] for e in log.of_kind("reflection_deliver")]
    return statistics.fmean(lat) if lat else None


def reasoning_seconds(log: EpisodeLog) -> float:
    return sum(e["charged_s"] for e in log.of_kind("decision"))


def acting_seconds(log: EpisodeLog) -> float:
    frames = sum(
        e["executed"]
        for e in log.events
        if e["kind"] in ("complete", "interrupt") and e["action"] != "IDLE"
    )
    return frames / log.header["fps"]


def latency_action_ratio(log: EpisodeLog) -> float:
    reason = reasoning_seconds(log)
    act = acting_seconds(log)
    if reason + act == 0:
        return 0.0
    return reason / (reason + act)


def is_reflective(log: EpisodeLog) -> bool:
    return str(log.header.get("agent", "")).startswith("rrara")


def intervention_rate(log: EpisodeLog) -> Optional[float]:
    """Accepted overrides per reflex action begun; None for non-reflective runs."""
    if not is_reflective(log):
        return None
    begun = sum(1 for e in log.of_kind("begin") if e["origin"] == "policy")
    accepted = sum(1 for e in log.of_kind("reflection_deliver") if e["accepted"])
    return accepted / begun if begun else 0.0


@dataclass
class MetricReport:
    vr: float
    dr: float
    rl: float
    lar: float
    intervention_rate: Optional[float]
    final_frame: float
    reflector_rl: Optional[float] = None
    rl_undefined: bool = False
    scenario: str = ""
    agent: str = ""
    seed: Optional[int] = None
    minimum: dict = field(default_factory=dict)
    maximum: dict = field(default_factory=dict)
    per_seed: list["MetricReport"] = field(default_factory=list)

    METRICS = ("vr", "dr", "rl", "lar", "intervention_rate", "final_frame", "reflector_rl")

    def row(self) -> dict:
        return {k: getattr(self, k) for k in self.METRICS}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_seed"] = [r.to_dict() for r in self.per_seed]
        return d


def compute(log: EpisodeLog) -> MetricReport:
    h = log.header
    return MetricReport(
        vr=value_rate(log),
        dr=damage_ratio(log),
        rl=respond_latency(log),
        lar=latency_action_ratio(log),
        intervention_rate=intervention_rate(log),
        final_frame=log.summary["frame"],
        reflector_rl=reflector_latency(log),
        rl_undefined=not log.of_kind("decision"),
        scenario=h["scenario"],
        agent=h["agent"],
        seed=h["seed"],
    )


def aggregate(reports: Sequence[MetricReport]) -> MetricReport:
    """Unweighted mean over seeds, with per-metric min/max and the rows kept."""
    if not reports:
        raise ValueError("aggregate needs at least one report")
    if len(reports) == 1 and not reports[0].per_seed:
        r = reports[0]
        single = MetricReport(**{**r.__dict__, "per_seed": [r]})
        single.minimum = {k: v for k, v in r.row().items() if v is not None}
        single.maximum = dict(single.minimum)
        return single
    means, lo, hi = {}, {}, {}
    for key in MetricReport.METRICS:
        vals = [getattr(r, key) for r in reports if getattr(r, key) is not None]
        means[key] = statistics.fmean(vals) if vals else None
        if vals:
            lo[key], hi[key] = min(vals), max(vals)
    first = reports[0]
    return MetricReport(
        **means,
        rl_undefined=any(r.rl_undefined for r in reports),
        scenario=first.scenario if all(r.scenario == first.scenario for r in reports) else "*",
        agent=first.agent if all(r.agent == first.agent for r in reports) else "*",
        minimum=lo,
        maximum=hi,
        per_seed=list(reports),
    )


def report_rows(reports: Iterable[MetricReport]) -> list[dict]:
    return [{"scenario": r.scenario, "agent": r.agent, **r.row()} for r in reports]
