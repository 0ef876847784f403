"""Episode runner, scenario files, suites, persistence and reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

import yaml

from . import __version__
from .agents import AGENT_NAMES, Agent
from .metrics import EpisodeLog, MetricReport, aggregate, compute, report_rows
from .reflector import REVIEW_LATENCY, MockReviewer, OracleReviewer, ReflectorSession, Reviewer
from .tcm import LatencySource, TcmClock, charge_inference
from .world import (
    ActionAck,
    ActionRejected,
    ConfigError,
    FrameEvents,
    ObjectSpec,
    Rect,
    ScenarioConfig,
    action_literal,
    begin_action,
    is_terminal,
    new_world,
    observe,
    step_frame,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
BUILTIN_SCENARIOS = ("fig1_staleness", "fig2_triage", "table1_sweep")
# zero-frame actions at one frame before the runner forces an idle frame
MAX_SAME_FRAME_DECISIONS = 8

_SCALARS = {
    "name": str, "width": int, "height": int, "fps": float, "frame_budget": int,
    "spread_prob": float, "ignition_frames": int, "frames_per_cell": int,
    "pickup_frames": int, "drop_frames": int, "visibility_radius": int,
}


# ---------------------------------------------------------------- scenarios


def _cell(value: Any, field_name: str) -> tuple[int, int]:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(field_name, f"expected [row, col], got {value!r}")
    return (int(value[0]), int(value[1]))


def scenario_from_dict(data: dict) -> ScenarioConfig:
    """Build a validated config from the scenario document schema."""
    if not isinstance(data, dict):
        raise ConfigError("scenario", "document must be a mapping")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    known = set(_SCALARS) | {"schema_version", "objects", "shelter", "agent_start", "initial_fires", "walls"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(unknown[0], "unknown field")
    for required in ("width", "height", "objects", "shelter", "agent_start"):
        if required not in data:
            raise ConfigError(required, "required")
    kwargs: dict[str, Any] = {}
    for key, cast in _SCALARS.items():
        if key in data:
            try:
                kwargs[key] = cast(data[key])
            except (TypeError, ValueError):
                raise ConfigError(key, f"cannot read {data[key]!r} as {cast.__name__}") from None
    objects = []
    for item in data["objects"] or []:
        try:
            objects.append(ObjectSpec(int(item["id"]), _cell(item["position"], "objects"), float(item["value"])))
        except (KeyError, TypeError, ValueError):
            raise ConfigError("objects", f"bad object entry {item!r}") from None
    shelter = data["shelter"]
    if not (isinstance(shelter, (list, tuple)) and len(shelter) == 4):
        raise ConfigError("shelter", "expected [row0, col0, row1, col1]")
    config = ScenarioConfig(
        objects=tuple(objects),
        shelter=Rect(*(int(v) for v in shelter)),
        agent_start=_cell(data["agent_start"], "agent_start"),
        initial_fires=tuple(_cell(c, "initial_fires") for c in data.get("initial_fires") or []),
        walls=tuple(_cell(c, "walls") for c in data.get("walls") or []),
        **kwargs,
    )
    config.validate()
    return config


def scenario_to_dict(config: ScenarioConfig) -> dict:
    s = config.shelter
    return {
        "schema_version": SCHEMA_VERSION,
        "name": config.name,
        "width": config.width,
        "height": config.height,
        "fps": config.fps,
        "frame_budget": config.frame_budget,
        "spread_prob": config.spread_prob,
        "ignition_frames": config.ignition_frames,
        "frames_per_cell": config.frames_per_cell,
        "pickup_frames": config.pickup_frames,
        "drop_frames": config.drop_frames,
        "visibility_radius": config.visibility_radius,
        "agent_start": list(config.agent_start),
        "shelter": [s.row0, s.col0, s.row1, s.col1],
        "initial_fires": [list(c) for c in config.initial_fires],
        "walls": [list(c) for c in config.walls],
        "objects": [
            {"id": o.id, "position": list(o.position), "value": o.value} for o in config.objects
        ],
    }


def load_scenario(ref: Union[str, Path]) -> ScenarioConfig:
    """Load a scenario file, or a bundled scenario by bare name."""
    path = Path(ref)
    if not path.exists() and str(ref) in BUILTIN_SCENARIOS:
        text = resources.files("rrara.scenarios").joinpath(f"{ref}.yaml").read_text()
    elif path.exists():
        text = path.read_text()
    else:
        raise ConfigError("scenario", f"no such scenario file or bundled name: {ref}")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("scenario", f"unreadable document: {exc}") from None
    return scenario_from_dict(data)


# ---------------------------------------------------------------- reflectors


def make_reviewer(spec: Optional[dict], context: Optional[dict] = None) -> Reviewer:
    """Reviewer from a small mapping, e.g. ``{"kind": "oracle", "latency": 0.5}``.

    ``kind: llm`` takes ``endpoint`` (mapping), and optionally ``replay`` or
    ``record`` fixture paths; ``{scenario}``, ``{agent}`` and ``{seed}`` in a
    path are filled from ``context``.
    """
    spec = dict(spec or {"kind": "mock"})
    kind = spec.pop("kind", "mock")
    if kind == "mock":
        return MockReviewer(
            mode=spec.get("mode", "keep"),
            latency=float(spec.get("latency", REVIEW_LATENCY)),
            script=spec.get("script", ()),
        )
    if kind == "oracle":
        return OracleReviewer(latency=float(spec.get("latency", REVIEW_LATENCY)), depth=int(spec.get("depth", 3)))
    if kind == "llm":
        from .llm import EndpointConfig, HttpTransport, LLMReviewer, RecordingTransport, ReplayTransport

        fill = context or {}
        if spec.get("replay"):
            transport = ReplayTransport(str(spec["replay"]).format(**fill))
        else:
            transport = HttpTransport(EndpointConfig.from_mapping(spec.get("endpoint") or {}))
            if spec.get("record"):
                transport = RecordingTransport(transport, str(spec["record"]).format(**fill))
        return LLMReviewer(transport, retries=int(spec.get("retries", 1)))
    raise ConfigError("reflector", f"unknown reflector kind {kind!r}")


# ---------------------------------------------------------------- episodes


class _Episode:
    """One run of the frame loop; owns world, clock, agent and session."""

    def __init__(
        self,
        config: ScenarioConfig,
        agent: Agent,
        seed: int,
        clock: TcmClock,
        session: Optional[ReflectorSession],
        log: EpisodeLog,
        realtime: bool,
    ):
        self.world = new_world(config, seed)
        self.agent = agent
        self.seed = seed
        self.clock = clock
        self.session = session
        self.log = log
        self.realtime = realtime
        self.reviewed_running = False
        self._t0 = time.monotonic()

    @property
    def frame(self) -> int:
        return self.world.frame

    def step(self) -> None:
        if self.realtime:
            lag = self._t0 + self.frame / self.world.config.fps - time.monotonic()
            if lag > 0:
                time.sleep(lag)
        self.record(step_frame(self.world))

    def record(self, ev: FrameEvents) -> None:
        for oid, old, new in ev.status_changes:
            self.log.append("status", ev.frame, object=oid, **{"from": old.value, "to": new.value})
        done = ev.action_completed
        if done is not None:
            self.log.append(
                "complete", ev.frame, action=action_literal(done.action),
                executed=done.executed_frames, ok=done.ok,
                reason=done.reason.value if done.reason else None,
            )
            self.reviewed_running = False

    def try_begin(self, action) -> Union[ActionAck, ActionRejected]:
        try:
            return begin_action(self.world, action)
        except ActionRejected as exc:
            return exc

    def log_begin(self, result: Union[ActionAck, ActionRejected], action, origin: str) -> None:
        if isinstance(result, ActionRejected):
            self.log.append("reject", self.frame, action=action_literal(action),
                            reason=result.reason.value, origin=origin)
            return
        if result.interrupted is not None:
            self.log.append("interrupt", self.frame, action=action_literal(result.interrupted.action),
                            executed=result.interrupted.executed_frames)
        self.log.append("begin", self.frame, action=action_literal(action), frames=result.frames, origin=origin)
        self.reviewed_running = origin == "policy" and self.agent.reflective
        for oid, old, new in result.status_changes:
            self.log.append("status", self.frame, object=oid, **{"from": old.value, "to": new.value})
        if result.completed is not None:
            self.log.append("complete", self.frame, action=action_literal(action), executed=0,
                            ok=result.completed.ok,
                            reason=result.completed.reason.value if result.completed.reason else None)
            self.reviewed_running = False

    def deliver(self) -> None:
        verdict = self.session.poll(self.frame)
        if verdict is None:
            return
        self.agent.memory.remember_verdict(verdict)
        late = not self.reviewed_running
        result = None
        if verdict.is_override:
            result = self.try_begin(verdict.action)
        self.log.append(
            "reflection_deliver", self.frame,
            verdict=verdict.kind,
            action=action_literal(verdict.action) if verdict.action else None,
            latency=verdict.latency, submit_frame=verdict.submit_frame, late=late,
            accepted=None if result is None else isinstance(result, ActionAck),
            parse_failed=verdict.parse_failed, degraded=verdict.degraded, source=verdict.source,
        )
        if verdict.degraded:
            self.log.append("reflection_degraded", self.frame, reason=verdict.rationale)
        if result is not None:
            self.log_begin(result, verdict.action, "override")

    def decide(self) -> None:
        obs = observe(self.world)
        was_pending = self.session is not None and self.session.pending
        decision = self.agent.decide(obs, self.session)
        frames = min(self.clock.frames_for(decision.t_inf), self.world.config.frame_budget - self.frame)
        self.log.append(
            "decision", self.frame, action=action_literal(decision.action),
            t_inf=decision.t_inf, charged_frames=frames,
            charged_s=decision.t_inf if self.clock.enabled else 0.0,
            rationale=decision.rationale,
        )
        if self.session is not None:
            if decision.degraded:
                self.log.append("reflection_degraded", self.frame, reason="session closed, reflex only")
            else:
                if was_pending:
                    self.log.append("reflection_cancel", self.frame)
                self.log.append("reflection_submit", self.frame, action=action_literal(decision.action))
        if frames:
            charge_inference(self.world, self.clock, decision.t_inf, on_frame=self.record)
        else:
            self.clock.charged_seconds += decision.t_inf if self.clock.enabled else 0.0
        if is_terminal(self.world):
            return
        result = self.try_begin(decision.action)
        self.log_begin(result, decision.action, "policy")
        if isinstance(result, ActionRejected):
            if self.session is not None and self.session.cancel():
                self.log.append("reflection_cancel", self.frame)
            self.step()

    def run(self) -> None:
        world = self.world
        cfg = world.config
        self.log.append(
            "start", 0, scenario=cfg.name, seed=self.seed, agent=self.agent.name, fps=cfg.fps,
            objects=[[o.id, o.value] for o in world.objects.values()],
        )
        same_frame = (0, -1)
        while not is_terminal(world):
            if self.session is not None:
                self.deliver()
            if world.agent.current_action is None:
                count = same_frame[0] + 1 if same_frame[1] == self.frame else 1
                same_frame = (count, self.frame)
                if count > MAX_SAME_FRAME_DECISIONS:
                    self.step()
                    continue
                self.decide()
                continue
            self.step()
        act = world.agent.current_action
        if act is not None:
            self.log.append("interrupt", self.frame, action=action_literal(act.action), executed=act.executed)
        if self.session is not None:
            if self.session.cancel():
                self.log.append("reflection_cancel", self.frame)
            self.session.close()
        self.log.append(
            "end", self.frame,
            statuses={str(o.id): o.status.value for o in world.objects.values()},
        )


def run_episode(
    scenario: Union[ScenarioConfig, str, Path],
    agent: str,
    seed: int,
    *,
    tcm: bool = True,
    latency: Optional[LatencySource] = None,
    reflector: Optional[Union[Reviewer, dict]] = None,
    session_mode: Optional[str] = None,
    depth: int = 3,
    log_path: Optional[Union[str, Path]] = None,
    realtime: Optional[bool] = None,
) -> EpisodeLog:
    """Run one episode to termination and return its log.

    With ``log_path`` every event is also appended to that file as it
    happens, so an interrupted run leaves a readable prefix.
    """
    config = scenario if isinstance(scenario, ScenarioConfig) else load_scenario(scenario)
    config.validate()
    if agent not in AGENT_NAMES:
        raise ConfigError("agent", f"unknown agent {agent!r}")
    bot = Agent(agent, latency, depth)
    mode = session_mode or ("wallclock" if bot.latency.mode == "wallclock" else "virtual")
    session = None
    if bot.reflective:
        reviewer = reflector if callable(reflector) else make_reviewer(
            reflector, {"scenario": config.name, "agent": agent.replace(":", "-"), "seed": seed}
        )
        session = ReflectorSession(reviewer, config.fps, mode)
    if realtime is None:
        realtime = mode == "wallclock"
    clock = TcmClock(config.fps, enabled=tcm)
    sink = None
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        sink = open(log_path, "w", encoding="utf-8")
    try:
        episode = _Episode(config, bot, seed, clock, session, EpisodeLog(sink=sink), realtime)
        episode.run()
    finally:
        if sink is not None:
            sink.close()
        if session is not None and not session.closed:
            session.close()
    return episode.log


def replay(path: Union[str, Path]) -> MetricReport:
    """Recompute metrics from a persisted log alone."""
    return compute(EpisodeLog.read(path))


# ---------------------------------------------------------------- suites


@dataclass
class SuiteConfig:
    scenarios: list[str]
    agents: list[str]
    seeds: list[int]
    tcm: bool = True
    latency_mode: str = "virtual"
    virtual_latency: Union[None, float, dict] = None
    latency_schedule: Optional[str] = None
    reflector: Optional[dict] = None
    depth: int = 3
    out: str = "runs"
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.scenarios:
            raise ConfigError("scenarios", "must not be empty")
        if not self.agents:
            raise ConfigError("agents", "must not be empty")
        if not self.seeds:
            raise ConfigError("seeds", "must not be empty")
        for name in self.agents:
            if name not in AGENT_NAMES:
                raise ConfigError("agents", f"unknown agent {name!r}")
        if self.latency_mode not in ("virtual", "wallclock"):
            raise ConfigError("latency_mode", f"expected virtual|wallclock, got {self.latency_mode!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "SuiteConfig":
        data = dict(data)
        seeds = data.get("seeds", 10)
        data["seeds"] = list(range(seeds)) if isinstance(seeds, int) else [int(s) for s in seeds]
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(unknown[0], "unknown suite field")
        for key in ("scenarios", "agents"):
            if key not in data:
                raise ConfigError(key, "required")
        return cls(**data)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SuiteConfig":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()) or {})

    def canonical(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    def latency_for(self, agent: str) -> Optional[LatencySource]:
        if self.latency_mode == "wallclock":
            return LatencySource(mode="wallclock")
        if self.latency_schedule:
            return LatencySource.from_schedule_file(self.latency_schedule)
        value = self.virtual_latency
        if isinstance(value, dict):
            value = value.get(agent)
        return None if value is None else LatencySource(seconds=float(value))


@dataclass
class RunManifest:
    tool_version: str
    config_hash: str
    logs: list[str]
    started: str
    finished: str
    host: str
    failures: list[dict] = field(default_factory=list)


def log_name(scenario: str, agent: str, seed: int) -> str:
    return f"{scenario}__{agent.replace(':', '-')}__s{seed}.jsonl"


def _episode_job(job: tuple) -> tuple[str, Optional[dict], Optional[str]]:
    suite, scenario_ref, agent, seed, path = job
    try:
        ep = run_episode(
            load_scenario(scenario_ref), agent, seed,
            tcm=suite.tcm, latency=suite.latency_for(agent), reflector=suite.reflector,
            depth=suite.depth, log_path=path,
        )
        return path, compute(ep).to_dict(), None
    except Exception as exc:  # recorded per episode; the suite carries on
        return path, None, f"{type(exc).__name__}: {exc}"


def _float(v: Any) -> str:
    return "" if v is None else f"{v:.6f}"


def report_csv(reports: list[MetricReport]) -> str:
    buf = io.StringIO()
    rows = report_rows(reports)
    writer = csv.writer(buf, lineterminator="\n")
    columns = ["scenario", "agent", *MetricReport.METRICS]
    writer.writerow(columns)
    for row in rows:
        writer.writerow([row["scenario"], row["agent"], *(_float(row[k]) for k in MetricReport.METRICS)])
    return buf.getvalue()


def _group(per_episode: list[MetricReport]) -> list[MetricReport]:
    groups: dict[tuple[str, str], list[MetricReport]] = {}
    for r in per_episode:
        groups.setdefault((r.scenario, r.agent), []).append(r)
    return [aggregate(rows) for rows in groups.values()]


def run_suite(suite: SuiteConfig) -> tuple[RunManifest, list[MetricReport]]:
    """Run every scenario x agent x seed, then write report and manifest."""
    out = Path(suite.out)
    logs_dir = out / "logs"
    logs_dir.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    configs = [load_scenario(ref) for ref in suite.scenarios]
    jobs = [
        (suite, ref, agent, seed, str(logs_dir / log_name(cfg.name, agent, seed)))
        for ref, cfg in zip(suite.scenarios, configs)
        for agent in suite.agents
        for seed in suite.seeds
    ]
    if suite.workers > 1:
        with ProcessPoolExecutor(max_workers=suite.workers) as pool:
            results = list(pool.map(_episode_job, jobs))
    else:
        results = [_episode_job(job) for job in jobs]

    per_episode, failures = [], []
    for path, metrics, error in results:
        if error is not None:
            failures.append({"log": Path(path).name, "error": error})
            continue
        metrics.pop("per_seed", None)
        per_episode.append(MetricReport(**metrics))
    reports = _group(per_episode)
    (out / "report.csv").write_text(report_csv(reports))
    detail = [r.to_dict() for r in reports]
    (out / "report.json").write_text(json.dumps(detail, indent=2, sort_keys=True) + "\n")
    manifest = RunManifest(
        tool_version=__version__,
        config_hash=suite.digest(),
        logs=[Path(j[4]).name for j in jobs],
        started=started,
        finished=datetime.now(timezone.utc).isoformat(),
        host=f"{platform.node()} {platform.platform()} python {platform.python_version()}",
        failures=failures,
    )
    (out / "manifest.json").write_text(json.dumps(manifest.__dict__, indent=2) + "\n")
    return manifest, reports


def report_dir(directory: Union[str, Path]) -> list[MetricReport]:
    """Aggregate every episode log found under ``directory``."""
    root = Path(directory)
    paths = sorted(root.rglob("*.jsonl"))
    if not paths:
        raise ConfigError("dir", f"no episode logs under {root}")
    return _group([replay(p) for p in paths])
