"""Episodes, violation oracle, traces, metrics and test campaigns."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import __version__
from .config import Config, FuzzerConfig, HarnessConfig, config_to_dict
from .controllers import Controller, MarlOtController
from .fuzzer import apply_constraints
from .road import RoadNetwork, build_scenario
from .sim import (LaneIntent, Maneuver, VehicleState, WorldState, detect_collisions, footprint_gap,
                  gap_at_most, is_within_boundary, make_vehicle, step_ego, step_vehicle)
from .sut import policy_for

log = logging.getLogger(__name__)

TRACE_FORMAT = 1


class ViolationKind(str, Enum):
    CRASH = "MultiVehicleCrash"
    ABNORMAL = "AbnormalTrajectory"


class AbnormalKind(str, Enum):
    REVERSE = "Reverse"
    OFF_ROAD = "OffRoad"
    STALL = "Stall"


class Outcome(str, Enum):
    DESTINATION = "destination"
    VIOLATION = "violation"
    COLLISION = "collision"  # ego crashed without the multi-vehicle condition
    TIMEOUT = "timeout"
    ABORTED = "aborted"


@dataclass(frozen=True)
class ViolationRecord:
    kind: ViolationKind
    subkind: AbnormalKind | None
    time: float
    step: int
    vehicles: tuple[int, ...]
    near_count: int
    trace: str | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "subkind": self.subkind.value if self.subkind else None,
                "time": self.time, "step": self.step, "vehicles": list(self.vehicles),
                "near_count": self.near_count, "trace": self.trace}


@dataclass(frozen=True)
class History:
    """Consecutive-step counters the abnormal-trajectory checks need."""

    reverse_run: int = 0
    stall_run: int = 0
    steps: int = 0


def update_history(history: History, world: WorldState, cfg: HarnessConfig) -> History:
    v = world.ego.speed
    return History(history.reverse_run + 1 if v < cfg.reverse_speed else 0,
                   history.stall_run + 1 if abs(v) < cfg.stall_speed else 0,
                   history.steps + 1)


def near_vehicles(world: WorldState, d_constraint: float) -> list[int]:
    """SVs whose footprint comes within ``d_constraint`` of the ego's."""
    return [sv.vid for sv in world.surrounding if gap_at_most(world.ego, sv, d_constraint)]


def detect_violation(world: WorldState, history: History, network: RoadNetwork,
                     cfg: HarnessConfig | None = None, fuzzer: FuzzerConfig | None = None,
                     collisions: list[tuple[int, int]] | None = None) -> ViolationRecord | None:
    """Judge the current step; ``history`` must already include it.

    Every violation needs at least ``min_sv_near`` SVs within the constraint
    distance of the ego, unless ``require_proximity`` is switched off.
    """
    cfg = cfg or HarnessConfig()
    fuzzer = fuzzer or FuzzerConfig()
    if history.steps < 1:
        raise ValueError("violation checks need at least one elapsed step")
    near = near_vehicles(world, fuzzer.d_constraint)
    if cfg.require_proximity and len(near) < cfg.min_sv_near:
        return None
    t = world.step * world.dt
    ego = world.ego
    if collisions is None:
        collisions = detect_collisions(world)
    hit = sorted({b if a == ego.vid else a for a, b in collisions if ego.vid in (a, b)})
    if hit:
        return ViolationRecord(ViolationKind.CRASH, None, t, world.step, (ego.vid, *hit), len(near))
    sub = None
    if not is_within_boundary(ego, network):
        sub = AbnormalKind.OFF_ROAD
    elif history.reverse_run >= cfg.reverse_steps:
        sub = AbnormalKind.REVERSE
    elif history.stall_run >= cfg.stall_steps:
        sub = AbnormalKind.STALL
    if sub is None:
        return None
    return ViolationRecord(ViolationKind.ABNORMAL, sub, t, world.step, (ego.vid, *near), len(near))


# --------------------------------------------------------------------------
# traces


def vehicle_record(v: VehicleState) -> dict:
    return {"vid": v.vid, "x": v.x, "y": v.y, "heading": v.heading, "s": v.s, "lat": v.lat,
            "speed": v.speed, "lane": v.lane_index, "crashed": v.crashed}


def _canonical(record: dict) -> str:
    return json.dumps(record, sort_keys=False, separators=(",", ":"), allow_nan=True)


@dataclass
class EpisodeTrace:
    header: dict
    steps: list[dict] = field(default_factory=list)
    footer: dict | None = None

    @property
    def poisoned(self) -> bool:
        return bool(self.footer and self.footer.get("poisoned"))

    def lines(self) -> list[str]:
        out = [_canonical({"header": self.header})]
        out += [_canonical(s) for s in self.steps]
        if self.footer is not None:
            out.append(_canonical({"footer": self.footer}))
        return out

    def digest(self) -> str:
        h = hashlib.sha256()
        for line in self.lines():
            h.update(line.encode())
            h.update(b"\n")
        return h.hexdigest()

    def ego_path(self) -> list[tuple[float, float]]:
        return [(s["vehicles"][0]["x"], s["vehicles"][0]["y"]) for s in self.steps]


class TraceWriter:
    """Appends each record to disk as it is produced, so aborted runs stay inspectable."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path else None
        self._fh = None
        if self.path is not None:
            try:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self._fh = open(self.path, "w")
            except OSError as exc:
                raise OSError(f"cannot write trace to {self.path}: {exc}") from exc

    def write(self, record: dict) -> None:
        if self._fh is not None:
            self._fh.write(_canonical(record) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def export_trace(trace: EpisodeTrace, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(trace.lines()) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write trace to {path}: {exc}") from exc
    return path


def load_trace(path: str | Path) -> EpisodeTrace:
    header, steps, footer = None, [], None
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "header" in rec:
                header = rec["header"]
            elif "footer" in rec:
                footer = rec["footer"]
            else:
                steps.append(rec)
    if header is None:
        raise ValueError(f"{path} has no trace header")
    return EpisodeTrace(header, steps, footer)


# --------------------------------------------------------------------------
# episodes


def step_cap(network: RoadNetwork, cfg: Config) -> int:
    cruise = 0.5 * cfg.sut.idm.v0
    return max(cfg.scenario.min_step_cap, math.ceil(network.total_length / cruise / cfg.sim.dt))


def spawn_world(cfg: Config, network: RoadNetwork, rng: np.random.Generator,
                n_surrounding: int | None = None) -> WorldState:
    """Ego near the entry; SVs scattered ahead of and behind it in random lanes."""
    sc, sim = cfg.scenario, cfg.sim
    n = sc.n_surrounding if n_surrounding is None else n_surrounding
    ego_s = sc.ego_spawn_s
    ego_lane = int(rng.integers(network.lane_count(ego_s)))
    ego = make_vehicle(network, 0, ego_s, ego_lane, sc.ego_speed, cfg=sim)
    placed: list[tuple[float, int]] = [(ego_s, ego_lane)]
    svs = []
    lo, hi = sc.sv_spawn_window
    for vid in range(1, n + 1):
        for _ in range(200):
            s = ego_s + rng.choice([-1.0, 1.0]) * rng.uniform(lo, hi)
            if s < sim.vehicle_length or s > network.total_length - 20:
                continue
            count = network.lane_count(s)
            lane = int(rng.integers(count))
            if all(abs(s - ps) > sim.vehicle_length + 3.0 or pl != lane for ps, pl in placed):
                break
        else:
            raise RuntimeError("could not place surrounding vehicles without overlap")
        placed.append((s, lane))
        speed = max(sc.ego_speed + rng.uniform(-sc.sv_speed_jitter, sc.sv_speed_jitter), 0.0)
        svs.append(make_vehicle(network, vid, s, lane, speed, cfg=sim))
    return WorldState(ego, tuple(svs), 0, sim.dt)


@dataclass
class EpisodeResult:
    outcome: Outcome
    violation: ViolationRecord | None
    steps: int
    trace: EpisodeTrace
    min_gap: float  # closest any SV footprint came to the ego's
    sv_min_gaps: list[float]
    error: str | None = None

    @property
    def violated(self) -> bool:
        return self.violation is not None

    @property
    def mean_min_gap(self) -> float:
        return float(np.mean(self.sv_min_gaps)) if self.sv_min_gaps else math.inf


def _mark_crashes(world: WorldState, pairs: list[tuple[int, int]]) -> WorldState:
    hit = {v for p in pairs for v in p}
    if not hit:
        return world
    ego = world.ego
    if ego.vid in hit:
        ego = dataclasses.replace(ego, crashed=True)
    svs = tuple(dataclasses.replace(sv, crashed=True) if sv.vid in hit else sv for sv in world.surrounding)
    return dataclasses.replace(world, ego=ego, surrounding=svs)


def run_episode(cfg: Config, controller: Controller, seed, network: RoadNetwork | None = None,
                trace_path: str | Path | None = None, world: WorldState | None = None,
                meta: dict | None = None) -> EpisodeResult:
    """Drive one test until destination, violation, collision or the step cap.

    ``seed`` may be an int or a ``SeedSequence``; it fixes spawn positions and
    every random choice the controller makes.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    spawn_rng, ctrl_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    if network is None:
        network = build_scenario(cfg.scenario.road, cfg.scenario.lanes, cfg.harness.seed, cfg.sim.lane_width)
    if world is None:
        world = spawn_world(cfg, network, spawn_rng)
    policy = policy_for(cfg.sut.kind)
    cap = step_cap(network, cfg)
    destination = network.total_length - cfg.scenario.destination_margin
    header = {
        "format": TRACE_FORMAT, "version": __version__, "controller": controller.name,
        "seed": [int(x) for x in np.atleast_1d(ss.entropy)] + list(ss.spawn_key),
        "road": cfg.scenario.road, "lanes": cfg.scenario.lanes, "sut": cfg.sut.kind,
        "road_length": network.total_length, "step_cap": cap, "config": config_to_dict(cfg),
        **(meta or {}),
    }
    trace = EpisodeTrace(header)
    writer = TraceWriter(trace_path)
    writer.write({"header": header})
    history = History()
    gaps = [math.inf] * len(world.surrounding)
    violation = None
    outcome = Outcome.TIMEOUT
    error = None
    step = 0
    try:
        controller.reset(world, network, ctrl_rng)
        for step in range(1, cap + 1):
            try:
                prop = controller.act(world, network, ctrl_rng)
            except Exception as exc:  # noqa: BLE001 - any controller failure poisons the trace
                error = f"{type(exc).__name__}: {exc}"
                log.warning("controller %s failed at step %d: %s", controller.name, step, error)
                outcome = Outcome.ABORTED
                break
            final = [apply_constraints(m, sv.vid, world, network, cfg.fuzzer)
                     for m, sv in zip(prop.maneuvers, world.surrounding)]
            decision = policy(world, network, cfg.sut, cfg.sim, cfg.fuzzer.d_safe)
            ego = step_ego(world.ego, decision.accel, decision.intent, world.dt, network, cfg.sim)
            svs = tuple(step_vehicle(sv, m, world.dt, network, cfg.sim) for sv, m in zip(world.surrounding, final))
            world = WorldState(ego, svs, world.step + 1, world.dt)
            pairs = detect_collisions(world)
            world = _mark_crashes(world, pairs)
            history = update_history(history, world, cfg.harness)
            for k, sv in enumerate(world.surrounding):
                gaps[k] = min(gaps[k], footprint_gap(world.ego, sv))
            violation = detect_violation(world, history, network, cfg.harness, cfg.fuzzer, pairs)
            record = {
                "step": world.step, "t": round(world.step * world.dt, 10),
                "vehicles": [vehicle_record(v) for v in world.vehicles],
                "maneuvers": [m.value for m in final],
                "raw": [m.value for m in prop.maneuvers],
                "owners": list(prop.owners),
                "overrides": [f != m for f, m in zip(final, prop.maneuvers)],
                "sut": {"accel": decision.accel, "intent": decision.intent.value},
                "collisions": [list(p) for p in pairs],
                "events": list(prop.events),
            }
            trace.steps.append(record)
            writer.write(record)
            if violation is not None:
                outcome = Outcome.VIOLATION
                break
            if world.ego.crashed:
                outcome = Outcome.COLLISION
                break
            if world.ego.s >= destination:
                outcome = Outcome.DESTINATION
                break
        if violation is not None and trace_path is not None:
            violation = dataclasses.replace(violation, trace=str(trace_path))
        trace.footer = {"outcome": outcome.value, "steps": len(trace.steps),
                        "violation": violation.to_dict() if violation else None,
                        "poisoned": error is not None, "error": error}
        writer.write({"footer": trace.footer})
    finally:
        writer.close()
    return EpisodeResult(outcome, violation, len(trace.steps), trace, min(gaps, default=math.inf), gaps, error)


# --------------------------------------------------------------------------
# metrics


def violation_rate(violations: int | Iterable[bool], budget: int) -> float:
    if budget < 1:
        raise ValueError("budget must be positive")
    count = violations if isinstance(violations, (int, np.integer)) else sum(bool(v) for v in violations)
    if not 0 <= count <= budget:
        raise ValueError(f"{count} violations cannot come from {budget} runs")
    return 100.0 * count / budget


def top_k(flags: Iterable[bool], k: int = 5) -> int | None:
    """1-based run index at which the K-th violation appeared, or None."""
    found = 0
    for i, flag in enumerate(flags, start=1):
        if flag:
            found += 1
            if found == k:
                return i
    return None


def top_k_from_indices(indices: Iterable[int], k: int = 5) -> int | None:
    ordered = sorted(indices)
    return ordered[k - 1] if len(ordered) >= k else None


def aggregate_top_k(values: list[int | None]) -> float | None:
    """Mean over repetitions that found K; absent if fewer than half did."""
    found = [v for v in values if v is not None]
    if not values or 2 * len(found) < len(values):
        return None
    return float(np.mean(found))


@dataclass
class CampaignReport:
    method: str
    scenario: str
    lanes: int
    sut: str
    budget: int
    repetitions: int
    violation_counts: list[int]
    violation_runs: list[list[int]]
    top_k_per_rep: list[int | None]
    rate: float
    top_k: float | None
    k: int
    seeds: list[list[int]]
    trace_hashes: list[str]
    kinds: dict[str, int] = field(default_factory=dict)
    outcomes: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def rates(self) -> list[float]:
        return [violation_rate(c, self.budget) for c in self.violation_counts]


def _kind_label(v: ViolationRecord) -> str:
    return v.kind.value if v.subkind is None else f"{v.kind.value}:{v.subkind.value}"


def run_campaign(cfg: Config, controller_factory: Callable[[], Controller] | None = None,
                 network: RoadNetwork | None = None,
                 progress: Callable[[int, int, EpisodeResult], None] | None = None) -> CampaignReport:
    """``budget`` episodes per repetition, each repetition with a fresh seed stream."""
    from .baselines import controller_factory_for, ga_run

    h = cfg.harness
    if h.budget < 1 or h.repetitions < 1:
        raise ValueError("budget and repetitions must be positive")
    if network is None:
        network = build_scenario(cfg.scenario.road, cfg.scenario.lanes, h.seed, cfg.sim.lane_width)
    master = np.random.SeedSequence(h.seed)
    rep_seqs = master.spawn(h.repetitions)
    counts, runs, tops, hashes = [], [], [], []
    kinds: dict[str, int] = {}
    outcomes: dict[str, int] = {}
    trace_root = Path(h.trace_dir) if h.trace_dir else None
    factory = controller_factory
    if factory is None and h.method != "ga":
        factory = controller_factory_for(cfg)
    for r, rep_seq in enumerate(rep_seqs):
        digest = hashlib.sha256()
        episode_seqs = rep_seq.spawn(h.budget + 1)

        def episode(controller: Controller, i: int, _seqs=episode_seqs, _r=r) -> EpisodeResult:
            path = trace_root / f"{h.method}_rep{_r}_ep{i:04d}.jsonl" if trace_root else None
            return run_episode(cfg, controller, _seqs[i], network, path,
                               meta={"method": h.method, "repetition": _r, "episode": i})

        if h.method == "ga":
            ga_rng = np.random.default_rng(episode_seqs[-1])
            results = ga_run(cfg, network, episode, ga_rng).results
        else:
            results = []
            for i in range(h.budget):
                res = episode(factory(), i)
                results.append(res)
                if progress is not None:
                    progress(r, i, res)
        flags = [res.violated for res in results]
        for res in results:
            digest.update(res.trace.digest().encode())
            outcomes[res.outcome.value] = outcomes.get(res.outcome.value, 0) + 1
            if res.violation is not None:
                label = _kind_label(res.violation)
                kinds[label] = kinds.get(label, 0) + 1
        counts.append(int(sum(flags)))
        runs.append([i for i, f in enumerate(flags, start=1) if f])
        tops.append(top_k(flags, h.top_k))
        hashes.append(digest.hexdigest())
    return CampaignReport(
        method=h.method, scenario=cfg.scenario.road, lanes=cfg.scenario.lanes, sut=cfg.sut.kind,
        budget=h.budget, repetitions=h.repetitions, violation_counts=counts, violation_runs=runs,
        top_k_per_rep=tops, rate=float(np.mean([violation_rate(c, h.budget) for c in counts])),
        top_k=aggregate_top_k(tops), k=h.top_k,
        seeds=[[int(x) for x in np.atleast_1d(s.entropy)] + list(s.spawn_key) for s in rep_seqs],
        trace_hashes=hashes, kinds=kinds, outcomes=outcomes,
    )


def save_report(report: CampaignReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2))


def load_report(path: str | Path) -> CampaignReport:
    return CampaignReport(**json.loads(Path(path).read_text()))


__all__ = [
    "ViolationKind", "AbnormalKind", "Outcome", "ViolationRecord", "History", "update_history",
    "detect_violation", "near_vehicles", "EpisodeTrace", "TraceWriter", "export_trace", "load_trace",
    "spawn_world", "step_cap", "run_episode", "EpisodeResult", "violation_rate", "top_k",
    "top_k_from_indices", "aggregate_top_k", "CampaignReport", "run_campaign", "save_report",
    "load_report", "MarlOtController", "Maneuver", "LaneIntent",
]
