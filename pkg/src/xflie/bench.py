"""Scenario runner and planner comparison.

A scenario names a world (file or generator recipe), mission settings, a
post-mission query script and a seed. Running it writes the mission log,
the final graph, per-search metrics and per-query path lengths.
"""

from __future__ import annotations

import csv
import json
import os
import statistics
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import grid as gridmod
from . import hpp, serialize
from .errors import ConfigError, MissingMetrics, XflieError
from .flie import InspectionParams, UtilityWeights
from .mission import Mission, MissionConfig, MetricsRecord
from .scene import CameraModel, Modality, NoiseSpec, SensorMode, load_world
from .worlds import generate_world

METRICS_COLUMNS = ("scenario", "planner", "query_id", "layer", "edges_exposed", "plan_time_s", "path_length_m", "status")
QUERY_COLUMNS = ("scenario", "query_id", "query", "lsg_ok", "lsg_length_m", "grid_ok", "grid_length_m")
# wall-clock columns; everything else is reproducible bit for bit
TIMING_COLUMNS = ("plan_time_s",)


@dataclass
class ScenarioSpec:
    name: str
    world: str | None = None
    generate: dict[str, Any] | None = None
    mission: dict[str, Any] = field(default_factory=dict)
    queries: list[str] = field(default_factory=list)
    seed: int = 0
    planner: str = "lsg"
    noise: dict[str, Any] | None = None
    out: str | None = None
    base_dir: str = "."

    def __post_init__(self) -> None:
        if (self.world is None) == (self.generate is None):
            raise ConfigError("scenario needs exactly one of 'world' or 'generate'")
        if self.planner not in ("lsg", "grid", "both"):
            raise ConfigError(f"planner must be lsg, grid or both, got {self.planner!r}")
        if self.world is not None and not self.world_path.exists():
            raise ConfigError(f"world file {self.world_path} does not exist")

    @property
    def world_path(self) -> Path:
        assert self.world is not None
        p = Path(self.world)
        return p if p.is_absolute() else Path(self.base_dir) / p


def load_scenario(path: str | Path) -> ScenarioSpec:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    known = {f.name for f in fields(ScenarioSpec)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    doc.setdefault("name", path.stem)
    doc["base_dir"] = str(path.parent)
    try:
        return ScenarioSpec(**doc)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


ENV_KEYS = {
    "XFLIE_SEED": ("seed", int),
    "XFLIE_PLANNER": ("planner", str),
    "XFLIE_OUT": ("out", str),
    "XFLIE_NAIVE_EDGES": ("naive_edges", lambda v: v.strip().lower() in ("1", "true", "yes", "on")),
    "XFLIE_SIMILARITY_NORM": ("similarity_norm", str),
}


def env_overrides(environ: Mapping[str, str] | None = None) -> dict[str, Any]:
    environ = os.environ if environ is None else environ
    out = {}
    for key, (name, conv) in ENV_KEYS.items():
        if key in environ:
            try:
                out[name] = conv(environ[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {environ[key]!r}") from exc
    return out


def apply_overrides(spec: ScenarioSpec, overrides: Mapping[str, Any]) -> ScenarioSpec:
    """Fold ``seed/planner/out/naive_edges/similarity_norm`` overrides into a spec."""
    top = {k: v for k, v in overrides.items() if k in ("seed", "planner", "out") and v is not None}
    mission = dict(spec.mission)
    for k in ("naive_edges", "similarity_norm"):
        if overrides.get(k) is not None:
            mission[k] = overrides[k]
    return replace(spec, mission=mission, **top)


def mission_config(d: Mapping[str, Any], planner: str) -> MissionConfig:
    d = dict(d)
    kw: dict[str, Any] = {}
    try:
        if "weights" in d:
            kw["weights"] = UtilityWeights(**d.pop("weights"))
        if "params" in d:
            kw["params"] = InspectionParams(**d.pop("params"))
        if "modality" in d:
            kw["modality"] = Modality(d.pop("modality"))
        if "sensor_mode" in d:
            kw["sensor_mode"] = SensorMode(d.pop("sensor_mode"))
        kw.update(d)
        kw["record_grid"] = planner in ("grid", "both")
        cfg = MissionConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad mission config: {exc}") from exc
    if cfg.similarity_norm not in ("set", "none"):
        raise ConfigError(f"similarity_norm must be set or none, got {cfg.similarity_norm!r}")
    return cfg


def build_mission(spec: ScenarioSpec) -> Mission:
    if spec.generate is not None:
        gen = dict(spec.generate)
        try:
            world = generate_world(int(gen.pop("targets")), spec.seed, **gen)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad generator recipe: {exc!r}") from exc
        cam, noise = CameraModel(), NoiseSpec.zero()
    else:
        world, cam, noise = load_world(spec.world_path)
        world.seed = spec.seed
    if spec.noise is not None:
        noise = NoiseSpec(**spec.noise) if spec.noise else NoiseSpec()
    return Mission(world, cam, noise, mission_config(spec.mission, spec.planner), spec.seed)


def auto_queries(mission: Mission, count: int) -> list[str]:
    """Deterministic feature visits spread over the inspected targets."""
    rng = np.random.default_rng(np.random.SeedSequence([mission.seed, 0xA070]))
    choices = []
    for t in sorted(mission.g.inspected(), key=lambda t: t.id):
        for lv in t.level_graph.nodes:
            labels = sorted({f.label for p in lv.pose_graph.nodes for f in p.feature_graph.nodes})
            for lab in labels:
                choices.append(f"Visit {lab} in {lv.label} of {t.label}")
    if not choices:
        return []
    idx = rng.choice(len(choices), size=min(count, len(choices)), replace=False)
    return [choices[i] for i in sorted(idx)]


def expand_queries(mission: Mission, script: Sequence[str]) -> list[str]:
    out = []
    for q in script:
        s = q.strip()
        if s.lower().startswith("auto"):
            n = int(s.split(":", 1)[1]) if ":" in s else 5
            out += auto_queries(mission, n)
        else:
            out.append(s)
    return out


@dataclass
class QueryOutcome:
    query_id: str
    query: str
    lsg_ok: bool
    lsg_length: float
    grid_ok: bool | None
    grid_length: float | None
    end_position: tuple[float, float, float]
    terminal_pose: int | None
    error: str | None = None


@dataclass
class ScenarioResult:
    spec: ScenarioSpec
    mission: Mission
    queries: list[QueryOutcome]
    aborted: str | None = None

    @property
    def metrics(self) -> list[MetricsRecord]:
        return self.mission.metrics


def replay_queries(mission: Mission, script: Sequence[str]) -> list[QueryOutcome]:
    outcomes = []
    mission.policy = "query"
    for i, text in enumerate(expand_queries(mission, script)):
        qid = f"q{i}"
        start = mission.robot.position
        n_rows = len(mission.metrics)
        try:
            query = hpp.parse_query(text, mission.g)
        except XflieError as exc:
            mission.log("query_rejected", query=qid, text=text, reason=str(exc))
            outcomes.append(QueryOutcome(qid, text, False, 0.0, None, None, start, None, str(exc)))
            continue
        res = mission.plan_and_fly(query, qid)
        grid_rows = [r for r in mission.metrics[n_rows:] if r.planner == "grid"]
        g_ok = grid_rows[0].status == "ok" if grid_rows else None
        g_len = grid_rows[0].path_length_m if grid_rows else None
        if res is None:
            outcomes.append(QueryOutcome(qid, text, False, 0.0, g_ok, g_len, mission.robot.position, None, "plan failed"))
        else:
            outcomes.append(QueryOutcome(qid, text, True, res.total_length, g_ok, g_len, mission.robot.position, res.terminal_pose))
    return outcomes


def run_scenario(spec: ScenarioSpec, out_dir: str | Path | None = None) -> ScenarioResult:
    """Run the mission and its query script; write artifacts when ``out_dir`` is given."""
    mission = build_mission(spec)
    aborted = None
    queries: list[QueryOutcome] = []
    try:
        mission.run()
        queries = replay_queries(mission, spec.queries)
    except XflieError as exc:
        aborted = f"{type(exc).__name__}: {exc}"
        mission.log("mission_aborted", reason=aborted)
    result = ScenarioResult(spec, mission, queries, aborted)
    out = out_dir if out_dir is not None else spec.out
    if out is not None:
        write_artifacts(result, Path(out))
    return result


def transit_outcomes(result: ScenarioResult) -> list[tuple[str, bool, float, bool | None, float | None]]:
    """Per query id: ``(id, lsg_ok, lsg_length, grid_ok, grid_length)`` for every planned transit and query."""
    rows: dict[str, dict[str, Any]] = {}
    for e in result.mission.events:
        if e["event"] == "plan_executed":
            rows.setdefault(e["query"], {})["lsg"] = (True, e["length"])
        elif e["event"] == "plan_failed":
            rows.setdefault(e["query"], {})["lsg"] = (False, 0.0)
    for m in result.metrics:
        if m.planner == "grid":
            rows.setdefault(m.query_id, {})["grid"] = (m.status == "ok", m.path_length_m)
    out = []
    for qid, d in rows.items():
        lsg_ok, lsg_len = d.get("lsg", (False, 0.0))
        g = d.get("grid")
        out.append((qid, lsg_ok, lsg_len, None if g is None else g[0], None if g is None else g[1]))
    return out


def write_metrics_csv(path: Path, scenario: str, rows: Iterable[MetricsRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_COLUMNS)
        for r in rows:
            w.writerow([scenario, r.planner, r.query_id, r.layer, r.edges_exposed, repr(r.plan_time_s), repr(r.path_length_m), r.status])


def write_artifacts(result: ScenarioResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    m = result.mission
    (out / "mission.jsonl").write_text(m.events_jsonl())
    serialize.save(m.g, out / "graph.lsg.json")
    write_metrics_csv(out / "metrics.csv", result.spec.name, m.metrics)
    with open(out / "queries.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(QUERY_COLUMNS)
        for qid, lok, llen, gok, glen in transit_outcomes(result):
            text = next((q.query for q in result.queries if q.query_id == qid), "")
            w.writerow([result.spec.name, qid, text, int(lok), repr(llen), "" if gok is None else int(gok), "" if glen is None else repr(glen)])
    if m.grid is not None:
        gridmod.export(m.grid, out / "grid")


# ---------------------------------------------------------------- comparison


def read_metrics(path: str | Path) -> list[dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise MissingMetrics(f"no metrics file at {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["edges_exposed"] = int(r["edges_exposed"])
        r["plan_time_s"] = float(r["plan_time_s"])
        r["path_length_m"] = float(r["path_length_m"])
    return rows


@dataclass
class PlannerStats:
    calls: int
    median_edges: float
    max_edges: int
    median_time: float
    max_time: float
    median_length: float


def _stats(rows: list[dict[str, Any]]) -> PlannerStats:
    return PlannerStats(
        calls=len(rows),
        median_edges=float(statistics.median(r["edges_exposed"] for r in rows)),
        max_edges=max(r["edges_exposed"] for r in rows),
        median_time=float(statistics.median(r["plan_time_s"] for r in rows)),
        max_time=max(r["plan_time_s"] for r in rows),
        median_length=float(statistics.median(r["path_length_m"] for r in rows)),
    )


@dataclass
class ComparisonRow:
    scenario: str
    lsg: PlannerStats
    grid: PlannerStats
    speedup: float
    length_ratio: float | None


def compare_planners(metrics: Mapping[str, Sequence[dict[str, Any]]], queries: Mapping[str, Sequence[tuple]] | None = None) -> list[ComparisonRow]:
    """Per-scenario medians and maxima for both planners.

    ``metrics`` maps scenario name to metric rows; ``queries`` optionally maps
    it to ``(id, lsg_ok, lsg_len, grid_ok, grid_len)`` tuples for length ratios.
    """
    report = []
    for name, rows in metrics.items():
        lsg_rows = [r for r in rows if r["planner"] == "lsg"]
        grid_rows = [r for r in rows if r["planner"] == "grid" and r.get("status", "ok") == "ok"]
        if not lsg_rows or not grid_rows:
            raise MissingMetrics(f"scenario {name} lacks lsg or grid metrics; run with --planner both")
        ls, gs = _stats(lsg_rows), _stats(grid_rows)
        speed = gs.median_time / ls.median_time if ls.median_time > 0 else float("inf")
        ratio = None
        if queries and name in queries:
            pairs = [(q[2], q[4]) for q in queries[name] if q[1] and q[3] and q[4]]
            if pairs:
                ratio = float(statistics.median(a / b for a, b in pairs))
        report.append(ComparisonRow(name, ls, gs, speed, ratio))
    return report


def format_report(report: Sequence[ComparisonRow]) -> str:
    head = f"{'scenario':<16} {'planner':<6} {'calls':>6} {'med_edges':>10} {'max_edges':>10} {'med_time_s':>12} {'max_time_s':>12} {'med_len_m':>10}"
    lines = [head, "-" * len(head)]
    for r in report:
        for name, s in (("lsg", r.lsg), ("grid", r.grid)):
            lines.append(
                f"{r.scenario:<16} {name:<6} {s.calls:>6} {s.median_edges:>10.1f} {s.max_edges:>10} {s.median_time:>12.3e} {s.max_time:>12.3e} {s.median_length:>10.2f}"
            )
        extra = f"  speedup (grid/lsg median time): {r.speedup:.1f}x"
        if r.length_ratio is not None:
            extra += f"  median lsg/grid length: {r.length_ratio:.3f}"
        lines.append(extra)
    return "\n".join(lines) + "\n"


def write_report(report: Sequence[ComparisonRow], out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "planner", "calls", "median_edges", "max_edges", "median_time_s", "max_time_s", "median_length_m", "speedup", "length_ratio"])
        for r in report:
            for name, s in (("lsg", r.lsg), ("grid", r.grid)):
                w.writerow([r.scenario, name, s.calls, s.median_edges, s.max_edges, s.median_time, s.max_time, s.median_length, r.speedup, r.length_ratio])
    (out / "summary.txt").write_text(format_report(report))


def metrics_dicts(rows: Iterable[MetricsRecord], scenario: str) -> list[dict[str, Any]]:
    return [{"scenario": scenario, **asdict(r)} for r in rows]
