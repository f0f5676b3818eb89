"""Scenario files, network construction and the round-by-round driver.

A scenario is an INI file (read with configparser).  Sections:

``[scenario]``
    ``schema_version`` (must be 1), ``program`` (path relative to the file)
    or ``source`` (inline NC text), ``stdlib`` (yes/no), ``outputs`` (names
    for the components of main's right-nested pairs).
``[topology]``
    ``kind`` = line | grid | random-geometric | edges, with ``n``, ``width``,
    ``height``, ``radius``, ``seed``, ``edges`` ("0-1 1-2"), ``positions``
    ("0:0,0 1:1,0") and ``metric`` = unit | euclidean (for nbrRange).
``[sensors]``
    ``name = value`` defaults for every device.  A value is a number,
    True/False, or ``random(a, b)``.
``[sensor.NAME]``
    ``device = value`` overrides.
``[run]``
    ``scheduler`` = round-robin | shuffled | random | trace, ``trace`` ("+2 -2 +3 -3"),
    ``seed``, ``horizon`` (steps, or inf), ``max_rounds``, ``until_stable``,
    ``window``, ``snapshot_every``, ``budget``.
``[events]``
    ``script`` = ``;``-separated items ``ROUND OP ARGS`` with OP one of
    ``remove D``, ``add D``, ``cut A B``, ``link A B``, ``set D NAME VALUE``.
``[case-study]``
    ``grain``, ``spikes`` (rounds), ``spike_length``, ``spike_factor``,
    ``spike_fraction``, ``upgrade_round``, ``upgrade_device``,
    ``failure_probability``, ``failure_start``, ``failure_end``, ``outage``.
"""
from __future__ import annotations

import configparser
import csv
import io
import math
import os
import random
import re
from collections import defaultdict
from dataclasses import dataclass, field

from .core import Data, format_value
from .device import DEFAULT_BUDGET
from .network import (EventLog, ExplicitTrace, RoundRobin, ShuffledRounds, Simulator, Stop,
                      UniformRandom, initial_config, make_env)
from .prims import SensorState
from .stdlib import load_program

SCHEMA_VERSION = 1

CASE_STUDY_SOURCE = """\
// Adaptive edge-cloud areas: leaders split the network, collect the load
// of their area and spread the total back.  The metric used for the split
// can be upgraded at runtime.
def injecter() {
  mux(upgrade(), pair(2, () => nbrRange() * 2.0), pair(1, () => nbrRange()))
}

def caseStudy(grain) {
  let leaders = S(grain, up(injecter)) in
  let potential = gradient(leaders, nbrRange) in
  let area = C(potential, +, cpu(), 0) in
  let estimate = broadcast(leaders, pair(mid(), area), nbrRange) in
  pair(leaders, pair(potential, pair(area, pair(fst(estimate), snd(estimate)))))
}
"""

CASE_STUDY_OUTPUTS = ("leader", "potential", "area", "leader_id", "cpu_estimate")


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ config

@dataclass
class Topology:
    kind: str = "line"
    n: int = 5
    width: int = 0
    height: int = 0
    radius: float = 0.25
    seed: int = 0
    edges: tuple = ()
    positions: dict = field(default_factory=dict)
    metric: str = "unit"


@dataclass
class CaseStudy:
    grain: float = 4.0
    spikes: tuple = ()
    spike_length: int = 10
    spike_factor: float = 3.0
    spike_fraction: float = 0.3
    upgrade_round: int = None
    upgrade_device: int = None
    failure_probability: float = 0.0
    failure_start: int = 0
    failure_end: int = 0
    outage: int = 5


@dataclass
class ScriptEvent:
    round: int
    op: str
    args: tuple


@dataclass
class ScenarioConfig:
    source: str = "0"
    program_file: str = None
    stdlib: bool = True
    outputs: tuple = ("value",)
    topology: Topology = field(default_factory=Topology)
    sensors: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    scheduler: str = "round-robin"
    trace: tuple = ()
    seed: int = 0
    horizon: float = math.inf
    max_rounds: int = 100
    until_stable: bool = False
    window: int = 5
    snapshot_every: int = 1
    budget: int = DEFAULT_BUDGET
    script: list = field(default_factory=list)
    case: CaseStudy = None

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        return cls.from_text(text, base_dir=os.path.dirname(os.path.abspath(path)))

    @classmethod
    def from_text(cls, text, base_dir="."):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        try:
            return _from_parser(cp, base_dir)
        except (ValueError, KeyError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value: {exc}") from None


def _parse_scalar(text):
    t = text.strip()
    if t in ("True", "true", "yes"):
        return True
    if t in ("False", "false", "no"):
        return False
    m = re.fullmatch(r"random\(\s*([-\d.eE+]+)\s*,\s*([-\d.eE+]+)\s*\)", t)
    if m:
        return ("random", float(m.group(1)), float(m.group(2)))
    if t in ("inf", "PositiveInfinity"):
        return math.inf
    try:
        return float(t)
    except ValueError:
        raise ConfigError(f"cannot read sensor value {t!r}") from None


def _parse_edges(text):
    out = []
    for item in text.split():
        a, _, b = item.partition("-")
        if not b:
            raise ConfigError(f"bad edge {item!r}, expected A-B")
        out.append((int(a), int(b)))
    return tuple(out)


def _parse_positions(text):
    out = {}
    for item in text.split():
        d, _, xy = item.partition(":")
        x, _, y = xy.partition(",")
        out[int(d)] = (float(x), float(y))
    return out


def _parse_script(text):
    events = []
    for item in text.split(";"):
        parts = item.split()
        if not parts:
            continue
        if len(parts) < 3:
            raise ConfigError(f"bad script item {item.strip()!r}")
        r, op, args = int(parts[0]), parts[1], parts[2:]
        need = {"remove": 1, "add": 1, "cut": 2, "link": 2, "set": 3}
        if op not in need or len(args) != need[op]:
            raise ConfigError(f"bad script item {item.strip()!r}")
        events.append(ScriptEvent(r, op, tuple(args)))
    return events


def _from_parser(cp, base_dir):
    if not cp.has_section("scenario"):
        raise ConfigError("missing [scenario] section")
    sc = cp["scenario"]
    version = sc.getint("schema_version", fallback=None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}, expected {SCHEMA_VERSION}")
    cfg = ScenarioConfig()
    cfg.stdlib = sc.getboolean("stdlib", fallback=True)
    if "program" in sc:
        path = os.path.join(base_dir, sc["program"])
        try:
            with open(path, encoding="utf-8") as fh:
                cfg.source = fh.read()
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        cfg.program_file = path
    elif "source" in sc:
        cfg.source = sc["source"]
    elif not cp.has_section("case-study"):
        raise ConfigError("[scenario] needs program or source")
    if "outputs" in sc:
        cfg.outputs = tuple(x.strip() for x in sc["outputs"].split(",") if x.strip())

    if cp.has_section("topology"):
        t = cp["topology"]
        kind = t.get("kind", "line")
        topo = Topology(kind=kind, n=t.getint("n", 0 if kind == "edges" else 5),
                        width=t.getint("width", 0), height=t.getint("height", 0),
                        radius=t.getfloat("radius", 0.25), seed=t.getint("seed", 0),
                        edges=_parse_edges(t.get("edges", "")),
                        positions=_parse_positions(t.get("positions", "")),
                        metric=t.get("metric", "unit"))
        if topo.kind not in ("line", "grid", "random-geometric", "edges"):
            raise ConfigError(f"unknown topology kind {topo.kind!r}")
        if topo.metric not in ("unit", "euclidean"):
            raise ConfigError(f"unknown metric {topo.metric!r}")
        cfg.topology = topo

    if cp.has_section("sensors"):
        cfg.sensors = {k: _parse_scalar(v) for k, v in cp["sensors"].items()}
    for sec in cp.sections():
        if sec.startswith("sensor."):
            name = sec[len("sensor."):]
            cfg.overrides[name] = {int(k): _parse_scalar(v) for k, v in cp[sec].items()}

    if cp.has_section("run"):
        r = cp["run"]
        cfg.scheduler = r.get("scheduler", "round-robin")
        if cfg.scheduler not in ("round-robin", "shuffled", "random", "trace"):
            raise ConfigError(f"unknown scheduler {cfg.scheduler!r}")
        cfg.trace = tuple(_parse_action(a) for a in r.get("trace", "").split())
        cfg.seed = r.getint("seed", 0)
        h = r.get("horizon", "inf").strip()
        cfg.horizon = math.inf if h == "inf" else int(h)
        cfg.max_rounds = r.getint("max_rounds", 100)
        cfg.until_stable = r.getboolean("until_stable", False)
        cfg.window = r.getint("window", 5)
        cfg.snapshot_every = r.getint("snapshot_every", 1)
        cfg.budget = r.getint("budget", DEFAULT_BUDGET)

    if cp.has_section("events"):
        cfg.script = _parse_script(cp["events"].get("script", ""))

    if cp.has_section("case-study"):
        c = cp["case-study"]
        up = c.get("upgrade_round", "").strip()
        dev = c.get("upgrade_device", "").strip()
        cfg.case = CaseStudy(
            grain=c.getfloat("grain", 4.0),
            spikes=tuple(int(x) for x in c.get("spikes", "").split()),
            spike_length=c.getint("spike_length", 10),
            spike_factor=c.getfloat("spike_factor", 3.0),
            spike_fraction=c.getfloat("spike_fraction", 0.3),
            upgrade_round=int(up) if up else None,
            upgrade_device=int(dev) if dev else None,
            failure_probability=c.getfloat("failure_probability", 0.0),
            failure_start=c.getint("failure_start", 0),
            failure_end=c.getint("failure_end", 0),
            outage=c.getint("outage", 5))
        if "program" not in sc and "source" not in sc:
            cfg.source = CASE_STUDY_SOURCE + f"caseStudy({format_value(cfg.case.grain)})\n"
            cfg.outputs = CASE_STUDY_OUTPUTS
    return cfg


def _parse_action(text):
    if len(text) < 2 or text[0] not in "+-":
        raise ConfigError(f"bad trace action {text!r}, expected +D or -D")
    return (text[0], int(text[1:]))


# ---------------------------------------------------------------- topology

def base_graph(topo):
    """Devices, undirected edges and positions of a topology spec."""
    if topo.kind == "line":
        ds = list(range(topo.n))
        edges = [(i, i + 1) for i in range(topo.n - 1)]
        pos = {i: (float(i), 0.0) for i in ds}
    elif topo.kind == "grid":
        w, h = topo.width, topo.height
        if w <= 0 or h <= 0:
            raise ConfigError("grid needs positive width and height")
        ds = list(range(w * h))
        pos = {y * w + x: (float(x), float(y)) for y in range(h) for x in range(w)}
        edges = [(y * w + x, y * w + x + 1) for y in range(h) for x in range(w - 1)]
        edges += [(y * w + x, (y + 1) * w + x) for y in range(h - 1) for x in range(w)]
    elif topo.kind == "random-geometric":
        rng = random.Random(topo.seed)
        pos = {i: (rng.random(), rng.random()) for i in range(topo.n)}
        ds = list(range(topo.n))
        edges = [(a, b) for a in ds for b in ds
                 if a < b and math.dist(pos[a], pos[b]) <= topo.radius]
    else:
        edges = list(topo.edges)
        ds = sorted({d for e in edges for d in e} | set(topo.positions) | set(range(topo.n)))
        pos = dict(topo.positions)
        if topo.metric == "euclidean":
            missing = [d for d in ds if d not in pos]
            if missing:
                raise ConfigError(f"euclidean metric needs positions for {missing}")
    return ds, edges, pos


class World:
    """Mutable description of the current environment, turned into an Env
    on demand.  Devices removed and added back keep their base links."""

    def __init__(self, cfg):
        self.cfg = cfg
        ds, edges, pos = base_graph(cfg.topology)
        self.base_devices = list(ds)
        self.base_edges = {tuple(sorted(e)) for e in edges}
        self.pos = pos
        self.present = set(ds)
        self.extra = set()
        self.cut = set()
        rng = random.Random(f"sensors:{cfg.seed}")
        self.values = {}
        for d in ds:
            vals = {"rand": rng.random()}
            for name, spec in sorted(cfg.sensors.items()):
                vals[name] = _draw(spec, rng)
            self.values[d] = vals
        for name, table in sorted(cfg.overrides.items()):
            for d, spec in sorted(table.items()):
                if d not in self.values:
                    raise ConfigError(f"sensor.{name} mentions unknown device {d}")
                self.values[d][name] = _draw(spec, rng)

    def edges(self):
        es = (self.base_edges | self.extra) - self.cut
        return sorted((a, b) for a, b in es if a in self.present and b in self.present)

    def distance(self, a, b):
        if self.cfg.topology.metric == "unit":
            return 1.0
        return math.dist(self.pos[a], self.pos[b])

    def env(self):
        es = self.edges()
        rel = defaultdict(dict)
        for a, b in es:
            rel[a][b] = rel[b][a] = self.distance(a, b)
        sensors = {d: SensorState(self.values[d], {"nbrRange": rel.get(d, {})})
                   for d in sorted(self.present)}
        return make_env(sorted(self.present), es, sensors)

    def apply(self, ev):
        op, args = ev.op, ev.args
        if op == "remove":
            self.present.discard(int(args[0]))
        elif op == "add":
            d = int(args[0])
            if d not in self.values:
                self.values[d] = {"rand": random.Random(f"new:{self.cfg.seed}:{d}").random()}
            self.present.add(d)
        elif op in ("cut", "link"):
            e = tuple(sorted((int(args[0]), int(args[1]))))
            if op == "cut":
                self.cut.add(e)
                self.extra.discard(e)
            else:
                self.extra.add(e)
                self.cut.discard(e)
        elif op == "set":
            d = int(args[0])
            if d not in self.values:
                raise ConfigError(f"set on unknown device {d}")
            self.values[d][args[1]] = _draw(_parse_scalar(args[2]), random.Random(0))
        else:
            raise ConfigError(f"unknown script operation {op!r}")


def _draw(spec, rng):
    if isinstance(spec, tuple) and spec[0] == "random":
        return spec[1] + (spec[2] - spec[1]) * rng.random()
    return spec


def build_network(cfg):
    """Initial network configuration for a scenario."""
    return initial_config(World(cfg).env())


# ------------------------------------------------------------------ running

@dataclass
class MetricsRow:
    step: int
    round: int
    device: int
    values: dict
    converged: bool


@dataclass
class ScenarioResult:
    rows: list
    log: EventLog
    rounds: int
    converged_round: int
    config: object
    history: list = field(default_factory=list)   # (round, label) of perturbations
    actions: list = field(default_factory=list)   # replayable, environment changes included
    initial_env: object = None

    @property
    def converged(self):
        return self.converged_round is not None

    def final_outputs(self):
        last = max((r.step for r in self.rows), default=None)
        return {r.device: r.values for r in self.rows if r.step == last}


def split_outputs(value, names):
    """Name the components of a right-nested pair."""
    if len(names) == 1:
        return {names[0]: value}
    out = {}
    v = value
    for n in names[:-1]:
        if not (isinstance(v, Data) and v.ctor == "Pair"):
            raise ConfigError(f"main does not produce {len(names)} nested components")
        out[n] = v.args[0]
        v = v.args[1]
    out[names[-1]] = v
    return out


def _scheduler(cfg):
    if cfg.scheduler == "round-robin":
        return RoundRobin()
    if cfg.scheduler == "random":
        return UniformRandom(cfg.seed)
    if cfg.scheduler == "shuffled":
        return ShuffledRounds(cfg.seed)
    return ExplicitTrace(cfg.trace)


def compile_scenario(cfg):
    return load_program(cfg.source, file=cfg.program_file or "<scenario>", with_stdlib=cfg.stdlib)


def run_scenario(cfg, program=None):
    """Run a scenario round by round, collecting snapshot rows."""
    program = program or compile_scenario(cfg)
    world = World(cfg)
    dyn = _CaseDynamics(cfg, world) if cfg.case else None
    N = initial_config(world.env())
    start = N.env
    sim = Simulator(program, horizon=cfg.horizon, budget=cfg.budget)
    sched = _scheduler(cfg)
    log = EventLog()
    rows = []
    history = []
    actions = []
    script = sorted(cfg.script, key=lambda e: e.round)

    last, same, converged_at = None, 0, None
    rounds = 0
    while rounds < cfg.max_rounds:
        changed = False
        while script and script[0].round <= rounds:
            ev = script.pop(0)
            world.apply(ev)
            history.append((rounds, f"{ev.op} {' '.join(ev.args)}"))
            changed = True
        if dyn is not None:
            labels = dyn.before_round(rounds, _outputs(N, cfg))
            history.extend((rounds, lab) for lab in labels)
            changed = changed or bool(labels)
        if changed:
            env = world.env()
            N = sim.step_env(N, env)
            log.append(N.clock - 1, "env", None)
            actions.append(("env", env))
            last, same, converged_at = None, 0, None
        res = sim.run(N, sched, stop=Stop(max_rounds=1))
        N = res.config
        log.entries.extend(res.log.entries)
        actions.extend(res.log.actions())
        if res.rounds == 0:
            break
        rounds += 1
        # whole trees, not just roots: state below the root may still be moving
        roots = {d: N.field[d][d][0] for d in N.env.devices if d in N.field[d]}
        if last is not None and roots == last:
            same += 1
        else:
            same, converged_at = 0, None
        last = roots
        if same >= cfg.window and converged_at is None:
            converged_at = rounds - cfg.window
        stable = converged_at is not None
        if rounds % cfg.snapshot_every == 0:
            rows.extend(_snapshot(N, rounds, cfg, stable))
        quiet = not script and (dyn is None or dyn.quiet_after(rounds))
        if cfg.until_stable and stable and quiet:
            break
    if not rows or rows[-1].round != rounds:
        rows.extend(_snapshot(N, rounds, cfg, converged_at is not None))
    return ScenarioResult(rows, log, rounds, converged_at, N, history, actions, start)


def _outputs(N, cfg):
    out = {}
    for d, v in N.roots().items():
        try:
            out[d] = split_outputs(v, cfg.outputs)
        except ConfigError:
            out[d] = {}
    return out


def _snapshot(N, rnd, cfg, stable):
    rows = []
    for d, vals in sorted(_outputs(N, cfg).items()):
        if vals:
            rows.append(MetricsRow(N.clock, rnd, d, vals, stable))
    return rows


class _CaseDynamics:
    """Load spikes, metric upgrade and leader failures of the case study."""

    def __init__(self, cfg, world):
        self.case = cfg.case
        self.world = world
        self.rng = random.Random(f"case:{cfg.seed}")
        self.base_cpu = {d: world.values[d].get("cpu", 0.0) for d in world.base_devices}
        self.spiking = {}
        self.restore = {}
        for d in world.base_devices:
            world.values[d].setdefault("upgrade", False)
            world.values[d].setdefault("cpu", 0.0)

    def quiet_after(self, r):
        c = self.case
        ends = [s + c.spike_length for s in c.spikes]
        if c.upgrade_round is not None:
            ends.append(c.upgrade_round)
        if c.failure_probability > 0:
            ends.append(c.failure_end + c.outage)
        return r > max(ends, default=-1) and not self.restore

    def before_round(self, r, outputs):
        c = self.case
        w = self.world
        labels = []
        for s in c.spikes:
            if r == s:
                k = max(1, round(c.spike_fraction * len(w.base_devices)))
                chosen = sorted(self.rng.sample(w.base_devices, k))
                for d in chosen:
                    w.values[d]["cpu"] = self.base_cpu[d] * c.spike_factor
                self.spiking[s] = chosen
                labels.append(f"spike on {len(chosen)} devices")
            if r == s + c.spike_length and s in self.spiking:
                for d in self.spiking.pop(s):
                    w.values[d]["cpu"] = self.base_cpu[d]
                labels.append("spike over")
        if c.upgrade_round is not None and r == c.upgrade_round:
            d = c.upgrade_device if c.upgrade_device is not None else min(w.base_devices)
            w.values[d]["upgrade"] = True
            labels.append(f"metric upgrade at {d}")
        for d, back in sorted(self.restore.items()):
            if back <= r:
                del self.restore[d]
                w.present.add(d)
                labels.append(f"restore {d}")
        if c.failure_probability > 0 and c.failure_start <= r < c.failure_end:
            for d, vals in sorted(outputs.items()):
                if vals.get("leader") is True and d in w.present and self.rng.random() < c.failure_probability:
                    w.present.discard(d)
                    self.restore[d] = r + c.outage
                    labels.append(f"leader {d} fails")
        return labels


def run_case_study(cfg):
    if cfg.case is None:
        raise ConfigError("scenario has no [case-study] section")
    return run_scenario(cfg)


# ------------------------------------------------------------------ export

def export_csv(rows, path=None):
    """Long-format CSV ``step,device,key,value``; returns the text and, if
    ``path`` is given, writes it there."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "device", "key", "value"])
    for r in rows:
        for k, v in r.values.items():
            w.writerow([r.step, r.device, k, format_value(v)])
    text = buf.getvalue()
    if path is not None:
        _write(path, text)
    return text


def _numeric(v):
    if isinstance(v, bool):
        return float(v)
    if isinstance(v, float):
        return v
    return None


def export_plot_data(rows, path=None):
    """Per-step aggregates ``step,key,mean,min,max,count`` of the numeric outputs."""
    groups = defaultdict(list)
    order = []
    for r in rows:
        for k, v in r.values.items():
            x = _numeric(v)
            if x is None or math.isinf(x) or math.isnan(x):
                continue
            if (r.step, k) not in groups:
                order.append((r.step, k))
            groups[(r.step, k)].append(x)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "key", "mean", "min", "max", "count"])
    for key in order:
        xs = groups[key]
        w.writerow([key[0], key[1], repr(sum(xs) / len(xs)), repr(min(xs)), repr(max(xs)), len(xs)])
    text = buf.getvalue()
    if path is not None:
        _write(path, text)
    return text


def area_series(rows, leader_key="leader_id", value_key="cpu_estimate"):
    """One series per area: ``{leader id: [(step, estimate), ...]}``, taking
    the estimate held by the lowest device id of the area at each step."""
    out = defaultdict(list)
    seen = set()
    for r in sorted(rows, key=lambda r: (r.step, r.device)):
        lid, val = r.values.get(leader_key), r.values.get(value_key)
        if not isinstance(lid, float) or math.isinf(lid) or lid < 0:
            continue
        if (r.step, lid) in seen:
            continue
        seen.add((r.step, lid))
        out[int(lid)].append((r.step, val))
    return dict(out)


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror}") from None
