"""Small-step network semantics: computation, sending, environment change.

A configuration pairs an environment (topology and sensors) with a status
(the stored neighbour trees of every device and its activation flag).
Stored trees carry the global step at which they arrived, so that old
ones can be filtered out before a firing.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from .core import strict_equal, format_value
from .device import Evaluator, format_tree
from .prims import SensorState

INFINITE = math.inf


class NetworkError(RuntimeError):
    pass


@dataclass(frozen=True)
class Env:
    """Topology (a reflexive relation ``sender -> receiver``) and sensors."""
    links: frozenset
    sensors: dict

    @property
    def devices(self):
        return sorted(self.sensors)

    def receivers(self, d):
        return sorted(b for a, b in self.links if a == d)

    def neighbours(self, d):
        """Devices that ``d`` hears from, itself excluded."""
        return sorted(a for a, b in self.links if b == d and a != d)

    def well_formed(self):
        ds = set(self.sensors)
        return (all((d, d) in self.links for d in ds)
                and all(a in ds and b in ds for a, b in self.links))


def make_env(devices, edges=(), sensors=None, directed=False):
    """Build a well-formed environment, adding self-loops and, unless
    ``directed``, both directions of every edge."""
    sensors = dict(sensors or {})
    ds = sorted(set(devices) | set(sensors))
    links = {(d, d) for d in ds}
    for a, b in edges:
        links.add((a, b))
        if not directed:
            links.add((b, a))
    sig = {d: sensors.get(d) or SensorState() for d in ds}
    env = Env(frozenset(links), sig)
    if not env.well_formed():
        raise NetworkError("edges mention unknown devices")
    return env


@dataclass(frozen=True)
class NetworkConfig:
    env: Env
    field: dict          # device -> {neighbour: (tree, arrival step)}
    active: dict         # device -> bool
    clock: int = 0

    def trees(self, d):
        return {n: t for n, (t, _) in self.field[d].items()}

    def roots(self):
        out = {}
        for d in self.env.devices:
            own = self.field[d].get(d)
            if own is not None:
                out[d] = own[0].root
        return out


def initial_config(env):
    if not env.well_formed():
        raise NetworkError("ill-formed environment")
    ds = env.devices
    return NetworkConfig(env, {d: {} for d in ds}, {d: False for d in ds}, 0)


class Simulator:
    """Applies the three transition rules for one program.

    ``horizon`` is the decay horizon in global steps: before a firing,
    entries that arrived more than ``horizon`` steps ago are dropped.  The
    device's own entry is never dropped.  ``evaluator`` may be any object
    with a ``fire(delta, trees, sigma)`` method; it defaults to the NC
    device evaluator."""

    def __init__(self, program, horizon=INFINITE, evaluator=None, budget=None):
        self.program = program
        self.horizon = horizon
        if evaluator is None:
            evaluator = Evaluator(program) if budget is None else Evaluator(program, budget)
        self.evaluator = evaluator
        self.last_env = None

    def filter(self, N, d):
        entries = N.field[d]
        if self.horizon == INFINITE:
            return {n: t for n, (t, _) in entries.items()}
        cut = N.clock - self.horizon
        return {n: t for n, (t, s) in entries.items() if n == d or s >= cut}

    def step_comp(self, N, d):
        if d not in N.active:
            raise NetworkError(f"unknown device {d}")
        if N.active[d]:
            raise NetworkError(f"device {d} is already computing")
        theta = self.filter(N, d)
        self.last_env = theta
        t = self.evaluator.fire(d, theta, N.env.sensors[d])
        kept = {n: N.field[d][n] for n in theta}
        kept[d] = (t, N.clock)
        field_ = dict(N.field)
        field_[d] = kept
        active = dict(N.active)
        active[d] = True
        return NetworkConfig(N.env, field_, active, N.clock + 1)

    def step_send(self, N, d):
        if not N.active.get(d):
            raise NetworkError(f"device {d} has nothing to send")
        t = N.field[d][d][0]
        field_ = dict(N.field)
        for r in N.env.receivers(d):
            inbox = dict(field_[r])
            inbox[d] = (t, N.clock)
            field_[r] = inbox
        active = dict(N.active)
        active[d] = False
        return NetworkConfig(N.env, field_, active, N.clock + 1)

    def step_env(self, N, env):
        if not env.well_formed():
            raise NetworkError("ill-formed environment")
        field_ = {}
        active = {}
        for d in env.devices:
            if d in N.field:
                field_[d] = N.field[d]
                active[d] = N.active[d]
            else:
                field_[d] = {}
                active[d] = False
        return NetworkConfig(env, field_, active, N.clock + 1)

    def step(self, N, action):
        kind, arg = action
        if kind == "+":
            return self.step_comp(N, arg)
        if kind == "-":
            return self.step_send(N, arg)
        if kind == "env":
            return self.step_env(N, arg)
        raise NetworkError(f"unknown action {action!r}")

    def run(self, N, scheduler, script=(), stop=None, on_round=None, on_fire=None):
        """Apply scheduled transitions until ``stop`` says so.

        ``script`` holds :class:`EnvEvent` items applied at the start of
        the given full round.  ``on_round(k, N)`` is called after each full
        round and ``on_fire(step, d, tree, N)`` after each computation."""
        stop = stop or Stop()
        log = EventLog()
        pending = sorted(script, key=lambda ev: ev.round)
        rounds = 0
        done_this_round = set()
        last_roots = None
        same = 0
        converged_at = None
        steps = 0
        while True:
            while pending and pending[0].round <= rounds:
                ev = pending.pop(0)
                env = ev.apply(N)
                N = self.step_env(N, env)
                log.append(N.clock - 1, "env", None)
                done_this_round &= set(N.env.devices)
                converged_at, same, last_roots = None, 0, None
            if stop.max_steps is not None and steps >= stop.max_steps:
                break
            if stop.max_rounds is not None and rounds >= stop.max_rounds:
                break
            action = scheduler.next(N)
            if action is None:
                break
            N = self.step(N, action)
            steps += 1
            kind, d = action
            if kind == "env":
                log.append(N.clock - 1, "env", None)
                continue
            log.append(N.clock - 1, "comp" if kind == "+" else "send", d)
            if kind == "+" and on_fire is not None:
                on_fire(N.clock - 1, d, N.field[d][d][0], N)
            if kind == "-":
                done_this_round.add(d)
                if done_this_round >= set(N.env.devices):
                    rounds += 1
                    done_this_round = set()
                    roots = N.roots()
                    if last_roots is not None and _same_roots(roots, last_roots):
                        same += 1
                    else:
                        same = 0
                        converged_at = None
                    last_roots = roots
                    if same >= stop.window and converged_at is None:
                        converged_at = rounds - stop.window
                    if on_round is not None:
                        on_round(rounds, N)
                    if stop.until_stable and converged_at is not None and not pending:
                        break
        return RunResult(N, log, rounds, converged_at, steps)


def _same_roots(a, b):
    if a.keys() != b.keys():
        return False
    return all(strict_equal(a[k], b[k]) for k in a)


@dataclass
class Stop:
    max_steps: int = None
    max_rounds: int = None
    until_stable: bool = False
    window: int = 5


@dataclass
class EnvEvent:
    round: int
    apply: object      # NetworkConfig -> Env
    label: str = ""


@dataclass
class RunResult:
    config: NetworkConfig
    log: "EventLog"
    rounds: int
    converged_round: int
    steps: int

    @property
    def converged(self):
        return self.converged_round is not None


class EventLog:
    def __init__(self):
        self.entries = []

    def append(self, step, action, device):
        self.entries.append((step, action, device))

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def text(self):
        return "".join(f"{s} {a} {'-' if d is None else d}\n" for s, a, d in self.entries)

    def actions(self):
        """The log as replayable actions (environment changes excluded)."""
        return [("+" if a == "comp" else "-", d) for _, a, d in self.entries if a != "env"]


# ------------------------------------------------------------ schedulers

class RoundRobin:
    """Each device in id order computes then sends."""

    def __init__(self):
        self.queue = []

    def order(self, N):
        return N.env.devices

    def next(self, N):
        while True:
            if not self.queue:
                self.queue = [a for d in self.order(N) for a in (("+", d), ("-", d))]
            kind, d = self.queue.pop(0)
            if d not in N.active:
                continue
            if kind == "+" and N.active[d]:
                continue
            if kind == "-" and not N.active[d]:
                continue
            return (kind, d)


class ShuffledRounds(RoundRobin):
    """Like :class:`RoundRobin`, but each round visits the devices in a
    fresh seeded random order."""

    def __init__(self, seed=0):
        super().__init__()
        self.seed = seed
        self.rng = random.Random(seed)

    def order(self, N):
        ds = list(N.env.devices)
        self.rng.shuffle(ds)
        return ds


class UniformRandom:
    """Picks a device uniformly and performs its one enabled action."""

    def __init__(self, seed=0):
        self.seed = seed
        self.rng = random.Random(seed)

    def next(self, N):
        d = self.rng.choice(N.env.devices)
        return ("-" if N.active[d] else "+", d)


class ExplicitTrace:
    """Replays a fixed list of actions: ``("+", d)``, ``("-", d)`` or
    ``("env", Env)``."""

    def __init__(self, actions):
        self.actions = list(actions)
        self.pos = 0

    def next(self, N):
        if self.pos >= len(self.actions):
            return None
        a = self.actions[self.pos]
        self.pos += 1
        return a


def snapshot_rows(N, step, sensors=True):
    """One row per device: step, device, root value and sensor readings."""
    rows = []
    for d in N.env.devices:
        own = N.field[d].get(d)
        row = {"step": step, "device": d,
               "root": format_value(own[0].root) if own else ""}
        if sensors:
            for k, v in sorted(N.env.sensors[d].values.items()):
                row[k] = format_value(v)
        rows.append(row)
    return rows


def describe(N):
    """Readable dump of a configuration, used in tests and the CLI."""
    lines = []
    for d in N.env.devices:
        stored = ", ".join(f"{n}->{format_tree(t)}" for n, (t, _) in sorted(N.field[d].items()))
        lines.append(f"{d} active={N.active[d]} {{{stored}}}")
    return "\n".join(lines)
