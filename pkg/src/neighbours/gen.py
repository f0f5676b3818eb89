"""Random programs and scenarios for property tests.

Programs are produced as source text by a type-directed grammar that stays
inside the restricted fragment: variables always hold local values, and
neighbouring expressions (nbr, nbrRange and pure operators lifted over them)
only occur as the body of a foldhood.  The grammar is biased towards
nbr-under-foldhood shapes.
"""
from __future__ import annotations

import random
from dataclasses import dataclass

from .network import make_env
from .prims import SensorState

NUM_SENSORS = ("temperature",)
BOOL_SENSORS = ("b1", "b2", "isSource")


class ProgramGen:
    def __init__(self, rng, max_depth=4, allow_defs=True):
        self.rng = rng
        self.max_depth = max_depth
        self.allow_defs = allow_defs
        self.counter = 0
        self.defs = []          # (name, arity)

    def fresh(self, base="x"):
        self.counter += 1
        return f"{base}{self.counter}"

    def pick(self, *weighted):
        total = sum(w for w, _ in weighted)
        r = self.rng.uniform(0, total)
        for w, f in weighted:
            r -= w
            if r <= 0:
                return f
        return weighted[-1][1]

    # -- local numbers

    def num(self, env, depth):
        nums = [x for x, t in env.items() if t == "num"]
        leaf = [
            (2, lambda: self.literal()),
            (2 if nums else 0, lambda: self.rng.choice(nums)),
            (1, lambda: f"{self.rng.choice(NUM_SENSORS)}()"),
            (1, lambda: "mid()"),
        ]
        if depth <= 0:
            return self.pick(*leaf)()
        d = depth - 1
        return self.pick(
            *leaf,
            (3, lambda: f"({self.num(env, d)} {self.rng.choice('+-*')} {self.num(env, d)})"),
            (2, lambda: f"{self.rng.choice(('min', 'max'))}({self.num(env, d)}, {self.num(env, d)})"),
            (1, lambda: f"mux({self.boolean(env, d)}, {self.num(env, d)}, {self.num(env, d)})"),
            (5, lambda: self.fold(env, d)),
            (2, lambda: self.rep(env, d)),
            (2, lambda: f"if ({self.boolean(env, d)}) {{ {self.num(env, d)} }} {{ {self.num(env, d)} }}"),
            (1, lambda: self.let(env, d)),
            (1, lambda: self.apply_lambda(env, d)),
            (2 if self.defs else 0, lambda: self.call(env, d)),
        )()

    def literal(self):
        return str(self.rng.randint(0, 9))

    def fold(self, env, depth):
        agg = self.rng.choice(("+", "min", "max"))
        init = {"+": "0", "min": "PositiveInfinity", "max": "0"}[agg]
        if self.rng.random() < 0.3:
            init = self.num(env, 0)
        return f"foldhood({init}, {agg}, {self.field_num(env, depth)})"

    def rep(self, env, depth):
        x = self.fresh("r")
        inner = dict(env)
        inner[x] = "num"
        return f"rep({self.num(env, 0)}) {{ ({x}) => {self.num(inner, depth)} }}"

    def let(self, env, depth):
        x = self.fresh("v")
        inner = dict(env)
        inner[x] = "num"
        return f"(let {x} = {self.num(env, depth)} in {self.num(inner, depth)})"

    def apply_lambda(self, env, depth):
        x = self.fresh("a")
        inner = dict(env)
        inner[x] = "num"
        return f"(({x}) => {self.num(inner, depth)})({self.num(env, depth)})"

    def call(self, env, depth):
        name, arity = self.rng.choice(self.defs)
        args = ", ".join(self.num(env, depth) for _ in range(arity))
        return f"{name}({args})"

    # -- local Booleans

    def boolean(self, env, depth):
        bools = [x for x, t in env.items() if t == "bool"]
        leaf = [
            (1, lambda: self.rng.choice(("True", "False"))),
            (2, lambda: f"{self.rng.choice(BOOL_SENSORS)}()"),
            (1 if bools else 0, lambda: self.rng.choice(bools)),
        ]
        if depth <= 0:
            return self.pick(*leaf)()
        d = depth - 1
        return self.pick(
            *leaf,
            (3, lambda: f"({self.num(env, d)} {self.rng.choice(('<', '<=', '==', '>'))} {self.num(env, d)})"),
            (1, lambda: f"!{self.boolean(env, d)}"),
            (1, lambda: f"({self.boolean(env, d)} {self.rng.choice(('&&', '||'))} {self.boolean(env, d)})"),
        )()

    # -- neighbouring numbers (foldhood bodies only)

    def field_num(self, env, depth):
        d = max(depth - 1, 0)
        return self.pick(
            (5, lambda: f"nbr{{{self.num(env, d)}}}"),
            (2, lambda: "nbrRange()"),
            (3, lambda: f"({self.field_num(env, d)} {self.rng.choice('+-')} {self.num(env, d)})"),
            (2, lambda: f"{self.rng.choice(('min', 'max'))}({self.field_num(env, d)}, {self.field_num(env, d)})"),
            (1, lambda: f"mux({self.field_bool(env, d)}, {self.field_num(env, d)}, {self.num(env, d)})"),
            (1, lambda: self.num(env, d)),
        )() if depth > 0 else self.rng.choice((f"nbr{{{self.num(env, 0)}}}", "nbrRange()"))

    def field_bool(self, env, depth):
        return self.pick(
            (2, lambda: f"nbr{{{self.boolean(env, 0)}}}"),
            (2, lambda: f"({self.field_num(env, 0)} < {self.num(env, 0)})"),
        )()

    # -- whole programs

    def program(self):
        lines = []
        if self.allow_defs:
            for _ in range(self.rng.randint(0, 2)):
                name = self.fresh("f")
                arity = self.rng.randint(0, 2)
                params = [self.fresh("p") for _ in range(arity)]
                env = {p: "num" for p in params}
                body = self.num(env, self.max_depth - 1)
                lines.append(f"def {name}({', '.join(params)}) {{ {body} }}")
                self.defs.append((name, arity))
        lines.append(self.num({}, self.max_depth))
        return "\n".join(lines) + "\n"


def random_program(seed, max_depth=4, allow_defs=True):
    """Source text of a random program in the restricted fragment."""
    return ProgramGen(random.Random(seed), max_depth, allow_defs).program()


@dataclass
class RandomScenario:
    env: object
    actions: list


def random_sensors(rng, d):
    return SensorState({
        "temperature": float(rng.randint(0, 20)),
        "b1": rng.random() < 0.5,
        "b2": rng.random() < 0.5,
        "isSource": rng.random() < 0.3,
        "rand": rng.random(),
    })


def random_env(rng, max_nodes=8, p=0.4):
    n = rng.randint(1, max_nodes)
    edges = [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < p]
    rel = {d: {} for d in range(n)}
    for a, b in edges:
        w = float(rng.randint(1, 3))
        rel[a][b] = rel[b][a] = w
    sensors = {}
    for d in range(n):
        s = random_sensors(rng, d)
        s.relational["nbrRange"] = rel[d]
        sensors[d] = s
    return make_env(range(n), edges, sensors)


def random_scenario(seed, max_nodes=8, max_rounds=30, env_changes=True):
    """A random environment and a random fair-ish action trace.  With
    ``env_changes`` a link may be cut or a device dropped midway."""
    rng = random.Random(seed)
    env = start = random_env(rng, max_nodes)
    rounds = rng.randint(1, max_rounds)
    ds = env.devices
    active = {d: False for d in ds}
    actions = []
    change_at = rng.randint(1, rounds) if env_changes and len(ds) > 1 else None
    for r in range(rounds):
        if r == change_at:
            env = _perturb(rng, env)
            actions.append(("env", env))
            ds = env.devices
            active = {d: active.get(d, False) for d in ds}
        for _ in range(len(ds)):
            d = rng.choice(ds)
            actions.append(("-" if active[d] else "+", d))
            active[d] = not active[d]
    return RandomScenario(start, actions)


def _perturb(rng, env):
    links = [(a, b) for a, b in env.links if a < b]
    sensors = dict(env.sensors)
    if links and rng.random() < 0.6:
        cut = rng.choice(links)
        edges = [e for e in links if e != cut]
        return make_env(sensors, edges, sensors)
    gone = rng.choice(env.devices)
    del sensors[gone]
    edges = [(a, b) for a, b in links if gone not in (a, b)]
    return make_env(sensors, edges, sensors)
