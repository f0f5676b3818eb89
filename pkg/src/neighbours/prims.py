"""Built-in functions: their kinds, type schemes and interpretations.

Each scheme is written once in the restricted (four-kind) notation; the
plain scheme used by ordinary inference is its erasure.  Variables named
``s..`` are local-return, ``l..`` local, ``r..`` return and ``t..``
general.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import Data, Pair, Cons, NULL, INF, compare_values, strict_equal, Function

PURE, SENSOR, RELATIONAL, SPECIAL = "pure", "sensor", "relational", "special"


class BuiltinError(RuntimeError):
    pass


@dataclass(frozen=True)
class Prim:
    name: str
    kind: str
    scheme: str
    impl: object = None
    infix: str = None
    prec: int = 0


def _num(x):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise BuiltinError(f"expected a number, got {x!r}")
    return x


def _bool(x):
    if not isinstance(x, bool):
        raise BuiltinError(f"expected a Boolean, got {x!r}")
    return x


def _pair(x):
    if not (isinstance(x, Data) and x.ctor == "Pair"):
        raise BuiltinError(f"expected a pair, got {x!r}")
    return x.args


def _cons(x, op):
    if not isinstance(x, Data) or x.ctor not in ("Cons", "Null"):
        raise BuiltinError(f"expected a list, got {x!r}")
    if x.ctor == "Null":
        raise BuiltinError(f"{op} of an empty list")
    return x.args


def _div(a, b):
    a, b = _num(a), _num(b)
    if b == 0:
        return math.nan if a == 0 or a != a else math.copysign(INF, a)
    return a / b


def _sub(a, b):
    return float(_num(a) - _num(b))


def _mul(a, b):
    return float(_num(a) * _num(b))


def _min(a, b):
    return b if compare_values(b, a) < 0 else a


def _max(a, b):
    return b if compare_values(b, a) > 0 else a


def _mux(c, a, b):
    return a if _bool(c) else b


def _eq(a, b):
    return strict_equal(a, b)


def _cons_new(h, t):
    if not isinstance(t, Data) or t.ctor not in ("Cons", "Null"):
        raise BuiltinError(f"cons onto a non-list {t!r}")
    return Cons(h, t)


TABLE = {}


def _add(p):
    TABLE[p.name] = p


for name, sym, prec, fn in [
        ("+", "+", 5, lambda a, b: float(_num(a) + _num(b))),
        ("-", "-", 5, _sub),
        ("*", "*", 6, _mul),
        ("/", "/", 6, _div)]:
    _add(Prim(name, PURE, "(num, num) -> num", fn, sym, prec))

for name, prec, fn in [
        ("<", 4, lambda a, b: _num(a) < _num(b)),
        ("<=", 4, lambda a, b: _num(a) <= _num(b)),
        (">", 4, lambda a, b: _num(a) > _num(b)),
        (">=", 4, lambda a, b: _num(a) >= _num(b))]:
    _add(Prim(name, PURE, "(num, num) -> bool", fn, name, prec))

_add(Prim("=", PURE, "(s, s) -> bool", _eq, "==", 3))
_add(Prim("!=", PURE, "(s, s) -> bool", lambda a, b: not _eq(a, b), "!=", 3))
_add(Prim("and", PURE, "(bool, bool) -> bool", lambda a, b: _bool(a) and _bool(b), "&&", 2))
_add(Prim("or", PURE, "(bool, bool) -> bool", lambda a, b: _bool(a) or _bool(b), "||", 1))
_add(Prim("not", PURE, "(bool) -> bool", lambda a: not _bool(a)))
_add(Prim("abs", PURE, "(num) -> num", lambda a: float(abs(_num(a)))))
_add(Prim("min", PURE, "(s, s) -> s", _min))
_add(Prim("max", PURE, "(s, s) -> s", _max))
_add(Prim("mux", PURE, "(bool, s, s) -> s", _mux))
_add(Prim("pair", PURE, "(s1, s2) -> pair<s1, s2>", Pair))
_add(Prim("fst", PURE, "(pair<s1, s2>) -> s1", lambda p: _pair(p)[0]))
_add(Prim("snd", PURE, "(pair<s1, s2>) -> s2", lambda p: _pair(p)[1]))
_add(Prim("cons", PURE, "(s, list<s>) -> list<s>", _cons_new))
_add(Prim("head", PURE, "(list<s>) -> s", lambda x: _cons(x, "head")[0]))
_add(Prim("tail", PURE, "(list<s>) -> list<s>", lambda x: _cons(x, "tail")[1]))
_add(Prim("isEmpty", PURE, "(list<s>) -> bool",
          lambda x: isinstance(x, Data) and x.ctor == "Null"))

# mid reads the device identifier; the other sensors read sigma
_add(Prim("mid", SENSOR, "() -> num", None))
_add(Prim("nbrRange", RELATIONAL, "() -> field<num>", None))
_add(Prim("consthood", SPECIAL, "(s) -> field<s>", None))
_add(Prim("map", SPECIAL, "", None))

DEFAULT_SENSORS = {
    "temperature": "num",
    "source": "bool",
    "isSource": "bool",
    "isObstacle": "bool",
    "rand": "num",
    "cpu": "num",
    "resources": "num",
    "upgrade": "bool",
    "b1": "bool",
    "b2": "bool",
    "b3": "bool",
}

for _s, _t in DEFAULT_SENSORS.items():
    _add(Prim(_s, SENSOR, f"() -> {_t}", None))


def register_sensor(name, type_text="num"):
    """Declare an extra sensor ``name : () -> type_text``."""
    if name in TABLE and TABLE[name].kind != SENSOR:
        raise ValueError(f"{name} is already a non-sensor built-in")
    TABLE[name] = Prim(name, SENSOR, f"() -> {type_text}", None)


def is_builtin(name):
    return name in TABLE


INFIX = {p.infix: p.name for p in TABLE.values() if p.infix}
INFIX_OF = {p.name: (p.infix, p.prec) for p in TABLE.values() if p.infix}


class SensorState:
    """Sensor readings of one device: scalar sensors plus relational
    tables mapping a neighbour id to a value."""

    __slots__ = ("values", "relational")

    def __init__(self, values=None, relational=None):
        self.values = dict(values or {})
        self.relational = {k: dict(v) for k, v in (relational or {}).items()}

    def read(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise BuiltinError(f"sensor {name!r} has no reading on this device") from None

    def read_relational(self, name, delta, other):
        if other == delta:
            return 0.0
        return self.relational.get(name, {}).get(other, INF)

    def copy(self):
        return SensorState(self.values, self.relational)

    def __eq__(self, other):
        return (isinstance(other, SensorState) and self.values == other.values
                and self.relational == other.relational)

    def __repr__(self):
        return f"SensorState({self.values!r}, {self.relational!r})"


def apply_pure(name, args):
    p = TABLE[name]
    try:
        return p.impl(*args)
    except TypeError as exc:
        raise BuiltinError(f"{name}: {exc}") from None


def read_sensor(name, delta, sigma):
    if name == "mid":
        return float(delta)
    return sigma.read(name)


def arity(name):
    p = TABLE[name]
    if p.kind in (SENSOR, RELATIONAL):
        return 0
    if p.name == "consthood":
        return 1
    if p.name == "map":
        return None
    return p.impl.__code__.co_argcount if hasattr(p.impl, "__code__") else None
