"""The standard library: NC source blocks loaded before user programs."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .parser import parse_declarations, parse_program

FILES = ("basics.nc", "spreading.nc", "collection.nc", "sparse.nc", "upgrade.nc")


@dataclass(frozen=True)
class Entry:
    name: str
    file: str
    scheme: str          # expected NC scheme, as printed by format_scheme
    summary: str


CATALOG = (
    Entry("foldhoodPlusSelf", "basics.nc", "forall t. ((t, t) -> t, t) -> t", "fold over neighbours and self"),
    Entry("counthood", "basics.nc", "() -> num", "number of aligned neighbours"),
    Entry("sumhood", "basics.nc", "(num) -> num", "sum of neighbours' values"),
    Entry("minhood", "basics.nc", "(num) -> num", "least neighbour value"),
    Entry("gradient", "spreading.nc", "(bool, () -> num) -> num", "distance to the nearest source"),
    Entry("G", "spreading.nc", "forall t. (num, t, () -> num, (t) -> t) -> pair<num, t>", "spread along a gradient"),
    Entry("T", "spreading.nc", "forall t. (t, t, (t) -> t) -> t", "clamped decay over rounds"),
    Entry("gradientG", "spreading.nc", "(bool, () -> num) -> num", "gradient built from G"),
    Entry("broadcast", "spreading.nc", "forall t. (bool, t, () -> num) -> t", "value of the nearest source"),
    Entry("parentOf", "collection.nc", "(num) -> num", "neighbour to descend to"),
    Entry("C", "collection.nc", "forall t. (num, (t, t) -> t, t, t) -> t", "accumulate down a potential"),
    Entry("competition", "sparse.nc", "forall t. (num, pair<num, t>, pair<num, t>, num, () -> num) -> pair<num, t>", "one round of leader competition"),
    Entry("S", "sparse.nc", "(num, () -> num) -> bool", "leaders about grain apart"),
    Entry("up", "upgrade.nc", "forall t t1. (() -> pair<t, t1>) -> t1", "gossip of versioned functions"),
)


def source(name):
    return resources.files("neighbours").joinpath("stdlib", name).read_text(encoding="utf-8")


@lru_cache(maxsize=1)
def load_stdlib():
    """All library declarations, in load order."""
    decls = []
    for f in FILES:
        decls.extend(parse_declarations(source(f), file=f, prelude=tuple(decls)))
    return tuple(decls)


def load_program(text, file="<input>", with_stdlib=True, pid="main"):
    prelude = load_stdlib() if with_stdlib else ()
    return parse_program(text, file=file, prelude=prelude, pid=pid)
