"""Abstract syntax and runtime values of the neighbours calculus.

Expressions are immutable dataclasses.  Values are Python floats for
numbers, Python bools for the two Boolean constructors, ``Data`` for the
remaining constructors (Pair, Null, Cons) and one of ``Builtin``,
``Defined`` or ``Closure`` for function values.  Function values compare
by name only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

INF = math.inf

CONSTRUCTOR_ARITY = {"True": 0, "False": 0, "PositiveInfinity": 0,
                     "Null": 0, "Pair": 2, "Cons": 2}


@dataclass(frozen=True)
class Span:
    file: str = "<input>"
    start: int = 0
    end: int = 0
    line: int = 1
    col: int = 1

    def __str__(self):
        return f"{self.file}:{self.line}:{self.col}"


# ---------------------------------------------------------------- values

@dataclass(frozen=True, slots=True)
class Data:
    ctor: str
    args: tuple = ()

    def __post_init__(self):
        want = CONSTRUCTOR_ARITY.get(self.ctor)
        if want is None or want != len(self.args):
            raise ValueError(f"bad constructor {self.ctor}/{len(self.args)}")


NULL = Data("Null")


def Pair(a, b):
    return Data("Pair", (a, b))


def Cons(h, t):
    return Data("Cons", (h, t))


def from_list(items):
    out = NULL
    for x in reversed(list(items)):
        out = Cons(x, out)
    return out


def to_list(v):
    out = []
    while isinstance(v, Data) and v.ctor == "Cons":
        out.append(v.args[0])
        v = v.args[1]
    return out


class Function:
    """Base of function values; equality is by name."""
    __slots__ = ()

    @property
    def name(self):
        raise NotImplementedError

    def __eq__(self, other):
        return isinstance(other, Function) and self.name == other.name

    def __hash__(self):
        return hash(("fn", self.name))


class Builtin(Function):
    __slots__ = ("_name",)

    def __init__(self, name):
        self._name = name

    @property
    def name(self):
        return self._name

    def __repr__(self):
        return f"Builtin({self._name!r})"


class Defined(Function):
    __slots__ = ("_name",)

    def __init__(self, name):
        self._name = name

    @property
    def name(self):
        return self._name

    def __repr__(self):
        return f"Defined({self._name!r})"


class Closure(Function):
    """A tagged anonymous function together with the values of its free
    variables.  Evaluating with ``env`` is the same as evaluating the
    body after substituting ``env`` into it."""
    __slots__ = ("lam", "env")

    def __init__(self, lam, env=None):
        self.lam = lam
        self.env = env or {}

    @property
    def name(self):
        return self.lam.tag

    def __repr__(self):
        return f"Closure({self.lam.tag!r})"


def is_function(v):
    return isinstance(v, Function)


def strict_equal(a, b):
    """Structural equality that also tells bools from numbers."""
    ta = type(a)
    if ta is not type(b):
        return ta in _NUMS and type(b) in _NUMS and a == b
    if ta is float:
        return a == b or (a != a and b != b)
    if ta is Data:
        return (a.ctor == b.ctor and
                all(strict_equal(x, y) for x, y in zip(a.args, b.args)))
    return a == b


_NUMS = (int, float)


def _rank(v):
    if isinstance(v, bool):
        return 0
    if isinstance(v, (int, float)):
        return 1
    if isinstance(v, Data):
        return 2
    return 3


def compare_values(a, b):
    """Total preorder used by min, max and the ordering built-ins.

    Numbers compare numerically, False < True, pairs and lists
    lexicographically.  Function values are mutually incomparable and
    count as equal, so min/max keep their first argument on ties."""
    ra, rb = _rank(a), _rank(b)
    if ra != rb:
        return -1 if ra < rb else 1
    if ra <= 1:
        return (a > b) - (a < b)
    if ra == 2:
        if a.ctor != b.ctor:
            order = {"Null": 0, "Cons": 1, "Pair": 2}
            return -1 if order[a.ctor] < order[b.ctor] else 1
        for x, y in zip(a.args, b.args):
            c = compare_values(x, y)
            if c:
                return c
        return 0
    return 0


def format_number(x):
    if x == INF:
        return "PositiveInfinity"
    if x == -INF:
        return "(0 - PositiveInfinity)"
    if float(x).is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(float(x))


def format_value(v):
    if isinstance(v, bool):
        return "True" if v else "False"
    if isinstance(v, (int, float)):
        return format_number(v)
    if isinstance(v, Data):
        if not v.args:
            return v.ctor
        return f"{v.ctor}({', '.join(format_value(a) for a in v.args)})"
    if isinstance(v, Closure):
        return f"fun[{v.lam.tag}]"
    if isinstance(v, Function):
        return v.name
    if hasattr(v, "format"):
        return v.format()
    return repr(v)


# ----------------------------------------------------------- expressions

@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Var(Expr):
    name: str
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Val(Expr):
    value: object
    span: Span = field(default=None, compare=False, repr=False)

    def __eq__(self, other):
        return isinstance(other, Val) and strict_equal(self.value, other.value)

    def __hash__(self):
        return hash(("val", format_value(self.value)))


@dataclass(frozen=True)
class Lambda(Expr):
    params: tuple
    body: Expr
    tag: str = None
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class App(Expr):
    fn: Expr
    args: tuple
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Rep(Expr):
    init: Expr
    update: Expr
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Nbr(Expr):
    body: Expr
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Foldhood(Expr):
    init: Expr
    agg: Expr
    body: Expr
    span: Span = field(default=None, compare=False, repr=False)


# sugar, removed by the parser's desugar pass
@dataclass(frozen=True)
class If(Expr):
    cond: Expr
    then: Expr
    other: Expr
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Let(Expr):
    name: str
    value: Expr
    body: Expr
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class FunctionDecl:
    name: str
    params: tuple
    body: Expr
    span: Span = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Program:
    functions: tuple
    main: Expr
    pid: str = "main"

    def __post_init__(self):
        names = [f.name for f in self.functions]
        if len(set(names)) != len(names):
            raise ValueError("duplicate function names")

    def decl(self, name):
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def table(self):
        return {f.name: f for f in self.functions}


def children(e):
    if isinstance(e, Lambda):
        return (e.body,)
    if isinstance(e, App):
        return (e.fn,) + tuple(e.args)
    if isinstance(e, Rep):
        return (e.init, e.update)
    if isinstance(e, Nbr):
        return (e.body,)
    if isinstance(e, Foldhood):
        return (e.init, e.agg, e.body)
    if isinstance(e, If):
        return (e.cond, e.then, e.other)
    if isinstance(e, Let):
        return (e.value, e.body)
    return ()


def walk(e):
    """Pre-order traversal."""
    stack = [e]
    while stack:
        x = stack.pop()
        yield x
        stack.extend(reversed(children(x)))


def rebuild(e, kids):
    if isinstance(e, Lambda):
        return Lambda(e.params, kids[0], e.tag, e.span)
    if isinstance(e, App):
        return App(kids[0], tuple(kids[1:]), e.span)
    if isinstance(e, Rep):
        return Rep(kids[0], kids[1], e.span)
    if isinstance(e, Nbr):
        return Nbr(kids[0], e.span)
    if isinstance(e, Foldhood):
        return Foldhood(kids[0], kids[1], kids[2], e.span)
    if isinstance(e, If):
        return If(kids[0], kids[1], kids[2], e.span)
    if isinstance(e, Let):
        return Let(e.name, kids[0], kids[1], e.span)
    return e


# ------------------------------------------------------------- analyses

_fv_cache = {}


def free_vars(e):
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Val):
        return frozenset()
    key = id(e)
    hit = _fv_cache.get(key)
    if hit is not None and hit[0] is e:
        return hit[1]
    if isinstance(e, Lambda):
        out = free_vars(e.body) - set(e.params)
    elif isinstance(e, Let):
        out = free_vars(e.value) | (free_vars(e.body) - {e.name})
    else:
        out = frozenset().union(*[free_vars(c) for c in children(e)])
    if len(_fv_cache) > 500000:
        _fv_cache.clear()
    _fv_cache[key] = (e, out)
    return out


def substitute(e, bindings):
    """Simultaneous substitution of closed values for free variables."""
    if not bindings:
        return e
    if isinstance(e, Var):
        if e.name in bindings:
            return Val(bindings[e.name], e.span)
        return e
    if isinstance(e, Val):
        return e
    if isinstance(e, Lambda):
        inner = {k: v for k, v in bindings.items() if k not in e.params}
        return Lambda(e.params, substitute(e.body, inner), e.tag, e.span)
    if isinstance(e, Let):
        inner = {k: v for k, v in bindings.items() if k != e.name}
        return Let(e.name, substitute(e.value, bindings),
                   substitute(e.body, inner), e.span)
    return rebuild(e, [substitute(c, bindings) for c in children(e)])


def bound_names(e):
    out = set()
    for x in walk(e):
        if isinstance(x, Lambda):
            out.update(x.params)
        elif isinstance(x, Let):
            out.add(x.name)
    return out


def fresh_name(base, avoid):
    if base not in avoid:
        return base
    i = 1
    while f"{base}{i}" in avoid:
        i += 1
    return f"{base}{i}"


def replace_var(e, name, repl):
    """Replace free occurrences of ``name`` by the expression ``repl``.

    Binders that would capture a free variable of ``repl`` are renamed."""
    fv_repl = free_vars(repl)
    if isinstance(e, Var):
        return repl if e.name == name else e
    if isinstance(e, Val):
        return e
    if isinstance(e, Lambda):
        if name in e.params or name not in free_vars(e.body):
            return e
        params, body = list(e.params), e.body
        clash = [p for p in params if p in fv_repl]
        if clash:
            avoid = set(free_vars(body)) | fv_repl | bound_names(body) | set(params)
            for p in clash:
                q = fresh_name(p, avoid)
                avoid.add(q)
                body = replace_var(body, p, Var(q))
                params[params.index(p)] = q
        return Lambda(tuple(params), replace_var(body, name, repl), e.tag, e.span)
    if isinstance(e, Let):
        value = replace_var(e.value, name, repl)
        if e.name == name:
            return Let(e.name, value, e.body, e.span)
        return Let(e.name, value, replace_var(e.body, name, repl), e.span)
    return rebuild(e, [replace_var(c, name, repl) for c in children(e)])


# ------------------------------------------------------------ functions

def function_name(f):
    if not isinstance(f, Function):
        raise TypeError(f"not a function value: {format_value(f)}")
    return f.name


def function_args(f, program=None):
    if isinstance(f, Closure):
        return f.lam.params
    if isinstance(f, Defined):
        if program is None:
            raise ValueError("need the program to look up a declared function")
        return program.decl(f.name).params
    raise TypeError(f"built-in {function_name(f)} has no parameters to inspect")


def function_body(f, program=None):
    if isinstance(f, Closure):
        return substitute(f.lam.body, f.env)
    if isinstance(f, Defined):
        if program is None:
            raise ValueError("need the program to look up a declared function")
        return program.decl(f.name).body
    raise TypeError(f"built-in {function_name(f)} has no body to inspect")


# -------------------------------------------------------------- tagging

def _tag_expr(e, pid, counter):
    if isinstance(e, (Var, Val)):
        return e
    if isinstance(e, Lambda):
        counter[0] += 1
        tag = f"{pid}:{counter[0]}"
        return Lambda(e.params, _tag_expr(e.body, pid, counter), tag, e.span)
    return rebuild(e, [_tag_expr(c, pid, counter) for c in children(e)])


def tag_anonymous_functions(program, pid=None):
    """Number every lambda by its occurrence index in pre-order over the
    declarations followed by main.  Existing tags are recomputed, so the
    operation is idempotent."""
    pid = pid or program.pid
    counter = [0]
    fns = tuple(FunctionDecl(f.name, f.params, _tag_expr(f.body, pid, counter), f.span)
                for f in program.functions)
    main = _tag_expr(program.main, pid, counter)
    return Program(fns, main, pid)


def lambdas(e):
    return [x for x in walk(e) if isinstance(x, Lambda)]
