"""Hindley-Milner inference for NC and the restricted NC'/HFC' checker.

One inference engine serves both systems.  Type variables carry a kind:

    t  general        l  local        r  return        s  local return

Plain NC inference only ever creates ``t`` variables and never mentions
``field``.  The restricted mode adds ``field<S>``, narrows variable kinds
when a rule demands a local or return type, and reports kind clashes with
the rule that introduced the demand.
"""
from __future__ import annotations

import itertools
import re

from . import prims
from .core import (Var, Val, Lambda, App, Rep, Nbr, Foldhood, If, Let, Program,
                   Data, Builtin, Defined, Closure, Function, free_vars)

# ----------------------------------------------------------------- types

_ids = itertools.count()


class TVar:
    __slots__ = ("id", "kind", "ref", "origin")

    def __init__(self, kind="t", origin=None):
        self.id = next(_ids)
        self.kind = kind
        self.ref = None
        self.origin = origin

    def __repr__(self):
        return f"{self.kind}{self.id}"


class TCon:
    __slots__ = ("name", "args")

    def __init__(self, name, args=()):
        self.name = name
        self.args = tuple(args)

    def __repr__(self):
        return format_type(self)


class TFun:
    __slots__ = ("params", "result")

    def __init__(self, params, result):
        self.params = tuple(params)
        self.result = result

    def __repr__(self):
        return format_type(self)


NUM = TCon("num")
BOOL = TCon("bool")


def pair_t(a, b):
    return TCon("pair", (a, b))


def list_t(a):
    return TCon("list", (a,))


def field_t(a):
    return TCon("field", (a,))


def prune(t):
    while isinstance(t, TVar) and t.ref is not None:
        t = t.ref
    return t


def zonk(t):
    t = prune(t)
    if isinstance(t, TCon):
        return TCon(t.name, [zonk(a) for a in t.args]) if t.args else t
    if isinstance(t, TFun):
        return TFun([zonk(p) for p in t.params], zonk(t.result))
    return t


def ftv(t, acc=None):
    acc = [] if acc is None else acc
    t = prune(t)
    if isinstance(t, TVar):
        if t not in acc:
            acc.append(t)
    elif isinstance(t, TCon):
        for a in t.args:
            ftv(a, acc)
    else:
        for p in t.params:
            ftv(p, acc)
        ftv(t.result, acc)
    return acc


def format_type(t, names=None):
    names = {} if names is None else names
    t = prune(t)
    if isinstance(t, TVar):
        if t not in names:
            k = sum(1 for v in names if v.kind == t.kind)
            names[t] = f"{t.kind}{k if k else ''}"
        return names[t]
    if isinstance(t, TCon):
        if not t.args:
            return t.name
        return f"{t.name}<{', '.join(format_type(a, names) for a in t.args)}>"
    ps = ", ".join(format_type(p, names) for p in t.params)
    return f"({ps}) -> {format_type(t.result, names)}"


class Scheme:
    __slots__ = ("vars", "body")

    def __init__(self, vars_, body):
        self.vars = tuple(vars_)
        self.body = body

    def __repr__(self):
        return format_scheme(self)


def format_scheme(s):
    names = {}
    body = format_type(s.body, names)
    qs = [names[v] for v in s.vars if v in names]
    return f"forall {' '.join(qs)}. {body}" if qs else body


def instantiate(s):
    if not s.vars:
        return s.body
    fresh = {v: TVar(v.kind, v.origin) for v in s.vars}
    return _copy(s.body, fresh)


def _copy(t, m):
    t = prune(t)
    if isinstance(t, TVar):
        return m.get(t, t)
    if isinstance(t, TCon):
        return TCon(t.name, [_copy(a, m) for a in t.args]) if t.args else t
    return TFun([_copy(p, m) for p in t.params], _copy(t.result, m))


def generalize(t, env_vars=()):
    t = zonk(t)
    vs = [v for v in ftv(t) if v not in env_vars]
    return Scheme(vs, t)


def mono(t):
    return Scheme((), t)


# -------------------------------------------------------- type parsing

_TY_TOKEN = re.compile(r"\s*(->|[A-Za-z_][A-Za-z0-9_]*|[(),<>])")


def parse_type(text, names=None):
    """Read the notation used by the built-in table, e.g. ``(s, s) -> bool``."""
    names = {} if names is None else names
    toks = _TY_TOKEN.findall(text)
    pos = [0]

    def peek():
        return toks[pos[0]] if pos[0] < len(toks) else None

    def take(x=None):
        tok = peek()
        if x is not None and tok != x:
            raise ValueError(f"bad type {text!r}")
        pos[0] += 1
        return tok

    def ty():
        tok = peek()
        if tok == "(":
            take("(")
            ps = []
            if peek() != ")":
                ps.append(ty())
                while peek() == ",":
                    take(",")
                    ps.append(ty())
            take(")")
            take("->")
            return TFun(ps, ty())
        name = take()
        if name in ("num", "bool"):
            return TCon(name)
        if name in ("pair", "list", "field"):
            take("<")
            args = [ty()]
            while peek() == ",":
                take(",")
                args.append(ty())
            take(">")
            return TCon(name, args)
        if name not in names:
            names[name] = TVar(name[0] if name[0] in "tlrs" else "t")
        return names[name]

    out = ty()
    if pos[0] != len(toks):
        raise ValueError(f"bad type {text!r}")
    return out


def scheme_of_text(text):
    t = parse_type(text)
    return Scheme(ftv(t), t)


# ---------------------------------------------------------------- erasure

def erase(t):
    """Drop ``field`` wrappers and collapse all variable kinds."""
    return _erase(t, {})


def _erase(t, m):
    t = prune(t)
    if isinstance(t, TVar):
        if t not in m:
            m[t] = TVar("t")
        return m[t]
    if isinstance(t, TCon):
        if t.name == "field":
            return _erase(t.args[0], m)
        return TCon(t.name, [_erase(a, m) for a in t.args]) if t.args else t
    return TFun([_erase(p, m) for p in t.params], _erase(t.result, m))


def erase_scheme(s):
    m = {}
    body = _erase(s.body, m)
    return Scheme([m[v] for v in s.vars if v in m], body)


def erase_env(env):
    return {k: erase_scheme(v) if isinstance(v, Scheme) else erase(v) for k, v in env.items()}


def alpha_equal(a, b):
    """Equality up to a bijective renaming of variables (kinds ignored)."""
    fwd, bwd = {}, {}

    def go(x, y):
        x, y = prune(x), prune(y)
        if isinstance(x, TVar) and isinstance(y, TVar):
            if fwd.get(x, y) is not y or bwd.get(y, x) is not x:
                return False
            fwd[x], bwd[y] = y, x
            return True
        if isinstance(x, TCon) and isinstance(y, TCon):
            return (x.name == y.name and len(x.args) == len(y.args)
                    and all(go(p, q) for p, q in zip(x.args, y.args)))
        if isinstance(x, TFun) and isinstance(y, TFun):
            return (len(x.params) == len(y.params)
                    and all(go(p, q) for p, q in zip(x.params, y.params))
                    and go(x.result, y.result))
        return False

    return go(a, b)


def is_instance(general, specific):
    """True when ``specific`` is a substitution instance of ``general``."""
    m = {}

    def go(g, s):
        g, s = prune(g), prune(s)
        if isinstance(g, TVar):
            if g in m:
                return alpha_equal(m[g], s)
            m[g] = s
            return True
        if isinstance(g, TCon) and isinstance(s, TCon):
            return (g.name == s.name and len(g.args) == len(s.args)
                    and all(go(p, q) for p, q in zip(g.args, s.args)))
        if isinstance(g, TFun) and isinstance(s, TFun):
            return (len(g.params) == len(s.params)
                    and all(go(p, q) for p, q in zip(g.params, s.params))
                    and go(g.result, s.result))
        return False

    return go(general, specific)


# ----------------------------------------------------------------- errors

class NCTypeError(TypeError):
    """A typing failure.  ``code`` is one of ``mismatch``, ``occurs``,
    ``unbound``, ``arity`` or, in the restricted system,
    ``field-capture-lambda``, ``field-capture-foldhood``, ``rep-nonlocal``,
    ``rep-literal``, ``fold-nonlocal``, ``field-of-field``, ``return-type``, ``builtin-field-arg``."""

    def __init__(self, message, code="mismatch", span=None, left=None, right=None):
        self.code = code
        self.message = message
        self.span = span
        self.left = left
        self.right = right
        where = f"{span}: " if span else ""
        super().__init__(f"{where}{message}")


DIAGNOSTICS = {
    "field-capture-lambda": "a lambda captures a variable of neighbouring (field) type",
    "field-capture-foldhood": "restriction R2: a foldhood body captures a variable of field type",
    "rep-nonlocal": "rep state must have a local return type",
    "rep-literal": "rep update must be a literal anonymous function here",
    "field-of-field": "nbr body must have a local return type (no field of fields)",
    "return-type": "a function result must be a return type (not a function returning a field)",
    "fold-nonlocal": "foldhood initial value and result must have a local return type",
    "builtin-field-arg": "restriction R1: built-in applied to a field argument",
    "kind": "kind mismatch",
}

_MEET = {("t", "l"): "l", ("t", "r"): "r", ("t", "s"): "s", ("l", "r"): "s",
         ("l", "s"): "s", ("r", "s"): "s"}


def meet(a, b):
    if a == b:
        return a
    return _MEET.get((a, b)) or _MEET[(b, a)]


# ------------------------------------------------------------- inference

class Inferencer:
    """Inference state for one program or expression.

    ``restricted`` switches on the NC' rules.  ``relax`` is a set of rule
    names ({"R2", "capture"}) whose side conditions are skipped; it is only
    used to classify failures."""

    def __init__(self, restricted=False, relax=()):
        self.restricted = restricted
        self.relax = set(relax)
        self.fold_branches = []
        self.lifted = []
        self.span = None

    # -- kinds

    def fresh(self, kind="t", origin=None):
        return TVar(kind if self.restricted else "t", origin)

    def fail(self, code, message=None, left=None, right=None):
        raise NCTypeError(message or DIAGNOSTICS.get(code, code), code, self.span, left, right)

    def constrain(self, t, kind, origin):
        if not self.restricted or kind == "t":
            return
        t = prune(t)
        if isinstance(t, TVar):
            k = meet(t.kind, kind)
            if k != t.kind:
                t.kind = k
                t.origin = origin
            return
        if isinstance(t, TCon):
            if t.name == "field" and kind in ("l", "s"):
                self.fail(origin or "kind", left=t)
            return
        if kind == "s":
            self.constrain(t.result, "s", origin)
        elif kind == "l":
            self.constrain(t.result, "r", origin)
        elif kind == "r":
            self.constrain(t.result, "s", origin)

    def unify(self, a, b):
        a, b = prune(a), prune(b)
        if a is b:
            return
        if isinstance(a, TVar):
            self._bind(a, b)
        elif isinstance(b, TVar):
            self._bind(b, a)
        elif isinstance(a, TCon) and isinstance(b, TCon):
            if a.name != b.name or len(a.args) != len(b.args):
                self._mismatch(a, b)
            for x, y in zip(a.args, b.args):
                self.unify(x, y)
        elif isinstance(a, TFun) and isinstance(b, TFun):
            if len(a.params) != len(b.params):
                self.fail("arity", f"arity mismatch: {format_type(a)} vs {format_type(b)}", a, b)
            for x, y in zip(a.params, b.params):
                self.unify(x, y)
            self.unify(a.result, b.result)
        else:
            self._mismatch(a, b)

    def _mismatch(self, a, b):
        names = {}
        self.fail("mismatch", f"cannot unify {format_type(a, names)} with {format_type(b, names)}",
                  zonk(a), zonk(b))

    def _bind(self, v, t):
        if isinstance(t, TVar):
            k = meet(v.kind, t.kind)
            if k != t.kind:
                t.origin = v.origin if k == v.kind else t.origin
                t.kind = k
            v.ref = t
            return
        if v in ftv(t):
            self.fail("occurs", f"infinite type: {v!r} occurs in {format_type(t)}", v, t)
        self.constrain(t, v.kind, v.origin)
        v.ref = t

    def field_of(self, t):
        self.constrain(t, "s", "field-of-field")
        return field_t(t)

    # -- built-ins and values

    def builtin_type(self, name):
        p = prims.TABLE.get(name)
        if p is None or not p.scheme:
            self.fail("unbound", f"built-in {name} has no type here")
        t = parse_type(p.scheme)
        return t if self.restricted else erase(t)

    def value_type(self, v, D):
        if isinstance(v, bool):
            return BOOL
        if isinstance(v, (int, float)):
            return NUM
        if isinstance(v, Data):
            if v.ctor == "Pair":
                a = self.value_type(v.args[0], D)
                b = self.value_type(v.args[1], D)
                self.constrain(a, "s", "field-of-field")
                self.constrain(b, "s", "field-of-field")
                return pair_t(a, b)
            if v.ctor == "Null":
                return list_t(self.fresh("s"))
            if v.ctor == "Cons":
                h = self.value_type(v.args[0], D)
                t = self.value_type(v.args[1], D)
                self.unify(t, list_t(h))
                return t
        if isinstance(v, Builtin):
            return self.builtin_type(v.name)
        if isinstance(v, Defined):
            if v.name not in D:
                self.fail("unbound", f"function {v.name} is used before its declaration")
            return instantiate(D[v.name])
        if isinstance(v, Closure):
            A = {x: self.value_type(val, D) for x, val in v.env.items()}
            return self.infer(v.lam, D, A)
        if hasattr(v, "items"):
            # a neighbouring field value at run time
            ts = [self.value_type(x, D) for _, x in v.items()]
            inner = self.fresh("s")
            for t in ts:
                self.unify(inner, t)
            return self.field_of(inner)
        self.fail("unbound", f"value {v!r} has no type")

    # -- expressions

    def infer(self, e, D, A):
        old = self.span
        if getattr(e, "span", None) is not None:
            self.span = e.span
        try:
            return self._infer(e, D, A)
        finally:
            self.span = old

    def _infer(self, e, D, A):
        if isinstance(e, Var):
            if e.name not in A:
                self.fail("unbound", f"unbound variable {e.name}")
            return A[e.name]
        if isinstance(e, Val):
            return self.value_type(e.value, D)
        if isinstance(e, Lambda):
            return self.lambda_type(e, D, A)
        if isinstance(e, App):
            return self.app_type(e, D, A)
        if isinstance(e, Rep):
            t1 = self.infer(e.init, D, A)
            if self.restricted:
                self.constrain(t1, "s", "rep-nonlocal")
                if not (isinstance(e.update, Lambda) and len(e.update.params) == 1):
                    self.fail("rep-literal")
            t2 = self.infer(e.update, D, A)
            self.unify(t2, TFun([t1], t1))
            return t1
        if isinstance(e, Nbr):
            t = self.infer(e.body, D, A)
            if self.restricted:
                return self.field_of(t)
            return t
        if isinstance(e, Foldhood):
            return self.fold_type(e, D, A)
        if isinstance(e, (If, Let)):
            self.fail("mismatch", "internal: sugar must be removed before typing")
        self.fail("mismatch", f"unknown expression {e!r}")

    def lambda_type(self, e, D, A, expected=None):
        if self.restricted and "capture" not in self.relax:
            for y in sorted(free_vars(e)):
                if y in A:
                    self.constrain(A[y], "l", "field-capture-lambda")
        ps = [self.fresh("t") for _ in e.params]
        if isinstance(expected, TFun) and len(expected.params) == len(ps):
            # parameter types known from the callee are used while checking the body
            for x, y in zip(ps, expected.params):
                self.unify(x, y)
        inner = dict(A)
        inner.update(zip(e.params, ps))
        body = self.infer(e.body, D, inner)
        self.constrain(body, "r", "return-type")
        return TFun(ps, body)

    def fold_type(self, e, D, A):
        t1 = self.infer(e.init, D, A)
        if self.restricted:
            self.constrain(t1, "s", "fold-nonlocal")
        t2 = self.infer(e.agg, D, A)
        self.unify(t2, TFun([t1, t1], t1))
        if self.restricted and "R2" not in self.relax:
            for y in sorted(free_vars(e.body)):
                if y in A:
                    self.constrain(A[y], "l", "field-capture-foldhood")
        t3 = self.infer(e.body, D, A)
        if not self.restricted:
            self.unify(t3, t1)
            return t1
        p = prune(t3)
        if isinstance(p, TCon) and p.name == "field":
            branch = "field"
            self.unify(p.args[0], t1)
        elif isinstance(p, TVar) and p.kind in ("t", "r"):
            branch = "field"
            self.unify(p, field_t(t1))
        else:
            branch = "local"
            self.unify(p, t1)
        self.fold_branches.append((e, branch))
        return t1

    def app_type(self, e, D, A):
        fn = e.fn
        if isinstance(fn, Val) and isinstance(fn.value, Builtin):
            name = fn.value.name
            if name == "map":
                return self.map_type(e, D, A)
            p = prims.TABLE.get(name)
            if self.restricted and p is not None and p.kind == prims.PURE:
                return self.lifted_type(e, name, D, A)
        if isinstance(fn, Lambda) and len(fn.params) == len(e.args):
            # a redex: arguments first, so the parameters start out with their types
            targs = [self.infer(a, D, A) for a in e.args]
            tf = self.lambda_type(fn, D, A, TFun(targs, self.fresh("r")))
            res = self.fresh("r", "return-type")
            self.unify(tf, TFun(targs, res))
            return res
        tf = self.infer(fn, D, A)
        known = prune(tf)
        if not (isinstance(known, TFun) and len(known.params) == len(e.args)):
            targs = [self.infer(a, D, A) for a in e.args]
            res = self.fresh("r", "return-type")
            self.unify(tf, TFun(targs, res))
            return res
        # the callee's signature is imposed argument by argument, so that later
        # arguments see what earlier ones fixed
        for a, want in zip(e.args, known.params):
            if isinstance(a, Lambda):
                old = self.span
                if a.span is not None:
                    self.span = a.span
                try:
                    t = self.lambda_type(a, D, A, prune(want))
                finally:
                    self.span = old
            else:
                t = self.infer(a, D, A)
            self.unify(want, t)
        return known.result

    def lifted_type(self, e, name, D, A):
        """Pure operators act pointwise when given field arguments."""
        targs = [self.infer(a, D, A) for a in e.args]
        sig = self.builtin_type(name)
        if len(sig.params) != len(targs):
            self.fail("arity", f"{name} expects {len(sig.params)} arguments, got {len(targs)}")
        pr = [prune(t) for t in targs]
        lifted = any(isinstance(t, TCon) and t.name == "field" for t in pr)
        if not lifted:
            for t, s in zip(targs, sig.params):
                self.unify(t, s)
            return sig.result
        self.lifted.append(e)
        for t, s in zip(pr, sig.params):
            if isinstance(t, TCon) and t.name == "field":
                self.unify(t.args[0], s)
            elif isinstance(t, TVar) and t.kind in ("t", "r"):
                self.unify(t, self.field_of(s))
            else:
                self.unify(t, s)
        return self.field_of(sig.result)

    def map_type(self, e, D, A):
        if not e.args:
            self.fail("arity", "map needs a function argument")
        tf = self.infer(e.args[0], D, A)
        targs = [self.infer(a, D, A) for a in e.args[1:]]
        if not self.restricted:
            res = self.fresh("t")
            self.unify(tf, TFun(targs, res))
            return res
        ps = []
        for t in targs:
            p = prune(t)
            if isinstance(p, TCon) and p.name == "field":
                ps.append(p.args[0])
            elif isinstance(p, TVar) and p.kind in ("t", "r"):
                s = self.fresh("s")
                self.unify(p, self.field_of(s))
                ps.append(s)
            else:
                self.constrain(p, "s", "builtin-field-arg")
                ps.append(p)
        res = self.fresh("s")
        self.unify(tf, TFun(ps, res))
        return self.field_of(res)

    # -- programs

    def program(self, p, D=None):
        D = dict(D or {})
        schemes = {}
        for d in p.functions:
            old = self.span
            self.span = d.span
            ps = [self.fresh("t") for _ in d.params]
            res = self.fresh("r", "return-type")
            ftype = TFun(ps, res)
            D[d.name] = mono(ftype)
            body = self.infer(d.body, D, dict(zip(d.params, ps)))
            self.unify(body, res)
            D[d.name] = schemes[d.name] = generalize(ftype)
            self.span = old
        main = self.infer(p.main, D, {})
        return schemes, zonk(main)


# ------------------------------------------------------------ public API

def infer_expr(D, A, e):
    """Principal NC type of ``e`` under schemes ``D`` and monotypes ``A``."""
    return zonk(Inferencer().infer(e, dict(D or {}), dict(A or {})))


def infer_program(p):
    """Schemes of all declarations (in order) and the type of main."""
    return Inferencer().program(p)


class RestrictedResult:
    def __init__(self, schemes, main, fold_branches, lifted):
        self.schemes = schemes
        self.main = main
        self.fold_branches = fold_branches
        self.lifted = lifted

    def __repr__(self):
        return f"RestrictedResult(main={format_type(self.main)})"


def check_restricted(D, A, e):
    """Restricted type of ``e`` or :class:`NCTypeError` with a diagnostic."""
    def run(relax):
        inf = Inferencer(restricted=True, relax=relax)
        return zonk(inf.infer(e, dict(D or {}), dict(A or {})))
    return _classified(run)


def check_program_restricted(p):
    def run(relax):
        inf = Inferencer(restricted=True, relax=relax)
        schemes, main = inf.program(p)
        return RestrictedResult(schemes, main, inf.fold_branches, inf.lifted)
    return _classified(run)


def _classified(run):
    try:
        return run(())
    except NCTypeError as err:
        first = err
    # a plain mismatch may really be a capture violation that surfaced
    # later; find the rule whose removal makes the term typable
    if first.code in ("mismatch", "arity", "kind"):
        for relax, code in ((("R2",), "field-capture-foldhood"),
                            (("capture",), "field-capture-lambda")):
            try:
                run(relax)
            except NCTypeError:
                continue
            raise NCTypeError(f"{DIAGNOSTICS[code]} ({first.message})", code, first.span,
                              first.left, first.right) from None
    raise first


def restricted_builtin_env():
    return {name: scheme_of_text(p.scheme) for name, p in prims.TABLE.items() if p.scheme}


def plain_builtin_env():
    return {k: erase_scheme(v) for k, v in restricted_builtin_env().items()}


def type_of_value(v, D=None, restricted=False):
    inf = Inferencer(restricted=restricted)
    return zonk(inf.value_type(v, dict(D or {})))


def value_has_type(v, t, D=None):
    """Does value ``v`` admit type ``t`` (treating variables of ``t`` as rigid)?"""
    vt = type_of_value(v, D)
    return is_instance(vt, t)
