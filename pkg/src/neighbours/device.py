"""Big-step evaluation of an expression on device ``delta`` against a
neighbour ``other``, producing a value-tree.

Variables are looked up in an environment instead of being substituted;
all bound values are closed, so this is the same as evaluating the
substituted body.  ``FAIL`` is the failure outcome.
"""
from __future__ import annotations

from . import prims
from .core import (Var, Val, Lambda, App, Rep, Nbr, Foldhood, Program, Builtin,
                   Defined, Closure, Function, Data, strict_equal, format_value,
                   free_vars)

DEFAULT_BUDGET = 1_000_000


class ValueTree:
    __slots__ = ("root", "children")

    def __init__(self, root, children=()):
        self.root = root
        self.children = children

    def __eq__(self, other):
        if self is other:
            return True
        if other.__class__ is not ValueTree or len(self.children) != len(other.children):
            return False
        if not strict_equal(self.root, other.root):
            return False
        for a, b in zip(self.children, other.children):
            if not a.__eq__(b):
                return False
        return True

    def __hash__(self):
        return hash(format_tree(self))

    def __repr__(self):
        return f"ValueTree({format_tree(self)})"

    def size(self):
        return 1 + sum(c.size() for c in self.children)


class _Fail:
    __slots__ = ()

    def __repr__(self):
        return "FAIL"

    def __bool__(self):
        return False


FAIL = _Fail()


class StepBudgetExceeded(RuntimeError):
    pass


class EvalError(RuntimeError):
    """Misuse that typing rules out: wrong arity, non-function callee."""


def leaf(v):
    return ValueTree(v, ())


def format_tree(t):
    """``<v>(c1, c2)`` for inner nodes, plain ``v`` for leaves."""
    if not t.children:
        return format_value(t.root)
    inner = ", ".join(format_tree(c) for c in t.children)
    return f"<{format_value(t.root)}>({inner})"


def root(t):
    return t.root


def subtree_i(t, i):
    """The ``i``-th child (1-based) or None."""
    if 1 <= i <= len(t.children):
        return t.children[i - 1]
    return None


def subtree_f(t, f):
    """The last child when the first child's root is a function named like ``f``."""
    ch = t.children
    if ch:
        r = ch[0].root
        if isinstance(r, Function) and r.name == f.name:
            return ch[-1]
    return None


def project_i(env, i):
    return {d: t.children[i - 1] for d, t in env.items() if 1 <= i <= len(t.children)}


def project_f(env, f):
    out = {}
    for d, t in env.items():
        s = subtree_f(t, f)
        if s is not None:
            out[d] = s
    return out


def roots(env):
    return {d: t.root for d, t in env.items()}


EMPTY = {}


class Evaluator:
    """Evaluator for one program.

    ``memo`` enables caching of rep and foldhood results within a firing:
    those do not depend on the neighbour being evaluated against."""

    def __init__(self, program, budget=DEFAULT_BUDGET, memo=True):
        self.program = program
        self.decls = program.table if isinstance(program, Program) else dict(program or {})
        self.budget = budget
        self.memo_enabled = memo
        self._rep_apps = {}
        self._reset()

    def _reset(self):
        self.steps = 0
        self._memo = {}
        self._proj = {}

    # -- projections cached per firing, so that the same sub-environment
    # object is reused and memo keys line up

    def _pi(self, env, i):
        if not env:
            return EMPTY
        key = (id(env), i)
        hit = self._proj.get(key)
        if hit is not None:
            return hit[1]
        out = project_i(env, i)
        self._proj[key] = (env, out)
        return out

    def _pf(self, env, f):
        if not env:
            return EMPTY
        key = (id(env), "f", f.name)
        hit = self._proj.get(key)
        if hit is not None:
            return hit[1]
        out = project_f(env, f)
        self._proj[key] = (env, out)
        return out

    # -- entry points

    def fire(self, delta, env, sigma, main=None):
        """Evaluate main on ``delta`` against itself; never fails."""
        self._reset()
        e = self.program.main if main is None else main
        try:
            t = self.eval(delta, delta, env, sigma, e, {})
        except RecursionError:
            raise StepBudgetExceeded("evaluation nested too deeply") from None
        if t is FAIL:
            raise EvalError("self-evaluation failed, which the semantics rules out")
        return t

    def evaluate(self, delta, other, env, sigma, e, bindings=None):
        self._reset()
        try:
            return self.eval(delta, other, env, sigma, e, dict(bindings or {}))
        except RecursionError:
            raise StepBudgetExceeded("evaluation nested too deeply") from None

    # -- rules

    def tick(self):
        self.steps += 1
        if self.steps > self.budget:
            raise StepBudgetExceeded(f"more than {self.budget} evaluation steps in one firing")

    def eval(self, d, o, env, sigma, e, b):
        self.tick()
        cls = e.__class__
        if cls is Val:
            return ValueTree(e.value, ())
        if cls is Var:
            return ValueTree(b[e.name], ())
        if cls is Lambda:
            fv = free_vars(e)
            return ValueTree(Closure(e, {x: b[x] for x in fv}), ())
        if cls is App:
            return self.eval_app(d, o, env, sigma, e, b)
        if cls is Nbr:
            if o == d:
                t = self.eval(d, d, self._pi(env, 1), sigma, e.body, b)
                return ValueTree(t.root, (t,))
            t = env.get(o)
            return FAIL if t is None else t
        if cls is Rep or cls is Foldhood:
            if not self.memo_enabled:
                return self._eval_rep(d, env, sigma, e, b) if cls is Rep else \
                    self._eval_fold(d, env, sigma, e, b)
            key = (id(e), id(env), _env_key(e, b))
            hit = self._memo.get(key)
            if hit is not None:
                return hit[1]
            t = self._eval_rep(d, env, sigma, e, b) if cls is Rep else \
                self._eval_fold(d, env, sigma, e, b)
            self._memo[key] = (env, t)
            return t
        raise EvalError(f"cannot evaluate {e!r}")

    def eval_app(self, d, o, env, sigma, e, b):
        # values and variables give leaves whatever the environment, so their
        # projections are skipped
        fn = e.fn
        if fn.__class__ is Val:
            self.tick()
            tf = ValueTree(fn.value, ())
        else:
            tf = self.eval(d, d, self._pi(env, 1), sigma, fn, b)
        f = tf.root
        targs = []
        for i, a in enumerate(e.args):
            cls = a.__class__
            if cls is Val:
                self.tick()
                t = ValueTree(a.value, ())
            elif cls is Var:
                self.tick()
                t = ValueTree(b[a.name], ())
            else:
                t = self.eval(d, o, self._pi(env, i + 2), sigma, a, b)
                if t is FAIL:
                    return FAIL
            targs.append(t)
        vals = [t.root for t in targs]
        if isinstance(f, Builtin):
            v = self.apply_builtin(f, d, o, env, sigma, vals)
            if v is FAIL:
                return FAIL
            return ValueTree(v, (tf, *targs, ValueTree(v, ())))
        body, inner = self.enter(f, vals)
        tb = self.eval(d, o, self._pf(env, f), sigma, body, inner)
        if tb is FAIL:
            return FAIL
        return ValueTree(tb.root, (tf, *targs, tb))

    def enter(self, f, vals):
        """Body and variable bindings for a call of ``f``."""
        if isinstance(f, Closure):
            params = f.lam.params
            inner = dict(f.env)
            body = f.lam.body
        elif isinstance(f, Defined):
            decl = self.decls.get(f.name)
            if decl is None:
                raise EvalError(f"unknown function {f.name}")
            params, body, inner = decl.params, decl.body, {}
        else:
            raise EvalError(f"cannot call non-function {format_value(f)}")
        if len(params) != len(vals):
            raise EvalError(f"{f.name} expects {len(params)} arguments, got {len(vals)}")
        inner.update(zip(params, vals))
        return body, inner

    def apply_builtin(self, f, d, o, env, sigma, vals):
        name = f.name
        p = prims.TABLE.get(name)
        if p is None:
            raise EvalError(f"unknown built-in {name}")
        if p.kind == prims.PURE:
            return prims.apply_pure(name, vals)
        if p.kind == prims.SENSOR:
            return prims.read_sensor(name, d, sigma)
        if p.kind == prims.RELATIONAL:
            if o != d and o not in self._pf(env, f):
                return FAIL
            return sigma.read_relational(name, d, o)
        if name == "consthood":
            return vals[0]
        if name == "map":
            return self.apply_function(vals[0], vals[1:], d, sigma)
        raise EvalError(f"unsupported built-in {name}")

    def apply_function(self, f, vals, d, sigma):
        """Call ``f`` on ``d`` against itself under the empty environment."""
        if isinstance(f, Builtin):
            v = self.apply_builtin(f, d, d, EMPTY, sigma, list(vals))
            return v
        body, inner = self.enter(f, list(vals))
        return self.eval(d, d, EMPTY, sigma, body, inner).root

    def _eval_rep(self, d, env, sigma, e, b):
        t1 = self.eval(d, d, self._pi(env, 1), sigma, e.init, b)
        env2 = self._pi(env, 2)
        prev = env2.get(d) if d in env else None
        v0 = t1.root if prev is None else prev.root
        app = self._rep_apps.get(id(e))
        if app is None or app[0] is not e:
            app = (e, App(e.update, (Var("$rep"),), e.span))
            self._rep_apps[id(e)] = app
        inner = dict(b)
        inner["$rep"] = v0
        t2 = self.eval(d, d, env2, sigma, app[1], inner)
        return ValueTree(t2.root, (t1, t2))

    def _eval_fold(self, d, env, sigma, e, b):
        t1 = self.eval(d, d, self._pi(env, 1), sigma, e.init, b)
        t2 = self.eval(d, d, self._pi(env, 2), sigma, e.agg, b)
        env3 = self._pi(env, 3)
        t0 = self.eval(d, d, env3, sigma, e.body, b)
        f = t2.root
        acc = t1.root
        for n in sorted(env3):
            if n == d:
                continue
            t = self.eval(d, n, env3, sigma, e.body, b)
            if t is FAIL:
                continue
            acc = self.apply_function(f, (acc, t.root), d, sigma)
        return ValueTree(acc, (t1, t2, t0))


def _key(v):
    if isinstance(v, Closure):
        return ("C", v.lam.tag, id(v.lam), tuple(sorted((k, _key(x)) for k, x in v.env.items())))
    if isinstance(v, Function):
        return (type(v).__name__, v.name)
    if isinstance(v, Data):
        return ("D", v.ctor, tuple(_key(a) for a in v.args))
    if isinstance(v, bool):
        return ("B", v)
    if isinstance(v, float) and v != v:
        return ("nan",)
    return v


def _env_key(e, b):
    fv = free_vars(e)
    if not fv:
        return ()
    return tuple(sorted((x, _key(b[x])) for x in fv if x in b))


def fire(delta, env, sigma, program, budget=DEFAULT_BUDGET):
    return Evaluator(program, budget).fire(delta, env, sigma)


def evaluate(delta, other, env, sigma, e, program=None, bindings=None, budget=DEFAULT_BUDGET):
    return Evaluator(program or Program((), e), budget).evaluate(delta, other, env, sigma, e, bindings)


# ------------------------------------------------------ well-formedness

def well_formed(t, e, program, bindings=None):
    """Shape check of a value-tree against the expression that produced it.

    The check follows the evaluation rules: leaves for values, variables
    and lambdas; callee, arguments and a last child for applications; two
    children for rep and three for foldhood.  Function bodies are checked
    recursively through the callee's value."""
    decls = program.table
    return _wf(t, e, decls, dict(bindings or {}))


def _wf(t, e, decls, b):
    if t is FAIL or not isinstance(t, ValueTree):
        return False
    if isinstance(e, (Val, Var, Lambda)):
        return not t.children
    if isinstance(e, Nbr):
        # a neighbour's stored tree has the same shape as a local one
        return len(t.children) == 1 and strict_equal(t.root, t.children[0].root) \
            and _wf(t.children[0], e.body, decls, b)
    if isinstance(e, Rep):
        if len(t.children) != 2 or not strict_equal(t.root, t.children[1].root):
            return False
        if not _wf(t.children[0], e.init, decls, b):
            return False
        app = App(e.update, (Var("$rep"),))
        return _wf(t.children[1], app, decls, dict(b, **{"$rep": t.children[1].children[1].root}
                                                     if len(t.children[1].children) > 1 else b))
    if isinstance(e, Foldhood):
        return (len(t.children) == 3 and _wf(t.children[0], e.init, decls, b)
                and _wf(t.children[1], e.agg, decls, b) and _wf(t.children[2], e.body, decls, b))
    if isinstance(e, App):
        n = len(e.args)
        if len(t.children) != n + 2:
            return False
        if not _wf(t.children[0], e.fn, decls, b):
            return False
        for c, a in zip(t.children[1:-1], e.args):
            if not _wf(c, a, decls, b):
                return False
        f = t.children[0].root
        last = t.children[-1]
        if not strict_equal(last.root, t.root):
            return False
        if isinstance(f, Builtin):
            return not last.children
        if isinstance(f, Closure):
            params, body, inner = f.lam.params, f.lam.body, dict(f.env)
        elif isinstance(f, Defined) and f.name in decls:
            params, body, inner = decls[f.name].params, decls[f.name].body, {}
        else:
            return False
        inner.update(zip(params, (c.root for c in t.children[1:-1])))
        return _wf(last, body, decls, inner)
    return False
