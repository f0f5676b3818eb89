"""Reference evaluator for the higher-order field calculus (HFC).

Used as a differential oracle: programs in the common fragment must
behave the same under this evaluator and under the NC one.  At run time
``nbr`` builds a neighbouring field value; pure built-ins act pointwise
when handed fields; ``foldhood`` collapses a field.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from . import prims
from .core import (Var, Val, Lambda, App, Rep, Nbr, Foldhood, Program, Builtin, FunctionDecl,
                   Defined, Closure, Function, strict_equal, format_value,
                   free_vars, replace_var, fresh_name, bound_names, walk)
from .device import (ValueTree, Evaluator, StepBudgetExceeded, EvalError,
                     DEFAULT_BUDGET, project_i, project_f, EMPTY)
from .typesys import (check_program_restricted, NCTypeError, DIAGNOSTICS, Inferencer,
                      zonk, prune, TCon, TFun)


class FieldValue:
    """A neighbouring field value: a finite map device -> local value."""
    __slots__ = ("_items", "_map")

    def __init__(self, mapping):
        self._map = dict(mapping)
        self._items = tuple(sorted(self._map.items()))

    def items(self):
        return self._items

    def domain(self):
        return set(self._map)

    def __getitem__(self, d):
        return self._map[d]

    def get(self, d, default=None):
        return self._map.get(d, default)

    def restrict(self, ds):
        return FieldValue({d: v for d, v in self._items if d in ds})

    def __eq__(self, other):
        return (isinstance(other, FieldValue) and len(self._items) == len(other._items)
                and all(a == c and strict_equal(b, e)
                        for (a, b), (c, e) in zip(self._items, other._items)))

    def __hash__(self):
        return hash(tuple(d for d, _ in self._items))

    def format(self):
        return "{" + ", ".join(f"{d}->{format_value(v)}" for d, v in self._items) + "}"

    def __repr__(self):
        return f"FieldValue({self.format()})"


class HfcError(RuntimeError):
    pass


class HfcEvaluator(Evaluator):
    """Device evaluation of HFC.  Shares projections, function entry and
    the step budget with the NC evaluator; there is no failure outcome."""

    def __init__(self, program, budget=DEFAULT_BUDGET):
        super().__init__(program, budget, memo=False)

    def fire(self, delta, env, sigma, main=None):
        self._reset()
        e = self.program.main if main is None else main
        return self.heval(delta, env, sigma, e, {})

    def hfc_evaluate(self, delta, env, sigma, e, bindings=None):
        self._reset()
        return self.heval(delta, env, sigma, e, dict(bindings or {}))

    def heval(self, d, env, sigma, e, b):
        self.tick()
        cls = e.__class__
        if cls is Val:
            v = e.value
            if isinstance(v, FieldValue):
                v = v.restrict(set(env) | {d})
            return ValueTree(v, ())
        if cls is Var:
            v = b[e.name]
            if isinstance(v, FieldValue):
                v = v.restrict(set(env) | {d})
            return ValueTree(v, ())
        if cls is Lambda:
            return ValueTree(Closure(e, {x: b[x] for x in free_vars(e)}), ())
        if cls is App:
            return self.happ(d, env, sigma, e, b)
        if cls is Nbr:
            env1 = self._pi(env, 1)
            t = self.heval(d, env1, sigma, e.body, b)
            phi = {n: s.root for n, s in env1.items()}
            phi[d] = t.root
            return ValueTree(FieldValue(phi), (t,))
        if cls is Rep:
            if not (isinstance(e.update, Lambda) and len(e.update.params) == 1):
                raise HfcError("rep update must be an anonymous function of one parameter")
            t1 = self.heval(d, self._pi(env, 1), sigma, e.init, b)
            env2 = self._pi(env, 2)
            prev = env2.get(d) if d in env else None
            v0 = t1.root if prev is None else prev.root
            inner = dict(b)
            inner[e.update.params[0]] = v0
            t2 = self.heval(d, env2, sigma, e.update.body, inner)
            return ValueTree(t2.root, (t1, t2))
        if cls is Foldhood:
            t1 = self.heval(d, self._pi(env, 1), sigma, e.init, b)
            t2 = self.heval(d, self._pi(env, 2), sigma, e.agg, b)
            env3 = self._pi(env, 3)
            t3 = self.heval(d, env3, sigma, e.body, b)
            phi = t3.root
            if not isinstance(phi, FieldValue):
                phi = FieldValue({n: phi for n in set(env3) | {d}})
            acc = t1.root
            for n, v in phi.items():
                if n != d:
                    acc = self.apply_local(t2.root, (acc, v), d, sigma)
            return ValueTree(acc, (t1, t2, t3))
        raise HfcError(f"cannot evaluate {e!r}")

    def happ(self, d, env, sigma, e, b):
        tf = self.heval(d, self._pi(env, 1), sigma, e.fn, b)
        f = tf.root
        targs = [self.heval(d, self._pi(env, i + 2), sigma, a, b) for i, a in enumerate(e.args)]
        vals = [t.root for t in targs]
        if isinstance(f, Builtin):
            v = self.hbuiltin(f, d, env, sigma, vals)
            return ValueTree(v, (tf, *targs, ValueTree(v, ())))
        body, inner = self.enter(f, vals)
        tb = self.heval(d, self._pf(env, f), sigma, body, inner)
        return ValueTree(tb.root, (tf, *targs, tb))

    def hbuiltin(self, f, d, env, sigma, vals):
        name = f.name
        p = prims.TABLE.get(name)
        if p is None:
            raise HfcError(f"unknown built-in {name}")
        if p.kind == prims.SENSOR:
            return prims.read_sensor(name, d, sigma)
        dom = set(self._pf(env, f)) | {d}
        if p.kind == prims.RELATIONAL:
            return FieldValue({n: sigma.read_relational(name, d, n) for n in dom})
        if name == "consthood":
            v = vals[0]
            return v if isinstance(v, FieldValue) else FieldValue({n: v for n in dom})
        if name == "map":
            fn, args = vals[0], vals[1:]
            return self.pointwise(lambda xs: self.apply_local(fn, xs, d, sigma), args, dom)
        if any(isinstance(v, FieldValue) for v in vals):
            return self.pointwise(lambda xs: prims.apply_pure(name, xs), vals, None)
        return prims.apply_pure(name, vals)

    def pointwise(self, fn, vals, dom):
        doms = [v.domain() for v in vals if isinstance(v, FieldValue)]
        if doms:
            dom = set.intersection(*doms)
        out = {}
        for n in sorted(dom):
            out[n] = fn([v[n] if isinstance(v, FieldValue) else v for v in vals])
        return FieldValue(out)

    def apply_local(self, f, vals, d, sigma):
        if isinstance(f, Builtin):
            if any(isinstance(v, FieldValue) for v in vals):
                return self.pointwise(lambda xs: prims.apply_pure(f.name, xs), list(vals), None)
            return self.hbuiltin(f, d, EMPTY, sigma, list(vals))
        body, inner = self.enter(f, list(vals))
        return self.heval(d, EMPTY, sigma, body, inner).root


def hfc_evaluate(delta, env, sigma, e, program=None, bindings=None):
    ev = HfcEvaluator(program or Program((), e))
    return ev.hfc_evaluate(delta, env, sigma, e, bindings)


# ------------------------------------------------------ restriction check

@dataclass
class FragmentReport:
    ok: bool
    code: str = None
    message: str = ""
    span: object = None
    result: object = None

    @property
    def restriction(self):
        if self.code == "field-capture-foldhood":
            return "R2"
        if self.code == "builtin-field-arg":
            return "R1"
        return None

    def __str__(self):
        if self.ok:
            return "pass"
        where = f" at {self.span}" if self.span else ""
        return f"violation [{self.code}]{where}: {self.message}"


def check_hfc_prime(program):
    """Is the program in the common typed fragment?  Reports the rule."""
    try:
        res = check_program_restricted(program)
    except NCTypeError as err:
        return FragmentReport(False, err.code, err.message, err.span)
    return FragmentReport(True, result=res)


# ------------------------------------------------------------ refactorings

class RefactorError(ValueError):
    pass


_tags = itertools.count(1)


def _fresh_tag():
    return f"refactor:{next(_tags)}"


def _redex(e):
    if not (isinstance(e, App) and isinstance(e.fn, Lambda)
            and len(e.fn.params) == 1 and len(e.args) == 1):
        raise RefactorError("expected a redex ((x) => e1)(e2)")
    return e.fn, e.args[0]


def _arg_is_field(arg, D=None, A=None):
    """``D`` maps names to restricted schemes or to declarations."""
    try:
        inf = Inferencer(restricted=True, relax=("R2", "capture"))
        if D and any(isinstance(v, FunctionDecl) for v in D.values()):
            D, _ = inf.program(Program(tuple(D.values()), Val(0.0)))
        t = prune(inf.infer(arg, dict(D or {}), dict(A or {})))
    except NCTypeError:
        return isinstance(arg, Nbr)
    return isinstance(t, TCon) and t.name == "field"


def refactor_abstract(e, D=None, A=None):
    """((x) => e1)(e2)  ~>  ((x) => e1[x := x()])(() => e2)"""
    lam, arg = _redex(e)
    if not _arg_is_field(arg, D, A):
        raise RefactorError("argument is local; nothing to abstract")
    x = lam.params[0]
    body = replace_var(lam.body, x, App(Var(x), ()))
    return App(Lambda(lam.params, body, _fresh_tag(), lam.span),
               (Lambda((), arg, _fresh_tag(), e.span),), e.span)


def refactor_abstract_params(e, locals_, D=None, A=None):
    """((x) => e1)(e2[e']) ~> ((x, y) => e1[x := x(y)])((y) => e2[y], e')

    ``locals_`` lists the subexpressions of the argument to pass as
    parameters; each is replaced wherever it occurs (by equality)."""
    lam, arg = _redex(e)
    if not _arg_is_field(arg, D, A):
        raise RefactorError("argument is local; nothing to abstract")
    x = lam.params[0]
    avoid = set(free_vars(lam.body)) | bound_names(lam.body) | set(free_vars(arg)) \
        | bound_names(arg) | {x}
    ys = []
    for _ in locals_:
        y = fresh_name("y", avoid)
        avoid.add(y)
        ys.append(y)
    new_arg = arg
    for sub, y in zip(locals_, ys):
        if not any(s == sub for s in walk(new_arg)):
            raise RefactorError("designated subexpression does not occur in the argument")
        new_arg = _replace_subexpr(new_arg, sub, Var(y))
    call = App(Var(x), tuple(Var(y) for y in ys))
    body = replace_var(lam.body, x, call)
    return App(Lambda((x, *ys), body, _fresh_tag(), lam.span),
               (Lambda(tuple(ys), new_arg, _fresh_tag(), e.span), *locals_), e.span)


def _replace_subexpr(e, target, repl):
    from .core import children, rebuild
    if e == target:
        return repl
    kids = children(e)
    if not kids:
        return e
    return rebuild(e, [_replace_subexpr(c, target, repl) for c in kids])


def refactor_defer(e):
    """((x) => e1)(nbr{e2})  ~>  ((x) => e1[x := nbr{x}])(e2)"""
    lam, arg = _redex(e)
    if not isinstance(arg, Nbr):
        raise RefactorError("argument is not an nbr expression")
    x = lam.params[0]
    body = replace_var(lam.body, x, Nbr(Var(x)))
    return App(Lambda(lam.params, body, _fresh_tag(), lam.span), (arg.body,), e.span)


# ------------------------------------------------------- differential run

def values_close(a, b, rel=1e-12):
    if isinstance(a, float) and isinstance(b, float) and not isinstance(a, bool) \
            and not isinstance(b, bool):
        if a == b:
            return True
        if math.isnan(a) and math.isnan(b):
            return True
        return abs(a - b) <= rel * max(abs(a), abs(b))
    if isinstance(a, FieldValue) and isinstance(b, FieldValue):
        return a.domain() == b.domain() and all(values_close(x, b[d], rel) for d, x in a.items())
    from .core import Data
    if isinstance(a, Data) and isinstance(b, Data):
        return a.ctor == b.ctor and all(values_close(x, y, rel) for x, y in zip(a.args, b.args))
    return strict_equal(a, b)


@dataclass
class Verdict:
    ok: bool
    firings: int = 0
    step: int = None
    device: int = None
    nc_value: object = None
    hfc_value: object = None
    path: str = ""

    def __str__(self):
        if self.ok:
            return f"PASS ({self.firings} firings)"
        return (f"DIVERGE at step {self.step} on device {self.device}{self.path}: "
                f"NC={format_value(self.nc_value)} HFC={format_value(self.hfc_value)}")


def check_same_behaviour(program, env, actions, horizon=math.inf, budget=DEFAULT_BUDGET):
    """Run the same action trace under both evaluators and compare, firing
    by firing, the NC root with the HFC root.  When the HFC root is a
    field, each of its entries is compared with NC evaluation of main
    against that neighbour."""
    from .network import Simulator, initial_config
    nc = Simulator(program, horizon, Evaluator(program, budget))
    hf = Simulator(program, horizon, HfcEvaluator(program, budget))
    N1 = N2 = initial_config(env)
    firings = 0
    for action in actions:
        N1 = nc.step(N1, action)
        N2 = hf.step(N2, action)
        if action[0] != "+":
            continue
        firings += 1
        d = action[1]
        v1 = N1.field[d][d][0].root
        v2 = N2.field[d][d][0].root
        if isinstance(v2, FieldValue):
            theta = nc.last_env
            sigma = N1.env.sensors[d]
            for n, x in v2.items():
                t = nc.evaluator.evaluate(d, n, theta, sigma, program.main)
                got = None if t is None or not hasattr(t, "root") else t.root
                if got is None or not values_close(got, x):
                    return Verdict(False, firings, N1.clock - 1, d, got, x, f" (against {n})")
            continue
        if not values_close(v1, v2):
            return Verdict(False, firings, N1.clock - 1, d, v1, v2)
    return Verdict(True, firings)
