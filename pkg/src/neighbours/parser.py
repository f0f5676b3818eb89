"""Reader and printer for NC source text.

Listing syntax: ``def name(x, y) { body }`` declarations followed by the
main expression.  Binary built-ins may be written infix with C-like
precedence; ``if`` and ``let`` are sugar, removed by :func:`desugar`.
"""
from __future__ import annotations

import re

from . import prims
from .core import (Span, Var, Val, Lambda, App, Rep, Nbr, Foldhood, If, Let,
                   FunctionDecl, Program, Data, Builtin, Defined, Closure, INF,
                   children, rebuild, format_value, tag_anonymous_functions)

KEYWORDS = {"def", "rep", "nbr", "foldhood", "if", "else", "let", "in"}
CONSTANTS = {"True": True, "False": False, "PositiveInfinity": INF}

_TOKEN = re.compile(r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<num>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>=>|==|!=|<=|>=|&&|\|\||[-+*/<>=!(){},])
""", re.VERBOSE)

# binding strength of the infix operators, loosest first
LEVELS = [("||",), ("&&",), ("==", "!=", "="), ("<", "<=", ">", ">="),
          ("+", "-"), ("*", "/")]
SYMBOL_TO_BUILTIN = dict(prims.INFIX)
SYMBOL_TO_BUILTIN["="] = "="
OPERATOR_SYMBOLS = set(SYMBOL_TO_BUILTIN)


class ParseError(SyntaxError):
    def __init__(self, message, span=None, expected=()):
        self.span = span
        self.expected = tuple(sorted(set(expected)))
        where = f"{span}: " if span else ""
        extra = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{where}{message}{extra}")


class Token:
    __slots__ = ("kind", "text", "span")

    def __init__(self, kind, text, span):
        self.kind, self.text, self.span = kind, text, span

    def __repr__(self):
        return f"Token({self.kind}, {self.text!r})"


def tokenize(source, file="<input>"):
    out = []
    pos, line, line_start = 0, 1, 0
    n = len(source)
    while pos < n:
        m = _TOKEN.match(source, pos)
        if not m:
            span = Span(file, pos, pos + 1, line, pos - line_start + 1)
            raise ParseError(f"unexpected character {source[pos]!r}", span)
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            if kind == "ident" and text in KEYWORDS:
                kind = "kw"
            out.append(Token(kind, text, Span(file, pos, m.end(), line, pos - line_start + 1)))
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = pos + text.rfind("\n") + 1
        pos = m.end()
    out.append(Token("eof", "", Span(file, n, n, line, n - line_start + 1)))
    return out


class _Parser:
    def __init__(self, tokens):
        self.toks = tokens
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def peek(self, k=1):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text, kind=None):
        t = self.tok
        return t.text == text and (kind is None or t.kind == kind) and t.kind != "eof"

    def advance(self):
        t = self.tok
        self.i += 1
        return t

    def expect(self, text):
        if not self.at(text):
            raise ParseError(f"unexpected {self._describe()}", self.tok.span, [text])
        return self.advance()

    def ident(self):
        if self.tok.kind != "ident":
            raise ParseError(f"unexpected {self._describe()}", self.tok.span, ["identifier"])
        return self.advance()

    def _describe(self):
        t = self.tok
        return "end of input" if t.kind == "eof" else repr(t.text)

    # -- program

    def program(self):
        decls = []
        while self.at("def", "kw"):
            decls.append(self.decl())
        if self.tok.kind == "eof":
            raise ParseError("missing main expression", self.tok.span, ["expression"])
        main = self.expr()
        if self.tok.kind != "eof":
            raise ParseError(f"unexpected {self._describe()}", self.tok.span,
                             ["end of input", "operator"])
        return decls, main

    def decl(self):
        start = self.expect("def").span
        name = self.ident()
        if name.text in prims.TABLE or name.text in CONSTANTS:
            raise ParseError(f"cannot redefine built-in {name.text}", name.span)
        params = self.params()
        if self.at("{"):
            self.advance()
            body = self.expr()
            self.expect("}")
        else:
            self.expect("=")
            body = self.expr()
        return FunctionDecl(name.text, tuple(params), body, start)

    def params(self):
        self.expect("(")
        out = []
        if not self.at(")"):
            out.append(self.ident().text)
            while self.at(","):
                self.advance()
                out.append(self.ident().text)
        self.expect(")")
        if len(set(out)) != len(out):
            raise ParseError("repeated parameter name", self.tok.span)
        return out

    # -- expressions

    def expr(self):
        t = self.tok
        if t.kind == "kw" and t.text == "let":
            return self.let()
        lam = self.try_lambda()
        if lam is not None:
            return lam
        return self.binary(0)

    def try_lambda(self):
        t = self.tok
        if t.kind == "ident" and self.peek().text == "=>":
            self.advance()
            self.advance()
            return Lambda((t.text,), self.lambda_body(), None, t.span)
        if not self.at("("):
            return None
        # scan ( ident, ident ) =>
        j = self.i + 1
        if self.toks[j].text != ")":
            while True:
                if self.toks[j].kind != "ident":
                    return None
                j += 1
                if self.toks[j].text == ",":
                    j += 1
                    continue
                break
        if self.toks[j].text != ")" or self.toks[j + 1].text != "=>":
            return None
        params = self.params()
        self.expect("=>")
        return Lambda(tuple(params), self.lambda_body(), None, t.span)

    def lambda_body(self):
        if self.at("{"):
            self.advance()
            body = self.expr()
            self.expect("}")
            return body
        return self.expr()

    def let(self):
        start = self.advance().span
        name = self.ident().text
        self.expect("=")
        value = self.expr()
        self.expect("in")
        body = self.expr()
        return Let(name, value, body, start)

    def binary(self, level):
        if level == len(LEVELS):
            return self.unary()
        left = self.binary(level + 1)
        while self.tok.kind == "op" and self.tok.text in LEVELS[level]:
            op = self.advance()
            right = self.binary(level + 1)
            left = App(Val(Builtin(SYMBOL_TO_BUILTIN[op.text]), op.span), (left, right), op.span)
        return left

    def unary(self):
        t = self.tok
        if t.kind == "op" and t.text == "!":
            self.advance()
            return App(Val(Builtin("not"), t.span), (self.unary(),), t.span)
        if t.kind == "op" and t.text == "-":
            self.advance()
            inner = self.unary()
            if isinstance(inner, Val) and isinstance(inner.value, float):
                return Val(-inner.value, t.span)
            return App(Val(Builtin("-"), t.span), (Val(0.0, t.span), inner), t.span)
        return self.postfix()

    def postfix(self):
        e = self.primary()
        while self.at("("):
            start = self.tok.span
            args = self.args()
            e = App(e, tuple(args), start)
        return e

    def args(self):
        self.expect("(")
        out = []
        if not self.at(")"):
            out.append(self.arg())
            while self.at(","):
                self.advance()
                out.append(self.arg())
        self.expect(")")
        return out

    def arg(self):
        t = self.tok
        if (t.kind == "op" and t.text in OPERATOR_SYMBOLS
                and self.peek().text in (",", ")")):
            self.advance()
            return Val(Builtin(SYMBOL_TO_BUILTIN[t.text]), t.span)
        return self.expr()

    def primary(self):
        t = self.tok
        if t.kind == "num":
            self.advance()
            return Val(float(t.text), t.span)
        if t.kind == "ident":
            self.advance()
            if t.text in CONSTANTS:
                return Val(CONSTANTS[t.text], t.span)
            if t.text == "Null":
                return Val(Data("Null"), t.span)
            if t.text in ("Pair", "Cons"):
                args = self.args()
                if len(args) != 2 or not all(isinstance(a, Val) for a in args):
                    raise ParseError(f"{t.text} takes two literal values; use "
                                     f"{t.text.lower()}(...) to build from expressions", t.span)
                if t.text == "Cons" and not (isinstance(args[1].value, Data)
                                             and args[1].value.ctor in ("Null", "Cons")):
                    raise ParseError("Cons needs a list as second argument", t.span)
                return Val(Data(t.text, tuple(a.value for a in args)), t.span)
            return Var(t.text, t.span)
        if t.kind == "kw":
            if t.text == "rep":
                self.advance()
                self.expect("(")
                init = self.expr()
                self.expect(")")
                self.expect("{")
                upd = self.expr()
                self.expect("}")
                return Rep(init, upd, t.span)
            if t.text == "nbr":
                self.advance()
                close = "}" if self.at("{") else ")"
                self.expect("{" if close == "}" else "(")
                body = self.expr()
                self.expect(close)
                return Nbr(body, t.span)
            if t.text == "foldhood":
                self.advance()
                args = self.args()
                if len(args) != 3:
                    raise ParseError("foldhood takes three arguments", t.span)
                return Foldhood(args[0], args[1], args[2], t.span)
            if t.text == "if":
                self.advance()
                self.expect("(")
                cond = self.expr()
                self.expect(")")
                self.expect("{")
                a = self.expr()
                self.expect("}")
                if self.at("else", "kw"):
                    self.advance()
                self.expect("{")
                b = self.expr()
                self.expect("}")
                return If(cond, a, b, t.span)
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if self.at("{"):
            self.advance()
            e = self.expr()
            self.expect("}")
            return e
        raise ParseError(f"unexpected {self._describe()}", t.span,
                         ["expression", "number", "identifier", "(", "{"])


def _resolve(e, bound, functions):
    """Turn identifiers into variables, declared or built-in functions."""
    if isinstance(e, Var):
        if e.name in bound:
            return e
        if e.name in functions:
            return Val(Defined(e.name), e.span)
        if e.name in prims.TABLE:
            return Val(Builtin(e.name), e.span)
        raise ParseError(f"unknown identifier {e.name!r}", e.span)
    if isinstance(e, Lambda):
        return Lambda(e.params, _resolve(e.body, bound | set(e.params), functions), e.tag, e.span)
    if isinstance(e, Let):
        return Let(e.name, _resolve(e.value, bound, functions),
                   _resolve(e.body, bound | {e.name}, functions), e.span)
    kids = children(e)
    if not kids:
        return e
    return rebuild(e, [_resolve(c, bound, functions) for c in kids])


def desugar(e):
    """Replace ``if`` by the lazy mux encoding and ``let`` by a redex."""
    if isinstance(e, If):
        thunk_a = Lambda((), desugar(e.then), None, e.span)
        thunk_b = Lambda((), desugar(e.other), None, e.span)
        sel = App(Val(Builtin("mux"), e.span), (desugar(e.cond), thunk_a, thunk_b), e.span)
        return App(sel, (), e.span)
    if isinstance(e, Let):
        return App(Lambda((e.name,), desugar(e.body), None, e.span), (desugar(e.value),), e.span)
    kids = children(e)
    if not kids:
        return e
    return rebuild(e, [desugar(c) for c in kids])


def parse_program(source, file="<input>", prelude=(), pid="main"):
    """Parse, resolve names, desugar and tag a program.

    ``prelude`` is a sequence of already parsed declarations (the standard
    library) placed before the program's own declarations."""
    decls, main = _Parser(tokenize(source, file)).program()
    all_decls = list(prelude) + decls
    names = [d.name for d in all_decls]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ParseError(f"duplicate declaration of {sorted(dup)[0]}")
    fnames = set(names)
    out = []
    for d in decls:
        body = desugar(_resolve(d.body, set(d.params), fnames))
        out.append(FunctionDecl(d.name, d.params, body, d.span))
    main = desugar(_resolve(main, set(), fnames))
    return tag_anonymous_functions(Program(tuple(prelude) + tuple(out), main, pid))


def parse_declarations(source, file="<input>", prelude=()):
    """Parse a file holding only declarations (a library file)."""
    toks = tokenize(source, file)
    p = _Parser(toks)
    decls = []
    while p.at("def", "kw"):
        decls.append(p.decl())
    if p.tok.kind != "eof":
        raise ParseError(f"unexpected {p._describe()}", p.tok.span, ["def"])
    fnames = {d.name for d in prelude} | {d.name for d in decls}
    return [FunctionDecl(d.name, d.params,
                         desugar(_resolve(d.body, set(d.params), fnames)), d.span)
            for d in decls]


def parse_expr(source, functions=(), bound=()):
    """Parse a single expression (no declarations)."""
    p = _Parser(tokenize(source))
    e = p.expr()
    if p.tok.kind != "eof":
        raise ParseError(f"unexpected {p._describe()}", p.tok.span, ["end of input"])
    return desugar(_resolve(e, set(bound), set(functions)))


# ---------------------------------------------------------------- printer

_PREC_OF = {}
for _lvl, _ops in enumerate(LEVELS):
    for _o in _ops:
        if _o in SYMBOL_TO_BUILTIN:
            _PREC_OF.setdefault(SYMBOL_TO_BUILTIN[_o], (_o if _o != "=" else "==", _lvl))
_PREC_OF["="] = ("==", 2)


def _value_text(v):
    if isinstance(v, Builtin):
        if v.name in _PREC_OF and not v.name.isalnum():
            return _PREC_OF[v.name][0]
        return v.name
    if isinstance(v, Defined):
        return v.name
    return format_value(v)


def _infix(e):
    if (isinstance(e, App) and len(e.args) == 2 and isinstance(e.fn, Val)
            and isinstance(e.fn.value, Builtin) and e.fn.value.name in _PREC_OF):
        return _PREC_OF[e.fn.value.name]
    return None


ATOM = 100


def _show(e, ctx=0):
    """Render ``e``; wrap in parentheses when its binding strength is below ``ctx``."""
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Val):
        text = _value_text(e.value)
        if isinstance(e.value, float) and e.value < 0 and ctx > 0:
            return f"({text})"
        return text
    if isinstance(e, Lambda):
        text = f"({', '.join(e.params)}) => {_show(e.body)}"
        return f"({text})" if ctx > 0 else text
    if isinstance(e, Let):
        text = f"let {e.name} = {_show(e.value)} in {_show(e.body)}"
        return f"({text})" if ctx > 0 else text
    if isinstance(e, If):
        return f"if ({_show(e.cond)}) {{ {_show(e.then)} }} {{ {_show(e.other)} }}"
    if isinstance(e, Rep):
        return f"rep({_show(e.init)}) {{ {_show(e.update)} }}"
    if isinstance(e, Nbr):
        return f"nbr{{ {_show(e.body)} }}"
    if isinstance(e, Foldhood):
        return f"foldhood({_show(e.init)}, {_show(e.agg)}, {_show(e.body)})"
    if isinstance(e, App):
        inf = _infix(e)
        if inf is not None:
            sym, lvl = inf
            left = _show(e.args[0], lvl + 1)
            right = _show(e.args[1], lvl + 2)
            text = f"{left} {sym} {right}"
            return f"({text})" if ctx > lvl + 1 else text
        fn = _show(e.fn, ATOM)
        return f"{fn}({', '.join(_show(a) for a in e.args)})"
    raise TypeError(f"cannot print {e!r}")


def show_expr(e):
    return _show(e)


def pretty_print(program):
    lines = []
    for d in program.functions:
        lines.append(f"def {d.name}({', '.join(d.params)}) {{")
        lines.append(f"  {_show(d.body)}")
        lines.append("}")
    lines.append(_show(program.main))
    return "\n".join(lines) + "\n"
