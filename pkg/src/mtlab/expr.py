"""A small arithmetic expression language for fields given in configs.

Grammar: real literals, ``+ - * / ^`` (``^`` right-associative and binding
tighter than unary minus), parentheses, ``sin cos exp log``, the constant
``pi``, and the coordinates ``x y`` (torus) or ``X Y Z`` (sphere).
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, ParseError
from .surface import ScalarField, SurfaceMesh

FUNCTIONS: dict = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log}
TORUS_VARS = ("x", "y")
SPHERE_VARS = ("X", "Y", "Z")

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))"
)
_BINARY = {"+": (10, False), "-": (10, False), "*": (20, False), "/": (20, False), "^": (40, True)}
_UNARY_BP = 30


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


def tokenize(src: str) -> list:
    toks, pos = [], 0
    raw = src.encode()
    while True:
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            rest = src[pos:]
            if rest.strip() == "":
                break
            off = len(raw[: len(src[:pos].encode())]) + (len(rest) - len(rest.lstrip()))
            raise ParseError(f"unexpected character {rest.strip()[0]!r}", off)
        kind = m.lastgroup
        start = m.start(kind)
        toks.append(Token(kind, m.group(kind), len(src[:start].encode())))
        pos = m.end()
    toks.append(Token("end", "", len(raw)))
    return toks


class _Parser:
    def __init__(self, src: str, variables):
        self.toks = tokenize(src)
        self.i = 0
        self.variables = variables

    def peek(self) -> Token:
        return self.toks[self.i]

    def next(self) -> Token:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text):
        t = self.next()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text or 'end of input'!r}", t.offset)

    def parse(self) -> Callable:
        node = self.expr(0)
        t = self.peek()
        if t.kind != "end":
            raise ParseError(f"unexpected {t.text!r}", t.offset)
        return node

    def expr(self, min_bp: int) -> Callable:
        lhs = self.prefix()
        while True:
            t = self.peek()
            if t.kind != "op" or t.text not in _BINARY:
                return lhs
            bp, right = _BINARY[t.text]
            if bp < min_bp or (bp == min_bp and not right):
                return lhs
            self.next()
            rhs = self.expr(bp if right else bp + 1)
            lhs = _binary(t.text, lhs, rhs)

    def prefix(self) -> Callable:
        t = self.next()
        if t.kind == "num":
            v = float(t.text)
            return lambda env: v
        if t.kind == "name":
            if t.text == "pi":
                return lambda env: np.pi
            if t.text in self.variables:
                name = t.text
                return lambda env: env[name]
            if t.text in FUNCTIONS:
                fn = FUNCTIONS[t.text]
                self.expect("(")
                arg = self.expr(0)
                self.expect(")")
                return lambda env: fn(arg(env))
            raise ParseError(f"unknown name {t.text!r}", t.offset)
        if t.text in ("-", "+"):
            operand = self.expr(_UNARY_BP)
            if t.text == "+":
                return operand
            return lambda env: -operand(env)
        if t.text == "(":
            inner = self.expr(0)
            self.expect(")")
            return inner
        raise ParseError(f"unexpected {t.text or 'end of input'!r}", t.offset)


def _binary(op, a, b):
    if op == "+":
        return lambda env: a(env) + b(env)
    if op == "-":
        return lambda env: a(env) - b(env)
    if op == "*":
        return lambda env: a(env) * b(env)
    if op == "/":
        return lambda env: a(env) / b(env)
    return lambda env: np.power(a(env), b(env))


def compile_expression(src: str, variables=TORUS_VARS) -> Callable:
    """Parse ``src`` into a callable of a variable environment dict."""
    if not isinstance(src, str):
        src = repr(src) if isinstance(src, (int, float)) else str(src)
    return _Parser(src, variables).parse()


def expression_eval(src: str, mesh: SurfaceMesh) -> ScalarField:
    variables = TORUS_VARS if mesh.is_torus else SPHERE_VARS
    fn = compile_expression(src, variables)
    env = dict(zip(variables, mesh.nodes.T))
    with np.errstate(all="ignore"):
        vals = np.broadcast_to(np.asarray(fn(env), dtype=float), (mesh.num_nodes,))
    bad = ~np.isfinite(vals)
    if np.any(bad):
        node = int(np.flatnonzero(bad)[0])
        raise DomainError(f"expression {src!r} is not finite at node {node}")
    return mesh.field(np.array(vals))


def expression_grid_eval(src: str, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Evaluate a torus expression on arbitrary coordinate arrays."""
    fn = compile_expression(src, TORUS_VARS)
    with np.errstate(all="ignore"):
        vals = np.broadcast_to(np.asarray(fn({"x": X, "y": Y}), dtype=float), np.shape(X))
    if not np.all(np.isfinite(vals)):
        raise DomainError(f"expression {src!r} is not finite on the grid")
    return np.array(vals)
