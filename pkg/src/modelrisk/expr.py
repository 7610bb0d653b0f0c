"""Tiny payoff language over x1, x2 with forward-mode gradients.

Grammar::

    expr  := term (("+" | "-") term)*
    term  := unary (("*" | "/") unary)*
    unary := "-" unary | atom
    atom  := NUMBER | "x1" | "x2" | "max" "(" expr "," expr ")" | "(" expr ")"

Every ``max`` contributes a kink function ``a - b``; on the tie set the
gradient is the minimum-norm element of the subdifferential, which is zero for
payoffs like ``max(x2 - x1, 0)``.
"""

from __future__ import annotations

import re

import numpy as np

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)|(x1|x2|max)|(.))")


class Node:
    def eval(self, x1, x2):
        """Return (value, d/dx1, d/dx2)."""
        raise NotImplementedError

    def kinks(self):
        return []


class Const(Node):
    def __init__(self, c):
        self.c = float(c)

    def eval(self, x1, x2):
        z = np.zeros(np.broadcast(x1, x2).shape)
        return z + self.c, z, z.copy()

    def __str__(self):
        return repr(self.c)


class Var(Node):
    def __init__(self, name):
        self.name = name

    def eval(self, x1, x2):
        shape = np.broadcast(x1, x2).shape
        one, zero = np.ones(shape), np.zeros(shape)
        if self.name == "x1":
            return np.broadcast_to(x1, shape).astype(float), one, zero
        return np.broadcast_to(x2, shape).astype(float), zero, one

    def __str__(self):
        return self.name


class Neg(Node):
    def __init__(self, a):
        self.a = a

    def eval(self, x1, x2):
        v, d1, d2 = self.a.eval(x1, x2)
        return -v, -d1, -d2

    def kinks(self):
        return self.a.kinks()

    def __str__(self):
        return f"(-{self.a})"


class Bin(Node):
    def __init__(self, op, a, b):
        self.op, self.a, self.b = op, a, b

    def eval(self, x1, x2):
        va, a1, a2 = self.a.eval(x1, x2)
        vb, b1, b2 = self.b.eval(x1, x2)
        op = self.op
        if op == "+":
            return va + vb, a1 + b1, a2 + b2
        if op == "-":
            return va - vb, a1 - b1, a2 - b2
        if op == "*":
            return va * vb, a1 * vb + va * b1, a2 * vb + va * b2
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / vb
            return va * inv, (a1 - va * inv * b1) * inv, (a2 - va * inv * b2) * inv

    def kinks(self):
        return self.a.kinks() + self.b.kinks()

    def __str__(self):
        return f"({self.a} {self.op} {self.b})"


class Max(Node):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def eval(self, x1, x2):
        va, a1, a2 = self.a.eval(x1, x2)
        vb, b1, b2 = self.b.eval(x1, x2)
        # min-norm point of the segment between the two gradients, used on ties
        e1, e2 = b1 - a1, b2 - a2
        nn = e1 * e1 + e2 * e2
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.clip(np.where(nn > 0, -(a1 * e1 + a2 * e2) / nn, 0.0), 0.0, 1.0)
        t = np.where(va > vb, 0.0, np.where(vb > va, 1.0, t))
        return np.maximum(va, vb), a1 + t * e1, a2 + t * e2

    def kinks(self):
        a, b = self.a, self.b

        def gap(x1, x2):
            return a.eval(x1, x2)[0] - b.eval(x1, x2)[0]

        return a.kinks() + b.kinks() + [gap]

    def __str__(self):
        return f"max({self.a}, {self.b})"


class _Parser:
    def __init__(self, text):
        self.toks = []
        pos = 0
        text = text.strip()
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                break
            num, name, sym = m.groups()
            if sym is not None and sym.isspace():
                pos = m.end()
                continue
            self.toks.append(("num", num) if num else ("name", name) if name else ("sym", sym))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else ("end", None)

    def take(self, kind=None, val=None):
        tok = self.peek()
        if (kind and tok[0] != kind) or (val and tok[1] != val):
            raise ValueError(f"unexpected token {tok[1]!r} at position {self.i}")
        self.i += 1
        return tok

    def expr(self):
        node = self.term()
        while self.peek() in (("sym", "+"), ("sym", "-")):
            op = self.take()[1]
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("sym", "*"), ("sym", "/")):
            op = self.take()[1]
            node = Bin(op, node, self.unary())
        return node

    def unary(self):
        if self.peek() == ("sym", "-"):
            self.take()
            return Neg(self.unary())
        return self.atom()

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return Const(float(val))
        if kind == "name" and val in ("x1", "x2"):
            self.take()
            return Var(val)
        if kind == "name" and val == "max":
            self.take()
            self.take("sym", "(")
            a = self.expr()
            self.take("sym", ",")
            b = self.expr()
            self.take("sym", ")")
            return Max(a, b)
        if (kind, val) == ("sym", "("):
            self.take()
            node = self.expr()
            self.take("sym", ")")
            return node
        raise ValueError(f"unexpected token {val!r} at position {self.i}")


def parse(text: str) -> Node:
    p = _Parser(text)
    if not p.toks:
        raise ValueError("empty expression")
    node = p.expr()
    if p.peek()[0] != "end":
        raise ValueError(f"unexpected token {p.peek()[1]!r} at position {p.i}")
    return node
