"""Scalar reverse-mode automatic differentiation on a dynamic tape.

Every arithmetic operation appends a :class:`DiffNode` to the :class:`Tape`
owning its operands. Adjoint rules are written with the same overloaded
operators as the forward pass, so a gradient built with ``create_graph=True``
is itself a graph on the tape and can be differentiated a second time.

Primitive set: ``+ - * /``, ``pow`` with a constant exponent, ``exp``,
``log``, ``tanh``, ``sin`` and ``square``. The set is closed under
differentiation (``cos`` is expressed as a shifted ``sin``).

Example
-------
>>> tape = Tape()
>>> x = tape.input("x", 2.0)
>>> y = x ** 3
>>> second_derivative(y, x, x)
12.0
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping

__all__ = [
    "AutodiffError",
    "NonFiniteError",
    "UnboundInputError",
    "DiffNode",
    "Tape",
    "evaluate",
    "gradient",
    "second_derivative",
    "exp",
    "log",
    "tanh",
    "sin",
    "square",
]


class AutodiffError(Exception):
    pass


class NonFiniteError(AutodiffError, FloatingPointError):
    """A forward value or adjoint became NaN or infinite."""

    def __init__(self, op: str, where: str = "value"):
        super().__init__(f"non-finite {where} produced by op '{op}'")
        self.op = op


class UnboundInputError(AutodiffError, KeyError):
    def __str__(self):
        return f"input '{self.args[0]}' has no bound value"


# Forward rules: f(parent_values, const) -> float
def _fw_pow(v, c):
    return v[0] ** c


_FORWARD = {
    "add": lambda v, c: v[0] + v[1],
    "sub": lambda v, c: v[0] - v[1],
    "mul": lambda v, c: v[0] * v[1],
    "div": lambda v, c: v[0] / v[1],
    "neg": lambda v, c: -v[0],
    "pow": _fw_pow,
    "exp": lambda v, c: math.exp(v[0]),
    "log": lambda v, c: math.log(v[0]),
    "tanh": lambda v, c: math.tanh(v[0]),
    "sin": lambda v, c: _shifted_sin(v[0], c),
    "square": lambda v, c: v[0] * v[0],
}


# Adjoint rules: f(g, args, out, const) -> tuple of parent adjoints.
# args/out are floats in plain mode and DiffNodes in create_graph mode; the
# rules only use operators defined on both.
def _bw_pow(g, a, out, c):
    if c == 1.0:
        return (g,)
    if c == 2.0:
        return (g * (2.0 * a[0]),)
    return (g * (c * _pow(a[0], c - 1.0)),)


_BACKWARD = {
    "add": lambda g, a, out, c: (g, g),
    "sub": lambda g, a, out, c: (g, -g),
    "mul": lambda g, a, out, c: (g * a[1], g * a[0]),
    "div": lambda g, a, out, c: (g / a[1], -(g * out) / a[1]),
    "neg": lambda g, a, out, c: (-g,),
    "pow": _bw_pow,
    "exp": lambda g, a, out, c: (g * out,),
    "log": lambda g, a, out, c: (g / a[0],),
    "tanh": lambda g, a, out, c: (g * (1.0 - square(out)),),
    "sin": lambda g, a, out, c: (g * _sin(a[0], c + 1),),
    "square": lambda g, a, out, c: (g * (2.0 * a[0]),),
}


class DiffNode:
    """One scalar on a tape: forward value, op tag and operand references."""

    __slots__ = ("tape", "index", "op", "parents", "const", "value", "name")

    def __init__(self, tape, op, parents=(), const=None, value=None, name=None):
        self.tape = tape
        self.op = op
        self.parents = parents
        self.const = const
        self.name = name
        self.value = value
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    def __repr__(self):
        label = self.name if self.name is not None else self.op
        return f"DiffNode({label}={self.value!r})"

    def __float__(self):
        if self.value is None:
            raise UnboundInputError(self.name or self.op)
        return float(self.value)

    # arithmetic -----------------------------------------------------------
    def _wrap(self, other):
        if isinstance(other, DiffNode):
            if other.tape is not self.tape:
                raise AutodiffError("operands live on different tapes")
            return other
        return self.tape.const(other)

    def __add__(self, other):
        return self.tape._op("add", (self, self._wrap(other)))

    def __radd__(self, other):
        return self.tape._op("add", (self._wrap(other), self))

    def __sub__(self, other):
        return self.tape._op("sub", (self, self._wrap(other)))

    def __rsub__(self, other):
        return self.tape._op("sub", (self._wrap(other), self))

    def __mul__(self, other):
        return self.tape._op("mul", (self, self._wrap(other)))

    def __rmul__(self, other):
        return self.tape._op("mul", (self._wrap(other), self))

    def __truediv__(self, other):
        return self.tape._op("div", (self, self._wrap(other)))

    def __rtruediv__(self, other):
        return self.tape._op("div", (self._wrap(other), self))

    def __neg__(self):
        return self.tape._op("neg", (self,))

    def __pos__(self):
        return self

    def __pow__(self, exponent):
        if isinstance(exponent, DiffNode):
            raise TypeError("pow supports constant exponents only")
        return self.tape._op("pow", (self,), const=float(exponent))

    def exp(self):
        return self.tape._op("exp", (self,))

    def log(self):
        return self.tape._op("log", (self,))

    def tanh(self):
        return self.tape._op("tanh", (self,))

    def sin(self):
        return self.tape._op("sin", (self,), const=0)

    def square(self):
        return self.tape._op("square", (self,))


class Tape:
    """Append-only record of nodes in creation (topological) order.

    A tape is single-writer. Once complete it is only read by
    :func:`gradient`, except that ``create_graph=True`` appends the adjoint
    graph to it.
    """

    def __init__(self):
        self.nodes: list[DiffNode] = []
        self.inputs: dict[str, DiffNode] = {}

    def __len__(self):
        return len(self.nodes)

    def input(self, name: str, value: float | None = None) -> DiffNode:
        if name in self.inputs:
            raise AutodiffError(f"duplicate input name '{name}'")
        if value is not None:
            value = _check(float(value), "input")
        node = DiffNode(self, "input", value=value, name=name)
        self.inputs[name] = node
        return node

    def const(self, value: float) -> DiffNode:
        return DiffNode(self, "const", value=_check(float(value), "const"))

    def _op(self, op, parents, const=None):
        vals = [p.value for p in parents]
        value = None if any(v is None for v in vals) else _apply(op, vals, const)
        return DiffNode(self, op, parents, const, value)

    def replay(self, upto: DiffNode | None = None) -> None:
        """Recompute node values in creation order from the current inputs."""
        end = len(self.nodes) if upto is None else upto.index + 1
        for node in self.nodes[:end]:
            if node.parents:
                vals = [p.value for p in node.parents]
                if any(v is None for v in vals):
                    node.value = None
                else:
                    node.value = _apply(node.op, vals, node.const)


def _check(value, op, where="value"):
    if not math.isfinite(value):
        raise NonFiniteError(op, where)
    return value


def _apply(op, vals, const):
    try:
        out = _FORWARD[op](vals, const)
    except (ValueError, OverflowError, ZeroDivisionError) as exc:
        raise NonFiniteError(op) from exc
    return _check(out, op)


def _pow(a, c):
    return a**c


def _shifted_sin(a, quarters):
    """``sin(a + quarters * pi / 2)`` without rounding the phase."""
    q = quarters % 4
    v = math.sin(a) if q % 2 == 0 else math.cos(a)
    return v if q < 2 else -v


def _sin(a, quarters):
    if isinstance(a, DiffNode):
        return a.tape._op("sin", (a,), const=quarters)
    return _shifted_sin(a, quarters)


def _unary(op, x):
    if isinstance(x, DiffNode):
        return getattr(x, op)()
    return _apply(op, [float(x)], 0 if op == "sin" else None)


def exp(x):
    return _unary("exp", x)


def log(x):
    return _unary("log", x)


def tanh(x):
    return _unary("tanh", x)


def sin(x):
    return _unary("sin", x)


def square(x):
    if isinstance(x, DiffNode):
        return x.square()
    return x * x


def _ancestors(expr: DiffNode) -> list[DiffNode]:
    """Ancestors of ``expr`` (inclusive) sorted by creation index."""
    seen = {expr.index: expr}
    stack = [expr]
    while stack:
        node = stack.pop()
        for p in node.parents:
            if p.index not in seen:
                seen[p.index] = p
                stack.append(p)
    return [seen[i] for i in sorted(seen)]


def evaluate(expr: DiffNode, bindings: Mapping[str, float] | None = None) -> float:
    """Bind inputs by name, replay the ancestors of ``expr`` and return its value."""
    tape = expr.tape
    bindings = dict(bindings or {})
    for name in bindings:
        if name not in tape.inputs:
            raise UnboundInputError(name)
    nodes = _ancestors(expr)
    for node in nodes:
        if node.op == "input":
            if node.name in bindings:
                node.value = _check(float(bindings[node.name]), "input")
            elif node.value is None:
                raise UnboundInputError(node.name)
    for node in nodes:
        if node.parents:
            node.value = _apply(node.op, [p.value for p in node.parents], node.const)
    return expr.value


def _resolve(tape, wrt):
    out = []
    for w in wrt:
        if isinstance(w, str):
            if w not in tape.inputs:
                raise UnboundInputError(w)
            w = tape.inputs[w]
        elif w.tape is not tape:
            raise AutodiffError("wrt node lives on a different tape")
        out.append(w)
    return out


def gradient(expr: DiffNode, wrt: Iterable[DiffNode | str], create_graph: bool = False) -> dict:
    """Reverse-mode gradient of ``expr`` with respect to input nodes.

    Returns a dict keyed by input name. With ``create_graph`` the values are
    DiffNodes on the same tape (differentiable again); otherwise floats.
    Inputs with no path to ``expr`` get 0.
    """
    tape = expr.tape
    targets = _resolve(tape, wrt)
    if expr.value is None:
        evaluate(expr)
    nodes = _ancestors(expr)
    target_ids = {t.index for t in targets}
    live = set()
    for node in nodes:
        if node.index in target_ids or any(p.index in live for p in node.parents):
            live.add(node.index)

    zero = tape.const(0.0) if create_graph else 0.0
    adj = {expr.index: tape.const(1.0) if create_graph else 1.0}
    if expr.index in live:
        for node in reversed(nodes):
            g = adj.pop(node.index, None)
            if g is None:
                continue
            if not node.parents:
                adj[node.index] = g  # leaf: keep for the result
                continue
            if create_graph:
                args = node.parents
                out = node
            else:
                args = [p.value for p in node.parents]
                out = node.value
            grads = _BACKWARD[node.op](g, args, out, node.const)
            for p, gp in zip(node.parents, grads):
                if p.index not in live:
                    continue
                if not create_graph:
                    _check(gp, node.op, "adjoint")
                prev = adj.get(p.index)
                adj[p.index] = gp if prev is None else prev + gp
    result = {}
    for t in targets:
        g = adj.get(t.index, zero)
        if create_graph and g.value is not None:
            _check(g.value, "gradient", "adjoint")
        result[t.name] = g
    return result


def second_derivative(expr: DiffNode, a: DiffNode | str, b: DiffNode | str) -> float:
    """Mixed second derivative d^2 expr / (da db) by differentiating the gradient graph."""
    (a_node,) = _resolve(expr.tape, [a])
    (b_node,) = _resolve(expr.tape, [b])
    first = gradient(expr, [a_node], create_graph=True)[a_node.name]
    return float(gradient(first, [b_node])[b_node.name])
