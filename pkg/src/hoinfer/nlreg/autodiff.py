"""Second-order forward-mode differentiation and a small expression grammar.

A :class:`Jet` carries a vector of values over ``m`` design points together
with their gradients and Hessians with respect to ``d`` seeded variables.
Arithmetic on jets propagates all three exactly, which is enough to obtain
log likelihoods, scores and observed information for the nonlinear models
in a single pass.

Expressions such as ``"b1 + (b2 - b1) / (1 + (dose / b4)^b3)"`` are parsed with
:mod:`ast` into a restricted tree of arithmetic, powers, ``exp``, ``log`` and
``sqrt`` and evaluated on jets or on plain arrays.
"""

from __future__ import annotations

import ast
from typing import Callable, Mapping

import numpy as np

from ..exceptions import DomainError, ValidationError


class Jet:
    """Values with first and second derivatives.

    Parameters
    ----------
    val : (m,) ndarray
    grad : (d, m) ndarray
    hess : (d, d, m) ndarray
    """

    __slots__ = ("val", "grad", "hess")
    __array_ufunc__ = None

    def __init__(self, val, grad, hess):
        self.val = val
        self.grad = grad
        self.hess = hess

    @property
    def d(self) -> int:
        return self.grad.shape[0]

    @property
    def m(self) -> int:
        return self.val.shape[0]

    @classmethod
    def constant(cls, value, d: int, m: int) -> "Jet":
        v = np.broadcast_to(np.asarray(value, float), (m,)).copy()
        return cls(v, np.zeros((d, m)), np.zeros((d, d, m)))

    @classmethod
    def variables(cls, values, m: int = 1) -> list["Jet"]:
        """Independent variables seeded with unit gradients."""
        values = np.asarray(values, float)
        d = len(values)
        out = []
        for j, v in enumerate(values):
            g = np.zeros((d, m))
            g[j] = 1.0
            out.append(cls(np.full(m, v), g, np.zeros((d, d, m))))
        return out

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        m = np.size(other) if np.ndim(other) else self.m
        return Jet.constant(other, self.d, m)

    def broadcast(self, m: int) -> "Jet":
        if self.m == m:
            return self
        if self.m != 1:
            raise ValidationError(f"cannot broadcast {self.m} design points to {m}")
        return Jet(np.repeat(self.val, m), np.repeat(self.grad, m, axis=1), np.repeat(self.hess, m, axis=2))

    def _align(self, other):
        other = self._lift(other)
        m = max(self.m, other.m)
        return self.broadcast(m), other.broadcast(m)

    def unary(self, f0, f1, f2) -> "Jet":
        """Apply ``f`` given its value and first two derivatives at ``val``."""
        g = self.grad
        hess = f1 * self.hess + f2 * g[:, None, :] * g[None, :, :]
        return Jet(f0, f1 * g, hess)

    def __add__(self, other):
        a, b = self._align(other)
        return Jet(a.val + b.val, a.grad + b.grad, a.hess + b.hess)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.val, -self.grad, -self.hess)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            c = np.asarray(other, float)
            return Jet(self.val * c, self.grad * c, self.hess * c)
        a, b = self._align(other)
        cross = a.grad[:, None, :] * b.grad[None, :, :]
        return Jet(
            a.val * b.val,
            a.grad * b.val + a.val * b.grad,
            a.hess * b.val + b.hess * a.val + cross + np.swapaxes(cross, 0, 1),
        )

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        v = self.val
        if np.any(v == 0):
            raise DomainError(f"division by zero at design point(s) {np.nonzero(v == 0)[0].tolist()}")
        return self.unary(1 / v, -1 / v**2, 2 / v**3)

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, float))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, other):
        if isinstance(other, Jet):
            return _jet_pow(self, other)
        c = np.asarray(other, float)
        x = self.val
        zero = x == 0
        xs = np.where(zero, 1.0, x)
        if np.any((xs < 0) & (c != np.round(c))):
            raise DomainError(f"negative base with non-integer exponent at design point(s) {np.nonzero(xs < 0)[0].tolist()}")
        f0 = np.where(zero, np.where(c == 0, 1.0, 0.0), xs**c)
        f1 = np.where(zero, np.where(c == 1, 1.0, 0.0), c * xs ** (c - 1))
        f2 = np.where(zero, np.where(c == 2, 2.0, 0.0), c * (c - 1) * xs ** (c - 2))
        if np.any(zero & (c < 2) & np.any(self.grad != 0, axis=0)):
            raise DomainError("power not twice differentiable at a zero base with nonzero gradient")
        return self.unary(f0, f1, f2)

    def __rpow__(self, other):
        base = self._lift(other)
        return _jet_pow(base, self)

    def sum(self) -> "Jet":
        return Jet(self.val.sum(keepdims=True), self.grad.sum(axis=1, keepdims=True), self.hess.sum(axis=2, keepdims=True))


def _jet_pow(base: Jet, expo: Jet) -> Jet:
    base, expo = base._align(expo)
    # a zero base contributes zero value and zero derivatives (positive exponents)
    zero = base.val == 0
    if np.any(base.val < 0):
        raise DomainError(f"negative base in a power at design point(s) {np.nonzero(base.val < 0)[0].tolist()}")
    safe = Jet(np.where(zero, 1.0, base.val), base.grad, base.hess)
    out = exp(expo * log(safe))
    if zero.any():
        out.val[zero] = 0.0
        out.grad[:, zero] = 0.0
        out.hess[:, :, zero] = 0.0
    return out


def exp(x):
    if isinstance(x, Jet):
        v = np.exp(x.val)
        return x.unary(v, v, v)
    return np.exp(x)


def log(x):
    if isinstance(x, Jet):
        if np.any(x.val <= 0):
            raise DomainError(f"log of a nonpositive value at design point(s) {np.nonzero(x.val <= 0)[0].tolist()}")
        v = x.val
        return x.unary(np.log(v), 1 / v, -1 / v**2)
    return np.log(x)


def sqrt(x):
    if isinstance(x, Jet):
        if np.any(x.val <= 0):
            raise DomainError("sqrt needs positive arguments for differentiation")
        s = np.sqrt(x.val)
        return x.unary(s, 0.5 / s, -0.25 / (s * x.val))
    return np.sqrt(x)


FUNCTIONS: dict[str, Callable] = {"exp": exp, "log": log, "sqrt": sqrt}


class Expression:
    """A parsed arithmetic expression.

    Parameters
    ----------
    text : str
        Arithmetic with ``+ - * / ^ **``, unary minus, numbers, names and the
        functions ``exp``, ``log`` and ``sqrt``.
    allowed : iterable of str, optional
        Permitted free names; others are rejected at parse time.
    """

    _BINOPS = {
        ast.Add: lambda a, b: a + b,
        ast.Sub: lambda a, b: a - b,
        ast.Mult: lambda a, b: a * b,
        ast.Div: lambda a, b: a / b,
        ast.Pow: lambda a, b: a**b,
    }

    def __init__(self, text: str, allowed=None):
        self.text = text
        try:
            tree = ast.parse(text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ValidationError(f"cannot parse expression {text!r}: {exc.msg}") from None
        self.names: set[str] = set()
        self._check(tree.body)
        if allowed is not None:
            unknown = self.names - set(allowed)
            if unknown:
                raise ValidationError(f"unknown name(s) {sorted(unknown)} in expression {text!r}")
        self._code = tree.body

    def _check(self, node) -> None:
        if isinstance(node, ast.BinOp) and type(node.op) in self._BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            self._check(node.operand)
        elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in FUNCTIONS:
            if len(node.args) != 1 or node.keywords:
                raise ValidationError(f"{node.func.id} takes exactly one argument")
            self._check(node.args[0])
        elif isinstance(node, ast.Name):
            self.names.add(node.id)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            pass
        else:
            raise ValidationError(f"unsupported syntax {ast.dump(node)[:40]}... in {self.text!r}")

    def __call__(self, env: Mapping[str, object]):
        return self._eval(self._code, env)

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return self._BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call):
            return FUNCTIONS[node.func.id](self._eval(node.args[0], env))
        if isinstance(node, ast.Name):
            try:
                return env[node.id]
            except KeyError:
                raise ValidationError(f"no value for {node.id!r}") from None
        return float(node.value)


def fd_jet(func: Callable[[np.ndarray], np.ndarray], theta) -> Jet:
    """Central-difference substitute for a jet of ``func(theta)`` (vector valued).

    Gradient steps are ``eps^(1/3) max(1, |theta_j|)``; Hessian steps use
    ``eps^(1/4)``.
    """
    theta = np.asarray(theta, float)
    d = len(theta)
    f0 = np.atleast_1d(np.asarray(func(theta), float))
    m = len(f0)
    h1 = np.finfo(float).eps ** (1 / 3) * np.maximum(1.0, np.abs(theta))
    h2 = np.finfo(float).eps ** (1 / 4) * np.maximum(1.0, np.abs(theta))
    grad = np.empty((d, m))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h1[j]
        grad[j] = (func(theta + e) - func(theta - e)) / (2 * h1[j])
    hess = np.empty((d, d, m))
    for j in range(d):
        for k in range(j, d):
            ej = np.zeros(d)
            ek = np.zeros(d)
            ej[j] = h2[j]
            ek[k] = h2[k]
            val = (func(theta + ej + ek) - func(theta + ej - ek) - func(theta - ej + ek) + func(theta - ej - ek)) / (4 * h2[j] * h2[k])
            hess[j, k] = hess[k, j] = val
    return Jet(f0, grad, hess)


def derivative_engine(expression: str | Expression, params: list[str], covariate: str, *, method: str = "ad"):
    """Evaluator ``(x, theta) -> Jet`` for an expression in ``params`` and ``covariate``.

    Parameters
    ----------
    method : {"ad", "fd"}
        Forward-mode differentiation or the central-difference fallback.
    """
    expr = expression if isinstance(expression, Expression) else Expression(expression, set(params) | {covariate})

    def plain(x, theta):
        env = dict(zip(params, theta))
        env[covariate] = np.asarray(x, float)
        return np.broadcast_to(np.asarray(expr(env), float), np.shape(x)).astype(float)

    def evaluate(x, theta):
        x = np.asarray(x, float)
        if method == "fd":
            return fd_jet(lambda th: plain(x, th), theta)
        jets = Jet.variables(theta, 1)
        env = dict(zip(params, jets))
        env[covariate] = x
        out = expr(env)
        if not isinstance(out, Jet):
            out = Jet.constant(out, len(params), len(x))
        return out.broadcast(len(x))

    return evaluate
