"""Plain-text problem files and the coefficient expression grammar.

A problem file holds ``key = value`` lines; ``#`` starts a comment::

    dim = 1
    lambda = 1
    x0 = 1
    horizon = 2
    drift_u = -0.12*x
    drift_v = -x^3
    diffusion = 0.1*x
    jump = -0.1*x

Coefficients are expressions in the state variable ``x`` built from numbers,
``+ - * /``, powers (``^``, ``**`` or ``pow(a, b)``) and parentheses.  They
act componentwise.  With ``wiener_dim = 1`` the diffusion is a single
column; with ``wiener_dim = dim`` it is diagonal.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import JumpDiffusionProblem

KEYS = ("dim", "wiener_dim", "lambda", "x0", "horizon",
        "drift", "drift_u", "drift_v", "diffusion", "jump")
REQUIRED = ("lambda", "x0", "horizon", "diffusion", "jump")


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def _check(node):
    if isinstance(node, ast.Expression):
        return _check(node.body)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check(node.left)
        _check(node.right)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        _check(node.operand)
    elif isinstance(node, ast.Constant) and type(node.value) in (int, float):
        pass
    elif isinstance(node, ast.Name) and node.id == "x":
        pass
    elif (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
          and node.func.id == "pow" and len(node.args) == 2 and not node.keywords):
        _check(node.args[0])
        _check(node.args[1])
    else:
        raise ValueError(f"unsupported syntax: {ast.unparse(node)!r}")


def _normalise(node):
    """Rewrite ``pow(a, b)`` as ``a ** b``."""
    if isinstance(node, ast.Call):
        return ast.BinOp(_normalise(node.args[0]), ast.Pow(), _normalise(node.args[1]))
    if isinstance(node, ast.BinOp):
        return ast.BinOp(_normalise(node.left), node.op, _normalise(node.right))
    if isinstance(node, ast.UnaryOp):
        return ast.UnaryOp(node.op, _normalise(node.operand))
    return node


def _eval(node, x):
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, x), _eval(node.right, x))
    if isinstance(node, ast.UnaryOp):
        v = _eval(node.operand, x)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Constant):
        return float(node.value)
    return x


def _has_x(node) -> bool:
    return any(isinstance(n, ast.Name) for n in ast.walk(node))


def _const(v: float):
    return ast.Constant(float(v))


def _diff(node):
    """Derivative with respect to x of a (normalised) expression tree."""
    if not _has_x(node):
        return _const(0.0)
    if isinstance(node, ast.Name):
        return _const(1.0)
    if isinstance(node, ast.UnaryOp):
        return ast.UnaryOp(node.op, _diff(node.operand))
    u, v, op = node.left, node.right, type(node.op)
    if op in (ast.Add, ast.Sub):
        return ast.BinOp(_diff(u), node.op, _diff(v))
    if op is ast.Mult:
        return ast.BinOp(ast.BinOp(_diff(u), ast.Mult(), v), ast.Add(),
                         ast.BinOp(u, ast.Mult(), _diff(v)))
    if op is ast.Div:
        num = ast.BinOp(ast.BinOp(_diff(u), ast.Mult(), v), ast.Sub(),
                        ast.BinOp(u, ast.Mult(), _diff(v)))
        return ast.BinOp(num, ast.Div(), ast.BinOp(v, ast.Pow(), _const(2.0)))
    # power with constant exponent only; x-dependent exponents fall back to differences
    if _has_x(v):
        raise NotImplementedError("exponent depends on x")
    return ast.BinOp(ast.BinOp(v, ast.Mult(), ast.BinOp(u, ast.Pow(), ast.BinOp(v, ast.Sub(), _const(1.0)))),
                     ast.Mult(), _diff(u))


class Expression:
    """A compiled componentwise coefficient expression in ``x``."""

    def __init__(self, text: str):
        self.text = text.strip()
        try:
            tree = ast.parse(self.text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ValueError(f"cannot parse {self.text!r}: {exc.msg}") from None
        _check(tree)
        self._tree = _normalise(tree.body)
        try:
            self._deriv = _diff(self._tree)
        except NotImplementedError:
            self._deriv = None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return _eval(self._tree, x) + np.zeros_like(x)

    def derivative(self, x):
        if self._deriv is None:
            raise NotImplementedError(f"no symbolic derivative for {self.text!r}")
        x = np.asarray(x, dtype=float)
        return _eval(self._deriv, x) + np.zeros_like(x)

    @property
    def has_derivative(self) -> bool:
        return self._deriv is not None

    def __eq__(self, other):
        return isinstance(other, Expression) and self.text == other.text

    def __repr__(self):
        return f"Expression({self.text!r})"


@dataclass(frozen=True)
class ProblemConfig:
    lam: float
    x0: tuple
    horizon: float
    diffusion: str
    jump: str
    drift: Optional[str] = None
    drift_u: Optional[str] = None
    drift_v: Optional[str] = None
    dim: int = 1
    wiener_dim: int = 1
    name: str = field(default="", compare=False)

    def to_problem(self) -> JumpDiffusionProblem:
        exprs = {k: Expression(getattr(self, k)) if getattr(self, k) is not None else None
                 for k in ("drift", "drift_u", "drift_v", "diffusion", "jump")}
        if self.wiener_dim == 1:
            g_expr = exprs["diffusion"]

            def diffusion(x):
                return g_expr(x)[..., None]
        elif self.wiener_dim == self.dim:
            g_expr = exprs["diffusion"]

            def diffusion(x):
                gx = g_expr(x)
                return gx[..., None] * np.eye(self.dim)
        else:
            raise ConfigError(f"wiener_dim must be 1 or dim={self.dim}")

        whole = exprs["drift"]
        parts = [e for e in (exprs["drift_u"], exprs["drift_v"]) if e is not None]
        deriv_src = [whole] if whole is not None else parts
        jacobian = None
        if all(e.has_derivative for e in deriv_src):
            def jacobian(x):
                diag = sum(e.derivative(x) for e in deriv_src)
                return diag[..., None] * np.eye(self.dim)

        return JumpDiffusionProblem(
            diffusion=diffusion,
            jump=exprs["jump"],
            lam=self.lam,
            x0=np.array(self.x0, dtype=float),
            horizon=self.horizon,
            drift=whole,
            drift_u=exprs["drift_u"],
            drift_v=exprs["drift_v"],
            wiener_dim=self.wiener_dim,
            dim=self.dim,
            drift_jacobian=jacobian,
            name=self.name,
        )

    def dump(self) -> str:
        lines = [f"dim = {self.dim}", f"wiener_dim = {self.wiener_dim}",
                 f"lambda = {self.lam!r}", "x0 = " + ", ".join(repr(v) for v in self.x0),
                 f"horizon = {self.horizon!r}"]
        for key in ("drift", "drift_u", "drift_v", "diffusion", "jump"):
            value = getattr(self, key)
            if value is not None:
                lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def _number(text: str, key: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {text!r}", line) from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: must be finite", line)
    return value


def _integer(text: str, key: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: not an integer: {text!r}", line) from None


def parse_config(text: str, name: str = "") -> ProblemConfig:
    values: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        if not value:
            raise ConfigError(f"empty value for {key!r}", lineno)
        values[key] = (value, lineno)

    for key in REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    if "drift" not in values and not ("drift_u" in values and "drift_v" in values):
        raise ConfigError("need 'drift' or both 'drift_u' and 'drift_v'")
    if ("drift_u" in values) != ("drift_v" in values):
        key = "drift_u" if "drift_u" in values else "drift_v"
        raise ConfigError("drift_u and drift_v must be given together", values[key][1])

    kw = {"name": name}
    kw["lam"] = _number(values["lambda"][0], "lambda", values["lambda"][1])
    kw["horizon"] = _number(values["horizon"][0], "horizon", values["horizon"][1])
    x0_text, x0_line = values["x0"]
    kw["x0"] = tuple(_number(v.strip(), "x0", x0_line) for v in x0_text.split(","))
    if "dim" in values:
        kw["dim"] = _integer(values["dim"][0], "dim", values["dim"][1])
    else:
        kw["dim"] = len(kw["x0"])
    if "wiener_dim" in values:
        kw["wiener_dim"] = _integer(values["wiener_dim"][0], "wiener_dim", values["wiener_dim"][1])
    if len(kw["x0"]) == 1 and kw["dim"] > 1:
        kw["x0"] = kw["x0"] * kw["dim"]
    if len(kw["x0"]) != kw["dim"]:
        raise ConfigError(f"x0 has {len(kw['x0'])} entries but dim = {kw['dim']}", x0_line)
    for key in ("drift", "drift_u", "drift_v", "diffusion", "jump"):
        if key in values:
            text_, lineno = values[key]
            try:
                Expression(text_)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}", lineno) from None
            kw[key] = text_.strip()
    cfg = ProblemConfig(**kw)
    try:
        cfg.to_problem()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path) -> ProblemConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), name=str(path))
