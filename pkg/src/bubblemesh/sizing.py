"""Desired spacing fields d(x, y)."""
from __future__ import annotations

import ast
from dataclasses import dataclass, field

import numpy as np

from .geometry import ConfigurationError

KINDS = ("constant", "radial_ring", "graded", "custom_expression")

# constants of the ring-shaped field on the [-3, 3]^2 square
RING_INNER = 0.1
RING_RADIUS = 2.0
RING_SLOPE = 0.2


_FUNCS = {
    "sqrt": np.sqrt,
    "abs": np.abs,
    "min": np.minimum,
    "max": np.maximum,
    "pow": np.power,
}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def _compile_node(node):
    """Turn a whitelisted expression AST into a callable of (x, y)."""
    if isinstance(node, ast.Expression):
        return _compile_node(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        value = float(node.value)
        return lambda x, y: np.full_like(x, value)
    if isinstance(node, ast.Name):
        if node.id == "x":
            return lambda x, y: x
        if node.id == "y":
            return lambda x, y: y
        raise ConfigurationError(f"unknown variable {node.id!r} (only x, y)")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile_node(node.operand)
        if isinstance(node.op, ast.USub):
            return lambda x, y: -inner(x, y)
        return inner
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left, right = _compile_node(node.left), _compile_node(node.right)
        return lambda x, y: op(left(x, y), right(x, y))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        fn = _FUNCS[node.func.id]
        args = [_compile_node(a) for a in node.args]
        if node.keywords or len(args) != (1 if node.func.id in ("sqrt", "abs") else 2):
            raise ConfigurationError(f"bad arguments to {node.func.id}()")
        return lambda x, y: fn(*(a(x, y) for a in args))
    raise ConfigurationError(f"unsupported expression element: {ast.dump(node)}")


def parse_expression(text):
    try:
        tree = ast.parse(text.strip().replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"cannot parse size expression {text!r}: {exc.msg}") from None
    return _compile_node(tree)


@dataclass(frozen=True)
class SizeField:
    """Target spacing. ``params`` holds the kind-specific constants.

    * ``constant``: ``h``
    * ``radial_ring``: ``inner``, ``radius``, ``slope``
    * ``graded``: ``center``, ``radius``, ``power``, ``hmin`` -- spacing
      ``h * (r / radius) ** power`` clamped to ``[hmin, h]``
    * ``custom_expression``: ``expr``
    """

    kind: str = "constant"
    h: float = 0.1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown size kind {self.kind!r}")
        if self.kind == "custom_expression":
            object.__setattr__(self, "_fn", parse_expression(self.params["expr"]))
        elif self.kind in ("constant", "graded") and not self.h > 0:
            raise ConfigurationError(f"size h must be positive, got {self.h}")

    @property
    def is_constant(self):
        return self.kind == "constant"

    def __call__(self, p):
        return evaluate(self, p)

    def bounds(self, bbox, n=201):
        """(min, max) of the field over a sample grid of ``bbox``."""
        if self.is_constant:
            return self.h, self.h
        xs = np.linspace(bbox[0][0], bbox[1][0], n)
        ys = np.linspace(bbox[0][1], bbox[1][1], n)
        X, Y = np.meshgrid(xs, ys)
        v = evaluate(self, np.column_stack([X.ravel(), Y.ravel()]))
        lo, hi = float(v.min()), float(v.max())
        if self.kind == "graded":
            lo = min(lo, self.params["hmin"])
        return lo, hi


def constant(h):
    return SizeField("constant", float(h))


def radial_ring(inner=RING_INNER, radius=RING_RADIUS, slope=RING_SLOPE):
    return SizeField("radial_ring", float(inner), {"inner": inner, "radius": radius, "slope": slope})


def graded(h, center=(0.0, 0.0), radius=1.0, power=0.5, hmin=None):
    hmin = h * 1e-3 if hmin is None else hmin
    return SizeField(
        "graded",
        float(h),
        {"center": tuple(center), "radius": float(radius), "power": float(power), "hmin": float(hmin)},
    )


def expression(text):
    return SizeField("custom_expression", float("nan"), {"expr": text})


def evaluate(size: SizeField, p):
    """Desired spacing at ``p`` (a point or an ``(M, 2)`` array)."""
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    if size.kind == "constant":
        out = np.full(len(pts), size.h)
    elif size.kind == "radial_ring":
        pr = size.params
        r = np.hypot(x, y)
        out = np.where(r < pr["radius"], pr["inner"], pr["slope"] * np.abs(r - pr["radius"]) + pr["inner"])
    elif size.kind == "graded":
        pr = size.params
        r = np.hypot(x - pr["center"][0], y - pr["center"][1])
        out = np.clip(size.h * (r / pr["radius"]) ** pr["power"], pr["hmin"], size.h)
    else:
        out = np.asarray(size._fn(x, y), dtype=float) * np.ones(len(pts))
    return float(out[0]) if single else out


def pair_target(size: SizeField, p, q):
    """Target distance between two bubbles: mean of the endpoint sizes."""
    return 0.5 * (evaluate(size, p) + evaluate(size, q))


def parse_size(text):
    """CLI form: a number, ``radial-ring`` or ``expr:<expression>``."""
    text = str(text).strip()
    if text in ("radial-ring", "radial_ring"):
        return radial_ring()
    if text.startswith("expr:"):
        return expression(text[5:])
    try:
        return constant(float(text))
    except ValueError:
        raise ConfigurationError(f"cannot interpret size {text!r}") from None
