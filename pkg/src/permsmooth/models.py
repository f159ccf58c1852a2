"""Generative functions, grid signals, random permutations and noise.

Random streams are always passed in explicitly.  :func:`derive_rng` is the
single place where seeds are split: the stream for ``(master_seed, *keys)``
is ``numpy.random.default_rng(SeedSequence([master_seed, *keys]))``, so a
replicate's data depends only on its keys and never on scheduling order.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import DenseTensor, ModePermutations, ShapeError

__all__ = [
    "GenerativeFunction",
    "NoiseSpec",
    "DomainError",
    "builtin_model",
    "parse_expression",
    "evaluate_signal",
    "derive_rng",
    "sample_permutation",
    "sample_permutations",
    "add_gaussian_noise",
    "sample_bernoulli",
    "add_noise",
]

BERNOULLI_EPS = 1e-9

# stream ids used as the second key of derive_rng
STREAM_PERMUTATION = 0
STREAM_NOISE = 1
STREAM_HOLDOUT = 2
STREAM_METHOD = 3


class DomainError(ValueError):
    """A signal value falls outside the range a noise model accepts."""


@dataclass(frozen=True)
class GenerativeFunction:
    """Vectorised ``f: [0,1]^m -> R`` plus smoothness metadata.

    ``fn`` takes ``m`` broadcastable coordinate arrays.  ``alpha``, ``L`` and
    ``beta`` are informational; they only feed hyperparameter defaults.
    ``delta`` records the monotonicity tolerance and has no algorithmic use.
    """

    arity: int
    fn: Callable[..., np.ndarray] = field(repr=False)
    name: str = "custom"
    alpha: float = math.inf
    L: float = 1.0
    beta: float | None = None
    delta: float | None = None

    def __call__(self, x: Sequence[float]) -> float:
        if len(x) != self.arity:
            raise ShapeError(f"{self.name} takes {self.arity} coordinates, got {len(x)}")
        return float(self.fn(*[np.float64(v) for v in x]))


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "gaussian"
    sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "bernoulli", "none"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


def _max3(x, y, z):
    return np.maximum(np.maximum(x, y), z)


_SYMMETRIC = {
    1: ("xyz", lambda x, y, z: x * y * z, 1.0),
    2: ("(x+y+z)/3", lambda x, y, z: (x + y + z) / 3, 1.0),
    3: ("1/(1+exp(-3x^2+3y^2+3z^2))",
        lambda x, y, z: 1.0 / (1.0 + np.exp(-3 * x**2 + 3 * y**2 + 3 * z**2)), None),
    4: ("log(1+max(x,y,z))", lambda x, y, z: np.log(1 + _max3(x, y, z)), None),
    5: ("exp(-max(x,y,z)-sqrt(x)-sqrt(y)-sqrt(z))",
        lambda x, y, z: np.exp(-_max3(x, y, z) - np.sqrt(x) - np.sqrt(y) - np.sqrt(z)), None),
}

_NONSYMMETRIC = {
    1: ("xy+z", lambda x, y, z: x * y + z, 1.0),
    2: ("x^2+y+yz^2", lambda x, y, z: x**2 + y + y * z**2, None),
    3: ("x/(1+exp(-3(x^2+y^2+z^2)))",
        lambda x, y, z: x / (1.0 + np.exp(-3 * (x**2 + y**2 + z**2))), None),
    4: ("log(1+max(x,y,z)+x^2+yz)",
        lambda x, y, z: np.log(1 + _max3(x, y, z) + x**2 + y * z), None),
    5: ("exp(-x-sqrt(y)-z^3)", lambda x, y, z: np.exp(-x - np.sqrt(y) - z**3), None),
}


def builtin_model(model_id: int, symmetric: bool = True) -> GenerativeFunction:
    """One of the five order-3 simulation functions.

    All are infinitely smooth.  ``beta`` is 1 for the models whose averaged
    slice score is linear (Lipschitz-monotone) and ``None`` otherwise.
    """
    table = _SYMMETRIC if symmetric else _NONSYMMETRIC
    if model_id not in table:
        raise ValueError(f"unknown model id {model_id}; expected 1..5")
    label, fn, beta = table[model_id]
    kind = "sym" if symmetric else "nonsym"
    return GenerativeFunction(3, fn, name=f"{kind}{model_id}:{label}", beta=beta)


# --- expression strings -----------------------------------------------------

_FUNCS = {
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs,
    "max": lambda *a: _reduce(np.maximum, a), "min": lambda *a: _reduce(np.minimum, a),
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
    ast.Div: np.true_divide, ast.Pow: np.power,
}


def _reduce(op, args):
    out = args[0]
    for a in args[1:]:
        out = op(out, a)
    return out


def _default_variables(arity: int) -> list[str]:
    if arity <= 3:
        return ["x", "y", "z"][:arity]
    return [f"x{i}" for i in range(1, arity + 1)]


def parse_expression(expr: str, arity: int = 3, variables: Sequence[str] | None = None,
                     **meta) -> GenerativeFunction:
    """Compile an arithmetic expression into a :class:`GenerativeFunction`.

    Supports ``+ - * /``, powers (``**`` or ``^``), ``exp log sqrt abs max min``,
    numeric literals and the constants ``pi`` and ``e``.  Variables default to
    ``x, y, z`` (or ``x1 .. xm`` for ``arity > 3``).
    """
    variables = list(variables) if variables is not None else _default_variables(arity)
    if len(variables) != arity:
        raise ValueError("number of variables must equal arity")
    # "^" is power here; Python would parse it as xor with the wrong precedence
    tree = ast.parse(expr.strip().replace("^", "**"), mode="eval")

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            v = float(node.value)
            return lambda env: v
        if isinstance(node, ast.Name):
            if node.id in variables:
                pos = variables.index(node.id)
                return lambda env: env[pos]
            if node.id in _CONSTS:
                v = _CONSTS[node.id]
                return lambda env: v
            raise ValueError(f"unknown name {node.id!r} in expression")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op, lhs, rhs = _BINOPS[type(node.op)], build(node.left), build(node.right)
            return lambda env: op(lhs(env), rhs(env))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = build(node.operand)
            if isinstance(node.op, ast.USub):
                return lambda env: np.negative(inner(env))
            return inner
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and not node.keywords:
            fn, args = _FUNCS[node.func.id], [build(a) for a in node.args]
            if not args:
                raise ValueError(f"{node.func.id}() needs arguments")
            return lambda env: fn(*[a(env) for a in args])
        raise ValueError(f"unsupported syntax in expression: {ast.dump(node)}")

    compiled = build(tree)

    def fn(*coords):
        return np.asarray(compiled(coords), dtype=np.float64)

    return GenerativeFunction(arity, fn, name=meta.pop("name", expr), **meta)


# --- signals ------------------------------------------------------------------

def evaluate_signal(f: GenerativeFunction, dims: Sequence[int]) -> DenseTensor:
    """Grid discretisation ``Theta(i_1..i_m) = f(i_1/d_1, ..., i_m/d_m)``."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != f.arity:
        raise ShapeError(f"{f.name} has arity {f.arity} but dims {dims} have order {len(dims)}")
    grids = np.ix_(*[np.arange(1, d + 1) / d for d in dims])
    with np.errstate(all="ignore"):  # non-finite output is reported below
        values = np.broadcast_to(np.asarray(f.fn(*grids), dtype=np.float64), dims)
    if not np.all(np.isfinite(values)):
        raise DomainError(f"{f.name} is not finite on the {dims} grid")
    return DenseTensor(values)


def derive_rng(master_seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, keys)]))


def sample_permutation(d: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random bijection on ``[d]`` as a 1-based vector."""
    if d < 1:
        raise ValueError("d must be positive")
    return rng.permutation(d) + 1


def sample_permutations(dims: Sequence[int], rng: np.random.Generator,
                        symmetric: bool = False) -> ModePermutations:
    """Per-mode permutations, or one shared permutation when ``symmetric``."""
    dims = tuple(dims)
    if symmetric:
        if len(set(dims)) != 1:
            raise ShapeError("a shared permutation needs equal dimensions")
        return ModePermutations.shared(sample_permutation(dims[0], rng), len(dims))
    return ModePermutations(tuple(sample_permutation(d, rng) for d in dims))


def add_gaussian_noise(T: DenseTensor, spec: NoiseSpec, rng: np.random.Generator) -> DenseTensor:
    if spec.sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if spec.sigma == 0:
        return DenseTensor(T.values, T.mask)
    noise = rng.standard_normal(T.dims) * spec.sigma
    return DenseTensor(T.values + noise, T.mask)


def sample_bernoulli(T: DenseTensor, rng: np.random.Generator) -> DenseTensor:
    """Independent ``Bernoulli(T(w))`` entries; values within 1e-9 of [0,1] are clamped."""
    p = T.values
    bad = T.observed & ((p < -BERNOULLI_EPS) | (p > 1 + BERNOULLI_EPS))
    if bad.any():
        pos = tuple(int(i) for i in np.argwhere(bad)[0])
        idx = tuple(i + 1 for i in pos)
        raise DomainError(f"success probability {p[pos]!r} at index {idx} is outside [0, 1]")
    p = np.clip(p, 0.0, 1.0)
    draws = (rng.random(T.dims) < p).astype(np.float64)
    return DenseTensor(draws, T.mask)


def add_noise(T: DenseTensor, spec: NoiseSpec, rng: np.random.Generator) -> DenseTensor:
    if spec.kind == "gaussian":
        return add_gaussian_noise(T, spec, rng)
    if spec.kind == "bernoulli":
        return sample_bernoulli(T, rng)
    return DenseTensor(T.values, T.mask)
