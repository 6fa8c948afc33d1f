"""Run configuration (TOML) and the inline field-expression grammar.

Example::

    seed = 0
    kind = "A_mu"

    [grid]
    n = 12                      # or dims / spacing / origin
    snapshots = 0

    [material]
    lambda = 1.0                # number, expression string or {file = "..."}
    mu = "1 + 0.3*x1*x2"
    rho = 1.0

    [[measurement]]
    displacement = ["x1 + 0.3*x1^2", "0.8*x2", "1.2*x3"]

    [[measurement]]
    force = ["0", "sin(x1)", "0"]
    boundary = ["x1", "x2", "x3"]

Expressions use x1, x2, x3, t, numbers, + - * / ^, parentheses and the
functions sin, cos, exp.
"""
from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from elastostab.grid import Grid, GridError, ScalarField, VectorField

VARIABLES = ("x1", "x2", "x3", "t")
FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.UAdd: operator.pos, ast.USub: operator.neg}
COMMANDS = ("simulate", "diagnose", "kernel", "lopatinskii", "reconstruct", "svd")


class ConfigError(ValueError):
    """Malformed configuration or expression."""


class Expression:
    """Parsed arithmetic expression over x1, x2, x3 and t."""

    def __init__(self, text: str):
        if not isinstance(text, str):
            raise ConfigError(f"expression must be a string, got {text!r}")
        self.text = text
        src = text.replace("^", "**")
        try:
            tree = ast.parse(src, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            self._check(node.operand)
        elif isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            pass
        elif isinstance(node, ast.Name):
            if node.id not in VARIABLES:
                raise ConfigError(f"unknown identifier {node.id!r} in {self.text!r}")
        elif isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in FUNCTIONS and len(node.args) == 1 and not node.keywords:
            self._check(node.args[0])
        else:
            raise ConfigError(f"unsupported construct in {self.text!r}")

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNOPS[type(node.op)](self._eval(node.operand, env))
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        return FUNCTIONS[node.func.id](self._eval(node.args[0], env))

    def __call__(self, x1, x2, x3, t=0.0):
        env = {"x1": x1, "x2": x2, "x3": x3, "t": t}
        with np.errstate(all="raise"):
            try:
                out = self._eval(self._tree, env)
            except (FloatingPointError, ZeroDivisionError) as exc:
                raise ConfigError(f"evaluating {self.text!r} failed: {exc}") from None
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(x1, x2, x3, t).shape).copy()

    def sample(self, grid: Grid) -> np.ndarray:
        x1, x2, x3 = grid.mesh()
        if grid.is_dynamic:
            t = grid.times()[:, None, None, None]
            return self(x1[None], x2[None], x3[None], t)
        return self(x1, x2, x3)

    def __repr__(self):
        return f"Expression({self.text!r})"


def parse_expression(text) -> Expression:
    return Expression(str(text)) if isinstance(text, (int, float)) and not isinstance(text, bool) \
        else Expression(text)


@dataclass
class FieldSpec:
    """Scalar or vector field: constant(s), expression(s) or a field file."""

    constant: tuple | None = None
    expressions: tuple | None = None
    file: Path | None = None

    @classmethod
    def parse(cls, raw, ncomp: int, base: Path, what: str) -> FieldSpec:
        if isinstance(raw, dict):
            if set(raw) != {"file"}:
                raise ConfigError(f"{what}: a table must contain only 'file'")
            p = Path(raw["file"])
            p = p if p.is_absolute() else base / p
            if not p.exists():
                raise ConfigError(f"{what}: field file {p} does not exist")
            return cls(file=p)
        items = raw if isinstance(raw, list) else [raw]
        if len(items) != max(ncomp, 1):
            raise ConfigError(f"{what}: expected {max(ncomp, 1)} component(s), got {len(items)}")
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in items):
            return cls(constant=tuple(float(v) for v in items))
        return cls(expressions=tuple(parse_expression(v) for v in items))

    def realize(self, grid: Grid, ncomp: int):
        from elastostab.io import read_field

        if self.file is not None:
            f = read_field(self.file)
            if not f.grid.same_as(grid):
                raise ConfigError(f"field file {self.file} is on a different grid")
            return f
        shape = ((grid.snapshots,) if grid.is_dynamic else ()) + grid.dims
        if self.constant is not None:
            comps = [np.full(shape, c) for c in self.constant]
        else:
            comps = [e.sample(grid) for e in self.expressions]
        if ncomp == 0:
            return ScalarField(grid, comps[0])
        axis = 1 if grid.is_dynamic else 0
        return VectorField(grid, np.stack(comps, axis=axis))


@dataclass
class MeasurementSpec:
    displacement: FieldSpec | None = None
    force: FieldSpec | None = None
    boundary: FieldSpec | None = None


@dataclass
class RunConfig:
    grid: Grid
    material: dict
    measurements: list
    kind: str = "A_mu"
    seed: int = 0
    out: Path | None = None
    tolerances: dict = field(default_factory=dict)
    sections: dict = field(default_factory=dict)
    base: Path = Path(".")

    def tol(self, name: str, default: float) -> float:
        return float(self.tolerances.get(name, default))

    def section(self, name: str) -> dict:
        return dict(self.sections.get(name, {}))


def _grid_from(raw: dict) -> Grid:
    try:
        snaps = int(raw.get("snapshots", 0))
        dt = raw.get("dt")
        if "n" in raw:
            n = int(raw["n"])
            g = Grid.unit_cube(n, snaps, dt)
            if "origin" in raw or "spacing" in raw:
                g = Grid(g.dims, tuple(raw.get("spacing", g.spacing)), tuple(raw.get("origin", g.origin)),
                         snaps, dt)
            return g
        return Grid(tuple(int(d) for d in raw["dims"]), tuple(float(h) for h in raw["spacing"]),
                    tuple(float(o) for o in raw.get("origin", (0.0, 0.0, 0.0))), snaps, dt)
    except KeyError as exc:
        raise ConfigError(f"[grid] is missing {exc.args[0]!r}") from None
    except (TypeError, ValueError, GridError) as exc:
        raise ConfigError(f"[grid]: {exc}") from None


def load_config(path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw, path.parent, overrides)


def parse_config(raw: dict, base: Path = Path("."), overrides: dict | None = None) -> RunConfig:
    raw = dict(raw)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {"grid", "material", "measurement", "kind", "seed", "out", "tolerances"} | set(COMMANDS)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {', '.join(sorted(unknown))}")
    if "grid" not in raw:
        raise ConfigError("missing [grid] section")
    g = _grid_from(raw["grid"])
    mat_raw = raw.get("material", {})
    bad = set(mat_raw) - {"lambda", "mu", "rho"}
    if bad:
        raise ConfigError(f"[material]: unknown keys {', '.join(sorted(bad))}")
    defaults = {"lambda": 0.0, "mu": 1.0, "rho": 1.0}
    material = {k: FieldSpec.parse(mat_raw.get(k, v), 0, base, f"material.{k}") for k, v in defaults.items()}
    meas = []
    for i, m in enumerate(raw.get("measurement", [])):
        bad = set(m) - {"displacement", "force", "boundary"}
        if bad:
            raise ConfigError(f"measurement {i + 1}: unknown keys {', '.join(sorted(bad))}")
        if ("displacement" in m) == ("force" in m):
            raise ConfigError(f"measurement {i + 1}: give exactly one of 'displacement' or 'force'")
        spec = MeasurementSpec(
            displacement=FieldSpec.parse(m["displacement"], 3, base, f"measurement {i + 1}")
            if "displacement" in m else None,
            force=FieldSpec.parse(m["force"], 3, base, f"measurement {i + 1}") if "force" in m else None,
            boundary=FieldSpec.parse(m["boundary"], 3, base, f"measurement {i + 1}") if "boundary" in m else None,
        )
        meas.append(spec)
    try:
        seed = int(raw.get("seed", 0))
    except (TypeError, ValueError):
        raise ConfigError("seed must be an integer") from None
    tols = raw.get("tolerances", {})
    if not isinstance(tols, dict) or not all(isinstance(v, (int, float)) for v in tols.values()):
        raise ConfigError("[tolerances] must map names to numbers")
    out = raw.get("out")
    return RunConfig(grid=g, material=material, measurements=meas, kind=str(raw.get("kind", "A_mu")),
                     seed=seed, out=Path(out) if out else None, tolerances=dict(tols),
                     sections={c: raw.get(c, {}) for c in COMMANDS}, base=base)
