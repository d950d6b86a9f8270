"""Vector fields: construction, norm estimation, and mean-drift audits.

A :class:`VectorField` bundles an evaluation map with declared bounds and an
optional Jacobian.  Constructors that guarantee incompressibility by design
(stream functions in 2-D, vector potentials in 3-D) live here, together with
the sampled estimators used to audit fields the user supplies directly:
divergence residuals, sup/Lipschitz lower bounds, and box-averaged drift.

Evaluation convention: ``field.eval`` accepts a single point of shape (d,)
or a batch of shape (n, d) and returns the matching shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .errors import FieldConstructionError
from .sampling import Box, halton, spawn_rngs

__all__ = [
    "VectorField",
    "FieldSpec",
    "DriftReport",
    "ScalarField2D",
    "from_stream_function_2d",
    "from_vector_potential_3d",
    "grid_field",
    "expression_field",
    "builtin_field",
    "build_field",
    "estimate_divergence",
    "estimate_norms",
    "mean_drift",
    "check_vmd",
]


@dataclass(frozen=True)
class VectorField:
    """Evaluation map R^d -> R^d with declared sup and Lipschitz bounds.

    ``sup_bound`` and ``lip_bound`` are trusted upper bounds on the working
    region; sampled estimates must never exceed them.  ``descriptor`` is a
    JSON-serializable recipe for rebuilding the field, present whenever the
    field was produced by one of the public constructors.
    """

    dim: int
    func: Callable[[np.ndarray], np.ndarray]
    sup_bound: float
    lip_bound: float
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    provenance: str = "analytic"
    descriptor: Optional[dict] = None
    domain_box: Optional[Box] = None

    def eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.func(x)

    __call__ = eval

    def jac(self, x) -> np.ndarray:
        """Jacobian at x: analytic when available, else central differences."""
        x = np.asarray(x, dtype=float)
        if self.jacobian is not None:
            return self.jacobian(x)
        return self.fd_jacobian(x)

    def fd_jacobian(self, x, h: float = 1e-6) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        cols = []
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = h
            cols.append((self.eval(x + e) - self.eval(x - e)) / (2.0 * h))
        return np.stack(cols, axis=-1)


# ---------------------------------------------------------------------------
# divergence-free constructors


@dataclass(frozen=True)
class ScalarField2D:
    """Scalar function on R^2 with a gradient (and optional Hessian)."""

    value: Callable
    grad: Optional[Callable] = None
    hess: Optional[Callable] = None


def from_stream_function_2d(h: ScalarField2D, sup_bound=None, lip_bound=None,
                            region: Optional[Box] = None, descriptor=None) -> VectorField:
    """Field V = (dh/dy, -dh/dx); incompressible by construction.

    The gradient must be supplied; without it the constructor is rejected.
    Declared bounds default to sampled estimates inflated by 10%.
    """
    if h.grad is None:
        raise FieldConstructionError("stream-function field needs an explicit gradient")

    def func(x):
        x = np.asarray(x, dtype=float)
        g = np.asarray(h.grad(x))
        out = np.empty_like(g)
        out[..., 0] = g[..., 1]
        out[..., 1] = -g[..., 0]
        return out

    jacobian = None
    if h.hess is not None:
        def jacobian(x):
            H = np.asarray(h.hess(np.asarray(x, dtype=float)))
            J = np.empty_like(H)
            J[..., 0, 0] = H[..., 1, 0]
            J[..., 0, 1] = H[..., 1, 1]
            J[..., 1, 0] = -H[..., 0, 0]
            J[..., 1, 1] = -H[..., 0, 1]
            return J

    vf = VectorField(2, func, np.inf, np.inf, jacobian, "stream2d", descriptor, region)
    return _with_default_bounds(vf, sup_bound, lip_bound, region)


def from_vector_potential_3d(potential: Callable, potential_jacobian: Callable,
                             sup_bound=None, lip_bound=None,
                             region: Optional[Box] = None, descriptor=None) -> VectorField:
    """Field V = curl A from a differentiable vector potential A on R^3."""
    if potential_jacobian is None:
        raise FieldConstructionError("vector-potential field needs the Jacobian of A")

    def func(x):
        J = np.asarray(potential_jacobian(np.asarray(x, dtype=float)))
        out = np.empty(J.shape[:-2] + (3,))
        out[..., 0] = J[..., 2, 1] - J[..., 1, 2]
        out[..., 1] = J[..., 0, 2] - J[..., 2, 0]
        out[..., 2] = J[..., 1, 0] - J[..., 0, 1]
        return out

    vf = VectorField(3, func, np.inf, np.inf, None, "potential3d", descriptor, region)
    return _with_default_bounds(vf, sup_bound, lip_bound, region)


def _with_default_bounds(vf: VectorField, sup_bound, lip_bound, region) -> VectorField:
    if sup_bound is None or lip_bound is None:
        box = region or Box((-1.0,) * vf.dim, (1.0,) * vf.dim)
        sup_est, lip_est = estimate_norms(vf, box, 4096, seed=0)
        sup_bound = sup_bound if sup_bound is not None else 1.1 * sup_est + 1e-12
        lip_bound = lip_bound if lip_bound is not None else 1.1 * lip_est + 1e-12
    return VectorField(vf.dim, vf.func, float(sup_bound), float(lip_bound),
                       vf.jacobian, vf.provenance, vf.descriptor, region)


# ---------------------------------------------------------------------------
# grid-sampled fields


def grid_field(axes, values, sup_bound=None, lip_bound=None, descriptor=None,
               provenance: str = "sampled-grid") -> VectorField:
    """Multilinear interpolation of node values, constant outside the box.

    ``axes`` is a tuple of d strictly increasing 1-D arrays; ``values`` has
    shape (n_1, ..., n_d, d).
    """
    axes = tuple(np.asarray(a, dtype=float) for a in axes)
    values = np.asarray(values, dtype=float)
    d = len(axes)
    if values.shape != tuple(len(a) for a in axes) + (d,):
        raise FieldConstructionError("grid shape does not match axes")
    for a in axes:
        if len(a) < 2 or np.any(np.diff(a) <= 0):
            raise FieldConstructionError("grid axes must be strictly increasing")

    # uniform axes admit direct index arithmetic, which the stepper's
    # one-point-at-a-time evaluation pattern makes worth special-casing
    steps = [np.diff(a) for a in axes]
    uniform = all(np.allclose(s, s[0], rtol=1e-12, atol=0.0) for s in steps)
    lo0 = np.array([a[0] for a in axes])
    dx0 = np.array([s[0] for s in steps])
    sizes = [len(a) for a in axes]

    def _locate(pts):
        idx = []
        frac = []
        for k, a in enumerate(axes):
            if uniform:
                f = (pts[:, k] - lo0[k]) / dx0[k]
                j = np.floor(f).astype(np.intp)
                np.clip(j, 0, sizes[k] - 2, out=j)
                t = f - j
            else:
                j = np.clip(np.searchsorted(a, pts[:, k], side="right") - 1,
                            0, sizes[k] - 2)
                t = (pts[:, k] - a[j]) / (a[j + 1] - a[j])
            idx.append(j)
            frac.append(np.clip(t, 0.0, 1.0))
        return idx, frac

    def _single2d(x):
        # same index arithmetic and corner-sum association as the batch path,
        # so single and batched evaluations agree bitwise
        fx = (x[0] - lo0[0]) / dx0[0]
        fy = (x[1] - lo0[1]) / dx0[1]
        i = min(max(int(np.floor(fx)), 0), sizes[0] - 2)
        j = min(max(int(np.floor(fy)), 0), sizes[1] - 2)
        tx = min(max(fx - i, 0.0), 1.0)
        ty = min(max(fy - j, 0.0), 1.0)
        v = values
        out = ((1.0 - tx) * (1.0 - ty)) * v[i, j]
        out = out + (tx * (1.0 - ty)) * v[i + 1, j]
        out = out + ((1.0 - tx) * ty) * v[i, j + 1]
        out = out + (tx * ty) * v[i + 1, j + 1]
        return out

    def func(x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single and uniform and d == 2 and fx_inrange(x):
            return _single2d(x)
        pts = np.atleast_2d(x)
        idx, frac = _locate(pts)
        out = np.zeros((len(pts), d))
        for corner in range(1 << d):
            w = np.ones(len(pts))
            loc = []
            for k in range(d):
                if corner >> k & 1:
                    w = w * frac[k]
                    loc.append(idx[k] + 1)
                else:
                    w = w * (1.0 - frac[k])
                    loc.append(idx[k])
            out += w[:, None] * values[tuple(loc)]
        return out[0] if single else out

    def fx_inrange(x):
        return np.isfinite(x).all()

    box = Box(tuple(a[0] for a in axes), tuple(a[-1] for a in axes))
    if sup_bound is None:
        sup_bound = float(np.max(np.linalg.norm(values, axis=-1)))
    if lip_bound is None:
        lip = 0.0
        for k, a in enumerate(axes):
            shp = [1] * d
            shp[k] = len(a) - 1
            da = np.diff(a).reshape(shp)
            step = np.max(np.linalg.norm(np.diff(values, axis=k), axis=-1) / da)
            lip = max(lip, float(step))
        lip_bound = d * lip
    return VectorField(d, func, float(sup_bound), float(lip_bound), None,
                       provenance, descriptor, box)


# ---------------------------------------------------------------------------
# expression fields: small arithmetic grammar (+ - * / ^ sin cos exp)

_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}


class _Parser:
    def __init__(self, text: str, names):
        self.tokens = self._lex(text)
        self.pos = 0
        self.names = names

    @staticmethod
    def _lex(text: str):
        tokens = []
        i = 0
        while i < len(text):
            c = text[i]
            if c.isspace():
                i += 1
            elif c in "+-*/^()":
                tokens.append(c)
                i += 1
            elif c.isdigit() or c == ".":
                j = i
                while j < len(text) and (text[j].isdigit() or text[j] in ".eE" or
                                         (text[j] in "+-" and text[j - 1] in "eE")):
                    j += 1
                tokens.append(("num", float(text[i:j])))
                i = j
            elif c.isalpha() or c == "_":
                j = i
                while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                tokens.append(("name", text[i:j]))
                i = j
            else:
                raise FieldConstructionError(f"bad character {c!r} in expression")
        return tokens

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.peek() is not None:
            raise FieldConstructionError(f"trailing input near token {self.peek()!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in ("+", "-"):
            op = self.take()
            rhs = self.term()
            node = (op, node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.peek() in ("*", "/"):
            op = self.take()
            rhs = self.factor()
            node = (op, node, rhs)
        return node

    def factor(self):
        node = self.unary()
        if self.peek() == "^":
            self.take()
            return ("^", node, self.factor())
        return node

    def unary(self):
        if self.peek() == "-":
            self.take()
            return ("neg", self.unary())
        if self.peek() == "+":
            self.take()
            return self.unary()
        return self.atom()

    def atom(self):
        tok = self.take()
        if tok == "(":
            node = self.expr()
            if self.take() != ")":
                raise FieldConstructionError("unbalanced parenthesis")
            return node
        if isinstance(tok, tuple) and tok[0] == "num":
            return ("num", tok[1])
        if isinstance(tok, tuple) and tok[0] == "name":
            name = tok[1]
            if name in _FUNCS:
                if self.take() != "(":
                    raise FieldConstructionError(f"function {name} needs parentheses")
                arg = self.expr()
                if self.take() != ")":
                    raise FieldConstructionError("unbalanced parenthesis")
                return ("call", name, arg)
            if name == "pi":
                return ("num", float(np.pi))
            if name in self.names:
                return ("var", self.names.index(name))
            raise FieldConstructionError(f"unknown name {name!r}")
        raise FieldConstructionError(f"unexpected token {tok!r}")


def _eval_node(node, coords):
    op = node[0]
    if op == "num":
        return node[1]
    if op == "var":
        return coords[node[1]]
    if op == "neg":
        return -_eval_node(node[1], coords)
    if op == "call":
        return _FUNCS[node[1]](_eval_node(node[2], coords))
    a = _eval_node(node[1], coords)
    b = _eval_node(node[2], coords)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    if op == "^":
        return a ** b
    raise AssertionError(op)


def expression_field(exprs, sup_bound=None, lip_bound=None,
                     region: Optional[Box] = None) -> VectorField:
    """Field whose components are arithmetic expressions in x, y, z (or x1..xd)."""
    d = len(exprs)
    names = ["x", "y", "z"][:d] if d <= 3 else [f"x{i + 1}" for i in range(d)]
    asts = [_Parser(e, names).parse() for e in exprs]

    def func(x):
        x = np.asarray(x, dtype=float)
        coords = [x[..., i] for i in range(d)]
        comps = [np.broadcast_to(np.asarray(_eval_node(a, coords), dtype=float),
                                 x[..., 0].shape) for a in asts]
        return np.stack(comps, axis=-1)

    desc = {"kind": "expression", "exprs": list(exprs)}
    vf = VectorField(d, func, np.inf, np.inf, None, "analytic", desc, region)
    return _with_default_bounds(vf, sup_bound, lip_bound, region)


# ---------------------------------------------------------------------------
# builtin catalog


def _cellular(params):
    amp = float(params.get("amplitude", 1.0))

    def func(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        out[..., 0] = amp * np.sin(x[..., 0]) * np.cos(x[..., 1])
        out[..., 1] = -amp * np.cos(x[..., 0]) * np.sin(x[..., 1])
        return out

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        a, b = x[..., 0], x[..., 1]
        J = np.empty(x.shape[:-1] + (2, 2))
        J[..., 0, 0] = amp * np.cos(a) * np.cos(b)
        J[..., 0, 1] = -amp * np.sin(a) * np.sin(b)
        J[..., 1, 0] = amp * np.sin(a) * np.sin(b)
        J[..., 1, 1] = -amp * np.cos(a) * np.cos(b)
        return J

    return VectorField(2, func, abs(amp), abs(amp), jacobian, "analytic",
                       {"kind": "builtin", "name": "cellular", "params": {"amplitude": amp}})


def cellular_stream(x, amplitude: float = 1.0):
    """Stream function of the cellular flow; a first integral of its orbits."""
    x = np.asarray(x, dtype=float)
    return amplitude * np.sin(x[..., 0]) * np.sin(x[..., 1])


def _rotation(params):
    radius = float(params.get("box_radius", 2.0))

    def func(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        out[..., 0] = x[..., 1]
        out[..., 1] = -x[..., 0]
        return out

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        J = np.zeros(x.shape[:-1] + (2, 2))
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = -1.0
        return J

    box = Box((-radius, -radius), (radius, radius))
    return VectorField(2, func, radius * np.sqrt(2.0), 1.0, jacobian, "analytic",
                       {"kind": "builtin", "name": "rotation",
                        "params": {"box_radius": radius}}, box)


def _constant(params):
    c = np.asarray(params["c"], dtype=float)
    d = c.size

    def func(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(c, x.shape).copy()

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (d, d))

    return VectorField(d, func, float(np.linalg.norm(c)), 0.0, jacobian, "analytic",
                       {"kind": "builtin", "name": "constant", "params": {"c": list(map(float, c))}})


def _shear(params):
    def func(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0] = np.sin(x[..., 1])
        return out

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        J = np.zeros(x.shape[:-1] + (2, 2))
        J[..., 0, 1] = np.cos(x[..., 1])
        return J

    return VectorField(2, func, 1.0, 1.0, jacobian, "analytic",
                       {"kind": "builtin", "name": "shear", "params": {}})


def _winding(params):
    c = np.asarray(params.get("velocity", [1.0, np.sqrt(2.0)]), dtype=float)
    f = _constant({"c": c})
    desc = {"kind": "builtin", "name": "winding", "params": {"velocity": list(map(float, c))}}
    return VectorField(f.dim, f.func, f.sup_bound, f.lip_bound, f.jacobian,
                       "analytic", desc)


def _abc(params):
    a = float(params.get("a", 1.0))
    b = float(params.get("b", 1.0))
    c = float(params.get("c", 1.0))

    def func(x):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        out[..., 0] = a * np.sin(x[..., 2]) + c * np.cos(x[..., 1])
        out[..., 1] = b * np.sin(x[..., 0]) + a * np.cos(x[..., 2])
        out[..., 2] = c * np.sin(x[..., 1]) + b * np.cos(x[..., 0])
        return out

    sup = float(np.sqrt((abs(a) + abs(c)) ** 2 + (abs(a) + abs(b)) ** 2 + (abs(b) + abs(c)) ** 2))
    lip = float(np.sqrt(3.0) * max(abs(a), abs(b), abs(c)))
    return VectorField(3, func, sup, lip, None, "analytic",
                       {"kind": "builtin", "name": "abc", "params": {"a": a, "b": b, "c": c}})


def _zero(params):
    d = int(params.get("dim", 2))

    def func(x):
        x = np.asarray(x, dtype=float)
        return np.zeros_like(x)

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (d, d))

    return VectorField(d, func, 0.0, 0.0, jacobian, "analytic",
                       {"kind": "builtin", "name": "zero", "params": {"dim": d}})


_BUILTINS = {
    "cellular": _cellular,
    "rotation": _rotation,
    "constant": _constant,
    "shear": _shear,
    "winding": _winding,
    "abc": _abc,
    "zero": _zero,
}


def builtin_field(name: str, **params) -> VectorField:
    if name not in _BUILTINS:
        raise FieldConstructionError(
            f"unknown builtin field {name!r}; have {sorted(_BUILTINS)}")
    return _BUILTINS[name](params)


@dataclass(frozen=True)
class FieldSpec:
    """Declarative field recipe: builtin name, expression list, or grid data."""

    kind: str
    params: dict = dc_field(default_factory=dict)
    domain_box: Optional[Box] = None

    @staticmethod
    def from_dict(d: dict) -> "FieldSpec":
        kind = d.get("kind")
        if kind not in ("builtin", "expression", "grid"):
            raise FieldConstructionError(f"unknown field kind {kind!r}")
        box = None
        if "domain_box" in d and d["domain_box"] is not None:
            bb = d["domain_box"]
            box = Box(tuple(bb["lo"]), tuple(bb["hi"]))
        params = {k: v for k, v in d.items() if k not in ("kind", "domain_box")}
        return FieldSpec(kind, params, box)


def build_field(spec: FieldSpec) -> VectorField:
    if spec.kind == "builtin":
        name = spec.params.get("name")
        extra = {k: v for k, v in spec.params.items() if k != "name"}
        f = builtin_field(name, **extra)
    elif spec.kind == "expression":
        f = expression_field(spec.params["exprs"], region=spec.domain_box)
    elif spec.kind == "grid":
        f = grid_field(tuple(np.asarray(a, dtype=float) for a in spec.params["axes"]),
                       np.asarray(spec.params["values"], dtype=float))
    else:
        raise FieldConstructionError(f"unknown field kind {spec.kind!r}")
    if spec.domain_box is not None and f.domain_box is None:
        f = VectorField(f.dim, f.func, f.sup_bound, f.lip_bound, f.jacobian,
                        f.provenance, f.descriptor, spec.domain_box)
    return f


# ---------------------------------------------------------------------------
# sampled audits


def estimate_divergence(V: VectorField, x, h: float) -> float:
    """Central-difference divergence at x; second order in h for C^2 fields."""
    if h <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    div = 0.0
    for i in range(V.dim):
        e = np.zeros(V.dim)
        e[i] = h
        div += (V.eval(x + e)[i] - V.eval(x - e)[i]) / (2.0 * h)
    return float(div)


def estimate_norms(V: VectorField, region: Box, n_samples: int, seed: int = 0):
    """Sampled lower bounds (sup_est, lip_est) on ||V||_inf and Lip V.

    Points and probe directions come from independent child streams of the
    seed, so extending ``n_samples`` keeps the earlier draws as a prefix and
    both estimates grow monotonically.
    """
    if n_samples < 2:
        raise ValueError("need at least two samples")
    rng_pts, rng_dir = spawn_rngs(seed, 2)
    pts = np.asarray(region.lo) + rng_pts.random((n_samples, region.dim)) * region.widths
    vals = V.eval(pts)
    sup_est = float(np.max(np.linalg.norm(vals, axis=1)))

    lip = 0.0
    m = n_samples // 2
    if m:
        a, b = pts[0:2 * m:2], pts[1:2 * m:2]
        gap = np.linalg.norm(b - a, axis=1)
        ok = gap > 0
        if np.any(ok):
            quot = np.linalg.norm(V.eval(b[ok]) - V.eval(a[ok]), axis=1) / gap[ok]
            lip = float(np.max(quot))
    step = 1e-6 * max(1.0, float(np.max(region.widths)))
    dirs = rng_dir.standard_normal((n_samples, region.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    fd = np.linalg.norm(V.eval(pts + step * dirs) - vals, axis=1) / step
    lip = max(lip, float(np.max(fd)))
    return sup_est, lip


def mean_drift(V: VectorField, ell: float, anchors, resolution: int = 64) -> float:
    """max over anchors of |(1/ell^d) integral of V over anchor + [0, ell]^d|.

    Tensor-grid midpoint rule; error O(resolution^-2) for smooth fields.
    """
    if ell <= 0:
        raise ValueError("box size must be positive")
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    if anchors.size == 0:
        raise ValueError("anchor list must not be empty")
    d = V.dim
    mid = (np.arange(resolution) + 0.5) * (ell / resolution)
    grids = np.meshgrid(*([mid] * d), indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=1)
    worst = 0.0
    for a in anchors:
        avg = V.eval(a + offsets).mean(axis=0)
        worst = max(worst, float(np.linalg.norm(avg)))
    return worst


@dataclass(frozen=True)
class DriftReport:
    """Per-scale drift suprema and the resulting verdict."""

    box_sizes: tuple
    drifts: tuple
    anchors_used: int
    threshold: float
    verdict: str

    def to_json(self) -> dict:
        return {
            "entries": [{"l": float(l), "drift": float(g)}
                        for l, g in zip(self.box_sizes, self.drifts)],
            "anchors_used": self.anchors_used,
            "threshold": float(self.threshold),
            "verdict": self.verdict,
        }


def check_vmd(V: VectorField, l_schedule, threshold: float,
              n_anchors: int = 9, resolution: int = 64) -> DriftReport:
    """Vanishing-mean-drift verdict over an increasing schedule of box sizes.

    Verdict policy: ``vanishing`` iff the drift at the largest scale falls
    below the threshold and the sequence is nonincreasing within 10% slack;
    ``nonvanishing`` iff the drift stays at or above the threshold at every
    scale; otherwise ``inconclusive``.  Anchors are a fixed low-discrepancy
    set per scale, so the recorded suprema are lower bounds of the true sup.
    """
    ls = [float(l) for l in l_schedule]
    if not ls or any(b <= a for a, b in zip(ls, ls[1:])):
        raise ValueError("schedule must be nonempty and increasing")
    drifts = []
    for ell in ls:
        anchors = (halton(n_anchors, V.dim, start=1) - 0.5) * ell
        drifts.append(mean_drift(V, ell, anchors, resolution))
    # slack floor keeps roundoff-level drifts from flipping the monotone test
    floor = 1e-13 * max(1.0, V.sup_bound if np.isfinite(V.sup_bound) else 1.0)
    nonincreasing = all(b <= 1.1 * a + floor for a, b in zip(drifts, drifts[1:]))
    if drifts[-1] < threshold and nonincreasing:
        verdict = "vanishing"
    elif all(g >= threshold for g in drifts):
        verdict = "nonvanishing"
    else:
        verdict = "inconclusive"
    return DriftReport(tuple(ls), tuple(drifts), n_anchors, threshold, verdict)
