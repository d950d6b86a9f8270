"""Bump-supported diffeomorphisms that relocate a trajectory endpoint.

The map Phi(x) = x - phi_delta(x) (y0 - x0), with phi_delta a radial bump
equal to 1 on B_delta(x0) and 0 outside B_2delta(x0), translates the start
of a trajectory from x0 to y0 while leaving everything outside B_2delta
untouched.  Transporting the field through Phi,

    Vt(y) = DPhi(y)^{-1} V(Phi(y)),

turns Phi-preimages of old trajectories into new trajectories; all size
estimates flow through the bump's gradient and Hessian suprema and the cube
law |y0 - x0| <= delta^3.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateBudget, HypothesisViolation
from .fields import VectorField
from .integrate import IntegratorSettings, Trajectory, integrate, integrate_backward

__all__ = ["BumpFunction", "PhiMap", "FieldStats", "default_bump",
           "bump_constants", "choose_delta", "build_phi_map",
           "pushforward_field", "correct_start", "sampled_jacobian_modulus"]


def _glue(t):
    """exp(-1/t) on t > 0, zero elsewhere; the classic smooth glue."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = t > 0
    out[m] = np.exp(-1.0 / t[m])
    return out


def _glue_d1(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = t > 0
    tm = t[m]
    out[m] = np.exp(-1.0 / tm) / tm ** 2
    return out


def _glue_d2(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = t > 0
    tm = t[m]
    out[m] = np.exp(-1.0 / tm) * (1.0 / tm ** 4 - 2.0 / tm ** 3)
    return out


def _eta(r):
    """Smooth step: 1 on [0,1], 0 on [2,inf)."""
    r = np.asarray(r, dtype=float)
    u = _glue(2.0 - r)
    v = _glue(r - 1.0)
    return u / (u + v + ((u + v) == 0.0))


def _eta_d1(r):
    r = np.asarray(r, dtype=float)
    u = _glue(2.0 - r)
    v = _glue(r - 1.0)
    up = -_glue_d1(2.0 - r)
    vp = _glue_d1(r - 1.0)
    s = u + v
    with np.errstate(invalid="ignore"):
        out = np.where(s > 0, (up * v - u * vp) / np.where(s > 0, s, 1.0) ** 2, 0.0)
    out = np.where((r <= 1.0) | (r >= 2.0), 0.0, out)
    return out


def _eta_d2(r):
    r = np.asarray(r, dtype=float)
    u = _glue(2.0 - r)
    v = _glue(r - 1.0)
    up = -_glue_d1(2.0 - r)
    vp = _glue_d1(r - 1.0)
    upp = _glue_d2(2.0 - r)
    vpp = _glue_d2(r - 1.0)
    s = u + v
    num = (upp * v - u * vpp) * s - 2.0 * (up * v - u * vp) * (up + vp)
    with np.errstate(invalid="ignore"):
        out = np.where(s > 0, num / np.where(s > 0, s, 1.0) ** 3, 0.0)
    out = np.where((r <= 1.0) | (r >= 2.0), 0.0, out)
    return out


@dataclass(frozen=True)
class BumpFunction:
    """Radial profile phi(x) = eta(|x|) with audited derivative suprema.

    grad_sup bounds |grad phi| and hess_sup bounds the operator norm of
    D^2 phi; both were obtained by dense 1-D sampling of the profile and
    inflated slightly so they dominate any finite-difference audit.
    """

    profile: Callable
    d1: Callable
    d2: Callable
    grad_sup: float
    hess_sup: float

    def value(self, r):
        return self.profile(r)


@lru_cache(maxsize=1)
def bump_constants() -> dict:
    """Derivative suprema of the standard bump, by dense sampling."""
    rs = np.linspace(1.0, 2.0, 400_001)
    d1 = np.abs(_eta_d1(rs))
    d2 = np.abs(_eta_d2(rs))
    grad_sup = float(d1.max()) * 1.002
    # radial Hessian eigenvalues are eta'' and eta'/r
    hess_sup = float(np.maximum(d2, d1 / rs).max()) * 1.002
    return {
        "grad_sup": grad_sup,
        "hess_sup": hess_sup,
        "samples": len(rs),
        "inflation": 1.002,
        "provenance": "dense 1-D sampling of the analytic derivatives",
    }


@lru_cache(maxsize=1)
def default_bump() -> BumpFunction:
    c = bump_constants()
    return BumpFunction(_eta, _eta_d1, _eta_d2, c["grad_sup"], c["hess_sup"])


def write_bump_constants(path) -> dict:
    """Write the audited bump constants (with their provenance) as JSON."""
    from . import jsonio

    payload = dict(bump_constants())
    jsonio.write_json(path, payload)
    return payload


# ---------------------------------------------------------------------------
# admissible deformation scale


@dataclass(frozen=True)
class FieldStats:
    """Bounds consumed by the scale selection: Lip, sup, and a C^1 modulus."""

    lip: float
    sup: float
    omega: Optional[Callable] = None   # nondecreasing modulus of the Jacobian


def c0_deviation_bound(stats: FieldStats, delta: float, bump: BumpFunction) -> float:
    gs = bump.grad_sup
    if gs * delta * delta >= 1.0:
        return np.inf
    return stats.lip * delta ** 3 + stats.sup * gs * delta ** 2 / (1.0 - gs * delta ** 2)


def c1_deviation_bound(stats: FieldStats, delta: float, bump: BumpFunction) -> float:
    gs = bump.grad_sup
    if gs * delta * delta >= 1.0:
        return np.inf
    om = stats.omega(delta ** 3) if stats.omega is not None else 0.0
    return om + bump.hess_sup * delta / (1.0 - gs * delta ** 2) ** 2


def choose_delta(stats: FieldStats, eps: float, need_c1: bool = False,
                 bump: Optional[BumpFunction] = None, floor: float = 1e-12) -> float:
    """Largest bump scale keeping the transported field within eps.

    Bisects for the largest delta below the invertibility cap
    min(1, grad_sup^{-1/2}) whose uniform deviation bound stays below eps/2
    (and, in C^1 mode, whose derivative deviation bound does too).  The
    bounds are monotone in delta so bisection is exact up to grid width.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if need_c1 and stats.omega is None:
        raise ValueError("C1 mode needs a modulus of continuity for the Jacobian")
    bump = bump or default_bump()
    cap = 0.999 * min(1.0, bump.grad_sup ** -0.5)

    def ok(delta):
        if c0_deviation_bound(stats, delta, bump) >= eps / 2.0:
            return False
        if need_c1 and c1_deviation_bound(stats, delta, bump) >= eps / 2.0:
            return False
        return True

    if not ok(floor):
        raise DegenerateBudget(f"no admissible scale above {floor:.3g} for eps={eps:.3g}")
    if ok(cap):
        return cap
    lo, hi = floor, cap
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# the map


@dataclass(frozen=True)
class PhiMap:
    """Phi(x) = x - phi_delta(x) (y0 - x0); identity outside B_2delta(x0).

    ``period`` enables the same construction on a flat torus: displacements
    from the bump center are taken in the wrapped representative.
    """

    x0: np.ndarray
    y0: np.ndarray
    delta: float
    bump: BumpFunction
    period: Optional[float] = None

    def __post_init__(self):
        disp = float(np.linalg.norm(self.displacement))
        if disp > self.delta ** 3 * (1.0 + 1e-9):
            raise HypothesisViolation(
                f"displacement {disp:.3g} exceeds delta^3 = {self.delta ** 3:.3g}",
                required=self.delta ** 3)
        cap = min(1.0, self.bump.grad_sup ** -0.5)
        if not self.delta < cap:
            raise HypothesisViolation(
                f"delta {self.delta:.3g} reaches the invertibility cap {cap:.3g}",
                required=cap)

    @property
    def displacement(self) -> np.ndarray:
        d = np.asarray(self.y0, dtype=float) - np.asarray(self.x0, dtype=float)
        if self.period is not None:
            d = (d + self.period / 2.0) % self.period - self.period / 2.0
        return d

    def _offset(self, x):
        dx = np.asarray(x, dtype=float) - self.x0
        if self.period is not None:
            dx = (dx + self.period / 2.0) % self.period - self.period / 2.0
        return dx

    def bump_value(self, x):
        dx = self._offset(x)
        r = np.linalg.norm(dx, axis=-1) / self.delta
        return self.bump.value(r)

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        v = self.bump_value(x)
        return x - np.asarray(v)[..., None] * self.displacement

    def jac(self, x) -> np.ndarray:
        """DPhi(x): identity minus the rank-one term displacement x grad(phi_delta)."""
        x = np.asarray(x, dtype=float)
        dx = self._offset(x)
        r = float(np.linalg.norm(dx))
        d = x.size
        J = np.eye(d)
        if r == 0.0 or r >= 2.0 * self.delta:
            return J
        dphi = float(self.bump.d1(r / self.delta)) / self.delta
        grad = (dphi / r) * dx
        # Phi_i(x) = x_i - phi_delta(x) disp_i  =>  dPhi_i/dx_j = I - disp_i grad_j
        return J - np.outer(self.displacement, grad)

    def phi_inv(self, y, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
        """Fixed-point inverse: x_{k+1} = y + phi_delta(x_k) * displacement."""
        y = np.asarray(y, dtype=float)
        x = y.copy()
        for _ in range(max_iter):
            x_new = y + float(self.bump_value(x)) * self.displacement
            if float(np.linalg.norm(x_new - x)) <= tol:
                return x_new
            x = x_new
        return x

    @property
    def support_radius(self) -> float:
        return 2.0 * self.delta


def build_phi_map(x0, y0, delta: float, bump: Optional[BumpFunction] = None,
                  period: Optional[float] = None) -> PhiMap:
    return PhiMap(np.asarray(x0, dtype=float), np.asarray(y0, dtype=float),
                  float(delta), bump or default_bump(), period)


def pushforward_field(V: VectorField, phi_map: PhiMap) -> VectorField:
    """Vt(y) = DPhi(y)^{-1} V(Phi(y)); bitwise equal to V outside the support."""

    pm = phi_map

    def one(y):
        dx = pm._offset(y)
        if float(np.linalg.norm(dx)) >= pm.support_radius:
            return V.eval(y)
        J = pm.jac(y)
        return np.linalg.solve(J, V.eval(pm.phi(y)))

    def func(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return one(x)
        return np.stack([one(p) for p in x], axis=0)

    stats = FieldStats(V.lip_bound, V.sup_bound)
    c0 = c0_deviation_bound(stats, pm.delta, pm.bump)
    desc = None
    if V.descriptor is not None:
        desc = {
            "kind": "pushforward",
            "base": V.descriptor,
            "x0": [float(v) for v in pm.x0],
            "y0": [float(v) for v in pm.y0],
            "delta": float(pm.delta),
            "period": None if pm.period is None else float(pm.period),
        }
    # Lip Vt <= |DPhi^-1| Lip V |DPhi| + |D(DPhi^-1)| ||V||
    gs2 = pm.bump.grad_sup * pm.delta ** 2
    lip = (V.lip_bound * (1.0 + gs2) / (1.0 - gs2)
           + V.sup_bound * pm.bump.hess_sup * pm.delta / (1.0 - gs2) ** 2)
    return VectorField(V.dim, func, V.sup_bound + c0, lip,
                       None, "pushforward", desc, V.domain_box)


def pushforward_from_descriptor(desc: dict) -> VectorField:
    from .fieldstore import field_from_descriptor

    base = field_from_descriptor(desc["base"])
    pm = build_phi_map(desc["x0"], desc["y0"], desc["delta"],
                       period=desc.get("period"))
    return pushforward_field(base, pm)


# ---------------------------------------------------------------------------
# endpoint relocation


def sampled_jacobian_modulus(V: VectorField, center, n_radii: int = 8,
                             samples_per_radius: int = 64, seed: int = 0) -> Callable:
    """Nondecreasing majorant of |J(a) - J(b)| over |a - b| <= r on B_1(center).

    Sampled at dyadic radii and monotonized upward; a usable stand-in for a
    modulus of continuity when only pointwise Jacobians are available.
    """
    center = np.asarray(center, dtype=float)
    rng = np.random.default_rng(seed)
    radii = [2.0 ** -k for k in range(n_radii)][::-1]
    vals = []
    for r in radii:
        worst = 0.0
        for _ in range(samples_per_radius):
            a = center + rng.uniform(-1.0, 1.0, center.size)
            u = rng.standard_normal(center.size)
            u /= np.linalg.norm(u)
            b = a + r * rng.uniform(0.0, 1.0) * u
            worst = max(worst, float(np.linalg.norm(V.jac(a) - V.jac(b), ord=2)))
        vals.append(worst)
    for i in range(1, len(vals)):
        vals[i] = max(vals[i], vals[i - 1])
    radii_arr = np.array(radii)
    vals_arr = np.array(vals)

    def omega(r):
        if r <= 0:
            return 0.0
        i = int(np.searchsorted(radii_arr, r, side="left"))
        if i >= len(vals_arr):
            return float(vals_arr[-1])
        return float(vals_arr[i])

    return omega


def correct_start(V: VectorField, traj: Trajectory, y_new, eps: float,
                  direction: str = "forward", need_c1: bool = False,
                  bump: Optional[BumpFunction] = None,
                  delta: Optional[float] = None,
                  settings: IntegratorSettings = IntegratorSettings()):
    """Move a trajectory endpoint onto ``y_new`` by a local field change.

    Forward mode relocates x(t0) to y_new and re-integrates forward; backward
    mode relocates x(t1) and integrates backward into the new terminal point.
    The returned field coincides with V outside B_2delta(anchor) and deviates
    by less than eps in sup norm (and in sampled Lipschitz norm when
    ``need_c1``).  Raises ``HypothesisViolation`` (carrying the required
    bound) when |y_new - anchor| exceeds delta^3.
    """
    bump = bump or default_bump()
    if delta is None:
        omega = None
        if need_c1:
            omega = sampled_jacobian_modulus(V, y_new) if V.jacobian is not None else None
            if omega is None:
                raise ValueError("C1 mode needs an analytic Jacobian to sample a modulus")
        delta = choose_delta(FieldStats(V.lip_bound, V.sup_bound, omega), eps,
                             need_c1, bump)
    anchor = traj.states[0] if direction == "forward" else traj.states[-1]
    gap = float(np.linalg.norm(np.asarray(y_new, dtype=float) - anchor))
    if gap > delta ** 3 * (1.0 + 1e-9):
        raise HypothesisViolation(
            f"|y_new - anchor| = {gap:.3g} exceeds delta^3 = {delta ** 3:.3g}",
            required=delta ** 3)
    pm = build_phi_map(anchor, y_new, delta, bump)
    vt = pushforward_field(V, pm)
    # the surgery ball is smaller than the integrator's natural step on a
    # smooth field; cap the step well below the profile scale (the error
    # estimator cannot flag features its stages never sample)
    from dataclasses import replace

    h_cap = delta / (8.0 * max(V.sup_bound, 1e-12))
    fine = replace(settings, h_max=min(settings.h_max, h_cap))
    if direction == "forward":
        new_traj = integrate(vt, y_new, traj.t0, traj.t1, fine)
    elif direction == "backward":
        new_traj = integrate_backward(vt, y_new, traj.t0, traj.t1, fine)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return vt, new_traj, pm
