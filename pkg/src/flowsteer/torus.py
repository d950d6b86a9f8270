"""Connecting orbits on the flat torus by two local field surgeries.

Given a transitive field on T^d = [0, 2pi)^d, a trajectory that starts near
p and later passes near q is deformed at both ends: a forward bump surgery
moves its start onto p exactly, a backward one moves the passage point onto
q.  The two supports are disjoint balls, so outside them the field (and the
connecting trajectory) is untouched.  Charts are the identity here, which is
what makes the flat-torus case fully constructive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .deform import (FieldStats, build_phi_map, choose_delta,
                     sampled_jacobian_modulus)
from .errors import NoTransitFound, SupportOverlap
from .fields import VectorField
from .integrate import IntegratorSettings, Trajectory, integrate
from .sampling import ball_points

__all__ = ["TWO_PI", "wrap_point", "torus_delta", "torus_distance",
           "find_transit", "connect", "TransitResult", "ConnectBudgets"]

TWO_PI = 2.0 * np.pi


def wrap_point(x, period: float = TWO_PI) -> np.ndarray:
    """Canonical representative in [0, period)^d."""
    return np.mod(np.asarray(x, dtype=float), period)


def torus_delta(a, b, period: float = TWO_PI) -> np.ndarray:
    """Wrapped difference a - b, componentwise in [-period/2, period/2)."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return (d + period / 2.0) % period - period / 2.0


def torus_distance(a, b, period: float = TWO_PI) -> float:
    return float(np.linalg.norm(torus_delta(a, b, period)))


@dataclass(frozen=True)
class TransitResult:
    x1: np.ndarray          # start near p (canonical representative)
    x2: np.ndarray          # passage point near q
    T: float
    trajectory: Trajectory  # lifted to the covering space

    def to_json(self) -> dict:
        return {"x1": [float(v) for v in self.x1],
                "x2": [float(v) for v in self.x2],
                "T": float(self.T)}


def _chord_minima(traj: Trajectory, target, period: float, t_lo: float):
    """Exact wrapped point-to-chord distance for every accepted step.

    The trajectory lives on the covering space; per step the chord from
    x_i to x_{i+1} is compared against the target's lattice images.  Returns
    (per-step minimum distance, per-step minimizing parameter in [0, 1]).
    """
    target = np.asarray(target, dtype=float)
    a = traj.states[:-1]
    u = np.diff(traj.states, axis=0)
    d0 = torus_delta(a, target, period)
    uu = np.maximum(np.sum(u * u, axis=1), 1e-300)
    best = np.full(len(a), np.inf)
    best_s = np.zeros(len(a))
    d = a.shape[1]
    # lattice images covering the whole lifted reach of the longest step
    reach = 0.5 * period * np.sqrt(d) + float(np.sqrt(np.max(uu)))
    m = int(np.ceil(reach / period)) + 1
    offs = period * np.arange(-m, m + 1)
    shifts = np.stack(np.meshgrid(*([offs] * d), indexing="ij"),
                      axis=-1).reshape(-1, d)
    for k in shifts:
        w = d0 - k
        s = np.clip(-np.sum(w * u, axis=1) / uu, 0.0, 1.0)
        dist = np.linalg.norm(w + s[:, None] * u, axis=1)
        better = dist < best
        best_s = np.where(better, s, best_s)
        best = np.minimum(best, dist)
    live = traj.times[1:] >= t_lo
    best = np.where(live, best, np.inf)
    return best, best_s


def _closest_approach_scan(traj: Trajectory, target, period: float,
                           t_lo: float, curvature: float = 0.0,
                           accept: float = np.inf):
    """(t*, d*) minimizing the wrapped distance to ``target`` on [t_lo, t1].

    A vectorized chord scan finds candidate steps (the chord understates the
    true path by at most ``curvature``); candidates are polished by golden
    section on the dense output.  ``accept`` short-circuits at the first
    polished distance at or below it.
    """
    target = np.asarray(target, dtype=float)
    chord, chord_s = _chord_minima(traj, target, period, t_lo)
    order = np.argsort(chord)

    def g(tt):
        return float(np.linalg.norm(torus_delta(traj.at(tt), target, period)))

    gold = (np.sqrt(5.0) - 1.0) / 2.0
    best_t, best_d = None, np.inf
    threshold = min(accept + curvature, np.inf)
    for idx in order[: max(32, int(np.sum(chord <= threshold)))]:
        if not np.isfinite(chord[idx]):
            break
        if chord[idx] > best_d + curvature and chord[idx] > threshold:
            break
        a, b = float(traj.times[idx]), float(traj.times[idx + 1])
        lo, hi = max(a, t_lo), b
        c = hi - gold * (hi - lo)
        e = lo + gold * (hi - lo)
        gc, ge = g(c), g(e)
        while hi - lo > 1e-12 * max(1.0, abs(hi)):
            if gc < ge:
                hi, e, ge = e, c, gc
                c = hi - gold * (hi - lo)
                gc = g(c)
            else:
                lo, c, gc = c, e, ge
                e = lo + gold * (hi - lo)
                ge = g(e)
        tt = (lo + hi) / 2.0
        dd = g(tt)
        if dd < best_d:
            best_t, best_d = tt, dd
            if best_d <= accept:
                break
    return best_t, best_d


def find_transit(V: VectorField, p, q, delta: float, T_max: float = 1e4,
                 n_starts: int = 16, seed: int = 0, period: float = TWO_PI,
                 settings: Optional[IntegratorSettings] = None) -> TransitResult:
    """Shoot from starts near p until an orbit enters B_{delta^3/2}(q).

    Starts are a low-discrepancy set in the ball of radius delta^3/2 around
    p (transitivity of V is the caller's assertion).  Approaches are located
    by an exact per-step chord scan padded by a curvature bound, then
    polished on the dense output.  Raises ``NoTransitFound`` with
    closest-approach diagnostics when the horizon is exhausted.
    """
    if settings is None:
        # straight-line flows are represented exactly at any step size; bent
        # ones need steps the chord curvature bound can account for
        h_max = 1.0 if V.lip_bound > 0 else 50.0
        settings = IntegratorSettings(rtol=1e-10, atol=1e-10, h_max=h_max)
    p = wrap_point(p, period)
    q = wrap_point(q, period)
    r = delta ** 3 / 2.0
    starts = ball_points(p, r, n_starts, seed)
    curvature = settings.h_max ** 2 / 8.0 * V.lip_bound * V.sup_bound \
        if np.isfinite(settings.h_max) else np.inf
    best = (np.inf, None, None)
    for x1 in starts:
        traj = integrate(V, x1, 0.0, T_max, settings)
        t_star, d_star = _closest_approach_scan(traj, q, period, 1e-9,
                                                curvature, accept=r)
        if d_star <= r:
            x2 = wrap_point(traj.at(t_star), period)
            return TransitResult(wrap_point(x1, period), x2, t_star, traj)
        if d_star < best[0]:
            best = (d_star, float(t_star), x1.copy())
    raise NoTransitFound(
        f"no orbit from B_{r:.3g}(p) reached B_{r:.3g}(q) within T={T_max:.3g}; "
        f"closest approach {best[0]:.3g}",
        closest=best[0], at_time=best[1], from_start=best[2])


@dataclass(frozen=True)
class ConnectBudgets:
    T_max: float = 1e4
    n_starts: int = 16
    seed: int = 0
    need_c1: bool = True
    shrink_attempts: int = 8


def connect(V: VectorField, p, q, eps: float,
            budgets: ConnectBudgets = ConnectBudgets(),
            period: float = TWO_PI,
            settings: Optional[IntegratorSettings] = None):
    """Deform V inside two small balls so the trajectory from p passes q.

    Returns (field, trajectory, certificate).  The supports B_2delta(x1) and
    B_2delta(x2) are kept disjoint, shrinking delta when necessary; if they
    cannot be separated, ``SupportOverlap`` is raised.
    """
    if settings is None:
        h_max = 1.0 if V.lip_bound > 0 else 50.0
        settings = IntegratorSettings(rtol=1e-10, atol=1e-10, h_max=h_max)
    p = wrap_point(p, period)
    q = wrap_point(q, period)
    omega = None
    if budgets.need_c1:
        omega = (sampled_jacobian_modulus(V, p) if V.jacobian is not None
                 else (lambda r: 0.0) if V.lip_bound == 0.0 else None)
        if omega is None:
            raise ValueError("C1 budget needs an analytic Jacobian (or a constant field)")
    delta = choose_delta(FieldStats(V.lip_bound, V.sup_bound, omega), eps / 2.0,
                         budgets.need_c1)

    transit = find_transit(V, p, q, delta, budgets.T_max, budgets.n_starts,
                           budgets.seed, period, settings)
    x1, x2, T = transit.x1, transit.x2, transit.T

    gap = torus_distance(x1, x2, period)
    for _ in range(budgets.shrink_attempts):
        if gap > 4.0 * delta:
            break
        delta *= 0.5
        if max(torus_distance(x1, p, period), torus_distance(x2, q, period)) > delta ** 3:
            raise SupportOverlap(
                f"correction balls of radius 2*{delta:.3g} cannot separate "
                f"x1, x2 at distance {gap:.3g}")
    else:
        raise SupportOverlap(
            f"correction balls overlap after {budgets.shrink_attempts} shrinks "
            f"(|x1 - x2| = {gap:.3g})")

    # the transit trajectory lives on the covering space; anchor the bumps at
    # the lift representatives it actually visits
    lift_x1 = transit.trajectory.states[0]
    lift_x2 = transit.trajectory.at(T)
    map1 = build_phi_map(lift_x1, lift_x1 + torus_delta(p, x1, period), delta,
                         period=period)
    map2 = build_phi_map(lift_x2, lift_x2 + torus_delta(q, x2, period), delta,
                         period=period)

    guide = transit.trajectory
    guide_gap = float(np.max(np.diff(guide.times))) if len(guide.times) > 1 else 1.0
    curvature = guide_gap ** 2 / 8.0 * V.lip_bound * V.sup_bound
    glued = _glued_pushforward(V, map1, map2, eps)
    start = lift_x1 + torus_delta(p, x1, period)
    traj = _integrate_resolving_balls(glued, start, 0.0, T + 2.0, guide,
                                      (lift_x1, lift_x2), delta, V.sup_bound,
                                      period, settings, curvature)
    fine_gap = float(np.max(np.diff(traj.times))) if len(traj.times) > 1 else 1.0
    t_hit, d_hit = _closest_approach_scan(
        traj, q, period, max(1e-9, T - 2.0),
        fine_gap ** 2 / 8.0 * glued.lip_bound * glued.sup_bound)
    cert = {
        "delta": float(delta),
        "T_transit": float(T),
        "t_hit": float(t_hit),
        "hit_error": float(d_hit),
        "x1": [float(v) for v in x1],
        "x2": [float(v) for v in x2],
        "support_radius": float(2.0 * delta),
    }
    return glued, traj, cert


def _chord_windows(guide: Trajectory, target, period: float, radius: float):
    """Time intervals where the per-step chord passes within ``radius``.

    Solves the chord distance quadratic |w + s u|^2 <= radius^2 per step and
    lattice image; exact for straight steps.
    """
    target = np.asarray(target, dtype=float)
    a = guide.states[:-1]
    u = np.diff(guide.states, axis=0)
    h = np.diff(guide.times)
    d0 = torus_delta(a, target, period)
    uu = np.maximum(np.sum(u * u, axis=1), 1e-300)
    d = a.shape[1]
    reach = 0.5 * period * np.sqrt(d) + float(np.sqrt(np.max(uu)))
    m = int(np.ceil(reach / period)) + 1
    offs = period * np.arange(-m, m + 1)
    shifts = np.stack(np.meshgrid(*([offs] * d), indexing="ij"),
                      axis=-1).reshape(-1, d)
    out = []
    for k in shifts:
        w = d0 - k
        b = np.sum(w * u, axis=1)
        c = np.sum(w * w, axis=1) - radius * radius
        disc = b * b - uu * c
        hit = disc > 0.0
        if not np.any(hit):
            continue
        sq = np.sqrt(disc[hit])
        s_lo = np.clip((-b[hit] - sq) / uu[hit], 0.0, 1.0)
        s_hi = np.clip((-b[hit] + sq) / uu[hit], 0.0, 1.0)
        keep = s_hi > s_lo
        idx = np.nonzero(hit)[0][keep]
        t_lo = guide.times[idx] + s_lo[keep] * h[idx]
        t_hi = guide.times[idx] + s_hi[keep] * h[idx]
        out.extend(zip(t_lo.tolist(), t_hi.tolist()))
    return out


def _integrate_resolving_balls(field, x0, t0, t1, guide: Trajectory, anchors,
                               delta, speed, period, settings,
                               curvature: float = 0.0) -> Trajectory:
    """Integrate with a step cap inside windows where the guide trajectory
    approaches a surgery ball; the balls are far smaller than the natural
    step on a smooth field and would otherwise be jumped over."""
    from dataclasses import replace

    pad = max(0.1, 4.0 * delta / max(speed, 1e-12))
    windows = [(t0, min(t1, t0 + 2.0))]  # the start sits inside a ball
    radius = 2.2 * delta + curvature
    for a in anchors:
        for lo, hi in _chord_windows(guide, a, period, radius):
            windows.append((max(t0, lo - pad), min(t1, hi + pad)))
    windows.sort()
    merged = []
    for w in windows:
        if merged and w[0] <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], w[1]))
        else:
            merged.append(w)
    # one eighth of the profile scale: the error estimator cannot flag
    # features its stages never sample, so the cap must resolve them
    h_cap = delta / (8.0 * max(speed, 1e-12))
    fine = replace(settings, h_max=min(settings.h_max, h_cap))

    pieces = []
    t = t0
    state = np.asarray(x0, dtype=float)
    for lo, hi in merged + [(t1, t1)]:
        if t < lo:
            pieces.append(integrate(field, state, t, lo, settings))
            state = pieces[-1].states[-1]
            t = lo
        if t < hi:
            pieces.append(integrate(field, state, t, hi, fine))
            state = pieces[-1].states[-1]
            t = hi
    if t < t1:
        pieces.append(integrate(field, state, t, t1, settings))
    return Trajectory.join(pieces)


def _glued_pushforward(V: VectorField, map1, map2, eps: float) -> VectorField:
    """Pushforward under two bump maps with disjoint supports.

    Each point lies in at most one support, so the pointwise deviation is
    bounded by the single-ball budget eps/2.
    """

    def one(y):
        if float(np.linalg.norm(map1._offset(y))) < map1.support_radius:
            return np.linalg.solve(map1.jac(y), V.eval(map1.phi(y)))
        if float(np.linalg.norm(map2._offset(y))) < map2.support_radius:
            return np.linalg.solve(map2.jac(y), V.eval(map2.phi(y)))
        return V.eval(y)

    def func(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return one(x)
        return np.stack([one(v) for v in x], axis=0)

    return VectorField(V.dim, func, V.sup_bound + eps / 2.0,
                       V.lip_bound + eps / 2.0, None, "pushforward", None,
                       V.domain_box)
