"""The two-mode reduction: discrete maps on (z_tilde, T(0)) and their nullclines.

A model here is the pair (a, E): the spectrum is (1, -1/a) up to overall scale,
so a = 1 is the fully symmetric case and large a (small eps = 1/a) is the
edge-of-stability regime.  The map is quadratic in z_tilde and exact; two-step
objects are always built by composing the one-step map, never from expanded
polynomials.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .mode_space import DivergenceError


class InadmissibleStateError(ValueError):
    """State lies outside the cone where both squared mode projections are nonnegative."""


class SingularNullclineError(ValueError):
    pass


class SingularSeriesError(ValueError):
    pass


class RootNotFoundError(RuntimeError):
    """No sign change found for a nullcline root; carries .bracket = (lo, hi)."""

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


@dataclass(frozen=True)
class ReducedModel:
    a: float
    e_const: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.e_const)):
            raise ValueError("model constants must be finite")
        if abs(self.a) < 1.0:
            raise ValueError("need |a| >= 1")

    @property
    def eps(self) -> float:
        return 1.0 / self.a

    @classmethod
    def from_eps(cls, eps: float, e_const: float = 0.0) -> "ReducedModel":
        if eps == 0:
            raise ValueError("eps must be nonzero")
        return cls(a=1.0 / eps, e_const=e_const)


@dataclass(frozen=True)
class ReducedState:
    z_tilde: float
    t0: float


@dataclass(frozen=True)
class YState:
    z_tilde: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.z_tilde) and math.isfinite(self.y)):
            raise ValueError("non-finite YState")


def mode_projections(m: ReducedModel, s: ReducedState):
    """Squared projections (jsq_plus, jsq_minus) implied by (z_tilde, T(0)) and E.

    jsq_plus = (a T + 2 z + E)/(a+1) belongs to eigenvalue 1,
    jsq_minus = (T - 2 z - E)/(a+1) to eigenvalue -1/a.  Both must be >= 0 for
    the state to come from a genuine two-mode configuration.
    """
    w = 2.0 * s.z_tilde + m.e_const
    return (m.a * s.t0 + w) / (m.a + 1.0), (s.t0 - w) / (m.a + 1.0)


def is_admissible(m: ReducedModel, s: ReducedState, slack: float = 0.0) -> bool:
    jp, jm = mode_projections(m, s)
    return jp >= -slack and jm >= -slack


def _step_raw(m: ReducedModel, z: float, t: float):
    # pure algebra, defined everywhere; admissibility is checked by the caller
    a = m.a
    e = m.e_const
    w = 2.0 * z + e
    z_new = z - z * t + 0.5 / a * z * z * ((a - 1.0) * t + w)
    t_new = t - (2.0 / a) * z * (w + (a - 1.0) * t) + z * z * (t + (1.0 - a) / (a * a) * (t - e - 2.0 * z))
    return z_new, t_new


def one_step(m: ReducedModel, s: ReducedState, check: bool = True) -> ReducedState:
    """Advance (z_tilde, T(0)) by one update.

    check=True validates the admissibility cone (with roundoff slack) and raises
    InadmissibleStateError outside it; check=False evaluates the bare algebraic
    map, which nullcline computations need since nullclines leave the cone near
    the origin.
    """
    if check and not is_admissible(m, s, slack=1e-12 * (1.0 + abs(s.t0))):
        raise InadmissibleStateError(
            f"state (z={s.z_tilde}, T={s.t0}) outside the cone for a={m.a}, E={m.e_const}"
        )
    z_new, t_new = _step_raw(m, s.z_tilde, s.t0)
    if not (math.isfinite(z_new) and math.isfinite(t_new)):
        raise DivergenceError("one_step overflowed")
    return ReducedState(z_new, t_new)


def two_step(m: ReducedModel, s: ReducedState, check: bool = True) -> ReducedState:
    """Two applications of one_step (the oscillation-free composed map)."""
    return one_step(m, one_step(m, s, check=check), check=check)


def nullcline_z_one_step(m: ReducedModel, z: float) -> float:
    """T on which one step leaves z_tilde unchanged: z (2z+E) / (2a - (a-1) z)."""
    denom = 2.0 * m.a - (m.a - 1.0) * z
    if abs(denom) < 1e-12:
        raise SingularNullclineError(f"singular denominator at z={z}")
    return z * (2.0 * z + m.e_const) / denom


def nullcline_t_one_step(m: ReducedModel, z: float) -> float:
    """T on which one step leaves T(0) unchanged."""
    denom = (m.a * m.a - m.a + 1.0) * z - 2.0 * m.a * (m.a - 1.0)
    if abs(denom) < 1e-12:
        raise SingularNullclineError(f"singular denominator at z={z}")
    return -((m.a - 1.0) * z - 2.0 * m.a) / denom * (2.0 * z + m.e_const)


def nullcline_series(eps: float, z: float, which: str) -> float:
    """Quadratic series of the two-step nullclines about (0, 2).

    which='z': 2 + 2(1-eps) z + 2(1-eps+eps^2) z^2
    which='t': 2 + ((2-3 eps+2 eps^2)/(1-eps)) z + (1/2)(4-eps+4 eps^2) z^2
    """
    if which == "z":
        return 2.0 + 2.0 * (1.0 - eps) * z + 2.0 * (1.0 - eps + eps * eps) * z * z
    if which == "t":
        if eps == 1.0:
            raise SingularSeriesError("T-branch series is singular at eps=1")
        b1 = (2.0 - 3.0 * eps + 2.0 * eps * eps) / (1.0 - eps)
        b2 = 0.5 * (4.0 - eps + 4.0 * eps * eps)
        return 2.0 + b1 * z + b2 * z * z
    raise ValueError(f"which must be 'z' or 't', got {which!r}")


def nullcline_two_step(m: ReducedModel, z: float, which: str, radius: float = 0.5) -> float:
    """Numeric two-step nullcline value: the root T of the composed map's
    coordinate difference on the branch through (0, 2).

    Root-finding brackets around the series prediction and widens geometrically;
    below |z| = 1e-8 the series value is returned directly (the root problem is
    ill-conditioned there and the branch limit is 2).
    """
    eps = m.eps
    if not 0.0 < eps <= 1.0:
        raise ValueError("two-step nullclines need eps = 1/a in (0, 1]")
    if abs(z) > radius:
        raise ValueError(f"|z| = {abs(z)} beyond radius {radius}")
    if which not in ("z", "t"):
        raise ValueError(f"which must be 'z' or 't', got {which!r}")
    if which == "t" and eps == 1.0:
        raise SingularSeriesError("T-branch is singular at eps=1")
    if abs(z) < 1e-8:
        return nullcline_series(eps, z, which)

    if which == "z":
        def f(t):
            return _two_step_raw(m, z, t)[0] - z
    else:
        def f(t):
            return _two_step_raw(m, z, t)[1] - t

    center = nullcline_series(eps, z, which)
    half = 10.0 * z * z
    for _ in range(9):
        lo, hi = center - half, center + half
        flo, fhi = f(lo), f(hi)
        if np.sign(flo) != np.sign(fhi):
            return brentq(f, lo, hi, xtol=1e-14, rtol=8.9e-16)
        half *= 2.0
    raise RootNotFoundError(
        f"no sign change for the {which}-branch root at z={z}", bracket=(center - half, center + half)
    )


def _two_step_raw(m: ReducedModel, z: float, t: float):
    z1, t1 = _step_raw(m, z, t)
    return _step_raw(m, z1, t1)


def to_y(m: ReducedModel, s: ReducedState) -> YState:
    """Coordinates (z_tilde, y) with y the signed distance from the two-step z-branch nullcline."""
    return YState(s.z_tilde, s.t0 - nullcline_two_step(m, s.z_tilde, "z"))


def from_y(m: ReducedModel, ys: YState) -> ReducedState:
    return ReducedState(ys.z_tilde, ys.y + nullcline_two_step(m, ys.z_tilde, "z"))


def low_order_step(z: float, y: float, eps: float):
    """Leading-order two-step recursion in (z_tilde, y):

    z' = z + 2 y z
    y' = y - 2 (4 - 3 eps + 4 eps^2) y z^2 - 4 eps z^2
    """
    z_new = z + 2.0 * y * z
    y_new = y - 2.0 * (4.0 - 3.0 * eps + 4.0 * eps * eps) * y * z * z - 4.0 * eps * z * z
    return z_new, y_new


def y_star(eps: float) -> float:
    """Fixed point of the low-order y recursion: -eps / (2 - 1.5 eps + 2 eps^2)."""
    return -eps / (2.0 - 1.5 * eps + 2.0 * eps * eps)


@dataclass
class YTrajectory:
    times: np.ndarray
    z_tilde: np.ndarray
    y: np.ndarray


def ode_integrate(z0: float, y0: float, eps: float, dt: float, t_end: float, record_every: int = 100) -> YTrajectory:
    """RK4 on the continuum limit  dz/dt = 2 y z,  dy/dt = -2(4-3 eps+4 eps^2) y z^2 - 4 eps z^2.

    Integration stops early once |z| < 1e-13: both derivatives scale with z (or
    z^2), so y is frozen to far beyond the tolerances of interest.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    c = 2.0 * (4.0 - 3.0 * eps + 4.0 * eps * eps)
    n = int(round(t_end / dt))
    ts, zs, ys = [0.0], [z0], [y0]
    z, y = z0, y0

    def rhs(zv, yv):
        zz = zv * zv
        return 2.0 * yv * zv, -c * yv * zz - 4.0 * eps * zz

    for i in range(1, n + 1):
        k1z, k1y = rhs(z, y)
        k2z, k2y = rhs(z + 0.5 * dt * k1z, y + 0.5 * dt * k1y)
        k3z, k3y = rhs(z + 0.5 * dt * k2z, y + 0.5 * dt * k2y)
        k4z, k4y = rhs(z + dt * k3z, y + dt * k3y)
        z = z + dt / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z)
        y = y + dt / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y)
        if not (math.isfinite(z) and math.isfinite(y)) or abs(z) > 1e6:
            raise DivergenceError(f"ODE diverged at step {i}", step=i)
        if i % record_every == 0 or i == n:
            ts.append(i * dt)
            zs.append(z)
            ys.append(y)
        if abs(z) < 1e-13:
            if ts[-1] != i * dt:
                ts.append(i * dt)
                zs.append(z)
                ys.append(y)
            break
    return YTrajectory(np.array(ts), np.array(zs), np.array(ys))


@dataclass
class ConvergenceReport:
    verdict: str  # converged | diverged | stalled
    z_tilde: float
    t0: float
    y: float
    steps: int


def run_to_convergence(m: ReducedModel, s: ReducedState, tol: float = 1e-10, max_steps: int = 10_000_000) -> ConvergenceReport:
    """Iterate one_step until |z_tilde| < tol, blow-up, or the step budget runs out.

    The final y is reported through to_y when 0 < eps <= 1 (near z=0 that uses
    the series nullcline value), otherwise NaN.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not is_admissible(m, s, slack=1e-12 * (1.0 + abs(s.t0))):
        raise InadmissibleStateError(f"initial state (z={s.z_tilde}, T={s.t0}) outside the cone")
    z, t = s.z_tilde, s.t0
    verdict = "stalled"
    steps = max_steps
    for i in range(max_steps):
        if abs(z) < tol:
            verdict = "converged"
            steps = i
            break
        z, t = _step_raw(m, z, t)
        if not (math.isfinite(z) and math.isfinite(t)) or abs(z) > 1e6 or abs(t) > 1e12:
            verdict = "diverged"
            steps = i + 1
            break
    if 0.0 < m.eps <= 1.0 and verdict != "diverged" and abs(z) <= 0.5:
        y = t - nullcline_two_step(m, z, "z")
    else:
        y = math.nan
    return ConvergenceReport(verdict=verdict, z_tilde=z, t0=t, y=y, steps=steps)


def trajectory(m: ReducedModel, s: ReducedState, n_steps: int, with_y: bool = True):
    """Arrays (step, z_tilde, T0, y) for n_steps one_step iterations (y is NaN when unavailable)."""
    zs = np.empty(n_steps + 1)
    ts = np.empty(n_steps + 1)
    z, t = s.z_tilde, s.t0
    for i in range(n_steps + 1):
        zs[i] = z
        ts[i] = t
        if i < n_steps:
            z, t = _step_raw(m, z, t)
            if not (math.isfinite(z) and math.isfinite(t)) or abs(z) > 1e6 or abs(t) > 1e12:
                zs, ts = zs[: i + 2], ts[: i + 2]
                zs[i + 1] = z
                ts[i + 1] = t
                break
    steps = np.arange(len(zs))
    if with_y and 0.0 < m.eps <= 1.0:
        ys = np.array([ts[i] - nullcline_two_step(m, zs[i], "z") if abs(zs[i]) <= 0.5 and math.isfinite(zs[i]) else math.nan for i in range(len(zs))])
    else:
        ys = np.full(len(zs), math.nan)
    return steps, zs, ts, ys
