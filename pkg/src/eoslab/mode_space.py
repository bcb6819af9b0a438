"""Single-output quartic-loss dynamics in the eigenbasis of the curvature matrix.

State is the rescaled residual z_tilde together with the per-mode squared
Jacobian projections jsq[i] >= 0 and their fixed eigenvalues omega[i].  The
library tracks the moments T(k) = sum_i omega[i]^k jsq[i]; T(0) is the rescaled
kernel whose size against 2 decides stability of a step.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class SingularModelError(ValueError):
    """A negative-power moment was requested with a zero eigenvalue present."""


class DivergenceError(RuntimeError):
    """The dynamics left the finite/bounded region.

    Carries .step, the step index at which the blow-up was detected.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


# blow-up thresholds for the quartic landscape (it genuinely diverges; detect early)
_Z_LIMIT = 1e6
_JSQ_LIMIT = 1e12


@dataclass(frozen=True)
class ModeState:
    z_tilde: float
    jsq: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        jsq = np.asarray(self.jsq, dtype=float)
        omega = np.asarray(self.omega, dtype=float)
        object.__setattr__(self, "jsq", jsq)
        object.__setattr__(self, "omega", omega)
        if jsq.ndim != 1 or omega.shape != jsq.shape:
            raise ValueError("jsq and omega must be 1-d arrays of equal length")
        if not (np.isfinite(self.z_tilde) and np.all(np.isfinite(jsq)) and np.all(np.isfinite(omega))):
            raise ValueError("non-finite entries in state")
        if np.any(jsq < 0):
            raise ValueError("jsq entries must be nonnegative")
        if np.any(np.diff(omega) > 0):
            raise ValueError("omega must be sorted non-increasing")


@dataclass
class Trajectory:
    """Per-step records of a mode-space run."""

    times: np.ndarray
    z_tilde: np.ndarray
    t0: np.ndarray
    loss: np.ndarray
    jsq: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def to_csv(self, path, include_jsq: bool = False):
        """Write columns step,z_tilde,T0,loss (plus jsq_i columns when requested)."""
        header = ["step", "z_tilde", "T0", "loss"]
        if include_jsq:
            if self.jsq is None:
                raise ValueError("trajectory was recorded without jsq")
            header += [f"jsq_{i}" for i in range(self.jsq.shape[1])]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(len(self.times)):
                row = [self.times[i], self.z_tilde[i], self.t0[i], self.loss[i]]
                if include_jsq:
                    row += list(self.jsq[i])
                w.writerow(row)


def t_moment(s: ModeState, k: int) -> float:
    """T(k) = sum_i omega[i]^k jsq[i]."""
    k = int(k)
    if k < 0 and np.any(s.omega == 0.0):
        raise SingularModelError("negative-power moment with a zero eigenvalue")
    return float(np.sum(s.omega**k * s.jsq))


def conserved_e(s: ModeState) -> float:
    """The step-invariant combination T(-1) - 2 z_tilde."""
    return t_moment(s, -1) - 2.0 * s.z_tilde


def gf_rhs(s: ModeState):
    """Continuous-time derivatives: d z_tilde = -z_tilde T(0), d jsq_i = -2 z_tilde omega_i jsq_i."""
    dz = -s.z_tilde * t_moment(s, 0)
    djsq = -2.0 * s.z_tilde * s.omega * s.jsq
    return dz, djsq


def _apply_jsq_floor(jsq: np.ndarray, step: int) -> np.ndarray:
    # the exact map preserves nonnegativity, so anything below roundoff scale is a bug
    m = np.min(jsq) if jsq.size else 0.0
    if m < -1e-8:
        raise RuntimeError(f"jsq went below -1e-8 at step {step}: integrator failure")
    if m < -1e-14:
        jsq = np.where(jsq < 0, 0.0, jsq)
    return jsq


def integrate_gf(s: ModeState, dt: float, steps: int, *, record_jsq: bool = False) -> Trajectory:
    """Classical fixed-step RK4 on gf_rhs, recording a snapshot every step."""
    if dt <= 0 or steps < 1:
        raise ValueError("dt must be positive and steps >= 1")
    z = s.z_tilde
    jsq = s.jsq.copy()
    om = s.omega
    n = steps + 1
    ts = np.arange(n) * dt
    zs = np.empty(n)
    t0s = np.empty(n)
    jss = np.empty((n, jsq.size)) if record_jsq else None

    def rhs(zv, jv):
        return -zv * float(np.sum(jv)), -2.0 * zv * om * jv

    for i in range(steps + 1):
        zs[i] = z
        t0s[i] = float(np.sum(jsq))
        if jss is not None:
            jss[i] = jsq
        if i == steps:
            break
        k1z, k1j = rhs(z, jsq)
        k2z, k2j = rhs(z + 0.5 * dt * k1z, jsq + 0.5 * dt * k1j)
        k3z, k3j = rhs(z + 0.5 * dt * k2z, jsq + 0.5 * dt * k2j)
        k4z, k4j = rhs(z + dt * k3z, jsq + dt * k3j)
        z = z + dt / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z)
        jsq = jsq + dt / 6.0 * (k1j + 2 * k2j + 2 * k3j + k4j)
        jsq = _apply_jsq_floor(jsq, i)
        if not (np.isfinite(z) and np.all(np.isfinite(jsq))) or abs(z) > _Z_LIMIT or np.max(jsq, initial=0.0) > _JSQ_LIMIT:
            raise DivergenceError(f"gradient flow diverged at step {i + 1}", step=i + 1)
    loss = 0.5 * zs**2
    return Trajectory(times=ts, z_tilde=zs, t0=t0s, loss=loss, jsq=jss)


def _t1_from_conserved(s: ModeState) -> float:
    """T(1) recovered from T(0) and the conserved quantity, for a two-point spectrum.

    With exactly two distinct nonzero eigenvalues (w1, w2) the moments satisfy
    T(-1) = c0 T(0) + c1 T(1) with c0 = (w1+w2)/(w1 w2), c1 = -1/(w1 w2), so
    T(1) = (E + 2 z_tilde - c0 T(0)) / c1.
    """
    vals = np.unique(s.omega)
    if np.any(vals == 0.0):
        raise SingularModelError("conserved form needs nonzero eigenvalues")
    if vals.size == 1:
        return float(vals[0]) * t_moment(s, 0)
    if vals.size != 2:
        raise ValueError("conserved form needs at most two distinct eigenvalues")
    w1, w2 = float(vals[0]), float(vals[1])
    c0 = (w1 + w2) / (w1 * w2)
    c1 = -1.0 / (w1 * w2)
    tm1 = conserved_e(s) + 2.0 * s.z_tilde
    return (tm1 - c0 * t_moment(s, 0)) / c1


def gd_step(s: ModeState, *, use_conserved_form: bool = False) -> ModeState:
    """One full-step update of (z_tilde, jsq).

    z_tilde' = z_tilde - z_tilde T(0) + (1/2) z_tilde^2 T(1)
    jsq_i'   = jsq_i (1 - z_tilde omega_i)^2

    With use_conserved_form=True the T(1) in the quadratic correction is
    recovered from the conserved quantity instead of summed directly (only
    possible for spectra with at most two distinct nonzero eigenvalues); the two
    forms agree to roundoff.
    """
    z = s.z_tilde
    t0 = t_moment(s, 0)
    t1 = _t1_from_conserved(s) if use_conserved_form else t_moment(s, 1)
    z_new = z - z * t0 + 0.5 * z * z * t1
    jsq_new = s.jsq * (1.0 - z * s.omega) ** 2
    if not (np.isfinite(z_new) and np.all(np.isfinite(jsq_new))):
        raise DivergenceError("gradient descent step overflowed", step=None)
    return ModeState(z_tilde=z_new, jsq=jsq_new, omega=s.omega)


def t_recursion_check(s: ModeState, k: int):
    """Both sides of the moment recursion T'(k) - T(k) = -z (2 T(k+1) - z T(k+2))."""
    lhs = t_moment(gd_step(s), k) - t_moment(s, k)
    z = s.z_tilde
    rhs = -z * (2.0 * t_moment(s, k + 1) - z * t_moment(s, k + 2))
    return lhs, rhs
