"""One-hidden-layer linear network on a single input, packed into the quadratic model.

The network f = v^T U x is bilinear in its weights, so it IS its own
second-order expansion: with theta = (v, vec(U)) the packed model has y = 0,
G = 0, and a constant curvature tensor whose nonzero entries couple v_i with
row i of U.  Its spectrum is +-||x|| (each with the hidden width's
multiplicity), the rest zeros, which puts the dynamics in the symmetric
two-mode class with vanishing conserved constant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quad_model import QuadModel, forward, jacobian
from .tensor_core import sym_eigen


@dataclass(frozen=True)
class LinearNetSpec:
    x: np.ndarray
    k: int
    v0: np.ndarray
    u0: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v0 = np.asarray(self.v0, dtype=float)
        u0 = np.asarray(self.u0, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v0", v0)
        object.__setattr__(self, "u0", u0)
        if x.ndim != 1 or x.size == 0:
            raise ValueError("x must be a nonempty vector")
        if float(x @ x) == 0.0:
            raise ValueError("x must be nonzero for a nondegenerate reduction")
        if self.k < 1 or v0.shape != (self.k,) or u0.shape != (self.k, x.size):
            raise ValueError("inconsistent shapes for (x, k, v0, u0)")

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def n_params(self) -> int:
        return self.k * (self.n + 1)


def pack_theta(spec: LinearNetSpec) -> np.ndarray:
    """theta = (v_1..v_K, U row-major)."""
    return np.concatenate([spec.v0, spec.u0.ravel()])


def build_quad_model(spec: LinearNetSpec) -> tuple[QuadModel, np.ndarray]:
    """The packed model (D=1, P=K(N+1)) and theta0.

    The only curvature entries are d^2 f / dv_i dU[i, j] = x[j], mirrored for
    symmetry, so (1/2) theta^T Q theta = v^T U x recovers the network output.
    """
    k, n = spec.k, spec.n
    p = spec.n_params
    q = np.zeros((1, p, p))
    for i in range(k):
        row = k + i * n
        q[0, i, row:row + n] = spec.x
        q[0, row:row + n, i] = spec.x
    model = QuadModel(y_vec=np.zeros(1), g_mat=np.zeros((1, p)), q_tensor=q)
    return model, pack_theta(spec)


@dataclass
class SpectrumPrediction:
    omega_plus: float
    omega_minus: float
    mult_plus: int
    mult_minus: int
    n_zero: int

    def as_sorted_array(self) -> np.ndarray:
        vals = [self.omega_plus] * self.mult_plus + [0.0] * self.n_zero + [self.omega_minus] * self.mult_minus
        return np.sort(np.array(vals))[::-1]


def predicted_spectrum(spec: LinearNetSpec) -> SpectrumPrediction:
    """Closed form: +-||x|| with multiplicity K each, and K(N-1) zero modes."""
    w = math.sqrt(float(spec.x @ spec.x))
    return SpectrumPrediction(
        omega_plus=w,
        omega_minus=-w,
        mult_plus=spec.k,
        mult_minus=spec.k,
        n_zero=spec.k * (spec.n - 1),
    )


def verify_spectrum(spec: LinearNetSpec) -> float:
    """Max abs difference between the packed tensor's spectrum and the prediction."""
    model, _ = build_quad_model(spec)
    w, _ = sym_eigen(model.q_tensor[0])
    return float(np.max(np.abs(w - predicted_spectrum(spec).as_sorted_array())))


def catapult_invariant(spec: LinearNetSpec, theta) -> float:
    """Residual of  (J_+^2 - J_-^2) / omega - 2 f  at the given packed parameters.

    J_+^2 / J_-^2 are the squared Jacobian projections onto the +-||x||
    eigenspaces.  The residual vanishing is what makes the reduced two-mode
    constant E exactly zero for these networks.
    """
    model, _ = build_quad_model(spec)
    theta = np.asarray(theta, dtype=float)
    f = float(forward(model, theta)[0])
    jac = jacobian(model, theta)[0]
    w, vecs = sym_eigen(model.q_tensor[0])
    omega = predicted_spectrum(spec).omega_plus
    proj = jac @ vecs
    j_plus_sq = float(np.sum(proj[np.abs(w - omega) < 1e-8 * max(omega, 1.0)] ** 2))
    j_minus_sq = float(np.sum(proj[np.abs(w + omega) < 1e-8 * max(omega, 1.0)] ** 2))
    return (j_plus_sq - j_minus_sq) / omega - 2.0 * f


def raw_gd_step(x, v, u, alpha: float):
    """One descent step on the raw network weights for loss (1/2)(v^T U x)^2."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    z = float(v @ (u @ x))
    return v - alpha * z * (u @ x), u - alpha * z * np.outer(v, x)
