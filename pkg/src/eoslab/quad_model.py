"""The general D-output, P-parameter model quadratic in its parameters.

forward:  z(theta) = y + G theta + (1/2) Q(theta, theta)
jacobian: J(theta) = G + Q(theta, .)

Because z is exactly quadratic, full-batch gradient descent closes in the pair
(z, J): the theta update and the (z, J) update are the same map, and the
library exploits that for all large simulations.  The tracked curvature is the
top eigenvalue of the kernel J J^T.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from multiprocessing import Pool

import numpy as np

from .mode_space import DivergenceError
from .tensor_core import RngSpec, check_q_tensor, gaussian_tensor, mp_lambda_max_mean, sym_eigen


@dataclass(frozen=True)
class QuadModel:
    y_vec: np.ndarray
    g_mat: np.ndarray
    q_tensor: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y_vec, dtype=float)
        g = np.asarray(self.g_mat, dtype=float)
        q = check_q_tensor(self.q_tensor)
        object.__setattr__(self, "y_vec", y)
        object.__setattr__(self, "g_mat", g)
        object.__setattr__(self, "q_tensor", q)
        d, p = g.shape
        if y.shape != (d,) or q.shape != (d, p, p):
            raise ValueError(f"inconsistent dimensions: y {y.shape}, G {g.shape}, Q {q.shape}")

    @property
    def d(self) -> int:
        return self.g_mat.shape[0]

    @property
    def p(self) -> int:
        return self.g_mat.shape[1]


@dataclass(frozen=True)
class ZJState:
    z: np.ndarray
    j: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        j = np.asarray(self.j, dtype=float)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "j", j)
        if z.ndim != 1 or j.ndim != 2 or j.shape[0] != z.shape[0]:
            raise ValueError(f"inconsistent dimensions: z {z.shape}, J {j.shape}")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(j))):
            raise ValueError("non-finite entries")


@dataclass(frozen=True)
class InitSpec:
    d: int
    p: int
    sigma_z_tilde: float
    sigma_j_tilde: float
    rng: RngSpec
    alpha: float = 1.0

    def __post_init__(self):
        if self.d < 1 or self.p < 1:
            raise ValueError("d and p must be positive")
        if self.sigma_z_tilde < 0 or self.sigma_j_tilde < 0:
            raise ValueError("scales must be nonnegative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


def forward(model: QuadModel, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.p,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({model.p},)")
    q_theta = model.q_tensor @ theta        # (D, P)
    return model.y_vec + model.g_mat @ theta + 0.5 * (q_theta @ theta)


def jacobian(model: QuadModel, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.p,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({model.p},)")
    # contracting the last index equals contracting the middle one, slices being symmetric
    return model.g_mat + model.q_tensor @ theta


def gd_step_theta(model: QuadModel, theta, alpha: float) -> np.ndarray:
    """theta' = theta - alpha J(theta)^T z(theta)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    theta = np.asarray(theta, dtype=float)
    return theta - alpha * (jacobian(model, theta).T @ forward(model, theta))


def gd_step_zj(s: ZJState, q, alpha: float) -> ZJState:
    """The closed (z, J) image of one descent step:

    g  = J^T z
    z' = z - alpha J g + (1/2) alpha^2 Q(g, g)
    J' = J - alpha Q(g, .)
    """
    q = np.asarray(q, dtype=float)
    d, p = s.j.shape
    if q.shape != (d, p, p):
        raise ValueError(f"q has shape {q.shape}, expected {(d, p, p)}")
    g = s.j.T @ s.z
    m = (q.reshape(d * p, p) @ g).reshape(d, p)   # = Q(g, .), using slice symmetry
    z_new = s.z - alpha * (s.j @ g) + 0.5 * alpha * alpha * (m @ g)
    j_new = s.j - alpha * m
    return ZJState(z_new, j_new)


@dataclass
class QuadTrajectory:
    times: np.ndarray
    loss: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "loss", "lambda1", "lambda2"])
            for row in zip(self.times, self.loss, self.lambda1, self.lambda2):
                w.writerow(row)


def _gf_rhs(z, j, qm, d, p):
    g = j.T @ z
    return -(j @ g), -(qm @ g).reshape(d, p)


def _rk4_zj(z, j, qm, d, p, dt):
    k1z, k1j = _gf_rhs(z, j, qm, d, p)
    k2z, k2j = _gf_rhs(z + 0.5 * dt * k1z, j + 0.5 * dt * k1j, qm, d, p)
    k3z, k3j = _gf_rhs(z + 0.5 * dt * k2z, j + 0.5 * dt * k2j, qm, d, p)
    k4z, k4j = _gf_rhs(z + dt * k3z, j + dt * k3j, qm, d, p)
    return (
        z + dt / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z),
        j + dt / 6.0 * (k1j + 2 * k2j + 2 * k3j + k4j),
    )


def gf_integrate_zj(s: ZJState, q, dt: float, steps: int, record_every: int = 1) -> QuadTrajectory:
    """Fixed-step RK4 on the flow  dz = -J J^T z,  dJ = -Q(J^T z, .)."""
    if dt <= 0 or steps < 1:
        raise ValueError("dt must be positive and steps >= 1")
    q = np.asarray(q, dtype=float)
    d, p = s.j.shape
    qm = q.reshape(d * p, p)
    z, j = s.z.copy(), s.j.copy()
    ts, losses, l1s, l2s = [], [], [], []

    def record(i):
        lam1, _, lam2 = ntk_lambda_max(j)
        ts.append(i * dt)
        losses.append(0.5 * float(z @ z))
        l1s.append(lam1)
        l2s.append(lam2)

    record(0)
    for i in range(1, steps + 1):
        z, j = _rk4_zj(z, j, qm, d, p, dt)
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(j))) or float(z @ z) > 1e12:
            raise DivergenceError(f"gradient flow diverged at step {i}", step=i)
        if i % record_every == 0 or i == steps:
            record(i)
    return QuadTrajectory(np.array(ts), np.array(losses), np.array(l1s), np.array(l2s))


def ntk_lambda_max(j) -> tuple[float, np.ndarray, float]:
    """Top two eigenvalues (and top eigenvector) of the kernel J J^T."""
    j = np.asarray(j, dtype=float)
    ntk = j @ j.T
    w, v = sym_eigen(ntk)
    lam2 = float(w[1]) if w.size > 1 else 0.0
    return float(w[0]), v[:, 0].copy(), lam2


def init_random(spec: InitSpec) -> tuple[QuadModel, ZJState]:
    """Draw a random model at theta = 0 under the size-free scalings
    sigma_z = sigma_z_tilde / D,  sigma_J = sigma_j_tilde / (D P)^(1/4);
    Q entries are unit variance before slice symmetrization.
    """
    d, p = spec.d, spec.p
    sigma_z = spec.sigma_z_tilde / d
    sigma_j = spec.sigma_j_tilde / (d * p) ** 0.25
    gen = spec.rng.generator()
    z = gen.standard_normal(d) * sigma_z
    j = gen.standard_normal((d, p)) * sigma_j
    q = gen.standard_normal((d, p, p))
    q = (q + q.transpose(0, 2, 1)) / 2.0
    model = QuadModel(y_vec=z, g_mat=j, q_tensor=q)
    return model, ZJState(z=z.copy(), j=j.copy())


def r_nl_closed(alpha: float, sigma_z: float, d: int) -> float:
    """Size of the quadratic z-update term relative to the linear one: (1/2) alpha sigma_z D."""
    return 0.5 * alpha * sigma_z * d


def r_nl_empirical(spec: InitSpec, n_samples: int) -> float:
    """Monte-Carlo sqrt(E||quadratic term||^2 / E||linear term||^2) at initialization."""
    if n_samples < 1:
        raise ValueError("need n_samples >= 1")
    num = 0.0
    den = 0.0
    a = spec.alpha
    d, p = spec.d, spec.p
    for i in range(n_samples):
        rng_i = RngSpec(spec.rng.seed, spec.rng.stream_id + i)
        model, st = init_random(InitSpec(d, p, spec.sigma_z_tilde, spec.sigma_j_tilde, rng_i, spec.alpha))
        g = st.j.T @ st.z
        quad = 0.5 * a * a * ((model.q_tensor.reshape(d * p, p) @ g).reshape(d, p) @ g)
        lin = a * (st.j @ (st.j.T @ st.z))
        num += float(quad @ quad)
        den += float(lin @ lin)
    return math.sqrt(num / den)


@dataclass
class SharpeningStats:
    """Ensemble statistics of the curvature and its first two time derivatives at t=0."""

    n_seeds: int
    n_used: int
    n_discarded: int
    fd_dt: float
    mean_lambda: float
    mean_ldot: float
    se_ldot: float
    mean_lddot: float
    se_lddot: float

    @property
    def ratio(self) -> float:
        return self.mean_lddot / self.mean_lambda


def lambda_ddot_closed_form(d: int, p: int, sigma_z: float, sigma_j: float) -> float:
    """Ensemble mean of the second time derivative of the top kernel eigenvalue at init:
    sigma_z^2 sigma_j^2 D P (P (1 + sqrt(D/P))^2 + 1).
    """
    return sigma_z**2 * sigma_j**2 * d * p * (p * (1.0 + (d / p) ** 0.5) ** 2 + 1.0)


def sharpening_stats(
    d: int,
    p: int,
    sigma_z: float,
    sigma_j: float,
    n_seeds: int,
    fd_dt: float | None = None,
    base_rng: RngSpec | None = None,
) -> SharpeningStats:
    """Estimate mean lambda_max(0), lambda_dot(0), lambda_ddot(0) over random draws.

    Per seed, the flow is integrated two RK4 steps forward and two backward with
    spacing fd_dt and the derivatives come from 5-point central differences of
    lambda_max(t).  Seeds whose top-two eigenvalue gap falls below
    10*fd_dt*|lambda_dot| are discarded (eigenvalue-crossing risk) and counted.
    """
    if base_rng is None:
        base_rng = RngSpec(0, 0)
    if fd_dt is None:
        ref = mp_lambda_max_mean(d, p, sigma_j)
        fd_dt = 1e-4 / ref if ref > 0 else 1e-6
    h = float(fd_dt)
    ldots = []
    lddots = []
    lams = []
    n_discarded = 0
    for i in range(n_seeds):
        gen = RngSpec(base_rng.seed, base_rng.stream_id + i).generator()
        z0 = gen.standard_normal(d) * sigma_z
        j0 = gen.standard_normal((d, p)) * sigma_j
        q = gen.standard_normal((d, p, p))
        q = (q + q.transpose(0, 2, 1)) / 2.0
        qm = q.reshape(d * p, p)

        lam = np.empty(5)  # lambda at t = -2h, -h, 0, +h, +2h
        lam0, _, lam0_2 = ntk_lambda_max(j0)
        lam[2] = lam0
        z, j = z0, j0
        for idx in (3, 4):
            z, j = _rk4_zj(z, j, qm, d, p, h)
            lam[idx] = ntk_lambda_max(j)[0]
        z, j = z0, j0
        for idx in (1, 0):
            z, j = _rk4_zj(z, j, qm, d, p, -h)
            lam[idx] = ntk_lambda_max(j)[0]

        # grouped as differences/sums so equal stencil values cancel exactly
        ldot = (8.0 * (lam[3] - lam[1]) - (lam[4] - lam[0])) / (12 * h)
        lddot = (16.0 * (lam[3] + lam[1]) - (lam[4] + lam[0]) - 30.0 * lam[2]) / (12 * h * h)
        if lam0 - lam0_2 < 10.0 * h * abs(ldot):
            n_discarded += 1
            continue
        lams.append(lam0)
        ldots.append(ldot)
        lddots.append(lddot)

    ldots = np.array(ldots)
    lddots = np.array(lddots)
    n_used = len(ldots)
    if n_used == 0:
        raise RuntimeError("all seeds discarded")
    se = lambda arr: float(np.std(arr, ddof=1) / np.sqrt(len(arr))) if len(arr) > 1 else math.inf
    return SharpeningStats(
        n_seeds=n_seeds,
        n_used=n_used,
        n_discarded=n_discarded,
        fd_dt=h,
        mean_lambda=float(np.mean(lams)),
        mean_ldot=float(np.mean(ldots)),
        se_ldot=se(ldots),
        mean_lddot=float(np.mean(lddots)),
        se_lddot=se(lddots),
    )


def task_rng(base_seed: int, cell_index: int, seed_index: int) -> RngSpec:
    """Injective (cell, seed) -> stream mapping so sweep tasks never share randomness."""
    if cell_index < 0 or seed_index < 0 or seed_index >= 2**32:
        raise ValueError("need cell_index >= 0 and 0 <= seed_index < 2**32")
    return RngSpec(base_seed, cell_index * 2**32 + seed_index)


@dataclass
class CellRecord:
    sigma_z_tilde: float
    sigma_j_tilde: float
    d: int
    p: int
    n_seeds: int
    n_converged: int
    n_diverged: int
    n_stalled: int
    median_lambda_max: float | None  # over converged seeds; None when none converged
    median_lambda_init: float


def _run_sweep_seed(d, p, sz, sj, alpha, max_steps, rng: RngSpec):
    model, st = init_random(InitSpec(d, p, sz, sj, rng, alpha))
    q = model.q_tensor
    qm = q.reshape(d * p, p)
    z, j = st.z, st.j
    lam_init = ntk_lambda_max(j)[0]
    z0n = math.sqrt(float(z @ z))
    if z0n < 1e-8:
        return "converged", lam_init, lam_init, 0
    blow = 1e6 * z0n
    verdict = "stalled"
    steps = max_steps
    for t in range(max_steps):
        g = j.T @ z
        m = (qm @ g).reshape(d, p)
        z = z - alpha * (j @ g) + 0.5 * alpha * alpha * (m @ g)
        j = j - alpha * m
        zn = float(z @ z) ** 0.5
        if not math.isfinite(zn) or zn > blow:
            return "diverged", math.nan, lam_init, t + 1
        if zn < 1e-8:
            verdict = "converged"
            steps = t + 1
            break
    return verdict, ntk_lambda_max(j)[0], lam_init, steps


def _sweep_worker(args):
    (cell_index, seed_index, d, p, sz, sj, alpha, max_steps, base_seed) = args
    rng = task_rng(base_seed, cell_index, seed_index)
    verdict, lam_final, lam_init, steps = _run_sweep_seed(d, p, sz, sj, alpha, max_steps, rng)
    return cell_index, seed_index, verdict, lam_final, lam_init, steps


def phase_sweep(
    sigma_z_tilde_values,
    sigma_j_tilde_values,
    d: int,
    p: int,
    n_seeds: int,
    max_steps: int,
    base_seed: int = 0,
    alpha: float = 1.0,
    n_workers: int = 1,
) -> list[CellRecord]:
    """Grid of initialization scales, n_seeds descent runs per cell.

    Convergence: ||z|| < 1e-8.  Divergence: ||z|| > 1e6 * initial or non-finite.
    Budget exhaustion: stalled (excluded from the converged median, counted).
    Cells are row-major over (sigma_z_tilde, sigma_j_tilde); results are
    deterministic in base_seed and independent of worker count.
    """
    szs = [float(v) for v in sigma_z_tilde_values]
    sjs = [float(v) for v in sigma_j_tilde_values]
    if not szs or not sjs:
        raise ValueError("grid must be nonempty")
    tasks = []
    cells = []
    for ci, (sz, sj) in enumerate((a, b) for a in szs for b in sjs):
        cells.append((sz, sj))
        for si in range(n_seeds):
            tasks.append((ci, si, d, p, sz, sj, alpha, max_steps, base_seed))
    if n_workers > 1:
        with Pool(processes=n_workers) as pool:
            results = pool.map(_sweep_worker, tasks, chunksize=1)
    else:
        results = [_sweep_worker(t) for t in tasks]

    by_cell: dict[int, list] = {}
    for cell_index, seed_index, verdict, lam_final, lam_init, steps in results:
        by_cell.setdefault(cell_index, []).append((seed_index, verdict, lam_final, lam_init))
    records = []
    for ci, (sz, sj) in enumerate(cells):
        rows = sorted(by_cell.get(ci, []))
        conv = [lam for _, v, lam, _ in rows if v == "converged"]
        ndiv = sum(1 for _, v, _, _ in rows if v == "diverged")
        nstall = sum(1 for _, v, _, _ in rows if v == "stalled")
        records.append(
            CellRecord(
                sigma_z_tilde=sz,
                sigma_j_tilde=sj,
                d=d,
                p=p,
                n_seeds=n_seeds,
                n_converged=len(conv),
                n_diverged=ndiv,
                n_stalled=nstall,
                median_lambda_max=float(np.median(conv)) if conv else None,
                median_lambda_init=float(np.median([li for _, _, _, li in rows])),
            )
        )
    return records
