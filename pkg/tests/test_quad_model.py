"""Full quadratic regression model: closures, NTK tracking, init statistics, sweeps."""
import math

import numpy as np
import pytest

from eoslab import mode_space
from eoslab.mode_space import DivergenceError
from eoslab.quad_model import (
    CellRecord,
    InitSpec,
    QuadModel,
    ZJState,
    forward,
    gd_step_theta,
    gd_step_zj,
    gf_integrate_zj,
    init_random,
    jacobian,
    lambda_ddot_closed_form,
    ntk_lambda_max,
    phase_sweep,
    r_nl_closed,
    r_nl_empirical,
    sharpening_stats,
    task_rng,
)
from eoslab.tensor_core import RngSpec, gaussian_tensor, mp_lambda_max_mean


def _random_model(seed, d=5, p=7, scale=0.3):
    g = RngSpec(seed, 900).generator()
    y = g.standard_normal(d) * scale
    gm = g.standard_normal((d, p)) * scale
    q = gaussian_tensor((d, p, p), scale, RngSpec(seed, 901), symmetrize_slices=True)
    theta = g.standard_normal(p) * scale
    return QuadModel(y_vec=y, g_mat=gm, q_tensor=q), theta


EX_MODEL = QuadModel(
    y_vec=np.array([0.0]),
    g_mat=np.array([[1.0, 0.0]]),
    q_tensor=np.array([[[1.0, 0.0], [0.0, -1.0]]]),
)


# ---------------------------------------------------------------- forward / jacobian

def test_forward_examples():
    assert forward(EX_MODEL, np.zeros(2)) == pytest.approx([0.0], abs=0)
    assert forward(EX_MODEL, np.array([1.0, 1.0])) == pytest.approx([1.0], abs=1e-15)


def test_jacobian_examples():
    assert np.array_equal(jacobian(EX_MODEL, np.zeros(2)), EX_MODEL.g_mat)
    jac = jacobian(EX_MODEL, np.array([1.0, 1.0]))
    assert np.allclose(jac, [[2.0, -1.0]], atol=1e-15, rtol=0)


def test_jacobian_matches_finite_differences():
    model, theta = _random_model(3, d=6, p=8)
    jac = jacobian(model, theta)
    h = 1e-6
    fd = np.empty_like(jac)
    for k in range(8):
        e = np.zeros(8)
        e[k] = h
        fd[:, k] = (forward(model, theta + e) - forward(model, theta - e)) / (2 * h)
    assert np.max(np.abs(fd - jac)) <= 1e-6 * max(1.0, np.max(np.abs(jac)))


# ---------------------------------------------------------------- GD closures

def test_gd_step_theta_scalar_example():
    model = QuadModel(y_vec=np.array([0.0]), g_mat=np.array([[1.0]]), q_tensor=np.zeros((1, 1, 1)))
    theta = gd_step_theta(model, np.array([1.0]), 0.5)
    assert theta == pytest.approx([0.5], abs=0)


def test_gd_step_theta_stationary_at_zero_residual():
    model, theta = _random_model(8)
    z = forward(model, theta)
    model0 = QuadModel(y_vec=model.y_vec - z, g_mat=model.g_mat, q_tensor=model.q_tensor)
    assert np.max(np.abs(forward(model0, theta))) <= 1e-15
    assert np.max(np.abs(gd_step_theta(model0, theta, 0.3) - theta)) <= 1e-15


def test_theta_vs_zj_equivalence_100_steps():
    """The (z, J) closure reproduces parameter-space GD exactly, step for step."""
    model, theta = _random_model(17)
    alpha = 0.05
    st = ZJState(z=forward(model, theta), j=jacobian(model, theta))
    for _ in range(100):
        theta = gd_step_theta(model, theta, alpha)
        st = gd_step_zj(st, model.q_tensor, alpha)
        z_ref = forward(model, theta)
        j_ref = jacobian(model, theta)
        scale = max(1.0, float(np.max(np.abs(z_ref))))
        assert np.max(np.abs(st.z - z_ref)) <= 1e-12 * scale
        assert np.max(np.abs(st.j - j_ref)) <= 1e-12 * max(1.0, float(np.max(np.abs(j_ref))))


def test_zero_q_linear_theory():
    # with q = 0 the residual moves by (I - alpha J J^T): eigenmodes contract iff lambda < 2/alpha
    g = RngSpec(4, 0).generator()
    u, _ = np.linalg.qr(g.standard_normal((4, 4)))
    v, _ = np.linalg.qr(g.standard_normal((5, 4)))
    q0 = np.zeros((4, 5, 5))

    def run(svals, steps=30):
        j = u @ np.diag(svals) @ v.T
        st = ZJState(z=g.standard_normal(4), j=j)
        comps = [np.abs(u.T @ st.z)]
        for _ in range(steps):
            st = gd_step_zj(st, q0, 1.0)
            assert np.array_equal(st.j, j)  # features frozen
            comps.append(np.abs(u.T @ st.z))
        return np.array(comps)

    c = run(np.sqrt([1.69, 0.9, 0.5, 0.2]))
    assert np.all(np.diff(c, axis=0) <= 1e-14)  # every mode contracts
    c2 = run(np.sqrt([2.5, 0.9, 0.5, 0.2]))
    assert c2[-1, 0] > c2[0, 0] * 10  # the super-critical mode grows


def test_d1_diagonal_matches_mode_space():
    """D=1 diagonal-Q models are the eigenbasis dynamics after z~ = alpha z, jsq = alpha J^2."""
    alpha = 0.7
    qd = np.array([1.0, 0.8, 0.3, -0.2, -0.6])
    g = RngSpec(23, 0).generator()
    j_row = g.uniform(0.3, 0.7, 5)
    z0 = 0.3
    model = QuadModel(
        y_vec=np.array([z0]),
        g_mat=j_row[None, :],
        q_tensor=np.diag(qd)[None, :, :],
    )
    st = ZJState(z=np.array([z0]), j=j_row[None, :].copy())
    ms = mode_space.ModeState(z_tilde=alpha * z0, jsq=alpha * j_row**2, omega=qd)
    for _ in range(100):
        st = gd_step_zj(st, model.q_tensor, alpha)
        ms = mode_space.gd_step(ms)
        assert abs(alpha * float(st.z[0]) - ms.z_tilde) <= 1e-10
        assert np.max(np.abs(alpha * st.j[0] ** 2 - ms.jsq)) <= 1e-10


def test_rotation_invariance():
    model, theta = _random_model(29, d=4, p=6)
    g = RngSpec(29, 902).generator()
    r, _ = np.linalg.qr(g.standard_normal((6, 6)))
    q_rot = np.einsum("ai,kij,bj->kab", r, model.q_tensor, r)
    q_rot = (q_rot + q_rot.transpose(0, 2, 1)) / 2  # kill the ~1e-16 einsum asymmetry
    model_rot = QuadModel(
        y_vec=model.y_vec,
        g_mat=model.g_mat @ r.T,
        q_tensor=q_rot,
    )
    th1, th2 = theta.copy(), r @ theta
    for _ in range(50):
        th1 = gd_step_theta(model, th1, 0.1)
        th2 = gd_step_theta(model_rot, th2, 0.1)
        z1, z2 = forward(model, th1), forward(model_rot, th2)
        assert np.max(np.abs(z1 - z2)) <= 1e-10
        l1 = ntk_lambda_max(jacobian(model, th1))[0]
        l2 = ntk_lambda_max(jacobian(model_rot, th2))[0]
        assert abs(l1 - l2) <= 1e-10 * max(1.0, l1)


# ---------------------------------------------------------------- gradient flow

def test_gf_loss_monotone():
    model, theta = _random_model(31)
    st = ZJState(z=forward(model, theta), j=jacobian(model, theta))
    traj = gf_integrate_zj(st, model.q_tensor, 1e-3, 200)
    assert np.all(np.diff(traj.loss) <= 1e-12)
    assert len(traj.times) == 201


def test_gf_record_every():
    model, theta = _random_model(31)
    st = ZJState(z=forward(model, theta), j=jacobian(model, theta))
    traj = gf_integrate_zj(st, model.q_tensor, 1e-3, 200, record_every=50)
    assert np.allclose(traj.times, [0.0, 0.05, 0.1, 0.15, 0.2])


def test_gf_divergence_detected():
    # dt * lambda far beyond the RK4 stability region: the discrete flow explodes
    st = ZJState(z=np.ones(4), j=100.0 * np.eye(4))
    with pytest.raises(DivergenceError):
        gf_integrate_zj(st, np.zeros((4, 4, 4)), 1e-3, 200)


# ---------------------------------------------------------------- NTK

def test_ntk_identity_and_d1():
    lam1, v1, lam2 = ntk_lambda_max(np.eye(4))
    assert lam1 == pytest.approx(1.0, abs=1e-14)
    assert lam2 == pytest.approx(1.0, abs=1e-14)
    j_row = np.array([[0.6, 0.8, 0.0]])
    lam1, v1, lam2 = ntk_lambda_max(j_row)
    assert lam1 == pytest.approx(1.0, abs=1e-14)  # ||J||^2
    assert lam2 == 0.0
    # consistency with the eigenbasis T(0) bookkeeping: T(0) = alpha ||J||^2
    alpha = 0.7
    ms = mode_space.ModeState(z_tilde=0.0, jsq=alpha * j_row[0] ** 2, omega=np.array([1.0, 0.5, 0.2]))
    assert mode_space.t_moment(ms, 0) == pytest.approx(alpha * lam1, abs=1e-14)


def test_ntk_matches_power_iteration():
    g = RngSpec(9, 0).generator()
    j = g.standard_normal((12, 20)) * 0.3
    lam1, v1, _ = ntk_lambda_max(j)
    b = j @ j.T
    v = np.ones(12) / math.sqrt(12.0)
    for _ in range(5000):
        v = b @ v
        v /= np.linalg.norm(v)
    lam_pi = float(v @ b @ v)
    assert abs(lam1 - lam_pi) <= 1e-8 * lam_pi
    assert abs(abs(v @ v1) - 1.0) <= 1e-6


# ---------------------------------------------------------------- initialization

def test_init_random_zero_sigma_z():
    model, st = init_random(InitSpec(6, 12, 0.0, 0.5, RngSpec(1, 0)))
    assert np.array_equal(st.z, np.zeros(6))
    assert np.array_equal(model.y_vec, np.zeros(6))


def test_init_random_deterministic():
    spec = InitSpec(6, 12, 0.4, 0.9, RngSpec(88, 3))
    m1, s1 = init_random(spec)
    m2, s2 = init_random(spec)
    assert np.array_equal(s1.z, s2.z)
    assert np.array_equal(s1.j, s2.j)
    assert np.array_equal(m1.q_tensor, m2.q_tensor)
    m3, s3 = init_random(InitSpec(6, 12, 0.4, 0.9, RngSpec(88, 4)))
    assert not np.array_equal(s1.z, s3.z)


def test_init_random_z_second_moment():
    # sigma_z = sigma_z_tilde / D, so E||z||^2 = D sigma_z^2 = 1/D at tilde = 1
    acc = 0.0
    n = 150
    for i in range(n):
        _, st = init_random(InitSpec(60, 120, 1.0, 1.0, RngSpec(77, i)))
        acc += float(st.z @ st.z)
    assert acc / n == pytest.approx(1.0 / 60.0, rel=0.10)


def test_init_random_q_statistics():
    model, _ = init_random(InitSpec(12, 24, 1.0, 1.0, RngSpec(5, 0)))
    q = model.q_tensor
    assert np.array_equal(q, q.transpose(0, 2, 1))
    off = ~np.eye(24, dtype=bool)
    assert float(q[:, off].var()) == pytest.approx(0.5, rel=0.10)
    diag = q[:, np.arange(24), np.arange(24)]
    assert float(diag.var()) == pytest.approx(1.0, rel=0.25)


# ---------------------------------------------------------------- nonlinearity ratio

def test_r_nl_closed_examples():
    assert r_nl_closed(1.0, 0.02, 60) == pytest.approx(0.6, abs=1e-15)
    assert r_nl_closed(1.0, 0.0, 60) == 0.0


def test_r_nl_empirical_finite_size_band():
    """Measured update-norm ratio sits in a stable band below the asymptotic closed
    form at D=64, P=128 (about 0.83 of it; see the sweep docs)."""
    sz = 1.0 / 64.0
    spec = InitSpec(64, 128, sz * 64, 1.0, RngSpec(2024, 2**32))
    emp = r_nl_empirical(spec, 150)
    assert 0.70 <= emp / r_nl_closed(1.0, sz, 64) <= 0.95


# ---------------------------------------------------------------- curvature statistics

def test_lambda_ddot_closed_form_values():
    sj = (60 * 120) ** -0.25
    assert lambda_ddot_closed_form(60, 120, 0.25, sj) == pytest.approx(1859.897455460738, rel=1e-12)
    assert lambda_ddot_closed_form(60, 120, 0.5, sj) == pytest.approx(7439.589821842952, rel=1e-12)
    assert lambda_ddot_closed_form(60, 120, 1.0, sj) == pytest.approx(29758.359287371808, rel=1e-12)


def test_sharpening_stats_zero_sigma_z_exact():
    stats = sharpening_stats(12, 24, 0.0, 0.2, 6)
    assert stats.mean_ldot == 0.0 and stats.se_ldot == 0.0
    assert stats.mean_lddot == 0.0 and stats.se_lddot == 0.0
    assert stats.ratio == 0.0
    assert stats.n_used == 6 and stats.n_discarded == 0
    assert stats.mean_lambda == pytest.approx(mp_lambda_max_mean(12, 24, 0.2), rel=0.5)


def test_sharpening_stats_smoke():
    stats = sharpening_stats(12, 24, 0.3, 0.2, 10, base_rng=RngSpec(6, 0))
    assert stats.n_used + stats.n_discarded == 10
    assert stats.fd_dt > 0
    assert math.isfinite(stats.mean_ldot) and math.isfinite(stats.mean_lddot)
    assert stats.mean_lambda > 0


# ---------------------------------------------------------------- sweeps

def test_task_rng():
    assert task_rng(7, 0, 0) == task_rng(7, 0, 0)
    assert task_rng(7, 0, 0) != task_rng(7, 0, 1)
    assert task_rng(7, 1, 0).stream_id == 2**32
    with pytest.raises(ValueError):
        task_rng(7, 0, 2**32)


def test_phase_sweep_smoke_and_worker_invariance():
    szs = [0.4, 2.5]
    sjs = [math.sqrt(0.1)]
    kw = dict(d=6, p=12, n_seeds=3, max_steps=8000, base_seed=0, alpha=1.0)
    recs1 = phase_sweep(szs, sjs, n_workers=1, **kw)
    recs2 = phase_sweep(szs, sjs, n_workers=2, **kw)
    assert recs1 == recs2  # per-task seeding: worker count cannot matter
    assert [(r.sigma_z_tilde, r.sigma_j_tilde) for r in recs1] == [(0.4, sjs[0]), (2.5, sjs[0])]
    for r in recs1:
        assert isinstance(r, CellRecord)
        assert r.n_converged + r.n_diverged + r.n_stalled == r.n_seeds == 3
        assert r.median_lambda_init > 0
        if r.n_converged == 0:
            assert r.median_lambda_max is None
        else:
            assert r.median_lambda_max > 0
    # the small-sigma_z cell converges, the large one diverges
    assert recs1[0].n_converged == 3
    assert recs1[1].n_diverged == 3
