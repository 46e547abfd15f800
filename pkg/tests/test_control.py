import numpy as np
import pytest

from maquette.control import (
    DampingModel,
    EnergyLedger,
    ResolvedPort,
    SingularCoupledSystemError,
    TaskPort,
    coupled_assemble,
    coupled_velocity,
    external_port_power,
    integrate_pose,
    internal_port_report,
    internal_torque,
    nullspace_projector,
    passivity_check,
    pd_wrench,
    projection_passivity_witness,
)
from maquette.transforms import Pose, quat_from_axis_angle, quat_normalize, vec3

rng = np.random.default_rng(42)


def random_spd(n, r):
    m = r.normal(size=(n, n))
    return m @ m.T + n * np.eye(n)


def port_1d(J, k, b, e, vd=0.0):
    return ResolvedPort("p", np.atleast_2d(J), np.atleast_2d(k),
                        np.atleast_2d(b), np.atleast_1d(e), np.atleast_1d(vd))


# --- damped-spring wrench ----------------------------------------------------

def make_port(K=None, B=None, target=None):
    return TaskPort("hand", "hand",
                    np.eye(6) if K is None else K,
                    np.zeros((6, 6)) if B is None else B,
                    Pose.identity() if target is None else target)


def test_pd_wrench_zero_at_target():
    port = make_port()
    assert np.allclose(pd_wrench(port, Pose.identity(), np.zeros(6)), 0.0)


def test_pd_wrench_spring_law():
    port = make_port(target=Pose(vec3(3, 0, 0), np.array([1.0, 0, 0, 0])))
    w = pd_wrench(port, Pose.identity(), np.zeros(6))
    assert np.allclose(w, [3, 0, 0, 0, 0, 0])


def test_pd_wrench_matches_direct_evaluation():
    for _ in range(50):
        K = random_spd(6, rng)
        B = random_spd(6, rng)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        target = Pose(rng.normal(size=3), quat_from_axis_angle(axis, rng.uniform(0, 2)))
        pose = Pose(rng.normal(size=3), quat_normalize(rng.normal(size=4)))
        twist = rng.normal(size=6)
        vd = rng.normal(size=6)
        port = TaskPort("p", "f", K, B, target, vd)
        got = pd_wrench(port, pose, twist)
        from maquette.transforms import pose_error

        want = K @ pose_error(target, pose) + B @ (vd - twist)
        assert np.allclose(got, want, atol=1e-12)


def test_port_gain_validation():
    with pytest.raises(ValueError, match="symmetric"):
        TaskPort("p", "f", np.triu(np.ones((6, 6))), np.zeros((6, 6)),
                 Pose.identity())


# --- coupled velocity ----------------------------------------------------------

def test_coupled_velocity_scalar_case():
    qdot = coupled_velocity(np.array([[1.0]]), [port_1d(1.0, 2.0, 1.0, 3.0)])
    assert qdot[0] == pytest.approx(3.0)


def test_coupled_velocity_zero_error():
    qdot = coupled_velocity(np.eye(3), [ResolvedPort(
        "p", np.eye(3), np.eye(3) * 5, np.eye(3), np.zeros(3), np.zeros(3))])
    assert np.allclose(qdot, 0.0)


def test_coupled_velocity_matches_dense_solve_oracle():
    for _ in range(1000):
        n = int(rng.integers(2, 5))
        B = random_spd(n, rng)
        ports = []
        for _ in range(int(rng.integers(1, 3))):
            k = int(rng.integers(1, 4))
            ports.append(ResolvedPort(
                "p", rng.normal(size=(k, n)), random_spd(k, rng),
                random_spd(k, rng), rng.normal(size=k), rng.normal(size=k)))
        qdot = coupled_velocity(B, ports)
        system = B.copy()
        rhs = np.zeros(n)
        for p in ports:
            system += p.jacobian.T @ p.damping @ p.jacobian
            rhs += p.jacobian.T @ (p.stiffness @ p.error
                                   + p.damping @ p.target_twist)
        assert np.allclose(qdot, np.linalg.solve(system, rhs), atol=1e-10)
        assert np.linalg.norm(system @ qdot - rhs) < 1e-10 * max(
            1.0, np.linalg.norm(rhs))


def test_coupled_velocity_singular_names_rank_condition():
    B = np.zeros((2, 2))
    port = port_1d(np.array([[1.0, 0.0]]), 1.0, 0.0, 1.0)
    with pytest.raises(SingularCoupledSystemError, match="full rank"):
        coupled_velocity(B, [port])


def test_coupled_spring_decay_matches_analytic():
    # spring k through a unit Jacobian on a damped joint: q(t) = q0 e^(-k t / b)
    b, k, q0, dt, t_end = 2.0, 3.0, 1.0, 1e-4, 1.0
    q = q0
    steps = int(t_end / dt)
    for _ in range(steps):
        qdot = coupled_velocity(np.array([[b]]),
                                [port_1d(1.0, k, 0.0, -q)])
        q += qdot[0] * dt
    assert q == pytest.approx(q0 * np.exp(-k * t_end / b), abs=5 * dt)


# --- integrator -----------------------------------------------------------------

def test_integrate_zero_twist_is_identity():
    pose = Pose(vec3(1, 2, 3), quat_from_axis_angle(vec3(0, 0, 1), 0.4))
    out = integrate_pose(pose, np.zeros(6), 0.01)
    assert np.allclose(out.position, pose.position)
    assert np.allclose(out.orientation, pose.orientation)


def test_integrate_quarter_turn():
    pose = Pose.identity()
    out = integrate_pose(pose, np.array([0, 0, 0, 0, 0, np.pi]), 0.5)
    assert np.allclose(out.transform_direction(vec3(1, 0, 0)), vec3(0, 1, 0),
                       atol=1e-12)


def test_integrate_preserves_unit_norm_over_many_steps():
    pose = Pose.identity()
    twist = np.array([0.0, 0, 0, 0.3, -0.2, 0.9])
    for _ in range(100_000):
        pose = integrate_pose(pose, twist, 1e-3)
    assert abs(np.linalg.norm(pose.orientation) - 1.0) < 1e-9


# --- ledger and plant passivity ---------------------------------------------------

def test_passivity_check_trivial_cases():
    ledger = EnergyLedger()
    assert passivity_check(ledger).passed
    ledger.port_work["p"] = -ledger.budget_sq - 1.0
    report = passivity_check(ledger, "p")
    assert not report.passed
    assert report.deficit == pytest.approx(1.0, abs=1e-8)


def test_uncontrolled_plant_port_is_passive():
    # any torque history into B qdot = torque dissipates
    for _ in range(100):
        n = int(rng.integers(1, 4))
        B = random_spd(n, rng)
        B_inv = np.linalg.inv(B)
        ledger = EnergyLedger()
        dt = 1e-3
        for _ in range(200):
            torque = rng.normal(size=n) * 5.0
            qdot = B_inv @ torque
            power = float(torque @ qdot)
            ledger.add_sample({"joint": power}, float(qdot @ B @ qdot), dt)
        assert ledger.port_work["joint"] >= -1e-9
        assert ledger.dissipation >= -1e-9
        assert ledger.port_work["joint"] == pytest.approx(ledger.dissipation,
                                                          rel=1e-9)


# --- null-space projector -----------------------------------------------------------

def test_projector_simple_kernel():
    P = nullspace_projector(np.array([[1.0, 0.0]]), np.eye(2))
    assert np.allclose(P, np.diag([0.0, 1.0]), atol=1e-12)


def test_projector_full_rank_square_is_zero():
    J = rng.normal(size=(3, 3)) + 3 * np.eye(3)
    P = nullspace_projector(J, np.eye(3))
    assert np.allclose(P, 0.0, atol=1e-10)


def test_projector_random_draws_against_svd_oracle():
    for _ in range(1000):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, n))
        J = rng.normal(size=(m, n))
        B = random_spd(n, rng)
        P = nullspace_projector(J, B)
        A = J @ np.linalg.inv(B)
        # kernel property and idempotence
        assert np.abs(A @ P).max() < 1e-10
        assert np.abs(P @ P - P).max() < 1e-10
        # SVD-built orthogonal projector onto Ker(A)
        _, s, vt = np.linalg.svd(A)
        rank = int((s > 1e-12 * s.max()).sum())
        basis = vt[rank:].T
        assert np.allclose(P, basis @ basis.T, atol=1e-9)


# --- the projection-breaks-passivity witness ------------------------------------------

def test_witness_reproduces_reference_construction():
    w = projection_passivity_witness(np.array([[1.0, 0.0]]), np.eye(2))
    assert w.second_wrench == pytest.approx(2.0)
    assert np.allclose(w.first_wrench, [-1.0])
    assert np.allclose(w.qdot, [-1.0, 0.0])
    assert np.allclose(w.first_velocity, [-1.0])
    assert w.second_velocity == pytest.approx(-1.0)
    assert w.power == pytest.approx(-1.0)
    assert w.coupling_norm > 1e-9
    assert w.balance_residual < 1e-9
    assert w.masking_residual < 1e-9


def test_witness_power_scales_quadratically():
    base = projection_passivity_witness(np.array([[1.0, 0.0]]), np.eye(2), load=2.0)
    scaled = projection_passivity_witness(np.array([[1.0, 0.0]]), np.eye(2), load=6.0)
    assert scaled.power == pytest.approx(base.power * 9.0)
    assert scaled.power < 0.0


def test_witness_negative_power_on_random_systems():
    for _ in range(200):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, n))
        J1 = rng.normal(size=(m, n))
        B = random_spd(n, rng)
        w = projection_passivity_witness(J1, B)
        assert w.power < 0.0
        assert w.coupling_norm > 1e-9
        assert w.balance_residual < 1e-9
        assert w.masking_residual < 1e-9


def test_witness_held_violates_energy_budget():
    w = projection_passivity_witness(np.array([[1.0, 0.0]]), np.eye(2))
    ledger = EnergyLedger(budget_sq=0.5)
    dt = 1e-2
    for _ in range(200):  # 2 seconds at constant negative power
        ledger.add_sample({"pair": w.power}, 0.0, dt)
    assert ledger.total_work() == pytest.approx(-2.0, abs=1e-9)
    report = passivity_check(ledger, "pair")
    assert not report.passed
    assert report.deficit == pytest.approx(1.5, abs=1e-6)


# --- internal potential torques ----------------------------------------------------

def test_internal_torque_outside_kernel_vanishes():
    P = nullspace_projector(np.array([[1.0, 0.0]]), np.eye(2))
    g = internal_torque(np.array([4.0, 0.0]), P, alpha=1.0)
    assert np.allclose(g, 0.0, atol=1e-12)


def test_internal_torque_kernel_direction_passes_through():
    J1 = np.array([[1.0, 0.0]])
    P = nullspace_projector(J1, np.eye(2))
    g = internal_torque(np.array([0.0, 3.0]), P, alpha=2.0)
    assert np.allclose(g, [0.0, -6.0], atol=1e-12)
    report = internal_port_report(J1, np.eye(2), np.array([1.0]), g)
    assert report.task_disturbance < 1e-12


def test_internal_torque_rejects_negative_alpha():
    with pytest.raises(ValueError):
        internal_torque(np.zeros(2), np.eye(2), alpha=-0.1)


def test_external_port_quadratic_form_nonnegative():
    for _ in range(1000):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, n + 1))
        J1 = rng.normal(size=(m, n))
        B = random_spd(n, rng)
        w = rng.normal(size=m)
        assert external_port_power(J1, B, w) >= -1e-12


def test_external_port_scalar_square():
    val = external_port_power(np.array([[1.0, 0.0]]), np.eye(2), np.array([3.0]))
    assert val == pytest.approx(9.0)
