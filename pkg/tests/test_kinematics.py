import numpy as np
import pytest

from maquette.figures import manikin_figure, manikin_home, planar_chain
from maquette.kinematics import (
    ArticulatedFigure,
    Configuration,
    Joint,
    Link,
    aspect_sign,
    forward_kinematics,
    ik_step_damped,
    jacobian,
)
from maquette.transforms import Pose, pose_error, quat_conjugate, quat_multiply, \
    quat_to_rotvec, vec3

rng = np.random.default_rng(11)


def fd_jacobian(figure, config, frame, point=None, h=1e-6):
    """Independent oracle: central differences of forward kinematics."""
    n = figure.n_dofs

    def stacked(c):
        poses = forward_kinematics(figure, c)
        pose = poses[frame]
        p = pose.transform_point(np.zeros(3) if point is None else point)
        return p, pose.orientation

    J = np.zeros((6, n))
    for k in range(n):
        dv = np.zeros(n)
        dv[k] = h
        chi = _shift(figure, config, dv)
        clo = _shift(figure, config, -dv)
        phi, qhi = stacked(chi)
        plo, qlo = stacked(clo)
        J[:3, k] = (phi - plo) / (2 * h)
        J[3:, k] = quat_to_rotvec(quat_multiply(qhi, quat_conjugate(qlo))) / (2 * h)
    return J


def _shift(figure, config, dv):
    nb = figure.n_base
    return Configuration(config.base + dv[:nb], config.joints + dv[nb:])


def random_chain(r):
    n = int(r.integers(2, 4))
    lengths = r.uniform(0.4, 1.2, size=n)
    return planar_chain(lengths), lengths


def test_fk_single_link_equals_base():
    fig = ArticulatedFigure([Link("only")])
    cfg = Configuration(np.array([0.3, -0.2, 0.7]), np.zeros(0))
    poses = forward_kinematics(fig, cfg)
    assert np.allclose(poses["only"].position, [0.3, -0.2, 0.0])


def test_fk_planar_2r_straight():
    fig = planar_chain([1.0, 1.0])
    cfg = Configuration(np.zeros(3), np.array([0.0, 0.0]))
    tip = forward_kinematics(fig, cfg)["tip"]
    assert np.allclose(tip.position, [2.0, 0.0, 0.0], atol=1e-12)


def test_fk_planar_2r_bent():
    fig = planar_chain([1.0, 1.0])
    cfg = Configuration(np.zeros(3), np.array([np.pi / 2, 0.0]))
    tip = forward_kinematics(fig, cfg)["tip"]
    assert np.allclose(tip.position, [0.0, 2.0, 0.0], atol=1e-12)


def test_fk_dimension_mismatch():
    fig = planar_chain([1.0, 1.0])
    with pytest.raises(ValueError):
        forward_kinematics(fig, Configuration(np.zeros(3), np.zeros(3)))


def test_fk_preserves_link_lengths():
    fig = planar_chain([1.0, 0.7, 0.5])
    for _ in range(1000):
        cfg = Configuration(rng.uniform(-1, 1, 3), rng.uniform(-np.pi, np.pi, 3))
        poses = forward_kinematics(fig, cfg)
        p1 = poses["link1"].position
        p2 = poses["link2"].position
        p3 = poses["link3"].position
        assert np.linalg.norm(p2 - p1) == pytest.approx(1.0, abs=1e-9)
        assert np.linalg.norm(p3 - p2) == pytest.approx(0.7, abs=1e-9)


def test_jacobian_planar_2r_subblock():
    fig = planar_chain([1.0, 1.0])
    cfg = Configuration(np.zeros(3), np.zeros(2))
    J = jacobian(fig, cfg, "tip")
    sub = J[:2, 3:]
    assert np.allclose(sub, [[0.0, 0.0], [2.0, 1.0]], atol=1e-12)


def test_jacobian_prismatic_column():
    fig = ArticulatedFigure([
        Link("base_link"),
        Link("slider", parent="base_link",
             joint=Joint("prismatic", vec3(1, 0, 0), (-1.0, 1.0))),
    ])
    cfg = Configuration(np.zeros(3), np.array([0.2]))
    J = jacobian(fig, cfg, "slider")
    assert np.allclose(J[:, 3], [1, 0, 0, 0, 0, 0], atol=1e-12)


def test_jacobian_unknown_frame():
    fig = planar_chain([1.0, 1.0])
    with pytest.raises(KeyError):
        jacobian(fig, Configuration(np.zeros(3), np.zeros(2)), "nope")


def test_jacobian_matches_finite_differences():
    for _ in range(30):
        fig, _ = random_chain(rng)
        cfg = Configuration(rng.uniform(-1, 1, 3),
                            rng.uniform(-2.0, 2.0, fig.n_joints))
        J = jacobian(fig, cfg, "tip")
        J_fd = fd_jacobian(fig, cfg, "tip")
        scale = max(1.0, np.abs(J_fd).max())
        assert np.abs(J - J_fd).max() / scale < 1e-5


def test_jacobian_spatial_manikin_matches_fd():
    fig = manikin_figure()
    for _ in range(20):
        cfg = Configuration(rng.uniform(-1, 1, 3), rng.uniform(-0.5, 0.5, 3))
        J = jacobian(fig, cfg, "head_yaw", point=np.array([0.0, 0.1, 0.1]))
        J_fd = fd_jacobian(fig, cfg, "head_yaw", point=np.array([0.0, 0.1, 0.1]))
        scale = max(1.0, np.abs(J_fd).max())
        assert np.abs(J - J_fd).max() / scale < 1e-5


def test_aspect_sign_planar_2r():
    fig = planar_chain([1.0, 1.0])
    assert aspect_sign(fig, Configuration(np.zeros(3), np.array([0.3, np.pi / 2]))) == 1
    assert aspect_sign(fig, Configuration(np.zeros(3), np.array([0.3, -np.pi / 2]))) == -1
    assert aspect_sign(fig, Configuration(np.zeros(3), np.array([0.3, 0.0]))) == 0


def test_ik_zero_error_gives_zero_step():
    fig = planar_chain([1.0, 1.0])
    cfg = Configuration(np.zeros(3), np.array([0.4, 0.6]))
    target = forward_kinematics(fig, cfg)["tip"]
    dq = ik_step_damped(fig, cfg, "tip", target, damping=0.05)
    assert np.allclose(dq, 0.0, atol=1e-12)


def test_ik_matches_damped_pseudoinverse_of_fd_jacobian():
    fig = planar_chain([1.0, 1.0])
    cfg = Configuration(np.zeros(3), np.array([0.5, 0.9]))
    tip = forward_kinematics(fig, cfg)["tip"]
    target = Pose(tip.position + np.array([0.01, -0.02, 0.0]), tip.orientation)
    mu = 0.05
    dq = ik_step_damped(fig, cfg, "tip", target, damping=mu)
    J_fd = fd_jacobian(fig, cfg, "tip")[:, 3:]
    err = pose_error(target, tip)
    expected = J_fd.T @ np.linalg.solve(J_fd @ J_fd.T + mu**2 * np.eye(6), err)
    assert np.linalg.norm(dq - expected) / np.linalg.norm(expected) < 1e-3


def test_ik_damped_bound_at_singularity():
    fig = planar_chain([1.0, 1.0])
    cfg = Configuration(np.zeros(3), np.array([0.0, 0.0]))  # stretched, singular
    mu = 0.05
    target = Pose(vec3(2.5, 0.0, 0.0), np.array([1.0, 0, 0, 0]))
    err = pose_error(target, forward_kinematics(fig, cfg)["tip"])
    dq = ik_step_damped(fig, cfg, "tip", target, damping=mu)
    assert np.linalg.norm(dq) <= np.linalg.norm(err) / (2 * mu) + 1e-12


def test_ik_preserves_aspect_sign():
    fig = planar_chain([1.0, 1.0])
    for _ in range(200):
        q2 = rng.uniform(0.05, np.pi - 0.05)  # positive aspect
        cfg = Configuration(np.zeros(3), np.array([rng.uniform(-np.pi, np.pi), q2]))
        sign0 = aspect_sign(fig, cfg)
        assert sign0 == 1
        target = Pose(rng.uniform(-2, 2, 3) * np.array([1, 1, 0]),
                      np.array([1.0, 0, 0, 0]))
        dq = ik_step_damped(fig, cfg, "tip", target, damping=0.05)
        after = Configuration(cfg.base, cfg.joints + dq)
        assert aspect_sign(fig, after) == 1


def test_ik_requires_positive_damping():
    fig = planar_chain([1.0, 1.0])
    cfg = Configuration(np.zeros(3), np.zeros(2))
    with pytest.raises(ValueError):
        ik_step_damped(fig, cfg, "tip", Pose.identity(), damping=0.0)


def test_clamp_is_idempotent():
    fig = manikin_figure()
    cfg = Configuration(np.zeros(3), np.array([2.0, -3.0, 0.1]))
    once = cfg.clamped(fig)
    twice = once.clamped(fig)
    limits = fig.joint_limits()
    assert np.all(once.joints >= limits[:, 0]) and np.all(once.joints <= limits[:, 1])
    assert np.allclose(once.joints, twice.joints)


def test_manikin_eye_looks_forward_at_home():
    from maquette.kinematics import eye_pose, vision_axis

    fig = manikin_figure()
    cfg = manikin_home(fig)
    poses = forward_kinematics(fig, cfg)
    axis = vision_axis(fig, poses)
    assert np.allclose(axis, [0, 1, 0], atol=1e-12)
    eye = eye_pose(fig, poses)
    assert eye.position[2] > 1.0


def test_figure_validation_errors():
    with pytest.raises(ValueError):
        ArticulatedFigure([Link("a"), Link("b")])  # two roots
    with pytest.raises(ValueError):
        ArticulatedFigure([Link("a", parent="missing")])
    with pytest.raises(ValueError):
        Joint("revolute", vec3(0, 0, 2), (-1, 1))
    with pytest.raises(ValueError):
        Joint("revolute", vec3(0, 0, 1), (1, -1))
