import numpy as np
import pytest

from maquette.guides import (
    VirtualMechanism,
    axis_error,
    guide_wrench,
    step_mechanism,
)
from maquette.transforms import Pose, quat_from_axis_angle, vec3

K_TRANS = 1000.0


def make_mech(**kw):
    return VirtualMechanism("drill_axis", anchor=vec3(0, 0, 0),
                            axis=vec3(0, 0, 1), **kw)


def test_wrench_zero_at_mechanism_pose():
    mech = make_mech(state=0.3)
    wrench, slide = guide_wrench(mech, Pose.from_xyz(0, 0, 0.3), np.zeros(6))
    assert np.allclose(wrench, 0.0, atol=1e-12)
    assert slide == pytest.approx(0.0)


def test_wrench_perpendicular_offset_pulls_to_axis():
    mech = make_mech()
    d = 0.02
    wrench, slide = guide_wrench(mech, Pose.from_xyz(d, 0, 0), np.zeros(6))
    assert wrench[0] == pytest.approx(-K_TRANS * d)  # toward the axis
    assert np.allclose(wrench[1:3], 0.0, atol=1e-12)
    assert slide == pytest.approx(0.0, abs=1e-12)    # orthogonal to the slide


def test_wrench_axial_offset_reacts_on_slide():
    mech = make_mech()
    d = 0.05
    wrench, slide = guide_wrench(mech, Pose.from_xyz(0, 0, d), np.zeros(6))
    assert wrench[2] == pytest.approx(-K_TRANS * d)  # spring pulls frame back
    assert slide == pytest.approx(+K_TRANS * d)      # mechanism dragged along


def test_step_mechanism_linear_ode():
    mech = make_mech(slide_damping=5.0)
    out = step_mechanism(mech, 0.0, 0.01)
    assert out.state == pytest.approx(0.0)
    force, dt = 2.0, 1e-3
    mech2 = mech
    for _ in range(1000):  # constant force for 1 s
        mech2 = step_mechanism(mech2, force, dt)
    assert mech2.state == pytest.approx(force * 1.0 / 5.0, rel=1e-9)


def test_step_mechanism_validation():
    mech = make_mech(slide_damping=0.0)
    with pytest.raises(ValueError):
        step_mechanism(mech, 1.0, 0.01)
    with pytest.raises(ValueError):
        step_mechanism(make_mech(), 1.0, 0.0)


def test_locked_slide_never_moves():
    mech = make_mech(slide_locked=True)
    out = step_mechanism(mech, 10.0, 0.01)
    assert out.state == pytest.approx(0.0)


def test_axis_error_cases():
    mech = make_mech()
    assert axis_error(Pose.identity(), mech) == pytest.approx(0.0)
    quarter = Pose(np.zeros(3), quat_from_axis_angle(vec3(1, 0, 0), np.pi / 2))
    assert axis_error(quarter, mech) == pytest.approx(np.pi / 2)
    tilt = Pose(np.zeros(3), quat_from_axis_angle(vec3(0, 1, 0), np.pi / 6))
    assert axis_error(tilt, mech) == pytest.approx(np.pi / 6, abs=1e-12)


def test_coupling_power_balance():
    # prescribed frame motion; every joule out of the spring shows up as
    # port power or coupling dissipation. Explicit stepping needs the
    # coupling damping below the slide damping to keep the rate loop stable.
    mech = make_mech(slide_damping=8.0, damping=np.eye(6) * 2.0)
    dt = 1e-4
    steps = 20000
    amp, omega = 0.05, 3.0

    def frame_at(t):
        pos = np.array([amp * np.sin(omega * t), 0.0, 0.2 * t])
        vel = np.array([amp * omega * np.cos(omega * t), 0.0, 0.2])
        return Pose(pos, np.array([1.0, 0, 0, 0])), np.concatenate([vel, np.zeros(3)])

    def spring_energy(t, m):
        from maquette.transforms import pose_error

        pose, _ = frame_at(t)
        err = pose_error(m.pose(), pose)
        return 0.5 * float(err @ m.stiffness @ err)

    work_frame = work_mech = dissipated = 0.0
    prev = None
    e0 = spring_energy(0.0, mech)
    for k in range(steps):
        t = k * dt
        pose, twist = frame_at(t)
        wrench, slide_force = guide_wrench(mech, pose, twist)
        rel = mech.dof_map() * mech.rate - twist
        p_frame = float(wrench @ twist)
        p_mech = slide_force * mech.rate
        p_diss = float(rel @ mech.damping @ rel)
        if prev is not None:
            work_frame += 0.5 * (prev[0] + p_frame) * dt
            work_mech += 0.5 * (prev[1] + p_mech) * dt
            dissipated += 0.5 * (prev[2] + p_diss) * dt
        prev = (p_frame, p_mech, p_diss)
        mech = step_mechanism(mech, slide_force, dt)
    e1 = spring_energy(steps * dt, mech)
    balance = work_frame + work_mech + dissipated + (e1 - e0)
    throughput = abs(work_frame) + abs(work_mech) + dissipated + abs(e1 - e0)
    assert abs(balance) < 2e-2 * max(throughput, 1.0)
    # the coupling itself never creates energy
    assert dissipated >= -1e-9


def test_guide_axis_validation():
    with pytest.raises(ValueError):
        VirtualMechanism("g", vec3(0, 0, 0), vec3(0, 0, 2))
