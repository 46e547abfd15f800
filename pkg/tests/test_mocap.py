import numpy as np
import pytest

from maquette.mocap import load_mocap

HEADER = "t,point_id,px,py,pz,qw,qx,qy,qz\n"


def ramp_csv(hz=100, seconds=1.0, speed=1.0):
    lines = [HEADER.strip()]
    n = int(hz * seconds) + 1
    for i in range(n):
        t = i / hz
        lines.append(f"{t},hand,{speed * t},0,0,1,0,0,0")
    return "\n".join(lines) + "\n"


def test_single_frame_zero_velocity():
    traj = load_mocap(HEADER + "0.0,hand,1,2,3,1,0,0,0\n")
    pose, twist = traj.sample("hand", 0.0)
    assert np.allclose(pose.position, [1, 2, 3])
    assert np.allclose(twist, 0.0)


def test_linear_ramp_fills_exact_velocity():
    traj = load_mocap(ramp_csv())
    track = traj.points["hand"]
    assert np.allclose(track.twists[:, 0], 1.0, atol=1e-9)
    assert np.allclose(track.twists[:, 1:], 0.0, atol=1e-9)


def test_shuffled_timestamps_rejected():
    text = HEADER + "0.0,hand,0,0,0,1,0,0,0\n0.2,hand,1,0,0,1,0,0,0\n" \
        "0.1,hand,2,0,0,1,0,0,0\n"
    with pytest.raises(ValueError, match="strictly increase"):
        load_mocap(text)


def test_empty_and_missing_header():
    with pytest.raises(ValueError, match="empty"):
        load_mocap("")
    with pytest.raises(ValueError, match="header"):
        load_mocap("time,id\n0,hand\n")
    with pytest.raises(ValueError, match="no frames"):
        load_mocap(HEADER)


def test_non_unit_quaternion_rejected():
    with pytest.raises(ValueError, match="unit norm"):
        load_mocap(HEADER + "0.0,hand,0,0,0,2,0,0,0\n")


def test_explicit_twists_pass_through():
    header = HEADER.strip() + ",vx,vy,vz,wx,wy,wz\n"
    text = header + "0.0,hand,0,0,0,1,0,0,0,9,0,0,0,0,1\n" \
        "0.1,hand,1,0,0,1,0,0,0,9,0,0,0,0,1\n"
    traj = load_mocap(text)
    assert np.allclose(traj.points["hand"].twists[0], [9, 0, 0, 0, 0, 1])


def test_sampling_interpolates_and_clamps():
    traj = load_mocap(ramp_csv(hz=10))
    pose, _ = traj.sample("hand", 0.05)
    assert pose.position[0] == pytest.approx(0.05)
    pose, _ = traj.sample("hand", 99.0)
    assert pose.position[0] == pytest.approx(1.0)
    with pytest.raises(KeyError):
        traj.sample("nope", 0.0)


def test_rotation_rate_filled():
    from maquette.transforms import quat_from_axis_angle

    lines = [HEADER.strip()]
    for i in range(11):
        t = i * 0.1
        q = quat_from_axis_angle(np.array([0, 0, 1]), 0.5 * t)
        lines.append(f"{t},hand,0,0,0,{q[0]},{q[1]},{q[2]},{q[3]}")
    traj = load_mocap("\n".join(lines) + "\n")
    twists = traj.points["hand"].twists
    assert np.allclose(twists[1:-1, 5], 0.5, atol=1e-9)
