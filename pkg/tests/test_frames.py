import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmdtrack.frames import (
    EARTH_RADIUS,
    EARTH_RATE,
    ECEF,
    ECI,
    Attitude,
    Frame,
    FrameError,
    FrameKind,
    GeodeticSite,
    State6,
    StateTransform,
    ecef_to_eci,
    ecef_to_enu,
    eci_to_ecef,
    enu_to_ecef,
    state_transform,
    transform_state,
)

from conftest import random_states


def test_eci_to_ecef_is_identity_at_epoch(rng):
    x = random_states(rng, 1)[0]
    out = eci_to_ecef(0.0, State6.from_vector(x))
    assert out.frame.kind is FrameKind.ECEF
    # at t = 0 the frames coincide in position; velocity picks up -w x p
    np.testing.assert_allclose(out.position, x[:3], rtol=0, atol=0)
    transport = -np.cross([0.0, 0.0, EARTH_RATE], x[:3])
    np.testing.assert_allclose(out.velocity, x[3:] + transport, rtol=1e-15, atol=1e-9)


def test_eci_to_ecef_zero_velocity_unchanged_at_epoch():
    s = State6(np.array([7e6, 1e6, 2e6]), np.zeros(3))
    out = eci_to_ecef(0.0, s)
    np.testing.assert_array_equal(out.position, s.position)


def test_polar_axis_point_is_fixed():
    s = State6(np.array([0.0, 0.0, 7e6]), np.zeros(3))
    for t in (0.0, 100.0, 12345.6):
        out = eci_to_ecef(t, s)
        np.testing.assert_allclose(out.position, s.position, atol=1e-9)
        assert np.linalg.norm(out.velocity) == 0.0


def test_quarter_turn_rotation_and_transport_velocity():
    t = (math.pi / 2) / EARTH_RATE
    out = eci_to_ecef(t, State6(np.array([7e6, 0.0, 0.0]), np.zeros(3)))
    np.testing.assert_allclose(out.position, [0.0, -7e6, 0.0], atol=1e-6)
    # -w z_hat x (0, -7e6, 0) = (-w * 7e6, 0, 0)
    np.testing.assert_allclose(out.velocity, [-EARTH_RATE * 7e6, 0.0, 0.0], atol=1e-9)


def test_eci_ecef_round_trip(rng):
    for x in random_states(rng, 50):
        s = State6.from_vector(x)
        back = ecef_to_eci(321.0, eci_to_ecef(321.0, s))
        np.testing.assert_allclose(back.vector, x, rtol=1e-12, atol=1e-6)


def test_point_overhead_is_pure_up():
    site = GeodeticSite(0.0, 0.0, 0.0)
    s = State6(np.array([EARTH_RADIUS + 5000.0, 0.0, 0.0]), np.zeros(3), ECEF)
    out = ecef_to_enu(site, s)
    np.testing.assert_allclose(out.position, [0.0, 0.0, 5000.0], atol=1e-9)


def test_point_due_east_on_equator():
    site = GeodeticSite(0.0, 0.0, 0.0)
    lon = 1000.0 / EARTH_RADIUS
    p = EARTH_RADIUS * np.array([math.cos(lon), math.sin(lon), 0.0])
    e, n, u = ecef_to_enu(site, State6(p, np.zeros(3), ECEF)).position
    # chord geometry on the sphere
    assert e == pytest.approx(EARTH_RADIUS * math.sin(lon), rel=1e-12)
    assert u == pytest.approx(EARTH_RADIUS * (math.cos(lon) - 1.0), rel=1e-6)
    assert abs(n) < 1e-9 and abs(u) < 1e-3 * e


def test_enu_round_trip(site, rng):
    for x in random_states(rng, 50):
        s = State6.from_vector(x, ECEF)
        back = enu_to_ecef(ecef_to_enu(site, s))
        np.testing.assert_allclose(back.vector, x, rtol=1e-9, atol=1e-6)


def test_eci_to_eci_is_identity():
    T = state_transform(ECI, ECI, 50.0)
    np.testing.assert_array_equal(T.matrix, np.eye(6))
    np.testing.assert_array_equal(T.offset, np.zeros(6))


def test_body_with_identity_attitude_and_colocated_origin():
    T = state_transform(ECI, Frame.body(Attitude.identity(), np.zeros(6)), 10.0)
    np.testing.assert_array_equal(T.matrix[:3, :3], np.eye(3))
    np.testing.assert_array_equal(T.matrix[3:, 3:], np.eye(3))
    np.testing.assert_array_equal(T.offset, np.zeros(6))


def test_body_frame_is_relative_to_origin(rng):
    origin = random_states(rng, 1)[0]
    target = random_states(rng, 1)[0]
    att = Attitude.from_boresight(target[:3] - origin[:3], -origin[:3])
    T = state_transform(ECI, Frame.body(att, origin), 0.0)
    rel = T.apply(target)
    np.testing.assert_allclose(rel[:3], att.dcm @ (target[:3] - origin[:3]), rtol=1e-12, atol=1e-6)
    # boresight through the target: only x is non-zero
    assert rel[0] == pytest.approx(np.linalg.norm(target[:3] - origin[:3]), rel=1e-12)
    assert abs(rel[1]) < 1e-6 and abs(rel[2]) < 1e-6


def test_eci_to_enu_matches_composition(site, rng):
    t = 777.0
    for x in random_states(rng, 20):
        direct = state_transform(ECI, Frame.enu(site), t).apply(x)
        composed = ecef_to_enu(site, eci_to_ecef(t, State6.from_vector(x))).vector
        np.testing.assert_allclose(direct, composed, rtol=1e-12, atol=1e-6)


def test_transform_state_tags_destination(site):
    s = State6(np.array([7e6, 0.0, 0.0]), np.zeros(3))
    out = transform_state(s, Frame.enu(site), 5.0)
    assert out.frame.kind is FrameKind.ENU and out.frame.site is site


def test_rotation_blocks_orthonormal(site):
    frames = [ECEF, Frame.enu(site), Frame.body(Attitude.from_boresight([1.0, 2.0, 3.0], [0.0, 0.0, -1.0]))]
    for f in frames:
        for t in (0.0, 1.0, 5000.0):
            T = state_transform(ECI, f, t)
            for blk in (T.matrix[:3, :3], T.matrix[3:, 3:]):
                assert np.max(np.abs(blk.T @ blk - np.eye(3))) < 1e-10


def test_round_trip_1000_random_states(site, rng):
    xs = random_states(rng, 1000)
    for f in (ECEF, Frame.enu(site)):
        T = state_transform(ECI, f, 1234.5)
        back = T.inverse().apply(T.apply(xs))
        rel = np.linalg.norm(back - xs, axis=1) / np.linalg.norm(xs, axis=1)
        assert rel.max() < 1e-9


@settings(max_examples=200, deadline=None)
@given(
    t=st.floats(0.0, 1e5),
    p=st.lists(st.floats(-5e7, 5e7), min_size=3, max_size=3),
)
def test_pure_rotation_preserves_norm(t, p):
    p = np.array(p)
    T = state_transform(ECI, ECEF, t)
    q = T.apply(np.concatenate([p, np.zeros(3)]))[:3]
    assert np.linalg.norm(q) == pytest.approx(np.linalg.norm(p), rel=1e-9, abs=1e-6)


def test_composed_with_reverse_is_identity(site):
    a, b = Frame.enu(site), Frame.body(Attitude.from_boresight([0.0, 1.0, 1.0], [0.0, 0.0, -1.0]), np.ones(6))
    T = state_transform(a, b, 99.0).then(state_transform(b, a, 99.0))
    np.testing.assert_allclose(T.matrix, np.eye(6), atol=1e-9)
    np.testing.assert_allclose(T.offset, np.zeros(6), atol=1e-6)


def test_invalid_attitude_rejected():
    with pytest.raises(FrameError):
        Attitude(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(FrameError):
        Attitude(np.eye(3) * 1.01)


def test_frames_require_their_anchors():
    with pytest.raises(FrameError):
        Frame(FrameKind.ENU)
    with pytest.raises(FrameError):
        Frame(FrameKind.BODY)
    with pytest.raises(FrameError):
        state_transform("eci", ECI, 0.0)


def test_site_latitude_bounds():
    with pytest.raises(ValueError):
        GeodeticSite(2.0, 0.0)


def test_wrong_source_frame_rejected():
    s = State6(np.array([7e6, 0.0, 0.0]), np.zeros(3), ECEF)
    with pytest.raises(FrameError):
        eci_to_ecef(0.0, s)
    with pytest.raises(FrameError):
        ecef_to_eci(0.0, State6(np.array([7e6, 0.0, 0.0]), np.zeros(3)))


def test_transform_rejects_bad_shapes():
    with pytest.raises(FrameError):
        StateTransform(np.eye(3), np.zeros(3))
