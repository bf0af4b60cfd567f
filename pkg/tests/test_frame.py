import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holonav import frame as fr
from holonav import geometry as g
from holonav import registration as reg
from holonav import volume as vol
from holonav.errors import FormatError, StateError


@pytest.fixture
def state():
    return fr.new_frame_state()


class TestAdjustment:
    def test_quantizes_to_nearest_step(self, state):
        s = fr.set_adjustment(state, (3.4, 0.0, 0.0))
        assert s.config.adjustment_steps == (3, 0, 0)

    def test_half_step_ties_go_toward_zero(self, state):
        s = fr.set_adjustment(state, (3.5, 2.5, 0.5))
        assert s.config.adjustment_steps == (3, 2, 0)

    def test_above_half_rounds_up(self, state):
        s = fr.set_adjustment(state, (3.6, 0.0, 39.9))
        assert s.config.adjustment_steps == (4, 0, 40)

    def test_zero_request_is_identity_geometry(self, state):
        s = fr.set_adjustment(state, (0.0, 0.0, 0.0))
        anchors = fr.anchor_points(s.config)
        base = fr.anchor_points(fr.default_frame_config())
        for k in anchors:
            assert np.array_equal(anchors[k], base[k])

    def test_out_of_range_rejected(self, state):
        with pytest.raises(ValueError):
            fr.set_adjustment(state, (40.6, 0.0, 0.0))
        with pytest.raises(ValueError):
            fr.set_adjustment(state, (-0.6, 0.0, 0.0))

    def test_reset_to_same_position_is_bit_identical(self, state):
        first = fr.set_adjustment(state, (12.0, 3.0, 7.0))
        perturbed = fr.set_adjustment(first, (1.0, 0.0, 40.0))
        again = fr.set_adjustment(perturbed, (12.0, 3.0, 7.0))
        assert again.config == first.config

    def test_anchor_geometry_tracks_steps(self, state):
        s = fr.set_adjustment(state, (5.0, 2.0, 9.0))
        anchors = fr.anchor_points(s.config)
        base = fr.anchor_points(fr.default_frame_config())
        assert np.allclose(anchors["nose_bridge"] - base["nose_bridge"], (0, 5.0, 0))
        assert np.allclose(anchors["left_ear"] - base["left_ear"], (-2.0, 0, 0))
        assert np.allclose(anchors["right_ear"] - base["right_ear"], (9.0, 0, 0))


@settings(max_examples=80, deadline=None)
@given(
    x=st.floats(0.0, 40.0),
    y=st.floats(0.0, 40.0),
    z=st.floats(0.0, 40.0),
)
def test_adjustment_idempotent(x, y, z):
    state = fr.new_frame_state()
    once = fr.set_adjustment(state, (x, y, z))
    quantized = tuple(float(s) for s in once.config.adjustment_steps)
    twice = fr.set_adjustment(once, quantized)
    assert twice.config == once.config


class TestMarkerMount:
    def test_detach_attach_restores_bit_exact(self, state):
        attached = fr.attach_marker(state)
        stored = fr.marker_pose(attached)
        cycled = fr.attach_marker(fr.detach_marker(attached))
        pose = fr.marker_pose(cycled)
        assert np.array_equal(pose.rotation, stored.rotation)
        assert np.array_equal(pose.translation, stored.translation)
        assert pose.rotation is attached.config.marker_from_frame.rotation

    def test_detach_keeps_fiducials_and_steps(self, state):
        attached = fr.attach_marker(state)
        detached = fr.detach_marker(attached)
        assert detached.config == state.config

    def test_double_attach_rejected(self, state):
        attached = fr.attach_marker(state)
        with pytest.raises(StateError):
            fr.attach_marker(attached)

    def test_double_detach_rejected(self, state):
        with pytest.raises(StateError):
            fr.detach_marker(state)

    def test_marker_pose_while_detached_rejected(self, state):
        with pytest.raises(StateError):
            fr.marker_pose(state)

    def test_repeatability_noise_stays_small(self):
        config = fr.default_frame_config()
        noisy_config = fr.FrameConfig(
            adjustment_steps=config.adjustment_steps,
            ear_screw_locked=config.ear_screw_locked,
            fiducials_frame=config.fiducials_frame,
            marker_from_frame=config.marker_from_frame,
            repeatability_sigma_mm=0.1,
        )
        rng = np.random.default_rng(0)
        nominal = config.marker_from_frame.translation
        state = fr.new_frame_state(noisy_config)
        for _ in range(100):
            state = fr.attach_marker(state, rng)
            offset = np.linalg.norm(fr.marker_pose(state).translation - nominal)
            assert offset < 0.5
            state = fr.detach_marker(state)

    def test_reattachment_deterministic_with_noise_disabled(self, state):
        s = state
        for _ in range(10):
            s = fr.attach_marker(s)
            assert np.array_equal(
                fr.marker_pose(s).translation, state.config.marker_from_frame.translation
            )
            s = fr.detach_marker(s)


class TestCtFiducials:
    def test_identity_mounting_keeps_coordinates(self, state):
        out = fr.ct_fiducials_patient(state, g.RigidTransform.identity())
        assert np.allclose(out.points, state.config.fiducials_frame.points, atol=1e-12)
        assert out.frame == "patient"

    def test_known_mounting_matches_apply_point_oracle(self, state):
        mounting = g.from_axis_angle((0, 1, 0), 0.3, (5.0, -2.0, 8.0))
        out = fr.ct_fiducials_patient(state, mounting)
        inv = g.invert(mounting)
        for row, expected_src in zip(out.points, state.config.fiducials_frame.points):
            assert np.allclose(row, g.apply_point(inv, expected_src), atol=1e-12)

    def test_phantom_pipeline_closes_the_loop(self, state):
        # Seed a phantom from the mapped fiducials, then detect them back.
        mounting = g.from_axis_angle((0, 0, 1), 0.05, (1.0, -4.0, -20.0))
        fids = fr.ct_fiducials_patient(state, mounting)
        spec = vol.PhantomSpec(
            tumor_semiaxes=(35.0, 30.0, 30.0),
            tumor_center=np.array([10.0, 20.0, 0.0]),
            fiducial_centers=tuple(fids.points),
            fiducial_radius_mm=3.0,
        )
        dims, spacing = (160, 160, 160), (1.5, 1.5, 1.5)
        origin = np.array([-(d - 1) * s / 2 for d, s in zip(dims, spacing)])
        v = vol.synthesize_phantom(spec, dims, spacing, origin)
        detections = vol.detect_fiducials(v)
        assert len(detections) == len(fids)
        for c in fids.points:
            errs = [np.linalg.norm(d.centroid - c) for d in detections]
            assert min(errs) < 0.5


class TestPersistence:
    def test_save_restore_equality(self, tmp_path, state):
        adjusted = fr.set_adjustment(state, (7.0, 1.0, 3.0))
        path = tmp_path / "frame.json"
        fr.save_config(adjusted.config, path)
        restored = fr.load_config(path)
        assert restored.adjustment_steps == adjusted.config.adjustment_steps
        assert restored.ear_screw_locked == adjusted.config.ear_screw_locked
        assert np.array_equal(
            restored.fiducials_frame.points, adjusted.config.fiducials_frame.points
        )
        assert np.array_equal(
            restored.marker_from_frame.rotation, adjusted.config.marker_from_frame.rotation
        )
        assert np.array_equal(
            restored.marker_from_frame.translation, adjusted.config.marker_from_frame.translation
        )

    def test_restore_out_of_range_step_is_format_error(self, tmp_path, state):
        path = tmp_path / "frame.json"
        fr.save_config(state.config, path)
        doc = path.read_text().replace('"adjustment_steps": [\n    0,', '"adjustment_steps": [\n    99,')
        path.write_text(doc)
        with pytest.raises(FormatError):
            fr.load_config(path)

    def test_restore_bad_version_is_format_error(self, tmp_path, state):
        path = tmp_path / "frame.json"
        fr.save_config(state.config, path)
        doc = path.read_text().replace('"version": 1', '"version": 2')
        path.write_text(doc)
        with pytest.raises(FormatError):
            fr.load_config(path)

    def test_restore_garbage_is_format_error(self, tmp_path):
        path = tmp_path / "frame.json"
        path.write_text("{broken")
        with pytest.raises(FormatError):
            fr.load_config(path)

    def test_ct_session_config_reproduces_registration_exactly(self, tmp_path, state):
        # Save during the scan session, restore in the operating session: the
        # noiseless registration via the frame marker must come out identical.
        mounting = g.from_axis_angle((1, 0, 0), 0.08, (0.0, 3.0, -25.0))
        world_from_patient = g.from_axis_angle((0, 0, 1), 0.7, (400.0, -300.0, 1100.0))
        ct_fids = fr.ct_fiducials_patient(state, mounting)

        path = tmp_path / "frame.json"
        fr.save_config(state.config, path)
        restored = fr.load_config(path)

        or_state = fr.attach_marker(fr.new_frame_state(restored))
        marker_world = g.compose(
            world_from_patient, g.compose(g.invert(mounting), fr.marker_pose(or_state))
        )
        res = reg.register_via_frame_marker(ct_fids, marker_world, restored)
        assert res.fre_rms < 1e-9
        assert g.rotation_angle_between(res.world_from_patient, world_from_patient) < 1e-9
        assert np.linalg.norm(
            res.world_from_patient.translation - world_from_patient.translation
        ) < 1e-9
