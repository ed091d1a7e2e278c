"""Lifting tests: contact back-projection, normal clustering, direction
selection against exhaustive angle scans, and analytic box scenes."""

import numpy as np
import pytest

from affordlift import (
    Affordance2D,
    CameraIntrinsics,
    DepthImage,
    FaceSpec,
    GraspCandidate,
    LiftParams,
    cluster_normals,
    lift_affordance,
    lift_contact,
    make_box_scene,
    project_direction,
    select_direction,
    select_grasp,
)
from affordlift.errors import AmbiguousDirection, EmptyCrop, NoGraspCandidates, NoValidDepth

K = CameraIntrinsics(fx=120.0, fy=120.0, cx=48.0, cy=36.0, width=96, height=72)


def a2d_at(u, v, direction=(1.0, 0.0)):
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    waypoints = np.array([[u, v], [u + 4.0 * d[0], v + 4.0 * d[1]]])
    return Affordance2D(
        contact=waypoints[0],
        direction=d,
        waypoints=waypoints,
        scores=np.array([1.0, 1.0]),
        inliers=np.array([True, True]),
    )


class TestLiftContact:
    def test_principal_point_depth_one(self):
        depth = DepthImage(values=np.full((72, 96), 1.0, np.float32))
        point, used = lift_contact(a2d_at(48, 36), depth, K)
        np.testing.assert_allclose(point, [0.0, 0.0, 1.0])
        assert used == (48, 36)

    def test_hole_uses_neighbor_and_reports_it(self):
        values = np.full((72, 96), 1.0, np.float32)
        values[34:39, 46:51] = np.nan  # 5x5 hole centered on the contact
        values[36, 50] = 2.0  # unique nearest valid pixel, 2 px right
        depth = DepthImage(values=values)
        point, used = lift_contact(a2d_at(48, 36), depth, K)
        assert used == (50, 36)
        assert point[2] == pytest.approx(2.0)

    def test_fully_invalid_depth(self):
        depth = DepthImage(values=np.full((72, 96), np.nan, np.float32))
        with pytest.raises(NoValidDepth):
            lift_contact(a2d_at(48, 36), depth, K)

    def test_reprojects_onto_the_contact_pixel(self):
        from affordlift import project

        values = np.full((72, 96), 1.3, np.float32)
        values[20, 30] = np.nan  # hole: z comes from a neighbor, ray unchanged
        depth = DepthImage(values=values)
        for u, v in [(30, 20), (5, 7), (80.0, 61.0)]:
            point, _ = lift_contact(a2d_at(u, v), depth, K)
            pu, pv = project(point, K)
            assert pu == pytest.approx(u, abs=1e-6)
            assert pv == pytest.approx(v, abs=1e-6)


class TestClusterNormals:
    def test_collapsed_identical_normals(self):
        n = np.array([0.0, 0.0, -1.0])
        out = cluster_normals(np.tile(n, (40, 1)), k=4, seed=0)
        assert len(out) == 1
        center, count = out[0]
        np.testing.assert_allclose(center, n)
        assert count == 40

    def test_two_jittered_clusters(self):
        rng = np.random.default_rng(0)
        axes = [np.array([0.0, 0.0, -1.0]), np.array([-1.0, 0.0, 0.0])]
        normals = []
        for axis in axes:
            for _ in range(50):
                jitter = rng.normal(0, np.radians(5.0) / np.sqrt(2), size=3)
                v = axis + jitter
                normals.append(v / np.linalg.norm(v))
        for seed in range(5):
            out = cluster_normals(np.asarray(normals), k=2, seed=seed)
            assert len(out) == 2
            got = sorted(
                np.degrees(
                    np.arccos(np.clip([abs(float(c @ a)) for (c, _), a in zip(out, axes)], -1, 1))
                )
            )
            # each center within 5 degrees of one axis
            centers = np.array([c for c, _ in out])
            for axis in axes:
                best = np.degrees(np.arccos(np.clip(np.abs(centers @ axis), -1, 1))).min()
                assert best < 5.0

    def test_k_clamped_to_distinct(self):
        normals = np.array(
            [[0.0, 0.0, -1.0]] * 5 + [[1.0, 0.0, 0.0]] * 3 + [[0.0, 1.0, 0.0]] * 2
        )
        out = cluster_normals(normals, k=10, seed=1)
        assert len(out) <= 3

    def test_sorted_by_member_count(self):
        normals = np.array([[0.0, 0.0, -1.0]] * 7 + [[1.0, 0.0, 0.0]] * 3)
        out = cluster_normals(normals, k=2, seed=0)
        counts = [c for _, c in out]
        assert counts == sorted(counts, reverse=True)
        assert counts[0] == 7

    def test_permutation_invariance(self):
        rng = np.random.default_rng(3)
        normals = rng.normal(size=(60, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        out1 = cluster_normals(normals, k=3, seed=11)
        shuffled = normals[rng.permutation(60)]
        out2 = cluster_normals(shuffled, k=3, seed=11)
        assert len(out1) == len(out2)
        for (c1, n1), (c2, n2) in zip(out1, out2):
            np.testing.assert_allclose(c1, c2, atol=1e-6)
            assert n1 == n2

    def test_centers_are_unit(self):
        rng = np.random.default_rng(4)
        normals = rng.normal(size=(30, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        for center, _ in cluster_normals(normals, k=4, seed=0):
            assert np.linalg.norm(center) == pytest.approx(1.0, abs=1e-9)

    def test_single_plane_dominant_cluster_within_two_degrees(self):
        from affordlift import depth_to_cloud, estimate_normals, make_plane_scene

        coarse = CameraIntrinsics(fx=80.0, fy=80.0, cx=48.0, cy=36.0, width=96, height=72)
        axis = np.array([0.0, 0.0, -1.0])
        scene = make_plane_scene(axis, 0.65, coarse, noise=0.001, seed=1)
        cloud = depth_to_cloud(scene.depth, coarse)
        normals = estimate_normals(cloud, k=30)
        spread = np.degrees(np.arccos(np.clip(normals @ axis, -1, 1)))
        assert spread.max() < 5.0  # the jitter bound the contract assumes
        clusters = cluster_normals(normals, k=4, seed=0)
        dominant = clusters[0][0]
        assert np.degrees(np.arccos(np.clip(dominant @ axis, -1, 1))) < 2.0


class TestSelectDirection:
    def test_exact_alignment_wins(self):
        contact = np.array([0.15, 0.0, 0.6])
        n1 = np.array([1.0, 0.0, 0.0])
        n2 = np.array([0.0, 1.0, 0.0])
        tau2d = project_direction(contact, n1, K, 0.05)
        chosen, diags = select_direction([(n1, 10), (n2, 20)], tau2d, contact, K, 0.05)
        np.testing.assert_allclose(chosen, n1)
        assert diags[0].projected_angle == pytest.approx(0.0, abs=1e-9)

    def test_negated_center_can_win(self):
        contact = np.array([0.15, 0.0, 0.6])
        n = np.array([1.0, 0.0, 0.0])
        tau2d = project_direction(contact, -n, K, 0.05)
        chosen, _ = select_direction([(n, 5)], tau2d, contact, K, 0.05)
        np.testing.assert_allclose(chosen, -n)

    def test_exhaustive_scan_agreement(self):
        rng = np.random.default_rng(7)
        contact = np.array([0.1, -0.05, 0.8])
        for _ in range(50):
            centers = rng.normal(size=(4, 3))
            centers /= np.linalg.norm(centers, axis=1, keepdims=True)
            counts = rng.integers(1, 50, size=4)
            tau = rng.normal(size=2)
            tau /= np.linalg.norm(tau)
            clusters = [(c, int(n)) for c, n in zip(centers, counts)]
            try:
                chosen, _ = select_direction(clusters, tau, contact, K, 0.05)
            except AmbiguousDirection:
                continue
            # oracle: enumerate every signed candidate
            best_angle = np.inf
            for c, _ in clusters:
                for s in (1.0, -1.0):
                    try:
                        proj = project_direction(contact, s * c, K, 0.05)
                    except Exception:
                        continue
                    ang = np.arccos(np.clip(np.dot(proj, tau), -1, 1))
                    best_angle = min(best_angle, ang)
            proj = project_direction(contact, chosen, K, 0.05)
            got_angle = np.arccos(np.clip(np.dot(proj, tau), -1, 1))
            assert got_angle == pytest.approx(best_angle, abs=1e-12)

    def test_all_degenerate_is_ambiguous(self):
        contact = np.array([0.0, 0.0, 1.0])
        axis = np.array([0.0, 0.0, 1.0])  # optical axis at the principal point
        with pytest.raises(AmbiguousDirection):
            select_direction([(axis, 3)], np.array([1.0, 0.0]), contact, K, 0.05)


def drawer_scene(noise=0.0, seed=0):
    faces = [
        FaceSpec("background", np.array([0.0, 0.0, -1.0]), 0.9, (0, 0, 95, 71)),
        FaceSpec("front", np.array([0.0, 0.0, -1.0]), 0.6, (6, 10, 58, 62)),
    ]
    return make_box_scene(faces, K, noise=noise, seed=seed, handle_face="front")


def corner_scene(side_tilt_deg=60.0, edge_u=58, z0=0.6, contact_v=44):
    """Front face meeting a tilted side face along a vertical edge.

    The contact sits on the edge, off both principal axes, so the four
    signed candidate normals all project to distinct 2D directions.
    """
    b = np.radians(side_tilt_deg)
    n_a = np.array([0.0, 0.0, -1.0])
    n_b = np.array([-np.sin(b), 0.0, -np.cos(b)])
    x_edge = (edge_u - K.cx) * z0 / K.fx
    p_contact = np.array([x_edge, (contact_v - K.cy) * z0 / K.fy, z0])
    faces = [
        FaceSpec("face_a", n_a, z0, (6, 8, edge_u, 64)),
        FaceSpec("face_b", n_b, -float(n_b @ p_contact), (edge_u + 1, 8, 90, 64)),
    ]
    scene = make_box_scene(faces, K, handle_face="face_a")
    return scene, n_a, n_b, p_contact, (edge_u, contact_v)


class TestLiftAffordance:
    def test_drawer_front_outward_normal(self):
        scene = drawer_scene()
        hu, hv = scene.ground_truth["handle_pixel"]
        hp = scene.ground_truth["handle_point"]
        tau2d = project_direction(hp, np.array([0.0, 0.0, -1.0]), K, 0.05)
        a3d = lift_affordance(a2d_at(hu, hv, tau2d), scene.depth, K)
        angle = np.degrees(np.arccos(np.clip(a3d.direction @ [0.0, 0.0, -1.0], -1, 1)))
        assert angle < 5.0
        np.testing.assert_allclose(a3d.contact, hp, atol=5e-3)

    def test_corner_two_faces_follows_tau2d(self):
        scene, n_a, n_b, p_contact, contact_pixel = corner_scene()
        tau_a = project_direction(p_contact, n_a, K, 0.05)
        a3d = lift_affordance(a2d_at(*contact_pixel, tau_a), scene.depth, K)
        angle = np.degrees(np.arccos(np.clip(a3d.direction @ n_a, -1, 1)))
        assert angle < 5.0
        # steering tau2d toward face B flips the outcome
        tau_b = project_direction(p_contact, n_b, K, 0.05)
        a3d_b = lift_affordance(a2d_at(*contact_pixel, tau_b), scene.depth, K)
        angle_b = np.degrees(np.arccos(np.clip(a3d_b.direction @ n_b, -1, 1)))
        assert angle_b < 5.0

    def test_crop_radius_excluding_everything(self):
        scene = drawer_scene()
        hu, hv = (int(x) for x in scene.ground_truth["handle_pixel"])
        # hole at the contact: the back-projected point borrows a neighbor's z
        # and so coincides with no cloud point; a tiny radius then keeps none
        values = scene.depth.values.copy()
        values[hv, hu] = np.nan
        params = LiftParams(crop_radius=1e-4)
        with pytest.raises(EmptyCrop) as err:
            lift_affordance(a2d_at(hu, hv), DepthImage(values=values), K, params=params)
        assert err.value.stage == "lifting/crop"

    def test_direction_is_unit_and_diagnostics_present(self):
        scene = drawer_scene()
        hu, hv = scene.ground_truth["handle_pixel"]
        hp = scene.ground_truth["handle_point"]
        tau2d = project_direction(hp, np.array([0.0, 0.0, -1.0]), K, 0.05)
        a3d = lift_affordance(a2d_at(hu, hv, tau2d), scene.depth, K)
        assert np.linalg.norm(a3d.direction) == pytest.approx(1.0, abs=1e-6)
        assert a3d.clusters and all(c.member_count > 0 for c in a3d.clusters)
        assert a3d.contact_pixel == (int(hu), int(hv))

    def test_selected_direction_beats_every_candidate(self):
        scene, n_a, _, p_contact, contact_pixel = corner_scene()
        tau_a = project_direction(p_contact, n_a, K, 0.05)
        a3d = lift_affordance(a2d_at(*contact_pixel, tau_a), scene.depth, K)
        chosen_proj = project_direction(a3d.contact, a3d.direction, K, 0.05)
        chosen_angle = np.arccos(np.clip(chosen_proj @ tau_a, -1, 1))
        for diag in a3d.clusters:
            for s in (1.0, -1.0):
                try:
                    proj = project_direction(a3d.contact, s * diag.center, K, 0.05)
                except Exception:
                    continue
                ang = np.arccos(np.clip(proj @ tau_a, -1, 1))
                assert chosen_angle <= ang + 1e-12

    def test_serialized_determinism(self):
        import json

        scene = drawer_scene(noise=0.002, seed=3)
        hu, hv = scene.ground_truth["handle_pixel"]
        hp = scene.ground_truth["handle_point"]
        tau2d = project_direction(hp, np.array([0.0, 0.0, -1.0]), K, 0.05)
        doc1 = json.dumps(lift_affordance(a2d_at(hu, hv, tau2d), scene.depth, K, seed=5).to_json_dict())
        doc2 = json.dumps(lift_affordance(a2d_at(hu, hv, tau2d), scene.depth, K, seed=5).to_json_dict())
        assert doc1 == doc2


class TestSelectGrasp:
    def grasp(self, pos, score=0.5):
        return GraspCandidate(
            position=np.asarray(pos, float),
            quaternion=np.array([0.0, 0.0, 0.0, 1.0]),
            score=score,
        )

    def test_exact_hit(self):
        contact = np.array([0.1, 0.2, 0.3])
        g = self.grasp([0.1, 0.2, 0.3])
        chosen = select_grasp([self.grasp([1, 1, 1]), g], contact)
        assert chosen is g

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            contact = rng.normal(size=3)
            candidates = [self.grasp(rng.normal(size=3), float(rng.random())) for _ in range(12)]
            chosen = select_grasp(candidates, contact)
            dists = [float(np.linalg.norm(c.position - contact)) for c in candidates]
            assert float(np.linalg.norm(chosen.position - contact)) == min(dists)

    def test_tie_broken_by_score(self):
        contact = np.zeros(3)
        low = self.grasp([1.0, 0.0, 0.0], score=0.1)
        high = self.grasp([-1.0, 0.0, 0.0], score=0.9)
        assert select_grasp([low, high], contact) is high

    def test_empty(self):
        with pytest.raises(NoGraspCandidates):
            select_grasp([], np.zeros(3))
