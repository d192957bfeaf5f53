import numpy as np
import pytest

from kigrasp import fixtures
from kigrasp.sampling import (
    SurfaceSamples,
    min_pairwise_distance,
    poisson_disk_cloud,
    poisson_disk_mesh,
    poisson_thin,
    sample_gripper_surface,
)


def flat_square():
    """Unit square in the z = 0 plane, two triangles."""
    verts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], float)
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    return verts, faces


class TestPoissonDisk:
    def test_pairwise_distance_property_exact(self):
        verts, faces = flat_square()
        s = poisson_disk_mesh(verts, faces, 0.1, seed=0)
        P = s.positions
        # exhaustive O(N^2) scan
        d2 = ((P[:, None, :] - P[None, :, :]) ** 2).sum(-1)
        np.fill_diagonal(d2, np.inf)
        assert np.sqrt(d2.min()) >= 0.1

    def test_count_tracks_disk_area(self):
        verts, faces = flat_square()
        for r in (0.05, 0.1):
            s = poisson_disk_mesh(verts, faces, r, seed=1)
            expected = 1.0 / (np.pi * r * r)
            assert 0.3 * expected <= len(s) <= 1.5 * expected
            assert np.allclose(s.area_weights, np.pi * r * r)

    def test_tiny_triangle_yields_single_sample(self):
        verts = np.array([[0, 0, 0], [0.01, 0, 0], [0, 0.01, 0]], float)
        faces = np.array([[0, 1, 2]])
        s = poisson_disk_mesh(verts, faces, 0.1, seed=2)
        assert len(s) == 1

    def test_cloud_thinning_keeps_pairs_apart(self):
        rng = np.random.default_rng(3)
        pts = rng.random((3000, 3))
        nrm = rng.normal(size=(3000, 3))
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        s = poisson_disk_cloud(pts, nrm, 0.15, seed=4)
        assert min_pairwise_distance(s.positions) >= 0.15

    def test_empty_and_bad_radius_rejected(self):
        with pytest.raises(ValueError):
            poisson_thin(np.empty((0, 3)), 0.1)
        with pytest.raises(ValueError):
            poisson_thin(np.zeros((4, 3)), -1.0)

    def test_deterministic_for_fixed_seed(self):
        rng = np.random.default_rng(5)
        pts = rng.random((500, 3))
        a = poisson_thin(pts, 0.1, rng=7)
        b = poisson_thin(pts, 0.1, rng=7)
        assert np.array_equal(a, b)


class TestSurfaceSamples:
    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            SurfaceSamples(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0))
        with pytest.raises(ValueError):
            SurfaceSamples([[0, 0, 0]], [[0, 0, 2.0]], [1.0])  # non-unit normal
        with pytest.raises(ValueError):
            SurfaceSamples([[0, 0, 0]], [[0, 0, 1.0]], [0.0])  # zero weight

    def test_point_view(self):
        s = SurfaceSamples([[1, 2, 3]], [[0, 0, 1.0]], [0.5], link_ids=[2])
        p = s[0]
        assert p.link_id == 2 and p.area_weight == 0.5
        assert np.allclose(p.position, [1, 2, 3])


class TestGripperSampling:
    def test_per_link_local_frames(self, jaw_model):
        s = sample_gripper_surface(jaw_model, 0.05, seed=0)
        assert s.link_ids is not None
        assert set(np.unique(s.link_ids)) == {0, 1, 2}
        # local-frame samples must lie on their own hull's bounding box
        for lid, link in enumerate(jaw_model.links):
            pts = s.positions[s.link_ids == lid]
            assert np.all(pts >= link.shape.aabb_lo - 1e-9)
            assert np.all(pts <= link.shape.aabb_hi + 1e-9)

    def test_separation_within_each_link(self, jaw_model):
        s = sample_gripper_surface(jaw_model, 0.06, seed=1)
        for lid in range(jaw_model.link_count):
            pts = s.positions[s.link_ids == lid]
            assert min_pairwise_distance(pts) >= 0.06


def test_fixture_clouds_have_unit_normals():
    for name, gen in fixtures.OBJECT_GENERATORS.items():
        pts, nrm = gen(count=500)
        assert pts.shape == nrm.shape == (500, 3)
        assert np.allclose(np.linalg.norm(nrm, axis=1), 1.0, atol=1e-9), name
