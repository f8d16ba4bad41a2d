import numpy as np
import pytest

from mindisk.disk_sample import DiskSample, load_disk, unique_edges
from mindisk.errors import HypothesisError, InvalidScaleError, ShapeMismatchError, UsageError
from mindisk.families import catenoid_disk, plane_disk
from mindisk.surface_core import graph_preset, make_catenoid, mesh_triangles


def test_plane_piece_is_a_disk_with_boundary_on_the_sphere():
    disk = plane_disk(1.0, n=64)
    assert disk.is_disk
    assert disk.boundary_on_sphere()
    assert disk.snapped > 0
    np.testing.assert_allclose(disk.distances_from_center()[disk.boundary], 1.0, rtol=1e-12)
    np.testing.assert_array_equal(disk.A2, 0.0)


def test_helicoid_piece_is_a_disk(small_helicoid_disk):
    assert small_helicoid_disk.is_disk
    assert np.all(small_helicoid_disk.distances_from_center() <= 1.0 + 1e-12)
    assert small_helicoid_disk.A2[small_helicoid_disk.center_index] == pytest.approx(2.0e4, rel=1e-9)


def test_catenoid_piece_is_an_annulus():
    disk = catenoid_disk(0.1, 1.0)
    assert disk.euler_characteristic == 0
    disk.require_disk()  # override set by the builder

    patch = make_catenoid(s_range=(-2.0, 2.0), n_s=32, n_t=32, scale=0.1)
    strict = DiskSample.from_patch(patch, (0.0, 0.0, 0.0), 1.0, periodic_t=True)
    with pytest.raises(HypothesisError):
        strict.require_disk()


def test_clipping_keeps_the_component_through_the_center():
    patch = graph_preset("zero", 16, 16)
    vertices = patch.positions.reshape(-1, 3)
    faces = mesh_triangles(patch)
    n = vertices.shape[0]
    both = np.concatenate((vertices, vertices + np.array([3.0, 0.0, 0.0])))
    all_faces = np.concatenate((faces, faces + n))
    disk = DiskSample.from_mesh(both, all_faces, np.zeros(2 * n), (0.0, 0.0, 0.0), 10.0)
    assert disk.vertex_count == n
    assert np.all(disk.vertices[:, 0] <= 1.0)
    assert disk.is_disk


def test_rescaling_and_translation():
    disk = plane_disk(1.0, n=32).translated((0.0, 0.0, 1.0))
    assert disk.center[2] == 1.0
    bigger = disk.rescaled(2.0)
    assert bigger.radius == 2.0
    np.testing.assert_array_equal(bigger.vertices, 2.0 * disk.vertices)
    assert bigger.edges.shape == disk.edges.shape
    with pytest.raises(InvalidScaleError):
        disk.rescaled(0.0)


def test_shape_checks():
    patch = graph_preset("zero", 8, 8)
    vertices = patch.positions.reshape(-1, 3)
    faces = np.asarray([[0, 1, 9]])
    with pytest.raises(ShapeMismatchError):
        DiskSample.from_mesh(vertices, faces, np.zeros(3), (0.0, 0.0, 0.0), 1.0)
    with pytest.raises(UsageError):
        load_disk(vertices, faces, np.zeros(4), (0.0, 0.0, 0.0), 1.0)
    with pytest.raises(HypothesisError):
        DiskSample.from_mesh(vertices + 10.0, faces, np.zeros(vertices.shape[0]), (0.0, 0.0, 0.0), 1.0)


def test_unique_edges_counts_shared_edges():
    edges, counts = unique_edges(np.array([[0, 1, 2], [1, 3, 2]]))
    assert edges.shape == (5, 3 - 1)
    assert counts.sum() == 6
    assert counts[np.all(edges == [1, 2], axis=1)][0] == 2
