import math
from dataclasses import replace

import numpy as np
import pytest

from ecgifoe.exceptions import GeometryOverlap, InsufficientResolution, IoError, MeshQuality, TopologyError
from ecgifoe.geometry.mesh import (
    MIN_ANGLE_DEG,
    MeshConfig,
    SurfaceMesh1D,
    build_disk_mesh,
    build_torso_mesh,
    check_mesh,
    define_electrodes,
    extract_epicardial_curve,
    mesh_quality,
    refine_uniform,
)
from ecgifoe.geometry.meshio import read_mesh, write_mesh
from ecgifoe.geometry.tags import Marker, Region


def test_torso_mesh_invariants(torso_mesh):
    assert check_mesh(torso_mesh)
    assert np.all(torso_mesh.signed_areas() > 0.0)
    assert torso_mesh.angles().min() >= MIN_ANGLE_DEG
    assert set(torso_mesh.regions) == {Region.TORSO, Region.LUNG}
    assert set(torso_mesh.markers) == {Marker.HEART, Marker.OUTER}

    heart = torso_mesh.boundary_vertices(Marker.HEART)
    radii = np.linalg.norm(torso_mesh.vertices[heart] - np.asarray(torso_mesh.heart_center), axis=1)
    np.testing.assert_allclose(radii, 1.0, atol=1e-12)
    outer = torso_mesh.boundary_vertices(Marker.OUTER)
    np.testing.assert_allclose(np.linalg.norm(torso_mesh.vertices[outer], axis=1), 3.0, atol=1e-12)


def test_torso_mesh_edges_respect_target(torso_mesh, torso_config):
    quality = mesh_quality(torso_mesh)
    assert quality["max_diameter"] <= 1.5 * torso_config.target_h
    assert quality["triangles"] == torso_mesh.n_triangles


def test_torso_mesh_is_reproducible(torso_config):
    a = build_torso_mesh(torso_config, seed=3)
    b = build_torso_mesh(torso_config, seed=3)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.triangles, b.triangles)


@pytest.mark.parametrize(
    "overrides",
    [
        {"heart_center": (2.5, 0.0)},
        {"lung_disks": [((1.5, 0.0), 0.6)]},
        {"lung_disks": [((0.0, 2.8), 0.5)]},
        {"target_h": 0.0},
    ],
)
def test_invalid_geometry_is_rejected(torso_config, overrides):
    with pytest.raises(GeometryOverlap):
        build_torso_mesh(replace(torso_config, **overrides))


def test_epicardial_curve_is_counterclockwise_loop(torso_mesh):
    curve = extract_epicardial_curve(torso_mesh)
    heart = torso_mesh.boundary_vertices(Marker.HEART)
    assert sorted(curve.vertex_ids) == sorted(heart)
    assert curve.n_segments == curve.n_vertices

    rel = curve.points - np.asarray(torso_mesh.heart_center)
    twice_area = np.sum(rel[:, 0] * np.roll(rel[:, 1], -1) - np.roll(rel[:, 0], -1) * rel[:, 1])
    assert twice_area > 0.0
    assert 0.99 * 2.0 * math.pi < curve.length < 2.0 * math.pi
    np.testing.assert_allclose(np.linalg.norm(curve.normals, axis=1), 1.0)
    np.testing.assert_allclose(np.sum(curve.normals * curve.tangents, axis=1), 0.0, atol=1e-14)


def test_broken_epicardial_loop_is_rejected(torso_mesh):
    first_heart = int(np.flatnonzero(torso_mesh.markers == Marker.HEART)[0])
    keep = np.ones(len(torso_mesh.markers), dtype=bool)
    keep[first_heart] = False
    broken = replace(torso_mesh, boundary_edges=torso_mesh.boundary_edges[keep], markers=torso_mesh.markers[keep])
    with pytest.raises(TopologyError):
        extract_epicardial_curve(broken)


def test_surface_rejects_degenerate_segments():
    with pytest.raises(TopologyError):
        SurfaceMesh1D.from_points([[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(TopologyError):
        SurfaceMesh1D.from_points([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]])


def test_electrode_patches(torso_mesh):
    electrodes = define_electrodes(torso_mesh, 8, coverage=0.9)
    assert electrodes.n_electrodes == 8
    assert all(len(patch) > 0 for patch in electrodes.patches)
    flat = np.concatenate(electrodes.patches)
    assert len(np.unique(flat)) == len(flat)
    assert np.all(torso_mesh.markers[flat] == Marker.OUTER)

    edge = torso_mesh.vertices[torso_mesh.boundary_edges[flat]]
    longest = np.linalg.norm(edge[:, 1] - edge[:, 0], axis=1).max()
    covered = electrodes.patch_lengths.sum()
    assert abs(covered - 0.9 * 2.0 * math.pi * 3.0) <= 8 * longest


def test_electrodes_need_resolution(torso_mesh):
    with pytest.raises(InsufficientResolution):
        define_electrodes(torso_mesh, 1000)
    with pytest.raises(InsufficientResolution):
        define_electrodes(torso_mesh, 8, coverage=0.0)


def test_disk_mesh():
    disk = build_disk_mesh(1.0, 0.3, center=(0.5, -0.2))
    assert check_mesh(disk)
    assert set(disk.regions) == {Region.HEART}
    assert set(disk.markers) == {Marker.HEART}
    area = disk.signed_areas().sum()
    assert 0.95 * math.pi < area < math.pi


def test_uniform_refinement_is_nested():
    disk = build_disk_mesh(1.0, 0.3)
    fine = refine_uniform(disk)
    assert fine.n_triangles == 4 * disk.n_triangles
    assert np.array_equal(fine.vertices[: disk.n_vertices], disk.vertices)
    assert len(fine.boundary_edges) == 2 * len(disk.boundary_edges)
    assert fine.signed_areas().sum() > disk.signed_areas().sum()
    assert fine.diameters().max() < 0.6 * disk.diameters().max()


def test_mesh_file_roundtrip(tmp_path, torso_mesh):
    electrodes = define_electrodes(torso_mesh, 8)
    path = str(tmp_path / "mesh.txt")
    write_mesh(torso_mesh, path, electrodes)
    mesh, read_electrodes = read_mesh(path)

    assert np.array_equal(mesh.vertices, torso_mesh.vertices)
    assert np.array_equal(mesh.triangles, torso_mesh.triangles)
    assert list(mesh.regions) == list(torso_mesh.regions)
    assert list(mesh.markers) == list(torso_mesh.markers)
    assert mesh.heart_center == torso_mesh.heart_center
    for a, b in zip(read_electrodes.patches, electrodes.patches):
        assert np.array_equal(a, b)
    np.testing.assert_allclose(read_electrodes.patch_lengths, electrodes.patch_lengths)


def test_malformed_mesh_file(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("mesh2d v1\nvertices 3\n0 0\n")
    with pytest.raises(IoError):
        read_mesh(str(path))
    with pytest.raises(IoError):
        read_mesh(str(tmp_path / "missing.txt"))


def _circumcircles(vertices, triangles):
    a, b, c = (vertices[triangles[:, i]] for i in range(3))
    d = 2.0 * (a[:, 0] * (b[:, 1] - c[:, 1]) + b[:, 0] * (c[:, 1] - a[:, 1]) + c[:, 0] * (a[:, 1] - b[:, 1]))
    sa, sb, sc = (np.sum(p * p, axis=1) for p in (a, b, c))
    ux = (sa * (b[:, 1] - c[:, 1]) + sb * (c[:, 1] - a[:, 1]) + sc * (a[:, 1] - b[:, 1])) / d
    uy = (sa * (c[:, 0] - b[:, 0]) + sb * (a[:, 0] - c[:, 0]) + sc * (b[:, 0] - a[:, 0])) / d
    centers = np.stack([ux, uy], axis=1)
    return centers, np.linalg.norm(a - centers, axis=1)


def test_disk_mesh_is_delaunay():
    disk = build_disk_mesh(1.0, 0.3)
    centers, radii = _circumcircles(disk.vertices, disk.triangles)
    dist = np.linalg.norm(disk.vertices[None, :, :] - centers[:, None, :], axis=2)
    assert np.all(dist >= radii[:, None] - 1e-9)


def test_torso_mesh_leaves_heart_empty(torso_mesh):
    centroids = torso_mesh.centroids()
    dist = np.linalg.norm(centroids - np.asarray(torso_mesh.heart_center), axis=1)
    assert np.all(dist >= torso_mesh.heart_radius)
    # the annulus is covered: pi (R^2 - r^2) up to the polygonal boundaries
    assert torso_mesh.signed_areas().sum() == pytest.approx(math.pi * (9.0 - 1.0), rel=0.02)


def test_check_mesh_circle_tolerance(torso_mesh):
    heart = torso_mesh.boundary_vertices(Marker.HEART)
    centre = np.asarray(torso_mesh.heart_center)
    vertices = torso_mesh.vertices.copy()
    vertices[heart[0]] = centre + (1.0 + 5e-12) * (vertices[heart[0]] - centre)
    with pytest.raises(TopologyError):
        check_mesh(replace(torso_mesh, vertices=vertices))


def test_check_mesh_diameter_bound(torso_mesh, torso_config):
    assert torso_mesh.target_h == torso_config.target_h
    with pytest.raises(MeshQuality):
        check_mesh(replace(torso_mesh, target_h=0.5 * torso_config.target_h))
    assert check_mesh(replace(torso_mesh, target_h=None))
    assert refine_uniform(build_disk_mesh(1.0, 0.3)).target_h == pytest.approx(0.15)
