"""Polygons, graded meshes, mesh IO, boundary data validation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sif_lab.geometry import (BoundaryData, MeshFormatError, NotReentrant,
                              TriMesh, UnsupportedPolygon, build_polygon,
                              generate_lshape_mesh, generate_square_mesh,
                              load_mesh, lshape_polygon, lshape_vertices,
                              serialize_mesh, validate_boundary_data)


def test_lshape_polygon_angles_and_measures():
    poly = lshape_polygon(1.0)
    assert poly.omega1 == pytest.approx(-math.pi / 2)
    assert poly.omega2 == pytest.approx(math.pi)
    assert poly.omega == pytest.approx(1.5 * math.pi)
    assert poly.area == pytest.approx(3.0)
    assert poly.perimeter == pytest.approx(8.0)
    assert [e.on_corner_ray for e in poly.edges] == [True, False, False, False, False, True]
    assert len(poly.far_edges) == 4


def test_build_polygon_reports_frame_from_first_edge():
    # same L-shape listed from a different starting ray
    verts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (-1.0, 1.0),
             (-1.0, -1.0), (0.0, -1.0)]
    poly = build_polygon(verts)
    assert poly.omega1 == pytest.approx(0.0)
    assert poly.omega2 == pytest.approx(1.5 * math.pi)


def test_convex_polygon_rejected():
    with pytest.raises(NotReentrant):
        build_polygon([(0, 0), (1, 0), (1, 1), (0, 1)])


def test_outward_normals():
    poly = lshape_polygon(1.0)
    centroid = np.array([0.25, 0.25])
    for e in poly.edges:
        mid = 0.5 * (np.asarray(e.p0) + np.asarray(e.p1))
        assert np.dot(e.normal, mid - centroid) > -0.6  # points away from interior
        # unit length
        assert np.hypot(*e.normal) == pytest.approx(1.0)


@pytest.mark.parametrize("h,levels", [(0.25, 3), (0.125, 5)])
def test_lshape_mesh_invariants(h, levels):
    poly = lshape_polygon(1.0)
    mesh = generate_lshape_mesh(poly, h, levels=levels)
    mesh.validate()
    assert TriMesh.areas(mesh).sum() == pytest.approx(poly.area, abs=1e-12)
    assert np.all(TriMesh.areas(mesh) > 0)
    # boundary edge lengths reproduce the perimeter
    lens = [np.hypot(*(mesh.nodes[j] - mesh.nodes[i])) for i, j, _ in mesh.bedges]
    assert sum(lens) == pytest.approx(poly.perimeter, abs=1e-12)
    tags = {int(t) for _, _, t in mesh.bedges}
    assert tags == {1, 2, 3, 4, 5, 6}


def test_corner_grading_reaches_prescribed_scale():
    poly = lshape_polygon(1.0)
    h, levels, ratio = 0.25, 4, 0.5
    mesh = generate_lshape_mesh(poly, h, grading_ratio=ratio, levels=levels)
    rnode = np.hypot(mesh.nodes[:, 0], mesh.nodes[:, 1])
    corner_tris = [t for t in mesh.tris if np.any(rnode[list(t)] < 1e-12)]
    assert corner_tris
    diam = max(np.max(np.linalg.norm(
        mesh.nodes[list(t)][None, :] - mesh.nodes[list(t)][:, None], axis=-1))
        for t in corner_tris)
    target = math.sqrt(2.0) * h * ratio ** levels
    assert diam < 2.0 * target


def test_square_mesh_for_fem_smoke():
    mesh = generate_square_mesh(4, 1.0)
    mesh.validate()
    assert TriMesh.areas(mesh).sum() == pytest.approx(1.0)
    assert {int(t) for _, _, t in mesh.bedges} == {1, 2, 3, 4}


def test_mesh_roundtrip_exact():
    poly = lshape_polygon(1.0)
    mesh = generate_lshape_mesh(poly, 0.25, levels=2)
    text = serialize_mesh(mesh)
    again = load_mesh(text, poly)
    assert np.array_equal(again.nodes, mesh.nodes)
    assert np.array_equal(again.tris, mesh.tris)
    assert np.array_equal(again.bedges, mesh.bedges)


def test_mesh_format_errors_carry_positions():
    with pytest.raises(MeshFormatError):
        load_mesh("nodes 2\n0 0\n")  # truncated
    bad = "nodes 3\n0 0\n1 0\n0 1\ntris 1\n0 1 zebra\nbedges 0\n"
    with pytest.raises(MeshFormatError):
        load_mesh(bad)


def test_unsupported_polygon_for_mesher():
    verts = [(0.0, 0.0), (0.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
    poly = build_polygon(verts)
    with pytest.raises(UnsupportedPolygon):
        generate_lshape_mesh(poly, 0.25)


def test_boundary_data_validation_flags():
    poly = lshape_polygon(1.0)
    ok = BoundaryData.zero(poly)
    rep = validate_boundary_data(poly, ok)
    assert rep["corner_vanishing"] and rep["vertex_continuity_ok"]
    assert rep["flux_defect"] == pytest.approx(0.0, abs=1e-12)

    bad = BoundaryData(
        traces={e.tag: (lambda x, y: np.stack(
            [np.ones(np.shape(x)), np.zeros(np.shape(x))], axis=-1))
            for e in poly.edges},
        zeta=None)
    rep = validate_boundary_data(poly, bad)
    assert not rep["corner_vanishing"]


@settings(max_examples=30, deadline=None)
@given(size=st.floats(0.5, 3.0))
def test_lshape_scaling_property(size):
    poly = lshape_polygon(size)
    assert poly.area == pytest.approx(3.0 * size * size)
    assert poly.omega == pytest.approx(1.5 * math.pi)
    verts = np.asarray(lshape_vertices(size))
    assert np.max(np.abs(verts)) == pytest.approx(size)
