import numpy as np
import pytest
from hypothesis import given, strategies as st

from pedsim.errors import (
    DegenerateGeometryError, FormatError, OrderingError, ParseError, UnsupportedGeometryError,
)
from pedsim.scene_io import (
    MarkerTrackSet, MeshFrame, load_marker_tracks, load_mesh_sequence, read_obj,
    write_marker_tracks, write_mesh_sequence, write_obj,
)
from pedsim.synthetic import MARKER_NAMES, walking_markers

TRI = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"


def test_single_triangle(tmp_path):
    p = tmp_path / "one.obj"
    p.write_text(TRI)
    frames = load_mesh_sequence(str(p), 60.0)
    assert len(frames) == 1
    assert frames[0].n_triangles == 1
    assert frames[0].timestamp == 0.0


def test_quad_rejected_with_line_number(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(UnsupportedGeometryError) as exc:
        read_obj(p)
    assert exc.value.line == 5


def test_malformed_line_reports_line(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\n# comment\n\nv 1 x 0\n")
    with pytest.raises(ParseError) as exc:
        read_obj(p)
    assert exc.value.line == 4
    assert ":4" in str(exc.value)


def test_other_records_rejected(tmp_path):
    p = tmp_path / "vn.obj"
    p.write_text(TRI + "vn 0 0 1\n")
    with pytest.raises(ParseError):
        read_obj(p)


def test_slash_face_tokens(tmp_path):
    p = tmp_path / "slash.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n")
    assert read_obj(p).triangles.tolist() == [[0, 1, 2]]


def test_degenerate_triangle_raises(tmp_path):
    p = tmp_path / "deg.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n")
    with pytest.raises(DegenerateGeometryError):
        read_obj(p)


def test_index_out_of_range(tmp_path):
    p = tmp_path / "oob.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n")
    with pytest.raises(ParseError):
        read_obj(p)


def test_69_frames_at_60hz(tmp_path):
    frame = read_obj_text(tmp_path, TRI)
    write_mesh_sequence([frame] * 69, tmp_path / "seq")
    frames = load_mesh_sequence(str(tmp_path / "seq" / "frame_%04d.obj"), 60.0)
    assert len(frames) == 69
    assert frames[0].timestamp == 0.0
    assert frames[-1].timestamp == 68 / 60


def test_directory_and_glob(tmp_path):
    frame = read_obj_text(tmp_path, TRI)
    write_mesh_sequence([frame] * 3, tmp_path / "seq")
    assert len(load_mesh_sequence(str(tmp_path / "seq"), 30.0)) == 3
    assert len(load_mesh_sequence(str(tmp_path / "seq" / "*.obj"), 30.0)) == 3
    with pytest.raises(FileNotFoundError):
        load_mesh_sequence(str(tmp_path / "nothing_%04d.obj"), 30.0)


def read_obj_text(tmp_path, text):
    p = tmp_path / "src.obj"
    p.write_text(text)
    return read_obj(p)


finite = st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=True)


@given(st.lists(st.tuples(finite, finite, finite), min_size=3, max_size=3))
def test_obj_round_trip_bit_exact(tmp_path_factory, pts):
    verts = np.array(pts, dtype=float)
    tris = np.array([[0, 1, 2]])
    try:
        frame = MeshFrame(0.0, verts, tris)
    except DegenerateGeometryError:
        return
    d = tmp_path_factory.mktemp("rt")
    write_obj(frame, d / "a.obj")
    back = read_obj(d / "a.obj")
    assert back.vertices.tobytes() == frame.vertices.tobytes()
    assert np.array_equal(back.triangles, frame.triangles)


def test_marker_tracks_23_at_60hz(tmp_path):
    tracks = walking_markers(30, 60.0)
    write_marker_tracks(tracks, tmp_path / "m.csv")
    back = load_marker_tracks(tmp_path / "m.csv")
    assert back.n_markers == 23
    assert back.names == MARKER_NAMES
    assert back.frame_rate_hz == pytest.approx(60.0, rel=1e-9)
    assert np.array_equal(back.positions, tracks.positions)


def test_one_constant_marker(tmp_path):
    p = tmp_path / "one.csv"
    p.write_text("time,m01_x,m01_y,m01_z\n0,1,2,3\n0.5,1,2,3\n1.0,1,2,3\n")
    t = load_marker_tracks(p)
    assert t.n_markers == 1
    assert np.all(t.positions == [1, 2, 3])


def test_duplicate_timestamp_is_ordering_error(tmp_path):
    p = tmp_path / "dup.csv"
    p.write_text("time,m01_x,m01_y,m01_z\n0,1,2,3\n0,1,2,3\n")
    with pytest.raises(OrderingError):
        load_marker_tracks(p)


def test_ragged_row_is_format_error(tmp_path):
    p = tmp_path / "rag.csv"
    p.write_text("time,m01_x,m01_y,m01_z\n0,1,2,3\n1,1,2\n")
    with pytest.raises(FormatError):
        load_marker_tracks(p)


def test_nonuniform_spacing_rejected():
    with pytest.raises(FormatError):
        MarkerTrackSet([0.0, 1.0, 3.0], np.zeros((3, 1, 3)))
