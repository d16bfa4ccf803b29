"""Tests for the detection, calibration, label and tracking file formats."""

import math

import numpy as np
import pytest

from src.geometry import Box2D, Box3D
from src.kitti_io import (
    SENTINEL_3D,
    SENTINEL_ALPHA,
    CalibrationError,
    CalibrationSet,
    Detection2D,
    Detection3D,
    GtAnnotation,
    KittiParseError,
    TrackRow,
    detections_to_camera,
    read_calibration,
    read_detections_2d,
    read_detections_3d,
    read_ground_truth,
    read_tracks,
    write_calibration,
    write_detections_2d,
    write_detections_3d,
    write_ground_truth,
    write_tracks,
)


# Calibration file of KITTI tracking sequence 0000
KITTI_CALIB = """\
P0: 7.215377000000e+02 0.000000000000e+00 6.095593000000e+02 0.000000000000e+00 0.000000000000e+00 7.215377000000e+02 1.728540000000e+02 0.000000000000e+00 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 0.000000000000e+00
P2: 7.215377000000e+02 0.000000000000e+00 6.095593000000e+02 4.485728000000e+01 0.000000000000e+00 7.215377000000e+02 1.728540000000e+02 2.163791000000e-01 0.000000000000e+00 0.000000000000e+00 1.000000000000e+00 2.745884000000e-03
R_rect 9.999239000000e-01 9.837760000000e-03 -7.445048000000e-03 -9.869795000000e-03 9.999421000000e-01 -4.278459000000e-03 7.402527000000e-03 4.351614000000e-03 9.999631000000e-01
Tr_velo_cam 7.533745000000e-03 -9.999714000000e-01 -6.166020000000e-04 -4.069766000000e-03 1.480249000000e-02 7.280733000000e-04 -9.998902000000e-01 -7.631618000000e-02 9.998621000000e-01 7.523790000000e-03 1.480755000000e-02 -2.717806000000e-01
"""


def write_lines(path, *lines: str):
    path.write_text("".join(f"{line}\n" for line in lines))
    return path


class TestReadDetections2D:
    """Tests for the 2D detection CSV reader."""

    def test_direct_field_mapping(self, tmp_path):
        path = write_lines(tmp_path / "d2.txt", "3,100.0,50.0,180.0,120.0,0.93")
        result = read_detections_2d(path)

        assert result.frame(3) == [Detection2D(3, 100.0, 50.0, 180.0, 120.0, 0.93)]
        assert result.frame(3)[0].box == Box2D(100.0, 50.0, 180.0, 120.0)

    def test_empty_file(self, tmp_path):
        path = write_lines(tmp_path / "d2.txt")
        result = read_detections_2d(path)

        assert result.by_frame == {}
        assert result.num_frames == 0
        assert result.rejected == []

    def test_grouping_is_dense(self, tmp_path):
        path = write_lines(tmp_path / "d2.txt", "2,0,0,10,10,0.5", "0,0,0,10,10,0.5")
        result = read_detections_2d(path)

        assert list(result.by_frame) == [0, 1, 2]
        assert result.frame(1) == []
        assert result.frame(7) == []

    def test_original_line_order_within_frame(self, tmp_path):
        path = write_lines(
            tmp_path / "d2.txt",
            "1,0,0,10,10,0.1",
            "0,5,5,15,15,0.2",
            "1,20,0,30,10,0.3",
        )
        result = read_detections_2d(path)

        assert [d.score for d in result.frame(1)] == [0.1, 0.3]

    def test_left_not_less_than_right_is_rejected(self, tmp_path):
        path = write_lines(tmp_path / "d2.txt", "0,10,10,20,20,0.9", "3,180,50,100,120,0.9")
        result = read_detections_2d(path)

        assert result.accepted_count == 1
        assert len(result.rejected) == 1
        assert result.rejected[0].line_number == 2
        assert "left >= right" in result.rejected[0].reason

    def test_top_not_less_than_bottom_is_rejected(self, tmp_path):
        path = write_lines(tmp_path / "d2.txt", "0,10,20,20,20,0.9")
        result = read_detections_2d(path)

        assert result.accepted_count == 0
        assert "top >= bottom" in result.rejected[0].reason

    def test_negative_frame_is_rejected(self, tmp_path):
        path = write_lines(tmp_path / "d2.txt", "-1,10,10,20,20,0.9")
        assert len(read_detections_2d(path).rejected) == 1

    def test_wrong_field_count_names_line(self, tmp_path):
        path = write_lines(tmp_path / "d2.txt", "0,10,10,20,20,0.9", "1,10,10,20,20")

        with pytest.raises(KittiParseError) as exc_info:
            read_detections_2d(path)

        assert exc_info.value.line_number == 2
        assert ":2:" in str(exc_info.value)

    def test_non_numeric_field_names_line(self, tmp_path):
        path = write_lines(tmp_path / "d2.txt", "0,10,ten,20,20,0.9")

        with pytest.raises(KittiParseError) as exc_info:
            read_detections_2d(path)

        assert exc_info.value.line_number == 1

    def test_blank_lines_are_skipped(self, tmp_path):
        path = write_lines(tmp_path / "d2.txt", "", "0,10,10,20,20,0.9", "   ")
        assert read_detections_2d(path).accepted_count == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            read_detections_2d(tmp_path / "absent.txt")


class TestReadDetections3D:
    """Tests for the 3D detection CSV reader."""

    def test_direct_field_mapping(self, tmp_path):
        path = write_lines(tmp_path / "d3.txt", "0,1.5,1.6,3.9,2.0,1.7,15.0,0.1,0.88")
        result = read_detections_3d(path)

        assert result.frame(0) == [Detection3D(0, 1.5, 1.6, 3.9, 2.0, 1.7, 15.0, 0.1, 0.88)]

    def test_rot_y_is_wrapped(self, tmp_path):
        path = write_lines(tmp_path / "d3.txt", "0,1.5,1.6,3.9,2.0,1.7,15.0,3.5,0.88")
        det = read_detections_3d(path).frame(0)[0]

        assert det.rot_y == pytest.approx(3.5 - 2 * math.pi)
        assert det.rot_y == pytest.approx(-2.783, abs=1e-3)

    @pytest.mark.parametrize("rot_y", [-20.0, -4.0, 0.0, 3.2, 9.5, 100.0])
    def test_rot_y_always_in_range(self, tmp_path, rot_y):
        path = write_lines(tmp_path / "d3.txt", f"0,1.5,1.6,3.9,2.0,1.7,15.0,{rot_y},0.5")
        det = read_detections_3d(path).frame(0)[0]

        assert -math.pi <= det.rot_y <= math.pi
        assert math.sin(det.rot_y) == pytest.approx(math.sin(rot_y), abs=1e-9)

    @pytest.mark.parametrize(
        "line",
        [
            "0,0.0,1.6,3.9,2.0,1.7,15.0,0.1,0.88",
            "0,1.5,-1.6,3.9,2.0,1.7,15.0,0.1,0.88",
            "0,1.5,1.6,0,2.0,1.7,15.0,0.1,0.88",
        ],
    )
    def test_nonpositive_dimension_is_rejected(self, tmp_path, line):
        result = read_detections_3d(write_lines(tmp_path / "d3.txt", line))

        assert result.accepted_count == 0
        assert result.rejected[0].reason == "nonpositive dimension"

    def test_non_finite_value_is_rejected(self, tmp_path):
        result = read_detections_3d(write_lines(tmp_path / "d3.txt", "0,1.5,1.6,3.9,nan,1.7,15.0,0.1,0.88"))
        assert result.rejected[0].reason == "non-finite value"

    def test_wrong_field_count(self, tmp_path):
        with pytest.raises(KittiParseError, match="expected 9"):
            read_detections_3d(write_lines(tmp_path / "d3.txt", "0,1.5,1.6,3.9,2.0,1.7,15.0,0.1"))

    def test_count_is_preserved(self, tmp_path):
        lines = [f"{i % 4},1.5,1.6,3.9,{i}.0,1.7,15.0,0.1,0.5" for i in range(11)]
        result = read_detections_3d(write_lines(tmp_path / "d3.txt", *lines, "0,0,1,1,0,0,0,0,0"))

        assert sum(len(result.frame(i)) for i in range(result.num_frames)) == 11
        assert result.accepted_count == 11
        assert len(result.rejected) == 1


class TestCalibration:
    """Tests for calibration parsing and serialization."""

    def test_pinhole_entries(self, tmp_path):
        path = write_lines(
            tmp_path / "calib.txt",
            "P2: 700.0 0.0 600.0 0.0 0.0 700.0 180.0 0.0 0.0 0.0 1.0 0.0",
        )
        calib = read_calibration(path)

        expected = np.array([[700.0, 0.0, 600.0, 0.0], [0.0, 700.0, 180.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
        np.testing.assert_array_equal(calib.p2, expected)
        np.testing.assert_array_equal(calib.r_rect, np.eye(3))
        assert calib.tr_velo_cam is None

    def test_kitti_tracking_file(self, tmp_path):
        calib = read_calibration(write_lines(tmp_path / "0000.txt", KITTI_CALIB))

        assert calib.p2[0, 0] == pytest.approx(721.5377)
        assert calib.p2[0, 3] == pytest.approx(44.85728)
        assert calib.r_rect[2, 2] == pytest.approx(0.9999631)
        assert calib.tr_velo_cam is not None
        assert calib.tr_velo_cam[2, 3] == pytest.approx(-0.2717806)

    def test_object_style_aliases(self, tmp_path):
        path = write_lines(
            tmp_path / "calib.txt",
            "P2: 700 0 600 0 0 700 180 0 0 0 1 0",
            "R0_rect: 1 0 0 0 1 0 0 0 1",
            "Tr_velo_to_cam: 0 -1 0 0 0 0 -1 0 1 0 0 0",
        )
        calib = read_calibration(path, input_frame="lidar")

        assert calib.tr_velo_cam is not None
        assert calib.tr_velo_cam[0, 1] == -1.0

    def test_missing_p2(self, tmp_path):
        path = write_lines(tmp_path / "calib.txt", "R_rect: 1 0 0 0 1 0 0 0 1")

        with pytest.raises(CalibrationError, match="calibration missing P2"):
            read_calibration(path)

    def test_lidar_input_requires_transform(self, tmp_path):
        path = write_lines(tmp_path / "calib.txt", "P2: 700 0 600 0 0 700 180 0 0 0 1 0")

        with pytest.raises(CalibrationError, match="Tr_velo_cam"):
            read_calibration(path, input_frame="lidar")

    def test_wrong_entry_count(self, tmp_path):
        path = write_lines(tmp_path / "calib.txt", "P2: 700 0 600 0 0 700 180 0 0 0 1")

        with pytest.raises(CalibrationError, match="needs 12 values"):
            read_calibration(path)

    def test_non_positive_focal(self, tmp_path):
        path = write_lines(tmp_path / "calib.txt", "P2: 0 0 600 0 0 700 180 0 0 0 1 0")

        with pytest.raises(CalibrationError, match="focal"):
            read_calibration(path)

    def test_round_trip(self, tmp_path):
        first = read_calibration(write_lines(tmp_path / "in.txt", KITTI_CALIB))
        write_calibration(tmp_path / "out.txt", first)
        second = read_calibration(tmp_path / "out.txt")

        np.testing.assert_array_equal(first.p2, second.p2)
        np.testing.assert_array_equal(first.r_rect, second.r_rect)
        np.testing.assert_array_equal(first.tr_velo_cam, second.tr_velo_cam)


class TestDetectionsToCamera:
    """Tests for LiDAR-to-camera conversion of 3D detections."""

    @pytest.fixture
    def calib(self):
        tr = np.array([[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [1.0, 0.0, 0.0, 0.0]])
        return CalibrationSet(p2=CalibrationSet.pinhole(700.0, 600.0, 180.0).p2, tr_velo_cam=tr)

    def test_axes_are_permuted(self, calib):
        det = Detection3D(0, 1.5, 1.6, 3.9, 10.0, 2.0, -1.0, 0.0, 0.7)
        (converted,) = detections_to_camera([det], calib)

        assert (converted.x, converted.y, converted.z) == pytest.approx((-2.0, 1.0, 10.0))
        assert converted.rot_y == pytest.approx(-0.5 * math.pi)
        assert (converted.h, converted.w, converted.l, converted.score) == (1.5, 1.6, 3.9, 0.7)

    def test_empty_input(self, calib):
        assert detections_to_camera([], calib) == []

    def test_requires_transform(self):
        with pytest.raises(CalibrationError):
            detections_to_camera([], CalibrationSet.pinhole(700.0, 600.0, 180.0))


class TestWriteTracks:
    """Tests for the tracking submission writer."""

    def test_single_confirmed_track(self, tmp_path):
        box3d = Box3D(2.0, 1.7, 15.0, 1.5, 1.6, 3.9, 0.1)
        row = TrackRow(0, 0, "Car", Box2D(100.0, 50.0, 180.0, 120.0), box3d, 0.9)
        write_tracks(tmp_path / "out.txt", [row])

        lines = (tmp_path / "out.txt").read_text().splitlines()
        assert len(lines) == 1
        assert lines[0].startswith("0 0 Car 0 0 ")
        assert len(lines[0].split()) == 18

    def test_alpha(self):
        box3d = Box3D(2.0, 1.7, 15.0, 1.5, 1.6, 3.9, 0.1)
        row = TrackRow(0, 0, "Car", Box2D(0.0, 0.0, 1.0, 1.0), box3d, 1.0)

        assert row.alpha == pytest.approx(0.1 - math.atan2(2.0, 15.0))
        assert row.alpha == pytest.approx(-0.03255, abs=1e-5)

    def test_empty_result_set(self, tmp_path):
        write_tracks(tmp_path / "out.txt", [])
        assert (tmp_path / "out.txt").read_text() == ""

    def test_sorted_by_frame_then_id(self, tmp_path):
        box = Box2D(0.0, 0.0, 10.0, 10.0)
        rows = [TrackRow(f, i, "Car", box, None, 1.0) for f, i in [(1, 0), (0, 5), (1, 3), (0, 2)]]
        write_tracks(tmp_path / "out.txt", rows)

        keys = [tuple(map(int, line.split()[:2])) for line in (tmp_path / "out.txt").read_text().splitlines()]
        assert keys == [(0, 2), (0, 5), (1, 0), (1, 3)]

    def test_image_only_row_uses_sentinels(self, tmp_path):
        row = TrackRow(4, 7, "Car", Box2D(10.0, 20.0, 50.0, 60.0), None, 0.5)
        write_tracks(tmp_path / "out.txt", [row])

        tokens = (tmp_path / "out.txt").read_text().split()
        assert float(tokens[5]) == SENTINEL_ALPHA
        assert [float(v) for v in tokens[10:17]] == [SENTINEL_3D] * 7

        (parsed,) = read_tracks(tmp_path / "out.txt").frame(4)
        assert parsed.box3d is None
        assert parsed.box2d == row.box2d

    def test_round_trip(self, tmp_path):
        rows = [
            TrackRow(0, 1, "Car", Box2D(1.5, 2.25, 30.125, 40.0), Box3D(0.3, 1.7, 12.1, 1.5, 1.6, 3.9, -0.7), 0.81),
            TrackRow(2, 0, "Car", Box2D(100.0, 50.0, 180.0, 120.0), Box3D(-4.0, 1.6, 25.0, 1.4, 1.7, 4.2, 2.9), 0.6),
        ]
        write_tracks(tmp_path / "out.txt", rows)
        parsed = read_tracks(tmp_path / "out.txt")

        assert parsed.frame(0) == [rows[0]]
        assert parsed.frame(1) == []
        assert parsed.frame(2) == [rows[1]]

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(OSError):
            write_tracks(tmp_path / "missing" / "out.txt", [])


class TestGroundTruth:
    """Tests for the KITTI tracking label reader."""

    def test_category_filter_and_dontcare(self, tmp_path):
        path = write_lines(
            tmp_path / "label.txt",
            "0 0 Car 0 0 -1.57 100 50 180 120 1.5 1.6 3.9 2.0 1.7 15.0 0.1",
            "0 1 Pedestrian 0 0 0.2 300 40 330 120 1.8 0.6 0.8 -3.0 1.7 12.0 0.0",
            "0 -1 DontCare -1 -1 -10 400 50 450 90 -1 -1 -1 -1000 -1000 -1000 -10",
        )
        result = read_ground_truth(path)

        (ann,) = result.frame(0)
        assert ann.track_id == 0
        assert ann.box3d == Box3D(2.0, 1.7, 15.0, 1.5, 1.6, 3.9, 0.1)
        assert [a.track_id for a in read_ground_truth(path, "Pedestrian").frame(0)] == [1]

    def test_frame_range_counts_other_categories(self, tmp_path):
        """Frames after the last Car still belong to the sequence."""
        path = write_lines(
            tmp_path / "label.txt",
            "0 0 Car 0 0 -1.57 100 50 180 120 1.5 1.6 3.9 2.0 1.7 15.0 0.1",
            "5 1 Pedestrian 0 0 0.2 300 40 330 120 1.8 0.6 0.8 -3.0 1.7 12.0 0.0",
            "7 -1 DontCare -1 -1 -10 400 50 450 90 -1 -1 -1 -1000 -1000 -1000 -10",
        )
        result = read_ground_truth(path)

        assert result.num_frames == 8
        assert result.accepted_count == 1
        assert result.as_frame_list()[1:] == [[] for _ in range(7)]

    def test_short_line(self, tmp_path):
        path = write_lines(tmp_path / "label.txt", "0 0 Car 0 0 -1.57 100 50 180 120")

        with pytest.raises(KittiParseError, match="at least 17"):
            read_ground_truth(path)

    def test_degenerate_box_is_rejected(self, tmp_path):
        path = write_lines(tmp_path / "label.txt", "0 0 Car 0 0 0 180 50 100 120 1.5 1.6 3.9 2.0 1.7 15.0 0.1")
        assert len(read_ground_truth(path).rejected) == 1

    def test_round_trip(self, tmp_path):
        annotations = [
            GtAnnotation(1, 3, "Car", 0.0, 1, 0.25, Box2D(10.0, 20.0, 50.0, 60.0), Box3D(1.0, 1.6, 9.0, 1.5, 1.6, 3.9, 0.5)),
            GtAnnotation(0, 2, "Car", 0.0, 0, -1.0, Box2D(5.5, 6.5, 7.5, 8.5), Box3D(-2.0, 1.7, 30.0, 1.4, 1.7, 4.0, -2.0)),
        ]
        write_ground_truth(tmp_path / "label.txt", annotations)
        parsed = read_ground_truth(tmp_path / "label.txt")

        assert parsed.frame(0) == [annotations[1]]
        assert parsed.frame(1) == [annotations[0]]


class TestDetectionRoundTrip:
    """Write then read detection files."""

    def test_round_trip_2d_and_3d(self, tmp_path):
        dets2d = [Detection2D(0, 1.1, 2.2, 3.3, 4.4, 0.95), Detection2D(2, 10.0, 10.0, 20.5, 30.25, 0.5)]
        dets3d = [Detection3D(1, 1.5, 1.6, 3.9, 2.0, 1.7, 15.0, -3.1, 0.88)]
        write_detections_2d(tmp_path / "d2.txt", dets2d)
        write_detections_3d(tmp_path / "d3.txt", dets3d)

        parsed2d = read_detections_2d(tmp_path / "d2.txt")
        parsed3d = read_detections_3d(tmp_path / "d3.txt")

        assert [d for frame in parsed2d.as_frame_list() for d in frame] == dets2d
        assert parsed3d.frame(1) == dets3d
        assert parsed3d.as_frame_list(3) == [[], dets3d, []]
