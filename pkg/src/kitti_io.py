"""Readers and writers for detection, calibration, ground-truth and tracking files.

Formats:
    2D detections   ``frame,left,top,right,bottom,score``
    3D detections   ``frame,h,w,l,x,y,z,rot_y,score`` (rectified camera frame)
    calibration     KITTI ``key: v1 v2 ...`` rows (P2, R_rect/R0_rect, Tr_velo_cam/Tr_velo_to_cam)
    ground truth    KITTI tracking labels ``frame id type truncated occluded alpha l t r b h w l x y z rot_y``
    tracking output the ground-truth layout plus a trailing score
"""

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Generic, TypeVar

import numpy as np

from .geometry import Box2D, Box3D, wrap_angle


logger = logging.getLogger(__name__)

# KITTI placeholders for rows without 3D information
SENTINEL_3D = -1000.0
SENTINEL_ALPHA = -10.0

_CALIB_ALIASES = {
    "P2": "P2",
    "R_rect": "R_rect",
    "R0_rect": "R_rect",
    "Tr_velo_cam": "Tr_velo_cam",
    "Tr_velo_to_cam": "Tr_velo_cam",
}
_CALIB_SHAPES = {"P2": (3, 4), "R_rect": (3, 3), "Tr_velo_cam": (3, 4)}

T = TypeVar("T")


class KittiParseError(ValueError):
    """A line could not be parsed at all."""

    def __init__(self, path: str | Path, line_number: int, message: str):
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class CalibrationError(ValueError):
    """Calibration data is missing or unusable."""


@dataclass(frozen=True, slots=True)
class Detection2D:
    """Camera detection in image pixels."""

    frame: int
    left: float
    top: float
    right: float
    bottom: float
    score: float

    @property
    def box(self) -> Box2D:
        return Box2D(self.left, self.top, self.right, self.bottom)


@dataclass(frozen=True, slots=True)
class Detection3D:
    """LiDAR detection in the rectified camera frame (bottom-center anchor)."""

    frame: int
    h: float
    w: float
    l: float
    x: float
    y: float
    z: float
    rot_y: float
    score: float

    @property
    def box(self) -> Box3D:
        return Box3D(self.x, self.y, self.z, self.h, self.w, self.l, self.rot_y)

    @classmethod
    def from_box(cls, frame: int, box: Box3D, score: float) -> "Detection3D":
        return cls(frame, box.h, box.w, box.l, box.x, box.y, box.z, wrap_angle(box.yaw), score)


@dataclass(frozen=True)
class CalibrationSet:
    """Projection and rectification matrices of one sequence.

    Attributes:
        p2: 3x4 projection matrix of camera 2
        r_rect: 3x3 rectifying rotation
        tr_velo_cam: 3x4 LiDAR-to-camera transform, None when absent
    """

    p2: np.ndarray
    r_rect: np.ndarray = field(default_factory=lambda: np.eye(3))
    tr_velo_cam: np.ndarray | None = None

    def __post_init__(self):
        """Validate matrix shapes and focal lengths."""
        if self.p2.shape != (3, 4):
            raise CalibrationError(f"P2 must be 3x4, got {self.p2.shape}")
        if self.r_rect.shape != (3, 3):
            raise CalibrationError(f"R_rect must be 3x3, got {self.r_rect.shape}")
        if self.tr_velo_cam is not None and self.tr_velo_cam.shape != (3, 4):
            raise CalibrationError(f"Tr_velo_cam must be 3x4, got {self.tr_velo_cam.shape}")
        for name, matrix in (("P2", self.p2), ("R_rect", self.r_rect), ("Tr_velo_cam", self.tr_velo_cam)):
            if matrix is not None and not np.all(np.isfinite(matrix)):
                raise CalibrationError(f"{name} contains non-finite entries")
        if self.p2[0, 0] <= 0 or self.p2[1, 1] <= 0:
            raise CalibrationError("P2 focal lengths must be positive")

    @classmethod
    def pinhole(cls, focal: float, cx: float, cy: float) -> "CalibrationSet":
        """Calibration of an ideal pinhole camera at the rectified origin."""
        p2 = np.array([[focal, 0.0, cx, 0.0], [0.0, focal, cy, 0.0], [0.0, 0.0, 1.0, 0.0]])
        return cls(p2=p2)


@dataclass(frozen=True, slots=True)
class GtAnnotation:
    """One ground-truth object in one frame."""

    frame: int
    track_id: int
    category: str
    truncated: float
    occluded: int
    alpha: float
    box2d: Box2D
    box3d: Box3D


@dataclass(frozen=True, slots=True)
class TrackRow:
    """One emitted trajectory state in one frame.

    ``box3d`` is None for trajectories tracked in the image only.
    """

    frame: int
    track_id: int
    category: str
    box2d: Box2D
    box3d: Box3D | None
    score: float

    @property
    def alpha(self) -> float:
        """Observation angle: rot_y - atan2(x, z)."""
        if self.box3d is None:
            return SENTINEL_ALPHA
        return self.box3d.yaw - math.atan2(self.box3d.x, self.box3d.z)


@dataclass(frozen=True, slots=True)
class RejectedLine:
    """A parsable line whose values violate a record invariant."""

    line_number: int
    reason: str


@dataclass
class ParseResult(Generic[T]):
    """Records grouped densely by frame plus rejected-line diagnostics."""

    by_frame: dict[int, list[T]] = field(default_factory=dict)
    rejected: list[RejectedLine] = field(default_factory=list)

    @property
    def num_frames(self) -> int:
        return len(self.by_frame)

    @property
    def accepted_count(self) -> int:
        return sum(len(records) for records in self.by_frame.values())

    def frame(self, index: int) -> list[T]:
        """Records of one frame (empty beyond the parsed range)."""
        return self.by_frame.get(index, [])

    def as_frame_list(self, num_frames: int | None = None) -> list[list[T]]:
        """Per-frame lists for frames 0..num_frames-1."""
        count = self.num_frames if num_frames is None else num_frames
        return [list(self.frame(i)) for i in range(count)]


def _fmt(value: float) -> str:
    # Shortest representation that parses back to the same float
    return repr(float(value))


def _parse_frame(token: str) -> int:
    value = float(token)
    if not value.is_integer():
        raise ValueError(f"frame index '{token}' is not an integer")
    return int(value)


def _group(
    path: str | Path,
    records: list[tuple[int, T]],
    rejected: list[RejectedLine],
    min_frames: int = 0,
) -> ParseResult[T]:
    # Stable sort keeps the original line order inside a frame
    records.sort(key=lambda item: item[0])
    result: ParseResult[T] = ParseResult(rejected=rejected)
    count = max(records[-1][0] + 1 if records else 0, min_frames)
    if count:
        result.by_frame = {i: [] for i in range(count)}
        for frame, record in records:
            result.by_frame[frame].append(record)
    for item in rejected:
        logger.warning(f"{path}: rejected line {item.line_number}: {item.reason}")
    logger.info(
        f"Parsed {path}: {result.accepted_count} records over {result.num_frames} frames, {len(rejected)} rejected"
    )
    return result


def _numbered_lines(path: str | Path) -> Iterable[tuple[int, str]]:
    with open(path) as f:
        for line_number, raw in enumerate(f, 1):
            line = raw.strip()
            if line:
                yield line_number, line


def read_detections_2d(path: str | Path) -> ParseResult[Detection2D]:
    """Read a 2D detection CSV file.

    Args:
        path: File with ``frame,left,top,right,bottom,score`` lines

    Returns:
        Detections grouped densely by frame

    Raises:
        KittiParseError: A line does not hold 6 numeric fields
    """
    records: list[tuple[int, Detection2D]] = []
    rejected: list[RejectedLine] = []
    for line_number, line in _numbered_lines(path):
        fields = line.split(",")
        if len(fields) != 6:
            raise KittiParseError(path, line_number, f"expected 6 comma-separated fields, got {len(fields)}")
        try:
            frame = _parse_frame(fields[0])
            left, top, right, bottom, score = (float(v) for v in fields[1:])
        except ValueError as e:
            raise KittiParseError(path, line_number, str(e)) from e

        if frame < 0:
            rejected.append(RejectedLine(line_number, "negative frame index"))
        elif not all(math.isfinite(v) for v in (left, top, right, bottom, score)):
            rejected.append(RejectedLine(line_number, "non-finite value"))
        elif left >= right:
            rejected.append(RejectedLine(line_number, "left >= right"))
        elif top >= bottom:
            rejected.append(RejectedLine(line_number, "top >= bottom"))
        else:
            records.append((frame, Detection2D(frame, left, top, right, bottom, score)))
    return _group(path, records, rejected)


def read_detections_3d(path: str | Path) -> ParseResult[Detection3D]:
    """Read a 3D detection CSV file; rot_y is wrapped into [-pi, pi].

    Args:
        path: File with ``frame,h,w,l,x,y,z,rot_y,score`` lines

    Returns:
        Detections grouped densely by frame

    Raises:
        KittiParseError: A line does not hold 9 numeric fields
    """
    records: list[tuple[int, Detection3D]] = []
    rejected: list[RejectedLine] = []
    for line_number, line in _numbered_lines(path):
        fields = line.split(",")
        if len(fields) != 9:
            raise KittiParseError(path, line_number, f"expected 9 comma-separated fields, got {len(fields)}")
        try:
            frame = _parse_frame(fields[0])
            h, w, l, x, y, z, rot_y, score = (float(v) for v in fields[1:])
        except ValueError as e:
            raise KittiParseError(path, line_number, str(e)) from e

        if frame < 0:
            rejected.append(RejectedLine(line_number, "negative frame index"))
        elif not all(math.isfinite(v) for v in (h, w, l, x, y, z, rot_y, score)):
            rejected.append(RejectedLine(line_number, "non-finite value"))
        elif h <= 0 or w <= 0 or l <= 0:
            rejected.append(RejectedLine(line_number, "nonpositive dimension"))
        else:
            records.append((frame, Detection3D(frame, h, w, l, x, y, z, wrap_angle(rot_y), score)))
    return _group(path, records, rejected)


def detections_to_camera(detections: Sequence[Detection3D], calib: CalibrationSet) -> list[Detection3D]:
    """Convert LiDAR-frame detections into the rectified camera frame.

    Positions go through ``R_rect @ Tr_velo_cam``; the LiDAR heading maps to
    ``rot_y = -yaw - pi/2``.

    Raises:
        CalibrationError: The calibration has no Tr_velo_cam
    """
    if calib.tr_velo_cam is None:
        raise CalibrationError("LiDAR-frame input requires Tr_velo_cam in the calibration")
    if not detections:
        return []
    points = np.array([(d.x, d.y, d.z) for d in detections])
    cam = points @ calib.tr_velo_cam[:, :3].T + calib.tr_velo_cam[:, 3]
    rect = cam @ calib.r_rect.T
    return [
        Detection3D(d.frame, d.h, d.w, d.l, *map(float, rect[i]), wrap_angle(-d.rot_y - 0.5 * math.pi), d.score)
        for i, d in enumerate(detections)
    ]


def read_calibration(path: str | Path, input_frame: str = "camera") -> CalibrationSet:
    """Read a KITTI calibration file.

    Both the tracking keys (``R_rect``, ``Tr_velo_cam``) and the object keys
    (``R0_rect:``, ``Tr_velo_to_cam:``) are accepted, with or without a colon.

    Args:
        path: Calibration file
        input_frame: "lidar" makes Tr_velo_cam mandatory

    Returns:
        Parsed calibration

    Raises:
        CalibrationError: P2 is missing, a matrix is malformed, or Tr_velo_cam
            is missing for LiDAR-frame input
    """
    matrices: dict[str, np.ndarray] = {}
    for line_number, line in _numbered_lines(path):
        key, _, rest = line.partition(" ")
        if ":" in key:
            key, _, tail = key.partition(":")
            rest = f"{tail} {rest}"
        name = _CALIB_ALIASES.get(key.strip())
        if name is None:
            continue
        try:
            values = [float(v) for v in rest.split()]
        except ValueError as e:
            raise CalibrationError(f"{path}:{line_number}: non-numeric entry for {key}") from e
        rows, cols = _CALIB_SHAPES[name]
        if len(values) != rows * cols:
            raise CalibrationError(f"{path}:{line_number}: {key} needs {rows * cols} values, got {len(values)}")
        matrices[name] = np.array(values).reshape(rows, cols)

    if "P2" not in matrices:
        raise CalibrationError("calibration missing P2")
    if input_frame == "lidar" and "Tr_velo_cam" not in matrices:
        raise CalibrationError("calibration missing Tr_velo_cam (required for input.frame = lidar)")

    calib = CalibrationSet(
        p2=matrices["P2"],
        r_rect=matrices.get("R_rect", np.eye(3)),
        tr_velo_cam=matrices.get("Tr_velo_cam"),
    )
    logger.info(f"Calibration loaded from {path}: f=({calib.p2[0, 0]:.2f}, {calib.p2[1, 1]:.2f})")
    return calib


def write_calibration(path: str | Path, calib: CalibrationSet) -> None:
    """Write a calibration in the key-matrix text format."""
    lines = [
        "P2: " + " ".join(_fmt(v) for v in calib.p2.ravel()),
        "R_rect: " + " ".join(_fmt(v) for v in calib.r_rect.ravel()),
    ]
    if calib.tr_velo_cam is not None:
        lines.append("Tr_velo_cam: " + " ".join(_fmt(v) for v in calib.tr_velo_cam.ravel()))
    Path(path).write_text("\n".join(lines) + "\n")


def write_detections_2d(path: str | Path, detections: Iterable[Detection2D]) -> None:
    """Write 2D detections in the CSV format read by read_detections_2d."""
    with open(path, "w") as f:
        for d in detections:
            f.write(f"{d.frame},{_fmt(d.left)},{_fmt(d.top)},{_fmt(d.right)},{_fmt(d.bottom)},{_fmt(d.score)}\n")


def write_detections_3d(path: str | Path, detections: Iterable[Detection3D]) -> None:
    """Write 3D detections in the CSV format read by read_detections_3d."""
    with open(path, "w") as f:
        for d in detections:
            values = ",".join(_fmt(v) for v in (d.h, d.w, d.l, d.x, d.y, d.z, d.rot_y, d.score))
            f.write(f"{d.frame},{values}\n")


def _parse_label_tokens(tokens: list[str]) -> tuple[Box2D, Box3D]:
    left, top, right, bottom = (float(v) for v in tokens[6:10])
    h, w, l, x, y, z, rot_y = (float(v) for v in tokens[10:17])
    return Box2D(left, top, right, bottom), Box3D(x, y, z, h, w, l, rot_y)


def read_ground_truth(path: str | Path, category: str = "Car") -> ParseResult[GtAnnotation]:
    """Read a KITTI tracking label file, keeping one category.

    The frame range covers every label line, other categories and
    ``DontCare`` included, so it ends where the sequence ends.

    Args:
        path: Label file
        category: Object type to keep (``DontCare`` rows are always dropped)

    Returns:
        Annotations grouped densely by frame

    Raises:
        KittiParseError: A line has fewer than 17 fields or non-numeric values
    """
    records: list[tuple[int, GtAnnotation]] = []
    rejected: list[RejectedLine] = []
    num_frames = 0
    for line_number, line in _numbered_lines(path):
        tokens = line.split()
        if len(tokens) < 17:
            raise KittiParseError(path, line_number, f"expected at least 17 fields, got {len(tokens)}")
        try:
            frame = _parse_frame(tokens[0])
        except ValueError as e:
            raise KittiParseError(path, line_number, str(e)) from e
        num_frames = max(num_frames, frame + 1)
        if tokens[2] != category:
            continue
        try:
            track_id = int(tokens[1])
            truncated = float(tokens[3])
            occluded = int(float(tokens[4]))
            alpha = float(tokens[5])
            box2d, box3d = _parse_label_tokens(tokens)
        except ValueError as e:
            raise KittiParseError(path, line_number, str(e)) from e

        if frame < 0 or track_id < 0:
            rejected.append(RejectedLine(line_number, "negative frame or track id"))
        elif box2d.width <= 0 or box2d.height <= 0:
            rejected.append(RejectedLine(line_number, "degenerate 2D box"))
        elif box3d.h <= 0 or box3d.w <= 0 or box3d.l <= 0:
            rejected.append(RejectedLine(line_number, "nonpositive dimension"))
        else:
            box3d = Box3D(box3d.x, box3d.y, box3d.z, box3d.h, box3d.w, box3d.l, wrap_angle(box3d.yaw))
            records.append((frame, GtAnnotation(frame, track_id, category, truncated, occluded, alpha, box2d, box3d)))
    return _group(path, records, rejected, num_frames)


def write_ground_truth(path: str | Path, annotations: Iterable[GtAnnotation]) -> None:
    """Write annotations as KITTI tracking label lines, sorted by frame then id."""
    with open(path, "w") as f:
        for a in sorted(annotations, key=lambda item: (item.frame, item.track_id)):
            b2, b3 = a.box2d, a.box3d
            values = " ".join(
                _fmt(v)
                for v in (a.alpha, b2.left, b2.top, b2.right, b2.bottom, b3.h, b3.w, b3.l, b3.x, b3.y, b3.z, b3.yaw)
            )
            f.write(f"{a.frame} {a.track_id} {a.category} {_fmt(a.truncated)} {a.occluded} {values}\n")


def write_tracks(path: str | Path, rows: Iterable[TrackRow]) -> None:
    """Write tracking output in the KITTI tracking submission format.

    One line per track per frame, sorted by frame then id::

        frame id type truncated occluded alpha left top right bottom h w l x y z rot_y score

    truncated and occluded are written as 0. Rows without 3D information
    carry alpha -10 and -1000 for every 3D column.

    Raises:
        OSError: The path cannot be written
    """
    with open(path, "w") as f:
        for row in sorted(rows, key=lambda item: (item.frame, item.track_id)):
            b2 = row.box2d
            if row.box3d is None:
                dims = (SENTINEL_3D,) * 7
            else:
                b3 = row.box3d
                dims = (b3.h, b3.w, b3.l, b3.x, b3.y, b3.z, b3.yaw)
            values = " ".join(_fmt(v) for v in (row.alpha, b2.left, b2.top, b2.right, b2.bottom, *dims, row.score))
            f.write(f"{row.frame} {row.track_id} {row.category} 0 0 {values}\n")


def read_tracks(path: str | Path) -> ParseResult[TrackRow]:
    """Read tracking output written by write_tracks (score column optional).

    Raises:
        KittiParseError: A line has fewer than 17 fields or non-numeric values
    """
    records: list[tuple[int, TrackRow]] = []
    rejected: list[RejectedLine] = []
    for line_number, line in _numbered_lines(path):
        tokens = line.split()
        if len(tokens) < 17:
            raise KittiParseError(path, line_number, f"expected at least 17 fields, got {len(tokens)}")
        try:
            frame = _parse_frame(tokens[0])
            track_id = int(tokens[1])
            box2d, box3d = _parse_label_tokens(tokens)
            score = float(tokens[17]) if len(tokens) > 17 else 1.0
        except ValueError as e:
            raise KittiParseError(path, line_number, str(e)) from e

        if frame < 0:
            rejected.append(RejectedLine(line_number, "negative frame index"))
            continue
        if box2d.width <= 0 or box2d.height <= 0:
            rejected.append(RejectedLine(line_number, "degenerate 2D box"))
            continue
        has_3d = box3d.h != SENTINEL_3D and box3d.h > 0 and box3d.w > 0 and box3d.l > 0
        records.append((frame, TrackRow(frame, track_id, tokens[2], box2d, box3d if has_3d else None, score)))
    return _group(path, records, rejected)
