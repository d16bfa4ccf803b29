"""Pairing of camera and LiDAR detections within one frame."""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .association import solve_iou_assignment
from .geometry import Box2D, iou_2d_matrix, project_box3d
from .kitti_io import CalibrationSet, Detection2D, Detection3D


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FusedDetection:
    """A 3D detection paired with the 2D detection its projection overlaps.

    Attributes:
        det3d: LiDAR detection
        det2d: Camera detection
        iou: Overlap between the projected 3D box and the 2D box
        projected: Image-plane hull of the 3D box
    """

    det3d: Detection3D
    det2d: Detection2D
    iou: float
    projected: Box2D


@dataclass
class FrameDetections:
    """One frame's detections split into fused, camera-only and LiDAR-only sets."""

    fused: list[FusedDetection] = field(default_factory=list)
    only_2d: list[Detection2D] = field(default_factory=list)
    only_3d: list[Detection3D] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.fused) + len(self.only_2d) + len(self.only_3d)


def fuse_frame(
    dets2d: Sequence[Detection2D],
    dets3d: Sequence[Detection3D],
    calib: CalibrationSet,
    image_size: tuple[int, int],
    iou_threshold: float = 0.5,
) -> FrameDetections:
    """Split one frame's detections into fused, 2D-only and 3D-only groups.

    Each 3D detection is projected into the image; projected boxes and 2D
    detections are paired one-to-one by maximum total IoU, and only pairs
    with IoU strictly above ``iou_threshold`` are fused.

    Args:
        dets2d: Camera detections of the frame
        dets3d: LiDAR detections of the frame
        calib: Sequence calibration
        image_size: (width, height) in pixels
        iou_threshold: Pairing threshold

    Returns:
        The partition of the inputs
    """
    projectable: list[int] = []
    projections: list[Box2D] = []
    leftover_3d: list[int] = []
    result = FrameDetections()
    for index, det in enumerate(dets3d):
        projected = project_box3d(det.box, calib, image_size)
        if projected is None:
            leftover_3d.append(index)
        else:
            projectable.append(index)
            projections.append(projected)

    ious = iou_2d_matrix(projections, [d.box for d in dets2d]) if projections else np.zeros((0, len(dets2d)))
    assignment = solve_iou_assignment(ious, iou_threshold, strict=True)

    for row, col in assignment.matches:
        det3d = dets3d[projectable[row]]
        result.fused.append(FusedDetection(det3d, dets2d[col], float(ious[row, col]), projections[row]))
    leftover_3d.extend(projectable[row] for row in assignment.unmatched_dets)
    result.only_3d = [dets3d[index] for index in sorted(leftover_3d)]
    result.only_2d.extend(dets2d[col] for col in assignment.unmatched_tracks)

    logger.debug(
        f"Fused frame: {len(result.fused)} fused, {len(result.only_2d)} 2D-only, {len(result.only_3d)} 3D-only"
    )
    return result
