"""Box geometry: corner expansion, image projection, 2D IoU and rotated 3D IoU.

Conventions follow the KITTI rectified camera frame: x right, y down, z forward.
A 3D box is anchored at the center of its bottom face, so its top face sits at
``y - h``. The bird's-eye-view (BEV) plane is (x, z).
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np


if TYPE_CHECKING:
    from .kitti_io import CalibrationSet

logger = logging.getLogger(__name__)

# Corners closer than this to the image plane cannot be projected
NEAR_PLANE_M = 0.1

# Tolerance for the half-plane test during polygon clipping
_CLIP_EPS = 1e-12

Point2 = tuple[float, float]


def wrap_angle(theta: float) -> float:
    """Wrap an angle into [-pi, pi].

    Args:
        theta: Angle in radians

    Returns:
        Equivalent angle in [-pi, pi]
    """
    return math.remainder(theta, 2.0 * math.pi)


@dataclass(frozen=True, slots=True)
class Box2D:
    """Axis-aligned image box in corner form (pixels)."""

    left: float
    top: float
    right: float
    bottom: float

    @property
    def width(self) -> float:
        return self.right - self.left

    @property
    def height(self) -> float:
        return self.bottom - self.top

    @property
    def area(self) -> float:
        return max(0.0, self.width) * max(0.0, self.height)

    @property
    def center(self) -> Point2:
        return (0.5 * (self.left + self.right), 0.5 * (self.top + self.bottom))

    @classmethod
    def from_center(cls, cx: float, cy: float, width: float, height: float) -> "Box2D":
        """Build a box from center/size form."""
        return cls(cx - 0.5 * width, cy - 0.5 * height, cx + 0.5 * width, cy + 0.5 * height)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.right, self.bottom)


@dataclass(frozen=True, slots=True)
class Box3D:
    """Yaw-rotated cuboid in the rectified camera frame.

    Attributes:
        x, y, z: Bottom-center position in meters
        h, w, l: Height, width and length in meters
        yaw: Rotation around the camera y axis in radians
    """

    x: float
    y: float
    z: float
    h: float
    w: float
    l: float
    yaw: float

    @property
    def center(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)

    @property
    def volume(self) -> float:
        return self.h * self.w * self.l

    @property
    def bev_radius(self) -> float:
        """Radius of the circle circumscribing the BEV footprint."""
        return 0.5 * math.hypot(self.l, self.w)


@dataclass(frozen=True, slots=True)
class ConvexPolygon:
    """Counterclockwise convex polygon in the (x, z) ground plane."""

    vertices: tuple[Point2, ...]

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    def __len__(self) -> int:
        return len(self.vertices)


def box3d_corners(box: Box3D) -> np.ndarray:
    """Expand a 3D box into its 8 corners.

    The first four corners form the bottom face (y = box.y), the last four the
    top face (y = box.y - h), both in the same winding order.

    Args:
        box: Box to expand

    Returns:
        Array of shape (8, 3) with camera-frame corner coordinates
    """
    c = math.cos(box.yaw)
    s = math.sin(box.yaw)
    hl = 0.5 * box.l
    hw = 0.5 * box.w
    dx = np.array([hl, -hl, -hl, hl, hl, -hl, -hl, hl])
    dz = np.array([hw, hw, -hw, -hw, hw, hw, -hw, -hw])
    dy = np.array([0.0, 0.0, 0.0, 0.0, -box.h, -box.h, -box.h, -box.h])
    corners = np.empty((8, 3))
    corners[:, 0] = box.x + c * dx + s * dz
    corners[:, 1] = box.y + dy
    corners[:, 2] = box.z - s * dx + c * dz
    return corners


def box_footprint(box: Box3D) -> ConvexPolygon:
    """BEV footprint of a box as a counterclockwise rectangle in (x, z)."""
    c = math.cos(box.yaw)
    s = math.sin(box.yaw)
    hl = 0.5 * box.l
    hw = 0.5 * box.w
    vertices = tuple(
        (box.x + c * dx + s * dz, box.z - s * dx + c * dz)
        for dx, dz in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))
    )
    return ConvexPolygon(vertices)


def polygon_area(vertices: Sequence[Point2]) -> float:
    """Shoelace area of a simple polygon (absolute value)."""
    n = len(vertices)
    if n < 3:
        return 0.0
    total = 0.0
    x0, z0 = vertices[-1]
    for x1, z1 in vertices:
        total += x0 * z1 - x1 * z0
        x0, z0 = x1, z1
    return 0.5 * abs(total)


def clip_polygon(subject: Sequence[Point2], clip: Sequence[Point2]) -> list[Point2]:
    """Clip a polygon against a convex counterclockwise polygon.

    Successive half-plane clipping: the subject is cut by the inner side of
    each clip edge in turn. Points on an edge count as inside, so coincident
    polygons clip to themselves.

    Args:
        subject: Polygon to clip (convex for an exact result)
        clip: Convex counterclockwise clip polygon

    Returns:
        Vertices of the intersection polygon, empty when disjoint
    """
    output = list(subject)
    if not output or len(clip) < 3:
        return []

    cx1, cz1 = clip[-1]
    for cx2, cz2 in clip:
        if not output:
            return []
        ex = cx2 - cx1
        ez = cz2 - cz1
        candidates = output
        output = []
        sx, sz = candidates[-1]
        s_side = ex * (sz - cz1) - ez * (sx - cx1)
        for px, pz in candidates:
            p_side = ex * (pz - cz1) - ez * (px - cx1)
            if p_side >= -_CLIP_EPS:
                if s_side < -_CLIP_EPS:
                    t = s_side / (s_side - p_side)
                    output.append((sx + t * (px - sx), sz + t * (pz - sz)))
                output.append((px, pz))
            elif s_side >= -_CLIP_EPS:
                t = s_side / (s_side - p_side)
                output.append((sx + t * (px - sx), sz + t * (pz - sz)))
            sx, sz, s_side = px, pz, p_side
        cx1, cz1 = cx2, cz2
    return output


def iou_2d(a: Box2D, b: Box2D) -> float:
    """Intersection over union of two axis-aligned image boxes."""
    iw = min(a.right, b.right) - max(a.left, b.left)
    if iw <= 0.0:
        return 0.0
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    if ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, inter / union)


def iou_2d_matrix(boxes_a: Sequence[Box2D], boxes_b: Sequence[Box2D]) -> np.ndarray:
    """Pairwise 2D IoU, shape (len(boxes_a), len(boxes_b))."""
    if not boxes_a or not boxes_b:
        return np.zeros((len(boxes_a), len(boxes_b)))
    a = np.array([box.as_tuple() for box in boxes_a])
    b = np.array([box.as_tuple() for box in boxes_b])
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0.0, inter / union, 0.0)
    return np.clip(iou, 0.0, 1.0)


def _vertical_overlap(a: Box3D, b: Box3D) -> float:
    # y points down: the box spans [y - h, y]
    return max(0.0, min(a.y, b.y) - max(a.y - a.h, b.y - b.h))


def bev_intersection_area(a: Box3D, b: Box3D) -> float:
    """Area of the intersection of two BEV footprints (square meters)."""
    if math.hypot(a.x - b.x, a.z - b.z) > a.bev_radius + b.bev_radius:
        return 0.0
    overlap = clip_polygon(box_footprint(a).vertices, box_footprint(b).vertices)
    return polygon_area(overlap)


def bev_iou(a: Box3D, b: Box3D) -> float:
    """IoU of the two BEV footprints."""
    inter = bev_intersection_area(a, b)
    if inter <= 0.0:
        return 0.0
    union = a.w * a.l + b.w * b.l - inter
    return min(1.0, max(0.0, inter / union))


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Volume IoU of two yaw-rotated boxes.

    Intersection volume is the BEV intersection area times the overlap of the
    vertical extents.
    """
    height = _vertical_overlap(a, b)
    if height <= 0.0:
        return 0.0
    area = bev_intersection_area(a, b)
    if area <= 0.0:
        return 0.0
    inter = area * height
    union = a.volume + b.volume - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def center_distance_matrix(boxes_a: Sequence[Box3D], boxes_b: Sequence[Box3D]) -> np.ndarray:
    """Pairwise Euclidean distance between 3D box anchors."""
    if not boxes_a or not boxes_b:
        return np.zeros((len(boxes_a), len(boxes_b)))
    a = np.array([box.center for box in boxes_a])
    b = np.array([box.center for box in boxes_b])
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)


def iou_3d_matrix(boxes_a: Sequence[Box3D], boxes_b: Sequence[Box3D]) -> np.ndarray:
    """Pairwise volume IoU.

    Pairs whose bounding circles or height ranges are disjoint are left at
    zero without clipping.
    """
    result = np.zeros((len(boxes_a), len(boxes_b)))
    if not boxes_a or not boxes_b:
        return result
    a = np.array([(box.x, box.z, box.bev_radius, box.y, box.y - box.h) for box in boxes_a])
    b = np.array([(box.x, box.z, box.bev_radius, box.y, box.y - box.h) for box in boxes_b])
    planar = np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])
    reachable = planar <= a[:, None, 2] + b[None, :, 2]
    vertical = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 4], b[None, :, 4])
    candidates = np.argwhere(reachable & (vertical > 0.0))
    for i, j in candidates:
        result[i, j] = iou_3d(boxes_a[i], boxes_b[j])
    return result


def normalized_distance(a: Box3D, b: Box3D) -> float:
    """Distance similarity 1 / (1 + ||center(a) - center(b)||)."""
    return 1.0 / (1.0 + math.dist(a.center, b.center))


def project_box3d(box: Box3D, calib: "CalibrationSet", image_size: tuple[int, int]) -> Box2D | None:
    """Project a 3D box into the image with the P2 camera matrix.

    Args:
        box: Box in the rectified camera frame
        calib: Calibration providing the 3x4 projection matrix
        image_size: (width, height) in pixels

    Returns:
        Axis-aligned hull of the projected corners clipped to the image, or
        None when a corner lies closer than NEAR_PLANE_M to the camera or the
        clipped box is empty
    """
    corners = box3d_corners(box)
    projected = corners @ calib.p2[:, :3].T + calib.p2[:, 3]
    depth = projected[:, 2]
    if np.any(depth <= NEAR_PLANE_M):
        return None

    u = projected[:, 0] / depth
    v = projected[:, 1] / depth
    width, height = image_size
    left = min(max(float(u.min()), 0.0), float(width))
    right = min(max(float(u.max()), 0.0), float(width))
    top = min(max(float(v.min()), 0.0), float(height))
    bottom = min(max(float(v.max()), 0.0), float(height))
    if right - left <= 0.0 or bottom - top <= 0.0:
        return None
    return Box2D(left, top, right, bottom)
