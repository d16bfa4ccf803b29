"""Affinities between detections and trajectories and gated one-to-one assignment."""

import logging
from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import Box3D, center_distance_matrix, iou_3d, iou_3d_matrix, normalized_distance


logger = logging.getLogger(__name__)


class CostBranch(Enum):
    """Which side of the fused affinity produced a score."""

    IOU = "iou"
    DISTANCE = "distance"


class CostMode(str, Enum):
    """Affinity used between 3D detections and 3D trajectories."""

    FUSED = "fused"
    IOU = "iou"
    DISTANCE = "distance"


@dataclass(frozen=True)
class AssociationGates:
    """Acceptance thresholds per branch.

    Attributes:
        iou3d: Minimum score for iou-branch pairs
        dist_m: Maximum center distance for distance-branch pairs, meters
    """

    iou3d: float = 0.1
    dist_m: float = 4.0

    def __post_init__(self):
        if not 0.0 <= self.iou3d <= 1.0:
            raise ValueError(f"iou3d gate must be in [0, 1], got {self.iou3d}")
        if not self.dist_m >= 0.0:
            raise ValueError(f"dist_m gate must be non-negative, got {self.dist_m}")


@dataclass(frozen=True)
class SimilarityMatrix:
    """Scores in [0, 1] with rows for detections and columns for trajectories.

    ``is_iou[i, j]`` tags the branch of each entry and ``distances`` keeps the
    raw center distances the distance gate is checked against.
    """

    scores: np.ndarray
    is_iou: np.ndarray
    distances: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape  # type: ignore[return-value]

    def branch(self, row: int, col: int) -> CostBranch:
        return CostBranch.IOU if self.is_iou[row, col] else CostBranch.DISTANCE

    @classmethod
    def empty(cls, rows: int, cols: int) -> "SimilarityMatrix":
        return cls(np.zeros((rows, cols)), np.zeros((rows, cols), dtype=bool), np.zeros((rows, cols)))


@dataclass
class AssignmentResult:
    """Matched (detection, trajectory) index pairs plus the leftovers of each side."""

    matches: list[tuple[int, int]] = field(default_factory=list)
    unmatched_dets: list[int] = field(default_factory=list)
    unmatched_tracks: list[int] = field(default_factory=list)

    @classmethod
    def from_matches(cls, matches: list[tuple[int, int]], num_dets: int, num_tracks: int) -> "AssignmentResult":
        matches = sorted(matches)
        used_dets = {d for d, _ in matches}
        used_tracks = {t for _, t in matches}
        return cls(
            matches=matches,
            unmatched_dets=[i for i in range(num_dets) if i not in used_dets],
            unmatched_tracks=[j for j in range(num_tracks) if j not in used_tracks],
        )


def cost_fused(det: Box3D, track_pred: Box3D) -> tuple[float, CostBranch]:
    """Fused affinity of one pair: 3D IoU when the boxes overlap, else distance similarity.

    Args:
        det: Detected box
        track_pred: Predicted trajectory box

    Returns:
        (score in [0, 1], branch that produced it)
    """
    iou = iou_3d(det, track_pred)
    if iou > 0.0:
        return iou, CostBranch.IOU
    return normalized_distance(det, track_pred), CostBranch.DISTANCE


def build_similarity(
    dets: Sequence[Box3D],
    tracks: Sequence[Box3D],
    mode: CostMode | str = CostMode.FUSED,
) -> SimilarityMatrix:
    """Pairwise affinity matrix between detections and predicted trajectories.

    Args:
        dets: Detected boxes (rows)
        tracks: Predicted trajectory boxes (columns)
        mode: ``fused`` switches per pair between IoU and distance, ``iou`` and
            ``distance`` use a single branch everywhere

    Returns:
        Scores with their branch tags
    """
    mode = CostMode(mode)
    if not dets or not tracks:
        return SimilarityMatrix.empty(len(dets), len(tracks))

    distances = center_distance_matrix(dets, tracks)
    closeness = 1.0 / (1.0 + distances)
    if mode is CostMode.DISTANCE:
        return SimilarityMatrix(closeness, np.zeros(distances.shape, dtype=bool), distances)

    ious = iou_3d_matrix(dets, tracks)
    if mode is CostMode.IOU:
        return SimilarityMatrix(ious, np.ones(distances.shape, dtype=bool), distances)

    is_iou = ious > 0.0
    return SimilarityMatrix(np.where(is_iou, ious, closeness), is_iou, distances)


def max_weight_assignment(weights: np.ndarray) -> list[tuple[int, int]]:
    """Maximum total weight one-to-one pairing of a rectangular matrix.

    Among equally good pairings the one whose (row, col) list is
    lexicographically smallest is returned, so the result never depends on
    the solver's internal order.

    Returns:
        (row, col) pairs sorted by row
    """
    if weights.size == 0:
        return []
    num_rows, num_cols = weights.shape
    size = max(num_rows, num_cols)
    # Zero padding to a square matrix; padded columns stand for "unmatched"
    # and sort after every real column
    square = np.zeros((size, size))
    square[:num_rows, :num_cols] = weights
    _, cols = linear_sum_assignment(square, maximize=True)
    match = _smallest_optimal_matching(square, cols)
    return [(row, col) for row, col in enumerate(match[:num_rows]) if col < num_cols]


def _tight_edges(square: np.ndarray, match: np.ndarray) -> np.ndarray:
    """Edges that belong to some maximum-weight perfect matching.

    Column potentials come from shortest paths over the exchange graph of
    ``match``; every optimal matching uses only edges whose reduced weight
    is zero under these potentials.
    """
    size = len(match)
    rows = np.arange(size)
    exchange = square[rows, match][:, None] - square
    potentials = np.zeros(size)
    for _ in range(size):
        relaxed = (potentials[None, :] + exchange).min(axis=1)
        if np.all(relaxed >= potentials[match]):
            break
        potentials[match] = relaxed
    row_potentials = square[rows, match] - potentials[match]
    slack = row_potentials[:, None] + potentials[None, :] - square
    tolerance = 1e-9 * max(1.0, float(np.abs(square).max()))
    return slack <= tolerance


def _smallest_optimal_matching(square: np.ndarray, cols: np.ndarray) -> list[int]:
    """Move every row, in order, to the smallest column an optimal matching allows."""
    match = [int(c) for c in cols]
    owner = [0] * len(match)
    for row, col in enumerate(match):
        owner[col] = row
    tight = _tight_edges(square, np.asarray(match))
    fixed = [False] * len(match)

    for row in range(len(match)):
        for col in np.flatnonzero(tight[row, : match[row]]).tolist():
            if not fixed[col] and _reroute(tight, match, owner, fixed, row, col):
                break
        fixed[match[row]] = True
    return match


def _reroute(
    tight: np.ndarray,
    match: list[int],
    owner: list[int],
    fixed: list[bool],
    row: int,
    col: int,
) -> bool:
    """Give ``col`` to ``row`` along an alternating path of tight edges, if one exists.

    The row currently owning ``col`` must move to another free column, and so
    on, until some row takes the column ``row`` gives up.
    """
    freed = match[row]
    start = owner[col]
    parent = {start: -1}
    seen = {col}
    queue = deque([start])
    while queue:
        current = queue.popleft()
        for candidate in np.flatnonzero(tight[current]).tolist():
            if fixed[candidate] or candidate in seen:
                continue
            seen.add(candidate)
            if candidate == freed:
                taker, target = current, candidate
                while True:
                    previous = match[taker]
                    match[taker], owner[target] = target, taker
                    if taker == start:
                        break
                    taker, target = parent[taker], previous
                match[row], owner[col] = col, row
                return True
            displaced = owner[candidate]
            parent[displaced] = current
            queue.append(displaced)
    return False


def solve_gated_assignment(sim: SimilarityMatrix, gates: AssociationGates) -> AssignmentResult:
    """Assign detections to trajectories, then demote pairs that fail their gate.

    Args:
        sim: Affinities with branch tags
        gates: iou-branch pairs need score >= gates.iou3d, distance-branch pairs
            need center distance <= gates.dist_m

    Returns:
        Matches and unmatched indices on both sides
    """
    num_dets, num_tracks = sim.shape
    accepted = []
    for row, col in max_weight_assignment(sim.scores):
        if sim.is_iou[row, col]:
            ok = sim.scores[row, col] >= gates.iou3d
        else:
            ok = sim.distances[row, col] <= gates.dist_m
        if ok:
            accepted.append((row, col))
        else:
            logger.debug(f"Demoted pair ({row}, {col}) on {sim.branch(row, col).value} branch")
    return AssignmentResult.from_matches(accepted, num_dets, num_tracks)


def solve_iou_assignment(ious: np.ndarray, gate: float, strict: bool = False) -> AssignmentResult:
    """Gated assignment on a plain IoU matrix.

    Args:
        ious: Rows by columns overlap matrix
        gate: Acceptance threshold
        strict: Require IoU > gate instead of IoU >= gate

    Returns:
        Matches and unmatched indices on both sides
    """
    num_rows, num_cols = ious.shape
    accepted = [
        (row, col)
        for row, col in max_weight_assignment(ious)
        if (ious[row, col] > gate if strict else ious[row, col] >= gate) and ious[row, col] > 0.0
    ]
    return AssignmentResult.from_matches(accepted, num_rows, num_cols)
