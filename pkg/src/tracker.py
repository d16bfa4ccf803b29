"""Four-level association cascade and trajectory lifecycle for one sequence.

Per frame the tracker predicts every trajectory once, then runs:

1. fused detections against 3D trajectories,
2. LiDAR-only detections against the 3D trajectories left over,
3. camera-only detections against 2D trajectories,
4. leftover and fresh 3D trajectories against 2D trajectories, merging pairs,

and finally advances the lifecycle of every trajectory.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

from .association import (
    AssignmentResult,
    AssociationGates,
    CostMode,
    build_similarity,
    solve_gated_assignment,
    solve_iou_assignment,
)
from .fusion import FrameDetections, FusedDetection
from .geometry import Box2D, Box3D, iou_2d_matrix, project_box3d
from .kitti_io import CalibrationSet, Detection2D, Detection3D, TrackRow
from .state_estimation import Filter2D, Filter3D, FilterNoise2D, FilterNoise3D


logger = logging.getLogger(__name__)

FrameOutput = list[TrackRow]


class FrameOrderError(ValueError):
    """Frames were not presented in strictly increasing order."""


class TrackState(Enum):
    """Lifecycle state of a trajectory."""

    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    REAPPEARED = "reappeared"
    DEAD = "dead"


class TrackMode(Enum):
    """Sensor domain a trajectory lives in."""

    TWO_D = "2d"
    THREE_D = "3d"


@dataclass(frozen=True)
class TrackerConfig:
    """Tracker parameters.

    Attributes:
        min_hits: Consecutive matches that confirm a tentative trajectory
        miss_to_reappear: Misses after which a confirmed trajectory turns reappeared
        max_age: Misses after which a reappeared trajectory dies
        gates: 3D association gates
        iou2d_gate: Minimum 2D IoU for levels 3 and 4
        cost_mode: 3D affinity (fused, iou or distance)
        motion_2d: ``kalman`` or ``snap`` for 2D trajectories
        use_camera: False runs the LiDAR-only cascade
        coasting: Emit unmatched confirmed/reappeared trajectories with predicted boxes
        category: Label written for every trajectory
    """

    min_hits: int = 3
    miss_to_reappear: int = 2
    max_age: int = 30
    gates: AssociationGates = field(default_factory=AssociationGates)
    iou2d_gate: float = 0.3
    cost_mode: CostMode = CostMode.FUSED
    motion_2d: str = "kalman"
    use_camera: bool = True
    coasting: bool = False
    noise3d: FilterNoise3D = field(default_factory=FilterNoise3D)
    noise2d: FilterNoise2D = field(default_factory=FilterNoise2D)
    category: str = "Car"

    def __post_init__(self):
        """Validate counters and thresholds."""
        if self.min_hits < 1:
            raise ValueError("min_hits must be at least 1")
        if self.miss_to_reappear < 0:
            raise ValueError("miss_to_reappear must be non-negative")
        if self.max_age < self.miss_to_reappear:
            raise ValueError("max_age must not be smaller than miss_to_reappear")
        if not 0.0 <= self.iou2d_gate <= 1.0:
            raise ValueError("iou2d_gate must be in [0, 1]")
        if self.motion_2d not in ("kalman", "snap"):
            raise ValueError(f"motion_2d must be 'kalman' or 'snap', got '{self.motion_2d}'")
        object.__setattr__(self, "cost_mode", CostMode(self.cost_mode))


@dataclass
class Track:
    """One trajectory with its filter, counters and last known boxes."""

    track_id: int
    state: TrackState
    birth_frame: int
    category: str
    filter3d: Filter3D | None = None
    filter2d: Filter2D | None = None
    box2d: Box2D | None = None
    hits: int = 0
    misses: int = 0
    age: int = 0
    score: float = 0.0
    matched: bool = False
    fused: bool = False  # box2d is this frame's camera detection

    @property
    def mode(self) -> TrackMode:
        return TrackMode.THREE_D if self.filter3d is not None else TrackMode.TWO_D

    @property
    def box3d(self) -> Box3D | None:
        return self.filter3d.box if self.filter3d is not None else None

    @property
    def is_alive(self) -> bool:
        return self.state is not TrackState.DEAD


@dataclass(frozen=True)
class StateTransition:
    """A lifecycle change of one trajectory."""

    frame: int
    track_id: int
    before: TrackState
    after: TrackState


class Tracker:
    """Camera-LiDAR tracker for a single sequence."""

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.tracks: list[Track] = []
        self.transitions: list[StateTransition] = []
        self.merge_count = 0
        self._retired_clamps = 0
        self._next_id = 0
        self._last_frame: int | None = None
        self._frame = -1
        self._calib: CalibrationSet | None = None
        self._image_size: tuple[int, int] = (0, 0)
        logger.debug(f"Tracker created with {self.config}")

    def step(
        self,
        frame_index: int,
        detections: FrameDetections,
        calib: CalibrationSet,
        image_size: tuple[int, int],
    ) -> FrameOutput:
        """Process one frame.

        Args:
            frame_index: Frame number, strictly larger than the previous call's
            detections: Fused and single-sensor detections of the frame
            calib: Sequence calibration
            image_size: (width, height) in pixels

        Returns:
            Rows of the trajectories reported in this frame

        Raises:
            FrameOrderError: frame_index does not increase
        """
        if self._last_frame is not None and frame_index <= self._last_frame:
            raise FrameOrderError(f"frame {frame_index} presented after frame {self._last_frame}")
        self._last_frame = frame_index
        self._frame = frame_index
        self._calib = calib
        self._image_size = image_size

        self._predict()
        tracks_3d = [t for t in self.tracks if t.mode is TrackMode.THREE_D]

        if self.config.use_camera:
            born_l1, unmatched_3d = self.level1(detections.fused, tracks_3d)
            still_unmatched = self.level2(detections.only_3d, unmatched_3d)
            tracks_2d = [t for t in self.tracks if t.mode is TrackMode.TWO_D]
            self.level3(detections.only_2d, tracks_2d)
            tentative = [t for t in self.tracks if t.mode is TrackMode.THREE_D and t.state is TrackState.TENTATIVE]
            candidates = _unique(still_unmatched + tentative + born_l1)
            self.level4(candidates, [t for t in self.tracks if t.mode is TrackMode.TWO_D])
        else:
            all_3d = [f.det3d for f in detections.fused] + list(detections.only_3d)
            self.level2(all_3d, tracks_3d)

        self.update_lifecycle()
        return self._frame_output()

    def level1(self, fused: list[FusedDetection], tracks: list[Track]) -> tuple[list[Track], list[Track]]:
        """Match fused detections to 3D trajectories; unmatched detections start confirmed trajectories.

        Returns:
            (trajectories born here, trajectories left unmatched)
        """
        result = self._associate_3d([f.det3d for f in fused], tracks)
        for det_index, track_index in result.matches:
            track = tracks[track_index]
            self._update_3d(track, fused[det_index].det3d)
            track.box2d = fused[det_index].det2d.box
            track.fused = True
        born = [
            self._birth_3d(fused[i].det3d, TrackState.CONFIRMED, fused[i].det2d.box) for i in result.unmatched_dets
        ]
        logger.debug(f"Level 1: {len(result.matches)} matched, {len(born)} born")
        return born, [tracks[j] for j in result.unmatched_tracks]

    def level2(self, only_3d: list[Detection3D], tracks: list[Track]) -> list[Track]:
        """Match LiDAR-only detections to leftover 3D trajectories; unmatched detections start tentative trajectories.

        Returns:
            Trajectories still unmatched
        """
        result = self._associate_3d(only_3d, tracks)
        for det_index, track_index in result.matches:
            track = tracks[track_index]
            self._update_3d(track, only_3d[det_index])
            track.box2d = self._project(track.filter3d.box)  # type: ignore[union-attr]
        born = [self._birth_3d(only_3d[i], TrackState.TENTATIVE, None) for i in result.unmatched_dets]
        logger.debug(f"Level 2: {len(result.matches)} matched, {len(born)} born")

        return [tracks[j] for j in result.unmatched_tracks]

    def level3(self, only_2d: list[Detection2D], tracks: list[Track]) -> AssignmentResult:
        """Match camera-only detections to 2D trajectories; unmatched detections start tentative 2D trajectories."""
        ious = iou_2d_matrix([d.box for d in only_2d], [t.box2d for t in tracks])  # type: ignore[misc]
        result = solve_iou_assignment(ious, self.config.iou2d_gate)
        for det_index, track_index in result.matches:
            track = tracks[track_index]
            det = only_2d[det_index]
            track.box2d = track.filter2d.update(det)  # type: ignore[union-attr]
            track.score = det.score
            track.matched = True
        for det_index in result.unmatched_dets:
            self._birth_2d(only_2d[det_index])
        logger.debug(f"Level 3: {len(result.matches)} matched, {len(result.unmatched_dets)} born")
        return result

    def level4(self, candidates: list[Track], tracks_2d: list[Track]) -> int:
        """Merge 3D trajectories into 2D trajectories whose boxes their projections overlap.

        The older trajectory of a merged pair (earlier birth, then smaller id)
        keeps its id, state and counters; the result carries the 3D filter.

        Returns:
            Number of merges
        """
        projected = [(track, self._project(track.filter3d.box)) for track in candidates if track.filter3d is not None]
        projected = [(track, box) for track, box in projected if box is not None]
        if not projected or not tracks_2d:
            return 0

        ious = iou_2d_matrix([box for _, box in projected], [t.box2d for t in tracks_2d])  # type: ignore[misc]
        result = solve_iou_assignment(ious, self.config.iou2d_gate)
        for row, col in result.matches:
            self._merge(projected[row][0], tracks_2d[col], projected[row][1])
        if result.matches:
            self.tracks = [t for t in self.tracks if t.is_alive]
        logger.debug(f"Level 4: {len(result.matches)} merges")
        return len(result.matches)

    def update_lifecycle(self) -> None:
        """Advance counters and states of every trajectory and drop dead ones."""
        cfg = self.config
        for track in self.tracks:
            before = track.state
            if track.matched:
                track.hits += 1
                track.misses = 0
                if track.state is TrackState.TENTATIVE and track.hits >= cfg.min_hits:
                    track.state = TrackState.CONFIRMED
                elif track.state is TrackState.REAPPEARED:
                    track.state = TrackState.CONFIRMED
            else:
                track.hits = 0
                track.misses += 1
                if track.state is TrackState.TENTATIVE:
                    track.state = TrackState.DEAD
                elif track.state is TrackState.CONFIRMED and track.misses > cfg.miss_to_reappear:
                    track.state = TrackState.REAPPEARED
                elif track.state is TrackState.REAPPEARED and track.misses > cfg.max_age:
                    track.state = TrackState.DEAD
            track.age += 1
            if track.state is not before:
                self.transitions.append(StateTransition(self._frame, track.track_id, before, track.state))
                logger.debug(f"Frame {self._frame}: track {track.track_id} {before.value} -> {track.state.value}")
            if not track.is_alive and track.filter2d is not None:
                self._retired_clamps += track.filter2d.clamp_count

        self.tracks = [t for t in self.tracks if t.is_alive]

    @property
    def clamp_count(self) -> int:
        """Times a 2D filter box side was raised to the minimum size, over the whole run."""
        return self._retired_clamps + sum(t.filter2d.clamp_count for t in self.tracks if t.filter2d is not None)

    def live_ids(self) -> list[int]:
        return [t.track_id for t in self.tracks]

    def _predict(self) -> None:
        for track in self.tracks:
            track.matched = False
            track.fused = False
            if track.filter3d is not None:
                track.box2d = self._project(track.filter3d.predict())
            elif track.filter2d is not None:
                track.box2d = track.filter2d.predict()

    def _associate_3d(self, dets: list[Detection3D], tracks: list[Track]) -> AssignmentResult:
        sim = build_similarity(
            [d.box for d in dets],
            [t.filter3d.box for t in tracks],  # type: ignore[union-attr]
            self.config.cost_mode,
        )
        return solve_gated_assignment(sim, self.config.gates)

    def _update_3d(self, track: Track, det: Detection3D) -> None:
        track.filter3d.update(det)  # type: ignore[union-attr]
        track.score = det.score
        track.matched = True

    def _new_id(self) -> int:
        track_id = self._next_id
        self._next_id += 1
        return track_id

    def _birth_3d(self, det: Detection3D, state: TrackState, box2d: Box2D | None) -> Track:
        filter3d = Filter3D.from_detection(det, self.config.noise3d)
        track = Track(
            track_id=self._new_id(),
            state=state,
            birth_frame=self._frame,
            category=self.config.category,
            filter3d=filter3d,
            box2d=box2d if box2d is not None else self._project(filter3d.box),
            score=det.score,
            matched=True,
            fused=box2d is not None,
        )
        self.tracks.append(track)
        return track

    def _birth_2d(self, det: Detection2D) -> Track:
        filter2d = Filter2D.from_detection(det, self.config.noise2d, snap=self.config.motion_2d == "snap")
        track = Track(
            track_id=self._new_id(),
            state=TrackState.TENTATIVE,
            birth_frame=self._frame,
            category=self.config.category,
            filter2d=filter2d,
            box2d=filter2d.box,
            score=det.score,
            matched=True,
        )
        self.tracks.append(track)
        return track

    def _merge(self, track_3d: Track, track_2d: Track, projected: Box2D) -> None:
        older_is_2d = (track_2d.birth_frame, track_2d.track_id) < (track_3d.birth_frame, track_3d.track_id)
        survivor, retired = (track_2d, track_3d) if older_is_2d else (track_3d, track_2d)

        if track_2d.filter2d is not None:
            self._retired_clamps += track_2d.filter2d.clamp_count
        survivor.filter3d = track_3d.filter3d
        survivor.filter2d = None
        if track_3d.fused:
            survivor.box2d = track_3d.box2d
        elif track_2d.matched:
            survivor.box2d = track_2d.box2d
        else:
            survivor.box2d = projected
        survivor.fused = track_3d.fused
        survivor.score = track_3d.score if track_3d.matched else track_2d.score
        survivor.matched = track_3d.matched or track_2d.matched
        retired.state = TrackState.DEAD
        self.merge_count += 1
        logger.info(
            f"Frame {self._frame}: merged 3D track {track_3d.track_id} with 2D track {track_2d.track_id}, "
            f"keeping id {survivor.track_id}"
        )

    def _project(self, box: Box3D) -> Box2D | None:
        assert self._calib is not None
        return project_box3d(box, self._calib, self._image_size)

    def _frame_output(self) -> FrameOutput:
        rows: FrameOutput = []
        for track in sorted(self.tracks, key=lambda t: t.track_id):
            if track.box2d is None:
                continue
            emitted = track.state is TrackState.CONFIRMED and track.matched
            coasting = self.config.coasting and not track.matched and track.state in (
                TrackState.CONFIRMED,
                TrackState.REAPPEARED,
            )
            if emitted or coasting:
                rows.append(
                    TrackRow(self._frame, track.track_id, track.category, track.box2d, track.box3d, track.score)
                )
        return rows


def _unique(tracks: list[Track]) -> list[Track]:
    """Drop repeated trajectories keeping first occurrence order."""
    seen: set[int] = set()
    result = []
    for track in tracks:
        if track.track_id not in seen and track.is_alive:
            seen.add(track.track_id)
            result.append(track)
    return result


def run_tracker(
    frames: list[FrameDetections],
    calib: CalibrationSet,
    image_size: tuple[int, int],
    config: TrackerConfig | None = None,
) -> tuple[list[FrameOutput], Tracker]:
    """Run a fresh tracker over consecutive frames starting at 0."""
    tracker = Tracker(config)
    outputs = [tracker.step(index, fd, calib, image_size) for index, fd in enumerate(frames)]
    return outputs, tracker

