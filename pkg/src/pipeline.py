"""Per-sequence work: read inputs, fuse, track, write; plus throughput measurement."""

import logging
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .config import RunConfig
from .fusion import fuse_frame
from .kitti_io import (
    CalibrationSet,
    Detection2D,
    Detection3D,
    detections_to_camera,
    read_calibration,
    read_detections_2d,
    read_detections_3d,
    write_tracks,
)
from .scenario import generate, workload_config, write_bundle
from .tracker import FrameOutput, Tracker


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SequenceJob:
    """Inputs and output of one sequence; picklable for worker processes."""

    sequence: str
    dets2d_path: Path
    dets3d_path: Path
    calib_path: Path
    out_path: Path
    config: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class SequenceResult:
    """Outcome of one sequence."""

    sequence: str
    ok: bool
    frames: int = 0
    rows: int = 0
    rejected_lines: int = 0
    pipeline_s: float = 0.0
    wall_s: float = 0.0
    error: str | None = None

    @property
    def fps(self) -> float:
        return self.frames / max(self.pipeline_s, 1e-9)


@dataclass(frozen=True)
class BenchmarkResult:
    """Throughput of the tracker on a synthetic workload."""

    frames: int
    objects: int
    pipeline_s: float
    end_to_end_s: float

    @property
    def fps_pipeline(self) -> float:
        return self.frames / max(self.pipeline_s, 1e-9)

    @property
    def fps_end_to_end(self) -> float:
        return self.frames / max(self.end_to_end_s, 1e-9)


def track_frames(
    dets2d: list[list[Detection2D]],
    dets3d: list[list[Detection3D]],
    calib: CalibrationSet,
    config: RunConfig,
) -> tuple[list[FrameOutput], Tracker]:
    """Fuse and track consecutive frames starting at frame 0.

    The shorter detection list is padded with empty frames.

    Returns:
        Per-frame outputs and the tracker after the last frame
    """
    tracker = Tracker(config.tracker_config())
    image_size = config.image_size
    threshold = config["fusion.iou_threshold"]
    num_frames = max(len(dets2d), len(dets3d))
    outputs = []
    for frame in range(num_frames):
        frame_2d = dets2d[frame] if frame < len(dets2d) else []
        frame_3d = dets3d[frame] if frame < len(dets3d) else []
        detections = fuse_frame(frame_2d, frame_3d, calib, image_size, threshold)
        outputs.append(tracker.step(frame, detections, calib, image_size))
    return outputs, tracker


def run_sequence(job: SequenceJob) -> SequenceResult:
    """Track one sequence from files to a KITTI tracking result file.

    Failures are reported in the result instead of raised so that one broken
    sequence does not stop the others.
    """
    started = time.perf_counter()
    logger.info(f"Sequence {job.sequence}: starting")
    try:
        config = RunConfig(job.config)
        calib = read_calibration(job.calib_path, config["input.frame"])
        parsed_2d = read_detections_2d(job.dets2d_path)
        parsed_3d = read_detections_3d(job.dets3d_path)
        num_frames = max(parsed_2d.num_frames, parsed_3d.num_frames)
        dets2d = parsed_2d.as_frame_list(num_frames)
        dets3d = parsed_3d.as_frame_list(num_frames)
        if config["input.frame"] == "lidar":
            dets3d = [detections_to_camera(frame, calib) for frame in dets3d]

        pipeline_start = time.perf_counter()
        outputs, tracker = track_frames(dets2d, dets3d, calib, config)
        pipeline_s = time.perf_counter() - pipeline_start

        rows = [row for frame in outputs for row in frame]
        job.out_path.parent.mkdir(parents=True, exist_ok=True)
        write_tracks(job.out_path, rows)
    except (OSError, ValueError) as e:
        logger.error(f"Sequence {job.sequence} failed: {e}", exc_info=True)
        return SequenceResult(job.sequence, ok=False, error=str(e), wall_s=time.perf_counter() - started)

    result = SequenceResult(
        sequence=job.sequence,
        ok=True,
        frames=num_frames,
        rows=len(rows),
        rejected_lines=len(parsed_2d.rejected) + len(parsed_3d.rejected),
        pipeline_s=pipeline_s,
        wall_s=time.perf_counter() - started,
    )
    logger.info(
        f"Sequence {job.sequence}: {result.frames} frames, {result.rows} rows, "
        f"{tracker.merge_count} merges, {tracker.clamp_count} 2D size clamps, {result.fps:.1f} FPS"
    )
    return result


def run_benchmark(frames: int, objects: int, seed: int = 0, config: RunConfig | None = None) -> BenchmarkResult:
    """Time the tracker on a synthetic grid workload.

    The pipeline figure covers fusion and tracking only. The end-to-end
    figure adds writing the inputs, parsing them back and writing the result.
    """
    config = config or RunConfig()
    bundle = generate(workload_config(frames, objects, seed))

    started = time.perf_counter()
    track_frames(bundle.dets2d, bundle.dets3d, bundle.calib, config)
    pipeline_s = time.perf_counter() - started

    with tempfile.TemporaryDirectory(prefix="fusemot-bench-") as tmp:
        paths = write_bundle(bundle, tmp, "bench")
        job = SequenceJob(
            sequence="bench",
            dets2d_path=paths["dets2d"],
            dets3d_path=paths["dets3d"],
            calib_path=paths["calib"],
            out_path=Path(tmp) / "results" / "bench.txt",
            config=config.as_dict(),
        )
        started = time.perf_counter()
        result = run_sequence(job)
        end_to_end_s = time.perf_counter() - started
    if not result.ok:
        raise RuntimeError(f"benchmark sequence failed: {result.error}")

    logger.info(
        f"Benchmark: {frames} frames x {objects} objects, "
        f"pipeline {pipeline_s:.3f} s, end-to-end {end_to_end_s:.3f} s"
    )
    return BenchmarkResult(frames=frames, objects=objects, pipeline_s=pipeline_s, end_to_end_s=end_to_end_s)
