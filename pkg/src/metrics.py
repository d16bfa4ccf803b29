"""CLEAR-MOT evaluation of tracking output against ground truth in the image plane."""

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from .association import solve_iou_assignment
from .geometry import iou_2d, iou_2d_matrix
from .kitti_io import GtAnnotation, TrackRow


logger = logging.getLogger(__name__)


class FrameAlignmentError(ValueError):
    """Ground truth and hypotheses cover different frame ranges."""


@dataclass(frozen=True)
class FrameStats:
    """Counts of one evaluated frame."""

    frame: int
    gt: int
    hyp: int
    matches: int
    fp: int
    fn: int
    idsw: int
    iou_sum: float


@dataclass
class MetricsReport:
    """CLEAR-MOT counts and the ratios derived from them.

    MOTA is NaN when there is no ground truth; MOTP is 0 without matches.
    """

    fp: int = 0
    fn: int = 0
    idsw: int = 0
    gt: int = 0
    matches: int = 0
    iou_sum: float = 0.0
    num_frames: int = 0
    frames: list[FrameStats] = field(default_factory=list)

    @property
    def mota(self) -> float:
        if self.gt == 0:
            return math.nan
        return 1.0 - (self.fn + self.fp + self.idsw) / self.gt

    @property
    def motp(self) -> float:
        if self.matches == 0:
            return 0.0
        return self.iou_sum / self.matches


def evaluate_clear(
    gt: Sequence[Sequence[GtAnnotation]],
    hyp: Sequence[Sequence[TrackRow]],
    iou_gate: float = 0.5,
) -> MetricsReport:
    """Compute CLEAR-MOT metrics frame by frame.

    A correspondence from the previous frame is kept while both ids are
    present and their 2D IoU stays at or above the gate. The remaining boxes
    are paired by maximum total IoU under the same gate. A ground-truth
    object matched to a different hypothesis id than at its last match counts
    one identity switch.

    Args:
        gt: Ground-truth annotations per frame
        hyp: Tracker rows per frame
        iou_gate: Minimum 2D IoU for a match

    Returns:
        Aggregated report with a per-frame breakdown

    Raises:
        FrameAlignmentError: The two inputs cover a different number of frames
    """
    if len(gt) != len(hyp):
        raise FrameAlignmentError(f"ground truth has {len(gt)} frames but hypotheses have {len(hyp)}")

    report = MetricsReport(num_frames=len(gt))
    previous: dict[int, int] = {}
    last_match: dict[int, int] = {}

    for frame, (gt_frame, hyp_frame) in enumerate(zip(gt, hyp, strict=True)):
        hyps = sorted(hyp_frame, key=lambda row: row.track_id)
        hyp_index = {row.track_id: j for j, row in enumerate(hyps)}
        current: dict[int, int] = {}
        used_gt: set[int] = set()
        used_hyp: set[int] = set()
        iou_sum = 0.0

        for i, annotation in enumerate(gt_frame):
            hyp_id = previous.get(annotation.track_id)
            j = hyp_index.get(hyp_id) if hyp_id is not None else None
            if j is None or j in used_hyp:
                continue
            overlap = iou_2d(annotation.box2d, hyps[j].box2d)
            if overlap >= iou_gate:
                current[annotation.track_id] = hyps[j].track_id
                used_gt.add(i)
                used_hyp.add(j)
                iou_sum += overlap

        free_gt = [i for i in range(len(gt_frame)) if i not in used_gt]
        free_hyp = [j for j in range(len(hyps)) if j not in used_hyp]
        ious = iou_2d_matrix([gt_frame[i].box2d for i in free_gt], [hyps[j].box2d for j in free_hyp])
        for row, col in solve_iou_assignment(ious, iou_gate).matches:
            current[gt_frame[free_gt[row]].track_id] = hyps[free_hyp[col]].track_id
            iou_sum += float(ious[row, col])

        idsw = 0
        for gt_id, hyp_id in current.items():
            if gt_id in last_match and last_match[gt_id] != hyp_id:
                idsw += 1
                logger.debug(f"Frame {frame}: identity switch on object {gt_id} ({last_match[gt_id]} -> {hyp_id})")
            last_match[gt_id] = hyp_id
        previous = current

        stats = FrameStats(
            frame=frame,
            gt=len(gt_frame),
            hyp=len(hyps),
            matches=len(current),
            fp=len(hyps) - len(current),
            fn=len(gt_frame) - len(current),
            idsw=idsw,
            iou_sum=iou_sum,
        )
        report.frames.append(stats)
        report.gt += stats.gt
        report.matches += stats.matches
        report.fp += stats.fp
        report.fn += stats.fn
        report.idsw += stats.idsw
        report.iou_sum += stats.iou_sum

    logger.info(
        f"Evaluated {report.num_frames} frames: MOTA={report.mota:.4f} MOTP={report.motp:.4f} "
        f"FP={report.fp} FN={report.fn} IDSW={report.idsw}"
    )
    return report


def combine_reports(reports: Iterable[MetricsReport]) -> MetricsReport:
    """Sum the counts of several sequences; ratios follow from the sums."""
    total = MetricsReport()
    for report in reports:
        total.fp += report.fp
        total.fn += report.fn
        total.idsw += report.idsw
        total.gt += report.gt
        total.matches += report.matches
        total.iou_sum += report.iou_sum
        total.num_frames += report.num_frames
    return total


def report_to_dict(report: MetricsReport) -> dict[str, float | int]:
    """Flat key-value form of a report for YAML output."""
    return {
        "MOTA": float(report.mota),
        "MOTP": float(report.motp),
        "FP": report.fp,
        "FN": report.fn,
        "IDSW": report.idsw,
        "GT": report.gt,
        "TP": report.matches,
        "frames": report.num_frames,
    }


def format_report_table(reports: dict[str, MetricsReport]) -> str:
    """Render reports as an aligned plain-text table, one row per name."""
    header = f"{'sequence':<12} {'MOTA':>8} {'MOTP':>8} {'FP':>7} {'FN':>7} {'IDSW':>6} {'GT':>7} {'frames':>7}"
    lines = [header, "-" * len(header)]
    for name, report in reports.items():
        mota = "nan" if math.isnan(report.mota) else f"{report.mota:.4f}"
        lines.append(
            f"{name:<12} {mota:>8} {report.motp:>8.4f} {report.fp:>7} {report.fn:>7} "
            f"{report.idsw:>6} {report.gt:>7} {report.num_frames:>7}"
        )
    return "\n".join(lines)
