"""Command-line entry point: track, eval, synth and bench subcommands."""

import argparse
import asyncio
import logging
import sys
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from logging.handlers import RotatingFileHandler
from pathlib import Path

import yaml

from .config import ConfigError, RunConfig, format_key_table, load_run_config
from .kitti_io import read_ground_truth, read_tracks
from .metrics import (
    FrameAlignmentError,
    MetricsReport,
    combine_reports,
    evaluate_clear,
    format_report_table,
    report_to_dict,
)
from .pipeline import SequenceJob, SequenceResult, run_benchmark, run_sequence
from .scenario import generate, load_scenario_config, write_bundle
from .validation import validate_sequence_name


LOG_FILE = Path.home() / ".fusemot" / "fusemot.log"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

logger = logging.getLogger(__name__)


def configure_logging(verbose: bool = False, log_file: Path = LOG_FILE) -> None:
    """Send log records to a rotating file only, never to the terminal."""
    log_file.parent.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[
            RotatingFileHandler(
                log_file,
                maxBytes=10_000_000,  # 10MB
                backupCount=5,
            )
        ],
        force=True,
    )


class SequenceRunner:
    """Runs sequence jobs, in parallel worker processes when jobs > 1."""

    def __init__(self, jobs: int = 1):
        """Initialize the runner.

        Args:
            jobs: Maximum number of sequences processed at once
        """
        self.jobs = max(1, jobs)

    async def _run_one(
        self,
        job: SequenceJob,
        semaphore: asyncio.Semaphore,
        executor: ProcessPoolExecutor,
    ) -> SequenceResult:
        async with semaphore:
            loop = asyncio.get_running_loop()
            try:
                return await loop.run_in_executor(executor, run_sequence, job)
            except Exception as e:
                # A crashed worker process must not take the other sequences down
                logger.error(f"Worker for sequence {job.sequence} crashed: {e}", exc_info=True)
                return SequenceResult(job.sequence, ok=False, error=str(e))

    async def run_async(self, jobs: Sequence[SequenceJob]) -> list[SequenceResult]:
        """Process every job; results keep the order of ``jobs``."""
        if self.jobs == 1:
            return [run_sequence(job) for job in jobs]

        semaphore = asyncio.Semaphore(self.jobs)
        with ProcessPoolExecutor(max_workers=self.jobs) as executor:
            return list(await asyncio.gather(*(self._run_one(job, semaphore, executor) for job in jobs)))

    def run(self, jobs: Sequence[SequenceJob]) -> list[SequenceResult]:
        return asyncio.run(self.run_async(jobs))


def _discover_sequences(directories: Sequence[Path], requested: str | None) -> list[str]:
    """Sequence names from ``--seqs`` or from the ``*.txt`` stems found in the directories."""
    if requested:
        names = [name.strip() for name in requested.split(",") if name.strip()]
    else:
        names = sorted(
            {path.stem for directory in directories if directory.is_dir() for path in directory.glob("*.txt")}
        )
    for name in names:
        result = validate_sequence_name(name)
        if not result.valid:
            raise ConfigError(f"invalid sequence name '{name}': {result.error_message}")
    return names


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    return load_run_config(args.config, args.set or [])


def cmd_track(args: argparse.Namespace) -> int:
    """Track every requested sequence and write KITTI tracking files."""
    config = _resolve_config(args)
    sequences = _discover_sequences([args.dets3d, args.dets2d], args.seqs)
    if not sequences:
        print(f"No sequences found in {args.dets3d} or {args.dets2d}", file=sys.stderr)
        return EXIT_USAGE

    jobs = [
        SequenceJob(
            sequence=name,
            dets2d_path=args.dets2d / f"{name}.txt",
            dets3d_path=args.dets3d / f"{name}.txt",
            calib_path=args.calib / f"{name}.txt",
            out_path=args.out / f"{name}.txt",
            config=config.as_dict(),
        )
        for name in sequences
    ]
    logger.info(f"Tracking {len(jobs)} sequence(s) with {args.jobs} job(s)")
    results = SequenceRunner(args.jobs).run(jobs)

    for result in results:
        if result.ok:
            print(f"{result.sequence}: {result.frames} frames, {result.rows} rows, {result.fps:.1f} FPS")
        else:
            print(f"{result.sequence}: FAILED: {result.error}", file=sys.stderr)
    return EXIT_OK if all(r.ok for r in results) else EXIT_FAILED


def _write_report(out_dir: Path, name: str, report: MetricsReport) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{name}.txt").write_text(format_report_table({name: report}) + "\n")
    with open(out_dir / f"{name}.yaml", "w") as f:
        yaml.safe_dump(report_to_dict(report), f, sort_keys=False)


def evaluate_sequence(results_path: Path, gt_path: Path, config: RunConfig) -> MetricsReport:
    """Evaluate one result file against its label file.

    Result frames missing at the end count as empty; result frames beyond the
    last ground-truth frame are a misalignment.

    Raises:
        FrameAlignmentError: The results extend past the ground truth
    """
    category = config["input.category"]
    gt = read_ground_truth(gt_path, category)
    hyp = read_tracks(results_path)
    if hyp.num_frames > gt.num_frames:
        raise FrameAlignmentError(
            f"{results_path} has {hyp.num_frames} frames but ground truth has {gt.num_frames}"
        )
    gt_frames = gt.as_frame_list()
    hyp_frames = [[row for row in frame if row.category == category] for frame in hyp.as_frame_list(gt.num_frames)]
    return evaluate_clear(gt_frames, hyp_frames, config["eval.iou_gate"])


def cmd_eval(args: argparse.Namespace) -> int:
    """Compute CLEAR-MOT metrics per sequence and in aggregate."""
    config = _resolve_config(args)
    sequences = _discover_sequences([args.gt], args.seqs)
    if not sequences:
        print(f"No ground-truth sequences found in {args.gt}", file=sys.stderr)
        return EXIT_USAGE

    reports: dict[str, MetricsReport] = {}
    failed = False
    for name in sequences:
        try:
            reports[name] = evaluate_sequence(args.results / f"{name}.txt", args.gt / f"{name}.txt", config)
        except (OSError, ValueError) as e:
            logger.error(f"Evaluation of sequence {name} failed: {e}", exc_info=True)
            print(f"{name}: FAILED: {e}", file=sys.stderr)
            failed = True

    if reports:
        summary = combine_reports(reports.values())
        print(format_report_table({**reports, "summary": summary}))
        if args.out is not None:
            for name, report in reports.items():
                _write_report(args.out, name, report)
            _write_report(args.out, "summary", summary)
    return EXIT_FAILED if failed else EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    """Generate a synthetic sequence from a scenario file."""
    result = validate_sequence_name(args.seq)
    if not result.valid:
        raise ConfigError(f"invalid sequence name '{args.seq}': {result.error_message}")
    scenario = load_scenario_config(args.scenario)
    bundle = generate(scenario)
    write_bundle(bundle, args.out, args.seq)
    print(
        f"{args.seq}: {scenario.num_frames} frames, {sum(map(len, bundle.gt))} annotations, "
        f"{sum(map(len, bundle.dets2d))} 2D and {sum(map(len, bundle.dets3d))} 3D detections written to {args.out}"
    )
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    """Report tracker throughput on a synthetic workload."""
    if args.frames < 1 or args.objects < 0:
        raise ConfigError("--frames must be at least 1 and --objects non-negative")
    config = _resolve_config(args)
    result = run_benchmark(args.frames, args.objects, args.seed, config)
    print(f"frames processed:   {result.frames} ({result.objects} objects per frame)")
    print(f"pipeline wall time: {result.pipeline_s:.3f} s  ({result.fps_pipeline:.1f} FPS)")
    print(f"end-to-end time:    {result.end_to_end_s:.3f} s  ({result.fps_end_to_end:.1f} FPS)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per operation."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML config file (falls back to $FUSEMOT_CONFIG)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--verbose", action="store_true", help="log at DEBUG level")

    parser = argparse.ArgumentParser(
        prog="fusemot",
        description="Camera-LiDAR fusion multi-object tracker for KITTI-format data.",
        epilog=f"configuration keys (default, description):\n{format_key_table()}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    track = subparsers.add_parser("track", parents=[common], help="track sequences")
    track.add_argument("--dets2d", type=Path, required=True, help="directory of 2D detection files")
    track.add_argument("--dets3d", type=Path, required=True, help="directory of 3D detection files")
    track.add_argument("--calib", type=Path, required=True, help="directory of calibration files")
    track.add_argument("--out", type=Path, required=True, help="output directory for tracking results")
    track.add_argument("--seqs", default=None, help="comma-separated sequence names (default: all found)")
    track.add_argument("--jobs", type=int, default=1, help="sequences processed in parallel")
    track.set_defaults(handler=cmd_track)

    evaluate = subparsers.add_parser("eval", parents=[common], help="evaluate tracking results")
    evaluate.add_argument("--results", type=Path, required=True, help="directory of tracking results")
    evaluate.add_argument("--gt", type=Path, required=True, help="directory of ground-truth label files")
    evaluate.add_argument("--out", type=Path, default=None, help="directory for report files")
    evaluate.add_argument("--seqs", default=None, help="comma-separated sequence names (default: all labels)")
    evaluate.set_defaults(handler=cmd_eval)

    synth = subparsers.add_parser("synth", parents=[common], help="generate a synthetic sequence")
    synth.add_argument("--scenario", type=Path, required=True, help="YAML scenario file")
    synth.add_argument("--out", type=Path, required=True, help="output root directory")
    synth.add_argument("--seq", default="0000", help="sequence name")
    synth.set_defaults(handler=cmd_synth)

    bench = subparsers.add_parser("bench", parents=[common], help="measure tracking throughput")
    bench.add_argument("--frames", type=int, default=1000, help="frames to simulate")
    bench.add_argument("--objects", type=int, default=20, help="objects per frame")
    bench.add_argument("--seed", type=int, default=0, help="scenario seed")
    bench.set_defaults(handler=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Main entry point for the application."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)

    logger.info("=" * 60)
    logger.info(f"fusemot {args.command} starting")
    logger.info("=" * 60)
    logger.info(f"Python version: {sys.version}")
    logger.info(f"Platform: {sys.platform}")

    try:
        status = args.handler(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        status = EXIT_USAGE
    except KeyboardInterrupt:
        logger.info("Terminated by user (KeyboardInterrupt)")
        status = EXIT_FAILED
    except Exception as e:
        logger.error(f"Fatal error: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        status = EXIT_FAILED

    logger.info(f"fusemot {args.command} finished with status {status}")
    return status


if __name__ == "__main__":
    sys.exit(main())
