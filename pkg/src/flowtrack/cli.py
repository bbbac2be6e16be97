"""Command line entry point: ``flowtrack {track,eval,bench,synth}``."""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import subprocess
import sys
from pathlib import Path

from . import __version__
from .core import ConfigError, PipelineConfig
from .detector import (DetectorError, ExternalDetector, FixedCostDetector, GroundTruthStore,
                       NullDetector, OracleDetector, OracleNoiseModel)
from .frames import FrameDirectory, FrameFormatError
from .metrics import EvalReport, FrameRangeError, evaluate_files
from .motio import MotFormatError, MotResultWriter
from .pipeline import mot_sink, run
from .slicing import slice_grid
from .synth import SceneError, SceneSpec, SequenceWriteError, random_scene, render_sequence, write_sequence

log = logging.getLogger("flowtrack")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DETECTOR = 4

DEFAULT_BENCH_WINDOWS = "1,2,4,8,16,all"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def version_string() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--tags", "--always", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group(
        "pipeline settings",
        "Each flag mirrors the config-file key of the same name (dashes for underscores). "
        "Precedence: built-in defaults < --config file < these flags.")
    defaults = PipelineConfig()
    for key, typ in PipelineConfig.field_types().items():
        g.add_argument(_flag(key), dest=f"cfg_{key}", type=typ, default=None, metavar=typ.__name__.upper(),
                       help=f"{key} (default {getattr(defaults, key)!r})")
    p.add_argument("--config", type=Path, help="key = value config file")


def resolve_config(args) -> PipelineConfig:
    try:
        cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    except FileNotFoundError:
        raise CliError(f"config file not found: {args.config}", EXIT_IO) from None
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    overrides = {k: getattr(args, f"cfg_{k}") for k in PipelineConfig.keys()
                 if getattr(args, f"cfg_{k}") is not None}
    try:
        return cfg.with_overrides(overrides)
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None


def build_detector(spec: str, timeout: float):
    """``oracle:<gt>[:noise]``, ``exec:<command>``, ``stub[:<ms>]`` or ``null``."""
    kind, _, rest = spec.partition(":")
    if kind == "oracle":
        if not rest:
            raise CliError("oracle detector needs a ground-truth file: oracle:<gt-file>[:noise]", EXIT_USAGE)
        path, _, noise_text = rest.partition(":")
        try:
            noise = OracleNoiseModel.parse(noise_text)
        except ValueError as exc:
            raise CliError(f"bad noise spec: {exc}", EXIT_USAGE) from None
        if not Path(path).is_file():
            raise CliError(f"ground-truth file not found: {path}", EXIT_IO)
        try:
            store = GroundTruthStore.load(path)
        except MotFormatError as exc:
            raise CliError(str(exc), EXIT_USAGE) from None
        except OSError as exc:
            raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None
        return OracleDetector(store, noise)
    if kind == "exec":
        if not rest:
            raise CliError("exec detector needs a command: exec:<command>", EXIT_USAGE)
        try:
            return ExternalDetector(rest, timeout=timeout)
        except DetectorError as exc:
            raise CliError(str(exc), EXIT_DETECTOR) from None
    if kind == "stub":
        try:
            ms = float(rest) if rest else 20.0
        except ValueError:
            raise CliError(f"bad stub delay {rest!r}", EXIT_USAGE) from None
        return FixedCostDetector(ms / 1000.0)
    if kind == "null":
        return NullDetector()
    raise CliError(f"unknown detector {spec!r}; use oracle:, exec:, stub or null", EXIT_USAGE)


def _threads(n: int) -> int:
    return n if n > 0 else (os.cpu_count() or 1)


def _open_frames(path: Path) -> FrameDirectory:
    try:
        frames = FrameDirectory(path)
    except FileNotFoundError as exc:
        raise CliError(str(exc), EXIT_IO) from None
    if len(frames) == 0:
        raise CliError(f"no .ppm/.png frames in {path}", EXIT_IO)
    return frames


def _close(detector) -> None:
    close = getattr(detector, "close", None)
    if close is not None:
        close()


def _run_tracking(frames, detector, cfg, threads):
    writer = MotResultWriter()
    try:
        summary = run(frames, detector, cfg, [mot_sink(writer)], threads=threads)
    except DetectorError as exc:
        # step() absorbs detector failures, so this came from the initial scan
        raise CliError(f"detector failed on the first frame: {exc}", EXIT_DETECTOR) from None
    except (FrameFormatError, OSError) as exc:
        raise CliError(f"cannot read frames: {exc}", EXIT_IO) from None
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    return summary, writer


def write_manifest(path: Path, entries: dict[str, object], cfg: PipelineConfig | None) -> None:
    lines = [f"{k} = {v}\n" for k, v in entries.items()]
    if cfg is not None:
        lines += [f"config.{k} = {getattr(cfg, k)!r}\n" for k in cfg.keys()]
    path.write_text("".join(lines), encoding="utf-8")


def cmd_track(args) -> int:
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    cfg = resolve_config(args)
    frames = _open_frames(args.frames)
    detector = build_detector(args.detector, args.timeout)
    try:
        summary, writer = _run_tracking(frames, detector, cfg, _threads(args.threads))
    finally:
        _close(detector)
    out = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
        writer.write(out / "results.txt")
        (out / "timing.txt").write_text(summary.report(), encoding="utf-8")
        write_manifest(out / "manifest.txt", {
            "version": version_string(),
            "command": " ".join(["flowtrack"] + sys.argv[1:]),
            "frames": str(args.frames),
            "detector": args.detector,
            "noise_seed": getattr(getattr(detector, "noise", None), "seed", ""),
            "threads": args.threads,
            "started_utc": started,
            "finished_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }, cfg)
    except OSError as exc:
        raise CliError(f"cannot write outputs to {out}: {exc}", EXIT_IO) from None
    print(f"{summary.frames} frames, {summary.fps:.2f} fps, "
          f"{len(writer.confirmed)} confident tracklets -> {out / 'results.txt'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    for p in (args.gt, args.result):
        if not p.is_file():
            raise CliError(f"file not found: {p}", EXIT_IO)
    try:
        report = evaluate_files(args.gt, args.result)
    except MotFormatError as exc:
        raise CliError(f"malformed MOT file: {exc}", EXIT_USAGE) from None
    except FrameRangeError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    name = args.name or args.result.stem
    text = report.as_text(name)
    print(text, end="")
    if args.out:
        try:
            args.out.parent.mkdir(parents=True, exist_ok=True)
            args.out.with_suffix(".txt").write_text(text, encoding="utf-8")
            args.out.with_suffix(".csv").write_text(EvalReport.CSV_HEADER + report.csv_row(name),
                                                    encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot write report: {exc}", EXIT_IO) from None
    return EXIT_OK


def parse_window_settings(text: str, total: int) -> list[tuple[str, int]]:
    out = []
    for tok in filter(None, (t.strip() for t in text.split(","))):
        if tok == "all":
            out.append(("all", total))
            continue
        try:
            n = int(tok)
        except ValueError:
            raise CliError(f"bad windows setting {tok!r}", EXIT_USAGE) from None
        if n < 1:
            raise CliError(f"windows setting must be >= 1, got {n}", EXIT_USAGE)
        out.append((tok, n))
    if not out:
        raise CliError("no windows settings given", EXIT_USAGE)
    return out


def cmd_bench(args) -> int:
    cfg = resolve_config(args)
    if args.frames:
        frames = _open_frames(args.frames)
    else:
        spec = random_scene(args.width, args.height, args.n_frames, args.objects, seed=args.seed)
        frames, _ = render_sequence(spec)
    if args.max_frames:
        frames = frames[:args.max_frames]
    first = frames[0]
    total = len(slice_grid(first.width, first.height, cfg.window_size, cfg.window_overlap_ratio))
    settings = parse_window_settings(args.windows, total)
    rows = []
    for label, n in settings:
        detector = build_detector(args.detector, args.timeout)
        try:
            summary, _ = _run_tracking(frames, detector, cfg.with_overrides({"windows_per_frame": n}),
                                       _threads(args.threads))
        finally:
            _close(detector)
        rows.append((label, min(n, total), summary.fps))
    print(f"{'windows':>8} {'probed':>7} {'fps':>9}")
    for label, eff, fps in rows:
        print(f"{label:>8} {eff:>7} {fps:>9.3f}")
    if args.out:
        try:
            args.out.write_text("windows,probed,fps\n" + "".join(
                f"{label},{eff},{fps:.6f}\n" for label, eff, fps in rows), encoding="utf-8")
        except OSError as exc:
            raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from None
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        if args.spec:
            try:
                spec = SceneSpec.from_dict(json.loads(args.spec.read_text(encoding="utf-8")))
            except FileNotFoundError:
                raise CliError(f"scene spec not found: {args.spec}", EXIT_IO) from None
            except json.JSONDecodeError as exc:
                raise CliError(f"scene spec {args.spec} is not valid JSON: {exc}", EXIT_USAGE) from None
        else:
            spec = random_scene(args.width, args.height, args.n_frames, args.objects,
                                seed=args.seed, max_speed=args.max_speed)
    except SceneError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    frames, gt = render_sequence(spec)
    try:
        write_sequence(frames, gt, args.out, seed=spec.seed)
        (args.out / "scene.json").write_text(spec.to_json() + "\n", encoding="utf-8")
    except (SequenceWriteError, OSError) as exc:
        raise CliError(str(exc), EXIT_IO) from None
    print(f"wrote {len(frames)} frames, {gt.total_boxes()} ground-truth boxes to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flowtrack", description=(
        "Multi-object tracking with sparse optical flow between scheduled window re-detections."))
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress and degradations")
    sub = ap.add_subparsers(dest="command", required=True)

    det_help = ("detector: oracle:<gt-file>[:miss=R,fp=R,jitter=PX,conf=LO-HI,seed=N], "
                "exec:<command> (stdin/stdout protocol), stub[:<ms per window>], or null")

    t = sub.add_parser("track", help="track objects through a frame directory")
    t.add_argument("--frames", type=Path, required=True, help="directory of .ppm/.png frames")
    t.add_argument("--detector", required=True, help=det_help)
    t.add_argument("--out", type=Path, default=Path("track_out"),
                   help="output directory for results.txt, timing.txt, manifest.txt")
    t.add_argument("--threads", type=int, default=1, help="worker cap for window probes (0 = auto)")
    t.add_argument("--timeout", type=float, default=10.0, help="external detector timeout in seconds")
    add_config_flags(t)
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="MOTA / IDF1 of a result file against ground truth")
    e.add_argument("gt", type=Path, help="ground-truth MOT CSV")
    e.add_argument("result", type=Path, help="tracker MOT CSV")
    e.add_argument("--name", help="sequence name for the report (default: result file stem)")
    e.add_argument("--out", type=Path, help="write <out>.txt report and <out>.csv row")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="fps for a range of windows-per-frame budgets")
    b.add_argument("--frames", type=Path, help="frame directory (default: synthetic 4K scene)")
    b.add_argument("--detector", default="stub:20", help=det_help + " (default stub:20)")
    b.add_argument("--windows", default=DEFAULT_BENCH_WINDOWS,
                   help=f"comma list of windows per frame, 'all' = every window (default {DEFAULT_BENCH_WINDOWS})")
    b.add_argument("--max-frames", type=int, default=0, help="use only the first N frames")
    b.add_argument("--width", type=int, default=3840, help="synthetic frame width")
    b.add_argument("--height", type=int, default=2160, help="synthetic frame height")
    b.add_argument("--n-frames", type=int, default=10, help="synthetic frame count")
    b.add_argument("--objects", type=int, default=5, help="synthetic object count")
    b.add_argument("--seed", type=int, default=0, help="synthetic scene seed")
    b.add_argument("--out", type=Path, help="also write the table as CSV")
    b.add_argument("--threads", type=int, default=1, help="worker cap for window probes (0 = auto)")
    b.add_argument("--timeout", type=float, default=10.0, help="external detector timeout in seconds")
    add_config_flags(b)
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("synth", help="write a synthetic sequence with ground truth")
    s.add_argument("--out", type=Path, required=True, help="output directory")
    s.add_argument("--spec", type=Path, help="JSON scene description (overrides the flags below)")
    s.add_argument("--width", type=int, default=1920, help="frame width")
    s.add_argument("--height", type=int, default=1080, help="frame height")
    s.add_argument("--n-frames", type=int, default=100, help="number of frames")
    s.add_argument("--objects", type=int, default=5, help="number of objects")
    s.add_argument("--seed", type=int, default=0, help="scene seed")
    s.add_argument("--max-speed", type=float, default=4.0, help="max object speed in px/frame")
    s.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"flowtrack {args.command}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
