"""Command-line entry point for the full experiment lifecycle.

Subcommands cover synthesis/import, model training, threshold calibration,
online course sessions, and random-walk significance evaluation.  Every
stochastic command requires an explicit ``--seed``; reports embed a digest
of the resolved configuration so results are reproducible from the command
line alone.

Exit codes: 0 success, 1 usage error, 2 data error, 3 pipeline error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import control, course, evaluate, pipeline, recording, spectral, synth

USAGE_EXIT = 1
DATA_EXIT = 2
PIPELINE_EXIT = 3


class DataError(Exception):
    """Unreadable or malformed input (file contents, observed pairs)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


@dataclass
class ExperimentConfig:
    """Resolved settings of one command invocation, digestible for reports."""

    command: str
    values: dict

    def digest(self) -> str:
        canonical = "\n".join(
            f"{k}={self.values[k]}" for k in sorted(self.values)
        )
        return hashlib.sha256(f"{self.command}\n{canonical}".encode()).hexdigest()[:12]


# output destinations are not part of the experiment; the digest must be
# stable across re-runs that only redirect where results are written
_NON_CONFIG_ARGS = ("func", "out", "log", "report", "grid", "ensemble_out")


def _config(args: argparse.Namespace, skip=_NON_CONFIG_ARGS) -> ExperimentConfig:
    values = {k: v for k, v in vars(args).items() if k not in skip and not callable(v)}
    return ExperimentConfig(values.pop("command"), values)


def read_kv_file(path) -> dict[str, str]:
    """Parse a `key = value` file with # comments."""
    values: dict[str, str] = {}
    try:
        with open(path) as fh:
            for line_num, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise DataError(f"{path}:{line_num}: expected key = value")
                values[key.strip()] = value.strip()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return values


_GENERATOR_KEYS = {
    "n_channels": int,
    "sample_rate": float,
    "modulated_channels": lambda s: tuple(int(v) for v in s.split(",") if v.strip()),
    "rhythm_low_hz": float,
    "rhythm_high_hz": float,
    "erd_depth": float,
    "noise_exponent": float,
    "noise_scale_uv": float,
    "rhythm_scale_uv": float,
    "amplitude_jitter": float,
}


def generator_config_from_file(path, seed: int) -> tuple[synth.GeneratorConfig, float, float]:
    """Generator config plus (duration_s, epoch_s) from a key-value file."""
    raw = read_kv_file(path) if path else {}
    duration_s = float(raw.pop("duration_s", 600.0))
    epoch_s = float(raw.pop("epoch_s", 30.0))
    kwargs = {}
    for key, value in raw.items():
        if key not in _GENERATOR_KEYS:
            raise DataError(f"{path}: unknown generator key {key!r}")
        try:
            kwargs[key] = _GENERATOR_KEYS[key](value)
        except ValueError as exc:
            raise DataError(f"{path}: bad value for {key}: {exc}") from exc
    return synth.GeneratorConfig(seed=seed, **kwargs), duration_s, epoch_s


def course_from_file(path) -> course.CourseSpec:
    if not path:
        return course.default_course()
    raw = read_kv_file(path)
    base = course.default_course()
    kwargs = {}
    valid = {f.name for f in fields(course.CourseSpec)}
    for key, value in raw.items():
        if key not in valid:
            raise DataError(f"{path}: unknown course key {key!r}")
        if key == "npc_positions_m":
            kwargs[key] = tuple(float(v) for v in value.split(","))
        else:
            kwargs[key] = float(value)
    merged = {f.name: getattr(base, f.name) for f in fields(course.CourseSpec)}
    merged.update(kwargs)
    return course.CourseSpec(**merged)


def _load_recording(path) -> recording.Recording:
    try:
        return recording.load_recording(path)
    except (OSError, recording.RecordingError) as exc:
        raise DataError(str(exc)) from exc


def _load_model(path) -> pipeline.DecodingModel:
    try:
        return pipeline.load_model(path)
    except (OSError, pipeline.ModelIOError) as exc:
        raise DataError(str(exc)) from exc


def _load_thresholds(path) -> control.Thresholds:
    try:
        return control.load_thresholds(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read thresholds {path}: {exc}") from exc


def _parse_observed(text: str) -> tuple[float, float]:
    try:
        stops_str, time_str = text.split(",")
        return float(stops_str), float(time_str)
    except ValueError as exc:
        raise DataError(f"malformed observed pair {text!r}; expected stops,time") from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg, duration_s, epoch_s = generator_config_from_file(args.config, args.seed)
    if args.duration is not None:
        duration_s = args.duration
    rec = synth.generate_recording(cfg, duration_s=duration_s, epoch_s=epoch_s)
    recording.save_recording(args.out, rec)
    print(f"wrote {args.out}: {rec.n_channels} channels, {rec.duration_s:.0f} s")
    print(f"config digest: {_config(args).digest()}")
    return 0


def cmd_import_csv(args) -> int:
    try:
        rec = recording.import_csv(args.csv, sample_rate=args.sample_rate)
    except (OSError, recording.RecordingError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    recording.save_recording(args.out, rec)
    print(f"wrote {args.out}: {rec.n_channels} channels, {rec.n_samples} samples")
    return 0


def cmd_train(args) -> int:
    rec = _load_recording(args.recording)
    if not np.any(rec.labels != recording.UNLABELED):
        raise DataError(f"{args.recording}: recording has no labelled samples")
    model = pipeline.train_from_recording(
        rec,
        variance_keep=args.variance_keep,
        runs=args.runs,
        folds=args.folds,
        seed=args.seed,
        z_threshold=args.z_threshold,
        optimize=not args.no_band_search,
    )
    pipeline.save_model(args.out, model)
    print(model.summary_row())
    if model.excluded_channels:
        print(f"excluded channels: {','.join(model.excluded_channels)}")
    print(f"wrote {args.out}")
    print(f"config digest: {_config(args).digest()}")
    return 0


def cmd_calibrate(args) -> int:
    if args.posteriors:
        try:
            idle, walk = control.read_calibration_file(args.posteriors)
        except (OSError, control.ControlError, ValueError) as exc:
            raise DataError(str(exc)) from exc
    else:
        model = _load_model(args.model)
        rec = _load_recording(args.stream)
        raw = pipeline.online_posteriors(model, rec)
        smoothed = control.smoothed_trace(raw, args.smoothing)
        ends = spectral.sliding_window_ends(rec.n_samples, rec.sample_rate)
        tick_labels = rec.labels[ends - 1]
        idle = smoothed[tick_labels == recording.IDLE]
        walk = smoothed[tick_labels == recording.WALK]
    thresholds = control.calibrate(idle, walk)
    if args.adjust_idle or args.adjust_walk:
        thresholds = control.adjust(thresholds, args.adjust_idle, args.adjust_walk)
    control.save_thresholds(args.out, thresholds)
    print(f"t_idle = {thresholds.t_idle:.4f}  t_walk = {thresholds.t_walk:.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_run(args) -> int:
    thresholds = _load_thresholds(args.thresholds)
    spec = course_from_file(args.course)
    model = _load_model(args.model)
    if args.input:
        rec = _load_recording(args.input)
    else:
        cfg, duration_s, epoch_s = generator_config_from_file(args.synth, args.seed)
        rec = synth.generate_recording(cfg, duration_s=duration_s, epoch_s=epoch_s)
    posteriors = pipeline.online_posteriors(model, rec)
    result = course.run_session(
        thresholds, posteriors, spec, smoothing=args.smoothing, log_events=True
    )
    course.write_session_log(args.log, result)
    status = "censored" if result.censored else f"{result.completion_time_s:.1f} s"
    print(f"stops = {result.stops:.2f}  time = {status}")
    fs_rate, fst_rate = result.error_rates()
    print(f"false starts = {result.false_start_s:.1f} s ({fs_rate:.2%}), "
          f"false stops = {result.false_stop_s:.1f} s ({fst_rate:.2%})")
    print(f"wrote {args.log}")
    return 0


def cmd_evaluate(args) -> int:
    thresholds = _load_thresholds(args.thresholds)
    spec = course_from_file(args.course)
    observations = [_parse_observed(text) for text in args.observed]
    ensemble = evaluate.run_ensemble(
        thresholds, spec, n=args.n, seed=args.seed,
        smoothing=args.smoothing, n_jobs=args.n_jobs,
    )
    if args.ensemble_out:
        evaluate.save_ensemble(args.ensemble_out, ensemble)
    report = {
        "config_digest": _config(args).digest(),
        "seed": args.seed,
        "thresholds": {"t_idle": thresholds.t_idle, "t_walk": thresholds.t_walk},
        "random_walk": ensemble.summary(),
        "observations": [],
    }
    for obs in observations:
        report["observations"].append(evaluate.evaluate_observed(ensemble, obs))
    summary = ensemble.summary()
    print(f"random walk (n={ensemble.n_runs}): "
          f"stops {summary['stops_mean']:.2f} +/- {summary['stops_std']:.2f}, "
          f"time {summary['time_display']}"
          + ("" if summary["time_display"].startswith(">") else f" +/- {summary['time_std']:.1f}")
          + f", censored {summary['censored_runs']}")
    for entry in report["observations"]:
        print(f"observed ({entry['observed_stops']:g}, {entry['observed_time_s']:g}): "
              f"p = {entry['p_value']:.4g} [{entry['method']}]"
              f"{'  *significant*' if entry['significant_0.05'] else ''}")
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {args.report}")
    if args.grid:
        try:
            pdf = evaluate.fit_parzen(ensemble.points(), ensemble.censored)
            np.savez(args.grid, stops_axis=pdf.x_axis, time_axis=pdf.y_axis,
                     density=pdf.density, bandwidths=pdf.bandwidths)
            print(f"wrote {args.grid}")
        except evaluate.CensoringError as exc:
            print(f"grid export skipped: {exc}", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    if args.session:
        try:
            with open(args.session) as fh:
                lines = fh.read().splitlines()
        except OSError as exc:
            raise DataError(str(exc)) from exc
        footer = {}
        tick_s = None
        counts = {"false_start": 0, "false_stop": 0}
        previous_clock = 0.0
        for line in lines[1:]:
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                footer[key.strip()] = value.strip()
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise DataError(f"{args.session}: malformed row {line!r}")
            clock = float(parts[1])
            if tick_s is None and clock > 0:
                tick_s = clock - previous_clock
            previous_clock = clock
            if parts[6] in counts:
                counts[parts[6]] += 1
        if not footer:
            raise DataError(f"{args.session}: missing summary footer")
        tick_s = tick_s or 0.5
        total = float(footer.get("completion_time_s", "nan"))
        print(f"stops = {footer.get('stops')}  time = {total:g} s  "
              f"censored = {footer.get('censored')}")
        print(f"false starts: {counts['false_start'] * tick_s:.1f} s "
              f"({counts['false_start'] * tick_s / total:.2%})")
        print(f"false stops:  {counts['false_stop'] * tick_s:.1f} s "
              f"({counts['false_stop'] * tick_s / total:.2%})")
    if args.evaluation:
        try:
            with open(args.evaluation) as fh:
                report = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(str(exc)) from exc
        rw = report["random_walk"]
        print(f"random walk: stops {rw['stops_mean']:.2f} +/- {rw['stops_std']:.2f}, "
              f"time {rw['time_display']}, censored {rw['censored_runs']}/{rw['n_runs']}")
        for entry in report.get("observations", []):
            print(f"observed ({entry['observed_stops']:g}, {entry['observed_time_s']:g}): "
                  f"p = {entry['p_value']:.4g} [{entry['method']}]")
    if not args.session and not args.evaluation:
        raise DataError("nothing to report; pass --session and/or --evaluation")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="kmiwalk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labelled recording")
    p.add_argument("--config", help="generator key-value file")
    p.add_argument("--duration", type=float, help="override duration in seconds")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("import-csv", help="convert a CSV recording to the container format")
    p.add_argument("--csv", required=True)
    p.add_argument("--sample-rate", type=float, default=256.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_import_csv)

    p = sub.add_parser("train", help="train a decoding model from a labelled recording")
    p.add_argument("--recording", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variance-keep", type=float, default=0.99)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--z-threshold", type=float, default=4.0)
    p.add_argument("--no-band-search", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("calibrate", help="derive hysteresis thresholds from cued data")
    p.add_argument("--model")
    p.add_argument("--stream")
    p.add_argument("--posteriors", help="calibration text file ([idle]/[walk] sections)")
    p.add_argument("--out", required=True)
    p.add_argument("--smoothing", type=int, default=3)
    p.add_argument("--adjust-idle", type=float, default=0.0)
    p.add_argument("--adjust-walk", type=float, default=0.0)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("run", help="run one course session")
    p.add_argument("--model", required=True)
    p.add_argument("--thresholds", required=True)
    p.add_argument("--input", help="recording stream file")
    p.add_argument("--synth", help="generator key-value file (requires --seed)", nargs="?", const="")
    p.add_argument("--seed", type=int)
    p.add_argument("--course", help="course override key-value file")
    p.add_argument("--smoothing", type=int, default=3)
    p.add_argument("--log", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="random-walk ensemble and p-values")
    p.add_argument("--thresholds", required=True)
    p.add_argument("--observed", action="append", required=True,
                   help="stops,time pair; repeatable")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--smoothing", type=int, default=3)
    p.add_argument("--course", help="course override key-value file")
    p.add_argument("--report", help="write JSON report here")
    p.add_argument("--ensemble-out", help="write ensemble CSV here")
    p.add_argument("--grid", help="write density grid (.npz) here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="summarise a session log or evaluation report")
    p.add_argument("--session")
    p.add_argument("--evaluation")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("synth", "train", "evaluate") and args.seed is None:
        parser.error("--seed is required")
    if args.command == "run":
        if bool(args.input) == (args.synth is not None):
            parser.error("pass exactly one of --input or --synth")
        if args.synth is not None and args.seed is None:
            parser.error("--seed is required with --synth")
    if args.command == "calibrate":
        if not args.posteriors and not (args.model and args.stream):
            parser.error("pass --posteriors or both --model and --stream")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except ValueError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return PIPELINE_EXIT


if __name__ == "__main__":
    sys.exit(main())
