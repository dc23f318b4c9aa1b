"""Command-line front end: simulate | mitigate | evaluate | sweep | calibrate-threshold.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.  All randomness flows from configured seeds; repeated runs with
the same configuration write byte-identical CSV output.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import frameio, pipeline
from .frameio import DataError
from .hough import detect_lines, hough_accumulate
from .metrics import islr, peak_range_bin, pslr, rd_map, velocity_profile
from .pipeline import METHODS, MetricsRow, load_run_config
from .radar_sim import simulate_scenario
from .reconstruction import mitigate_detailed
from .scenario import ConfigError
from .tf_engine import half_power_spectrogram, stft

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def _load(args) -> pipeline.RunConfig:
    run = load_run_config(args.config)
    if getattr(args, "seed", None) is not None:
        run.scenario = replace(run.scenario,
                               noise=replace(run.scenario.noise, seed=args.seed))
    return run


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    run = _load(args)
    t0 = time.perf_counter()
    frames = simulate_scenario(run.scenario)
    elapsed = time.perf_counter() - t0
    out = _out_dir(args)
    if args.format == "csv":
        path = out / "frames.csv"
        frameio.write_frames_csv(path, frames)
    else:
        path = out / "frames.cwf"
        frameio.write_frames(path, frames)
    print(pipeline.scenario_summary(run.scenario))
    print(f"wrote {len(frames)} frame(s) to {path}")
    print(f"[timing] synthesis+dechirp: {elapsed:.3f} s")
    return 0


def _read_frames(path: str):
    if str(path).endswith(".csv"):
        return frameio.read_frames_csv(path)
    return frameio.read_frames(path)


def cmd_mitigate(args) -> int:
    run = _load(args)
    frames = _read_frames(args.infile)
    if not frames:
        raise DataError(f"{args.infile}: no frames")
    out = _out_dir(args)
    proc = pipeline.ensure_threshold(run.scenario, run.processing)
    recovered = []
    t0 = time.perf_counter()
    for frame in frames:
        if args.method == "proposed":
            result = mitigate_detailed(frame, proc.stft, proc.hough, proc.ar)
            recovered.append(result.frame)
            stages = " ".join(f"{k}={v:.3f}s" for k, v in result.stage_seconds.items())
            print(f"frame {frame.chirp_index}: {len(result.lines)} line(s) detected  "
                  f"[timing] {stages}")
            if args.dump_tf:
                frameio.write_lines_csv(out / f"lines_{frame.chirp_index:04d}.csv",
                                        result.lines)
                spec = stft(frame.samples, proc.stft, frame.f_s)
                frameio.write_spectrogram(out / f"tf_{frame.chirp_index:04d}.cws", spec)
                acc = hough_accumulate(half_power_spectrogram(spec), proc.hough)
                frameio.write_accumulator_csv(out / f"hough_{frame.chirp_index:04d}.csv", acc)
        else:
            recovered.append(pipeline.mitigate_frame(frame, args.method, proc, run.scenario))
    elapsed = time.perf_counter() - t0
    if args.format == "csv":
        path = out / "recovered.csv"
        frameio.write_frames_csv(path, recovered)
    else:
        path = out / "recovered.cwf"
        frameio.write_frames(path, recovered)
    print(f"wrote {len(recovered)} frame(s) to {path}")
    print(f"[timing] mitigation ({args.method}): {elapsed:.3f} s "
          f"({elapsed / len(frames):.3f} s/frame)")
    return 0


def cmd_evaluate(args) -> int:
    run = _load(args)
    rec = _read_frames(args.rec)
    truth_frames = _read_frames(args.truth)
    if len(rec) != len(truth_frames):
        raise DataError(f"frame count mismatch: {len(rec)} recovered vs "
                        f"{len(truth_frames)} truth")
    truth = []
    for i, f in enumerate(truth_frames):
        truth.append(f.ground_truth if f.ground_truth is not None else f.samples)
    k = run.scenario.victim.chirp_rate
    try:
        rows = pipeline.evaluate_pairs(rec, truth, k, method=args.method or "",
                                       seed=run.scenario.noise.seed,
                                       snr_db=run.scenario.noise.snr_db)
    except ValueError as exc:
        raise DataError(str(exc)) from None

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w") as fh:
        fh.write(pipeline.METRICS_CSV_HEADER + "\n")
        for row in rows:
            fh.write(pipeline.metrics_row_csv(row) + "\n")
    for row in rows:
        m = row.metrics
        print(f"frame {row.chirp_index}: cs={m.cs:.6f} evm={m.evm:.6f} "
              f"pslr={m.pslr_db:.2f} dB islr={m.islr_db:.2f} dB")

    if len(rec) >= 2:
        victim = run.scenario.victim
        gt_frames = [f for f in truth_frames]
        rd_ref = rd_map([replace_samples(f, t) for f, t in zip(truth_frames, truth)], victim)
        ref_bin = peak_range_bin(rd_ref)
        rd_rec = rd_map(rec, victim)
        power, _ = velocity_profile(rd_rec, ref_bin)
        print(f"velocity profile @ range bin {ref_bin}: pslr={pslr(power):.2f} dB "
              f"islr={islr(power):.2f} dB")
    print(f"wrote {len(rows)} row(s) to {out_path}")
    return 0


def replace_samples(frame, samples):
    from .radar_sim import BasebandFrame
    return BasebandFrame(samples=np.asarray(samples, dtype=np.float64), f_s=frame.f_s,
                         chirp_index=frame.chirp_index)


def cmd_sweep(args) -> int:
    run = _load(args)
    if run.sweep is None:
        raise ConfigError(f"{args.config}: missing sweep block")
    sweep = run.sweep
    if args.trials is not None:
        sweep = replace(sweep, n_trials=args.trials)
    out = _out_dir(args)

    done = {"count": 0}
    total = len(sweep.snr_grid) * sweep.n_trials

    def progress(snr, trial):
        done["count"] += 1
        if done["count"] % 16 == 0:
            print(f"  ... {done['count']}/{total} trials", file=sys.stderr)

    t0 = time.perf_counter()
    result = pipeline.run_sweep(run.scenario, run.processing, sweep, progress=progress)
    elapsed = time.perf_counter() - t0

    trials_path = out / "trials.csv"
    with open(trials_path, "w") as fh:
        fh.write(pipeline.METRICS_CSV_HEADER + "\n")
        for row in result.rows:
            fh.write(pipeline.metrics_row_csv(row) + "\n")
    agg_path = out / "aggregate.csv"
    with open(agg_path, "w") as fh:
        fh.write(pipeline.AGGREGATE_CSV_HEADER + "\n")
        for agg in result.aggregates:
            fh.write(pipeline.aggregate_csv_line(agg) + "\n")

    for agg in result.aggregates:
        print(f"snr={agg['snr_db']:+.0f} dB {agg['method']:>10}: "
              f"cs={agg['cs_mean']:.4f}+-{agg['cs_std']:.4f} "
              f"evm={agg['evm_mean']:.4f}+-{agg['evm_std']:.4f} "
              f"pslr={agg['pslr_mean']:.1f} dB islr={agg['islr_mean']:.1f} dB")
    print(f"wrote {trials_path} and {agg_path}")
    print(f"[timing] sweep: {elapsed:.1f} s ({len(sweep.snr_grid)} SNRs x "
          f"{sweep.n_trials} trials x {len(sweep.methods)} methods)")
    return 0


def cmd_calibrate(args) -> int:
    run = _load(args)
    cal = pipeline.calibrate_threshold_factor(run.scenario, run.processing)
    print(f"clean accumulator max (accepted angles): {cal.clean_score!r}")
    print(f"threshold: {cal.threshold!r}")
    print(f"alpha: {cal.alpha!r}  (sigma_max={cal.sigma_max:g} m^2, r_ref={cal.r_ref:g} m)")
    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w") as fh:
            fh.write("# calibrated physical Hough threshold\n")
            fh.write("processing:\n  hough:\n")
            fh.write(f"    phys_threshold: {cal.threshold!r}\n")
            fh.write(f"# alpha: {cal.alpha!r} sigma_max: {cal.sigma_max!r} "
                     f"r_ref: {cal.r_ref!r}\n")
        print(f"wrote {out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fmcwmit",
        description="FMCW radar interference simulation, detection, and mitigation")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML run configuration")
    common.add_argument("--seed", type=int, help="override the scenario noise seed")

    p = sub.add_parser("simulate", parents=[common], help="synthesize baseband frames")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("bin", "csv"), default="bin")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mitigate", parents=[common], help="run one mitigation method")
    p.add_argument("--in", dest="infile", required=True, help="input frame file")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", choices=("bin", "csv"), default="bin")
    p.add_argument("--dump-tf", action="store_true",
                   help="dump spectrogram/accumulator/line diagnostics")
    p.set_defaults(func=cmd_mitigate)

    p = sub.add_parser("evaluate", parents=[common], help="score recovered frames")
    p.add_argument("--rec", required=True, help="recovered frame file")
    p.add_argument("--truth", required=True,
                   help="reference frame file (ground-truth track when present)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--method", default="", help="method label for the CSV rows")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common], help="SNR Monte-Carlo sweep")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--trials", type=int, help="override sweep.n_trials")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate-threshold", parents=[common],
                       help="calibrate the physical Hough threshold on a clean scenario")
    p.add_argument("--out", help="write a YAML fragment with the threshold")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
