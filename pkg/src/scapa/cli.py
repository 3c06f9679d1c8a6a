"""Command-line surface: stream detection, the machine-temperature case
study, and simulation runners.

Exit codes: 0 clean run (all labelled windows hit, for ``nab``), 1 a labelled
window was missed, 2 input parse error, 3 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from datetime import datetime

import numpy as np

from .costs import CostModel, PenaltyScheme, inflation_factor
from .detector import COLLECTIVE, DetectorConfig, EventCollector, OnlineDetector
from .seqstats import PHI_INV_75, estimate_ar1
from .simlab import (
    ExperimentConfig,
    MultiAnomalyConfig,
    RocConfig,
    arl_with_inflation,
    estimate_add,
    estimate_arl,
    roc_curve,
    write_add_csv,
    write_arl_csv,
    write_roc_csv,
)

EXIT_OK = 0
EXIT_MISS = 1
EXIT_PARSE = 2
EXIT_CONFIG = 3

# Hand-labelled anomalous windows of the machine-temperature benchmark
# (start, end), matched against detections at window level.
NAB_WINDOWS = (
    (datetime(2013, 12, 15, 17, 50), datetime(2013, 12, 17, 17, 0)),
    (datetime(2014, 1, 27, 14, 20), datetime(2014, 1, 29, 13, 30)),
    (datetime(2014, 2, 7, 14, 55), datetime(2014, 2, 9, 14, 5)),
)
NAB_EXPECTED_ROWS = 22695


class ParseError(Exception):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ConfigError(Exception):
    pass


def _parse_ts_key(ts: str):
    """Sortable key for a timestamp field; None if unrecognised."""
    try:
        return datetime.fromisoformat(ts)
    except ValueError:
        pass
    try:
        return float(ts)
    except ValueError:
        return None


def read_records(lines, index_time: bool):
    """Parse (timestamp, value) records from CSV lines.

    A single leading non-numeric row is treated as a header.  Timestamps must
    be non-decreasing when they carry a recognisable order.
    """
    records: list[tuple[str, float]] = []
    reader = csv.reader(lines)
    prev_key = None
    for line_no, row in enumerate(reader, start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if index_time:
            if len(row) != 1:
                raise ParseError(line_no, f"expected 1 column, got {len(row)}")
            ts, raw = str(len(records) + 1), row[0]
        else:
            if len(row) < 2:
                raise ParseError(line_no, f"expected 2 columns, got {len(row)}")
            ts, raw = row[0].strip(), row[1]
        try:
            value = float(raw)
        except ValueError:
            if line_no == 1 and not records:
                continue  # header row
            raise ParseError(line_no, f"non-numeric value field: {raw.strip()!r}")
        if not math.isfinite(value):
            raise ParseError(line_no, f"non-finite value: {raw.strip()!r}")
        if not index_time:
            key = _parse_ts_key(ts)
            if key is not None and prev_key is not None and key < prev_key:
                raise ParseError(line_no, f"timestamps decrease at {ts!r}")
            if key is not None:
                prev_key = key
        records.append((ts, value))
    return records


def _event_record(ev, ts_of) -> dict:
    return {
        "kind": ev.kind,
        "start_ts": ts_of(ev.start),
        "end_ts": ts_of(ev.end),
        "detected_ts": ts_of(ev.detected_at),
        "revised": ev.revised,
        "seg_mean": ev.seg_mean,
        "seg_var": ev.seg_var,
    }


def _echo(obj: dict):
    print(json.dumps(obj, default=str), file=sys.stderr)


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("SCAPA_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"SCAPA_SEED is not an integer: {env!r}")
    return 0


def _parse_known_baseline(text):
    if text is None:
        return None
    try:
        mu, sigma = (float(p) for p in text.split(","))
    except ValueError:
        raise ConfigError(f"--known-baseline expects MU,SIGMA, got {text!r}")
    return (mu, sigma)


def _parse_grid(text: str) -> list[float]:
    """Grid syntax: comma list ``4,6,8`` or inclusive range ``4:12:2``."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) == 2:
                start, stop, step = parts[0], parts[1], 1.0
            elif len(parts) == 3:
                start, stop, step = parts
            else:
                raise ValueError
            if step <= 0 or stop < start:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [start + i * step for i in range(n)]
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"bad grid: {text!r}")


# -- stream ------------------------------------------------------------------


def _build_stream_config(args, n_records: int | None):
    if args.burn_in_frac is not None:
        if n_records is None:
            raise ConfigError("--burn-in-frac requires a file input")
        burn_in_len = int(args.burn_in_frac * n_records)
    else:
        burn_in_len = args.burn_in
    known = _parse_known_baseline(args.known_baseline)
    if args.model == "mean_variance":
        model = CostModel.mean_variance(args.gamma)
    else:
        model = CostModel.mean_only()
    kappa = 1.0
    if args.phi is not None:
        kappa = inflation_factor(args.phi)
    if args.arl_target is not None:
        lam = 2.0 * math.log(args.arl_target)
        pen = PenaltyScheme.from_threshold(lam, inflation=kappa)
    else:
        lam = args.lam
        pen = PenaltyScheme(
            lam=lam, inflation=kappa, collective_mode=args.penalty_mode
        )
    try:
        config = DetectorConfig(
            model=model,
            penalties=pen,
            min_seg_len=args.min_seg_len,
            max_seg_len=args.max_seg_len,
            burn_in_len=burn_in_len,
            known_baseline=known,
            window_len=args.window_len,
        )
    except ValueError as exc:
        raise ConfigError(str(exc))
    return config


def _config_echo(config: DetectorConfig, seed: int, extra: dict | None = None):
    pen = config.penalties
    payload = {
        "lam": pen.lam,
        "kappa": pen.inflation,
        "beta_point": pen.beta_point,
        "collective_mode": pen.collective_mode,
        "beta_collective_min_len": pen.beta_collective(
            max(config.min_seg_len, 2)
            if pen.collective_mode == "length_dependent"
            else config.min_seg_len
        ),
        "min_seg_len": config.min_seg_len,
        "max_seg_len": config.max_seg_len,
        "burn_in_len": config.burn_in_len,
        "gamma": config.model.gamma,
        "model": config.model.kind,
        "baseline": (
            "known" if config.known_baseline is not None else "sequential"
        ),
        "known_baseline": config.known_baseline,
        "seed": seed,
    }
    if extra:
        payload.update(extra)
    _echo({"config": payload})


def cmd_stream(args) -> int:
    if args.input == "-":
        lines = sys.stdin
        records = read_records(lines, args.index_time)
    else:
        with open(args.input, newline="") as fh:
            records = read_records(fh, args.index_time)
    seed = _resolve_seed(args)
    n = len(records)
    config = _build_stream_config(args, n)
    n0 = config.burn_in_len
    if n0 >= n:
        raise ConfigError(f"burn-in ({n0}) must be shorter than the stream ({n})")

    extra = {}
    if args.arl_target is not None:
        extra["lam"] = 2.0 * math.log(args.arl_target)
        extra["arl_target"] = args.arl_target
    burn_values = np.array([v for _, v in records[:n0]])
    if args.auto_phi:
        if config.known_baseline is not None:
            mu, sigma = config.known_baseline
        else:
            mu = float(np.median(burn_values))
            iqr = float(
                np.quantile(burn_values, 0.75) - np.quantile(burn_values, 0.25)
            )
            if iqr <= 0:
                raise ConfigError("constant burn-in: cannot estimate phi")
            sigma = iqr / (2.0 * PHI_INV_75)
        phi_hat = estimate_ar1((burn_values - mu) / sigma).phi_hat
        kappa = inflation_factor(phi_hat)
        config = DetectorConfig(
            model=config.model,
            penalties=PenaltyScheme(
                lam=config.penalties.lam,
                inflation=kappa,
                collective_mode=config.penalties.collective_mode,
                point_override=config.penalties.point_override,
            ),
            min_seg_len=config.min_seg_len,
            max_seg_len=config.max_seg_len,
            burn_in_len=config.burn_in_len,
            known_baseline=config.known_baseline,
            window_len=config.window_len,
        )
        extra["phi_hat"] = phi_hat
    _config_echo(config, seed, extra)

    det = OnlineDetector(config, burn_values)
    cap = config.capacity
    ts_ring: list[str | None] = [None] * cap
    for i in range(n0):
        ts_ring[(i + 1) % cap] = records[i][0]

    collector = EventCollector()
    n_emitted = 0
    n_revised = 0
    out = sys.stdout
    for i in range(n0, n):
        ts, value = records[i]
        t = det.t + 1
        ts_ring[t % cap] = ts
        step_out = det.step(value)
        for ev in step_out.new_events:
            collector.add(ev)
            n_emitted += 1
            n_revised += ev.revised
            out.write(json.dumps(_event_record(ev, lambda j: ts_ring[j % cap])) + "\n")
        if step_out.new_events:
            out.flush()
    final = collector.events()
    summary = {
        "kind": "summary",
        "records": n,
        "emitted": n_emitted,
        "revised_emissions": n_revised,
        "final_points": sum(1 for e in final if e.kind == "point"),
        "final_collectives": sum(1 for e in final if e.kind == COLLECTIVE),
    }
    out.write(json.dumps(summary) + "\n")
    return EXIT_OK


# -- machine-temperature case study -------------------------------------------


def cmd_nab(args) -> int:
    try:
        with open(args.path, newline="") as fh:
            records = read_records(fh, index_time=False)
    except FileNotFoundError:
        print(f"error: file not found: {args.path}", file=sys.stderr)
        return EXIT_CONFIG
    n = len(records)
    if n != NAB_EXPECTED_ROWS:
        print(
            f"warning: expected {NAB_EXPECTED_ROWS} rows, got {n}; proceeding",
            file=sys.stderr,
        )
    timestamps = [datetime.fromisoformat(ts) for ts, _ in records]
    values = np.array([v for _, v in records])
    seed = _resolve_seed(args)

    n0 = int(args.burn_in_frac * n)
    burn = values[:n0]
    mu = float(np.median(burn))
    iqr = float(np.quantile(burn, 0.75) - np.quantile(burn, 0.25))
    if iqr <= 0:
        print("error: constant burn-in", file=sys.stderr)
        return EXIT_CONFIG
    sigma = iqr / (2.0 * PHI_INV_75)
    if args.phi is not None:
        phi_hat = args.phi
    else:
        phi_hat = estimate_ar1((burn - mu) / sigma).phi_hat
    kappa = inflation_factor(phi_hat)
    lam = math.log(n) if args.lam is None else args.lam

    config = DetectorConfig(
        model=CostModel.mean_variance(args.gamma),
        penalties=PenaltyScheme(lam=lam, inflation=kappa, collective_mode="constant"),
        min_seg_len=args.min_seg_len,
        max_seg_len=args.max_seg_len,
        burn_in_len=n0,
        known_baseline=None,
    )
    _config_echo(
        config, seed, {"phi_hat": phi_hat, "log_n": math.log(n), "n": n, "n0": n0}
    )

    det = OnlineDetector(config, burn)
    result = det.run(values[n0:])
    ts_of = lambda idx: timestamps[idx - 1].isoformat(sep=" ")
    for ev in result.events:
        print(json.dumps(_event_record(ev, ts_of)))

    collectives = [e for e in result.events if e.kind == COLLECTIVE]
    window_report = []
    all_hit = True
    for w_start, w_end in NAB_WINDOWS:
        hits = [
            e
            for e in collectives
            if timestamps[e.end - 1] >= w_start and timestamps[e.start - 1] <= w_end
        ]
        timely = [e for e in hits if timestamps[e.detected_at - 1] <= w_end]
        detected_ts = (
            min(timestamps[e.detected_at - 1] for e in timely) if timely else None
        )
        hit = bool(timely)
        all_hit &= hit
        window_report.append(
            {
                "window_start": w_start.isoformat(sep=" "),
                "window_end": w_end.isoformat(sep=" "),
                "hit": hit,
                "detected_ts": detected_ts.isoformat(sep=" ") if detected_ts else None,
            }
        )

    def in_any_window(ev) -> bool:
        return any(
            timestamps[ev.end - 1] >= ws and timestamps[ev.start - 1] <= we
            for ws, we in NAB_WINDOWS
        )

    outside = [e for e in result.events if not in_any_window(e)]
    report = {
        "kind": "report",
        "windows": window_report,
        "events_outside_windows": len(outside),
        "total_events": len(result.events),
    }
    print(json.dumps(report))
    for w in window_report:
        status = "HIT " if w["hit"] else "MISS"
        print(
            f"{status} window {w['window_start']} .. {w['window_end']}"
            f" detected: {w['detected_ts']}",
            file=sys.stderr,
        )
    print(f"events outside windows: {len(outside)}", file=sys.stderr)
    return EXIT_OK if all_hit else EXIT_MISS


# -- simulation runners --------------------------------------------------------


def _experiment_config(args) -> ExperimentConfig:
    model = (
        CostModel.mean_only()
        if args.model == "mean_only"
        else CostModel.mean_variance(args.gamma)
    )
    return ExperimentConfig(
        model=model,
        min_seg_len=args.min_seg_len,
        max_seg_len=args.max_seg_len,
        burn_in_len=args.burn_in,
        known_baseline=_parse_known_baseline(args.known_baseline),
        penalty_form=args.penalty_form,
        collective_mode=args.penalty_mode,
    )


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args)
    lambdas = _parse_grid(args.lambdas)
    if not lambdas:
        raise ConfigError("empty lambda grid")
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    if args.kind == "arl":
        rows = estimate_arl(_experiment_config(args), lambdas, args.reps, seed)
        path = os.path.join(out_dir, "arl.csv")
        write_arl_csv(rows, path)
    elif args.kind == "add":
        deltas = _parse_grid(args.deltas)
        if not deltas:
            raise ConfigError("empty delta grid")
        rows = estimate_add(
            _experiment_config(args), lambdas, deltas, args.reps, seed
        )
        path = os.path.join(out_dir, "add.csv")
        write_add_csv(rows, path)
    elif args.kind == "roc":
        methods = [m.strip() for m in args.methods.split(",") if m.strip()]
        if not methods:
            raise ConfigError("no methods given")
        gen = MultiAnomalyConfig(
            point_prob=args.point_prob, point_t_dof=args.t_dof
        )
        roc_cfg = RocConfig(
            gen=gen,
            n=args.n,
            min_seg_len=args.min_seg_len,
            max_seg_len=args.max_seg_len,
            gamma=args.gamma,
            collective_mode=args.penalty_mode,
        )
        curves = {
            method: roc_curve(method, roc_cfg, lambdas, args.reps, seed)
            for method in methods
        }
        path = os.path.join(out_dir, "roc.csv")
        write_roc_csv(curves, path)
    elif args.kind == "inflation":
        phis = _parse_grid(args.phis)
        rows = arl_with_inflation(
            phis, lambdas, args.inflate, args.reps, seed,
            cfg=_experiment_config(args),
        )
        path = os.path.join(out_dir, "arl.csv")
        write_arl_csv(rows, path)
    else:  # unreachable through argparse
        raise ConfigError(f"unknown simulation: {args.kind!r}")
    elapsed = time.perf_counter() - t0
    print(path)
    print(f"wall-clock: {elapsed:.2f}s", file=sys.stderr)
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------


def _add_detector_flags(p, lam_default=None):
    p.add_argument("--lam", type=float, default=lam_default, help="penalty parameter")
    p.add_argument("--min-seg-len", type=int, default=2)
    p.add_argument("--max-seg-len", type=int, default=1000)
    p.add_argument(
        "--model",
        choices=["mean_variance", "mean_only"],
        default="mean_variance",
    )
    p.add_argument("--gamma", type=float, default=1e-4)
    p.add_argument(
        "--penalty-mode",
        choices=["length_dependent", "constant"],
        default="length_dependent",
    )
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scapa",
        description="Online point/collective anomaly detection over univariate streams",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stream", help="detect anomalies in a CSV stream or stdin")
    p.add_argument("--input", "-i", default="-", help="CSV path or - for stdin")
    _add_detector_flags(p, lam_default=8.0)
    p.add_argument(
        "--arl-target",
        type=float,
        default=None,
        help="set lam = 2 ln(target) with threshold-form penalties",
    )
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--burn-in-frac", type=float, default=None)
    p.add_argument("--known-baseline", default=None, metavar="MU,SIGMA")
    p.add_argument("--phi", type=float, default=None)
    p.add_argument("--auto-phi", action="store_true")
    p.add_argument(
        "--index-time",
        action="store_true",
        help="single value column; use the record index as the timestamp",
    )
    p.add_argument("--window-len", type=int, default=None)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("nab", help="machine-temperature benchmark run")
    p.add_argument("path", help="machine_temperature_system_failure.csv")
    _add_detector_flags(p)
    p.add_argument("--burn-in-frac", type=float, default=0.15)
    p.add_argument("--phi", type=float, default=None)
    p.set_defaults(func=cmd_nab)

    p = sub.add_parser("simulate", help="run a seeded Monte-Carlo study")
    p.add_argument("kind", choices=["arl", "add", "roc", "inflation"])
    p.add_argument("--lambdas", default="4:12:2", help="grid: a,b,c or start:stop:step")
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--out-dir", default=".")
    _add_detector_flags(p)
    p.set_defaults(model="mean_only")  # run-length studies use the mean model
    p.add_argument("--burn-in", type=int, default=1000)
    p.add_argument("--known-baseline", default="0,1", metavar="MU,SIGMA")
    p.add_argument(
        "--penalty-form",
        choices=["threshold", "capa"],
        default="threshold",
    )
    p.add_argument("--deltas", default="0.05,0.1,0.2")
    p.add_argument("--phis", default="0:0.4:0.1")
    p.add_argument("--inflate", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--methods", default="scapa,capa")
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--point-prob", type=float, default=0.01)
    p.add_argument("--t-dof", type=float, default=2.0)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
