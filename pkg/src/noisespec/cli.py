"""Command line entry point.

Four subcommands, all driven by one JSON config:

simulate     run the long-time chain and the decoupling campaign, write shots
reconstruct  turn a shot directory back into correlation estimates + figure
filters      export filter curves, their overlap matrix, optional freq. curves
oracle       analytic correlation and attenuation tables for a known model

Exit codes: 0 success, 2 bad config, 3 bad or missing run data.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from noisespec import report
from noisespec.config import ExperimentConfig, ConfigError, load_config
from noisespec.noise import analytic_correlation
from noisespec.reconstruction import (
    analytic_coherence_integral,
    chis_from_coherences,
    CoherenceIntegral,
    long_time_correlations,
    reconstruct_short_time,
    reliability_boundary,
    subtract_offset,
)
from noisespec.report import DataError
from noisespec.sequences import (
    correlation_filter,
    frequency_filter,
    overlap_matrix,
    sequence_from_family,
)
from noisespec.simulator import run_dd_campaign, run_long_time_chain

__all__ = ["main"]


def _effective_config(args) -> ExperimentConfig:
    config = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        config = replace(config, seed=args.seed)
    return config


def _out_dir(args, config: ExperimentConfig) -> Path:
    target = args.out if args.out is not None else config.out_dir
    if target is None:
        raise ConfigError("no output directory: set out_dir in the config or pass --out")
    out = Path(target)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _recon_params(args, config: ExperimentConfig):
    params = config.reconstruction
    if getattr(args, "rcond", None) is not None:
        params = replace(params, rcond=args.rcond)
    if getattr(args, "quality_ratio", None) is not None:
        params = replace(params, quality_ratio=args.quality_ratio)
    if not 0 <= params.rcond < 1:
        raise ConfigError("--rcond must be in [0, 1)")
    if not params.quality_ratio > 0:
        raise ConfigError("--quality-ratio must be > 0")
    return params


def _slug(family: str, duration: float) -> str:
    return f"{re.sub(r'[^A-Za-z0-9]+', '', family)}_tau{duration:.6g}"


def _labelled_filter(family: str, duration: float, resolution: float, pulse_width: float = 0.0):
    sequence = sequence_from_family(family, duration, pulse_width)
    curve = correlation_filter(sequence, resolution=resolution)
    # One family appears at many durations; disambiguate the curve label.
    return replace(curve, name=f"{curve.name}@{duration:.6g}")


def cmd_simulate(args) -> int:
    config = _effective_config(args)
    if config.schedule is None and not config.campaign:
        raise ConfigError("nothing to simulate: add a 'schedule' or 'campaign' block")
    config.require("noise")
    out = _out_dir(args, config)

    # One lineage for the whole run: child 0 drives the chain, child 1 the
    # campaign, so either half is reproducible without running the other.
    chain_seed, campaign_seed = np.random.SeedSequence(config.seed).spawn(2)

    chain_records = []
    if config.schedule is not None:
        s = config.schedule
        chain_records = run_long_time_chain(
            config.noise, s.shots, s.spacing, s.evolution_time, s.basis,
            np.random.default_rng(chain_seed),
        )

    campaign_records: tuple = ()
    estimates: tuple = ()
    if config.campaign:
        spacing = config.schedule.spacing if config.schedule is not None else max(
            row.t_max for row in config.campaign
        )
        result = run_dd_campaign(config.noise, list(config.campaign), spacing, campaign_seed)
        campaign_records = result.records
        estimates = result.estimates

    report.write_records_csv(chain_records, out / "shots_long_time.csv", config.seed)
    report.write_records_csv(campaign_records, out / "shots_campaign.csv", config.seed)
    report.write_coherence_csv(estimates, out / "coherence.csv", config.seed)
    report.write_manifest(out, config.seed, config.sha256)
    for name in ("shots_long_time.csv", "shots_campaign.csv", "coherence.csv", "manifest.json"):
        print(f"wrote {out / name}")
    return 0


def _analytic_chis(config: ExperimentConfig, estimates, resolution: float):
    config.require("noise")
    chis = []
    for est in estimates:
        curve = _labelled_filter(est.family, est.duration, resolution)
        chis.append(
            CoherenceIntegral(
                family=est.family,
                duration=est.duration,
                value=analytic_coherence_integral(curve, config.noise),
                stderr=0.0,
            )
        )
    return chis, []


def cmd_reconstruct(args) -> int:
    config = _effective_config(args)
    config.require("schedule")
    params = _recon_params(args, config)
    out = _out_dir(args, config)
    input_dir = Path(args.input_dir)

    chain = report.read_records_csv(input_dir / "shots_long_time.csv")
    estimates = report.read_coherence_csv(input_dir / "coherence.csv")

    try:
        long_estimates = long_time_correlations(
            chain, config.reconstruction.max_lag, config.schedule.evolution_time
        )
        offset = None
        if params.tail_window > 0:
            offset = subtract_offset(long_estimates, params.tail_window)
            long_estimates = list(offset.estimates)

        short = None
        discarded_labels: tuple[str, ...] = ()
        if estimates:
            if args.analytic_chi:
                chis, discarded = _analytic_chis(config, estimates, params.resolution)
            else:
                chis, discarded = chis_from_coherences(estimates, params.floor_sigmas)
            if not chis:
                raise DataError("every coherence point fell below the floor; nothing to invert")
            discarded_labels = tuple(f"{e.family}@{e.duration:.6g}" for e in discarded)
            filters = [
                _labelled_filter(c.family, c.duration, params.resolution) for c in chis
            ]
            short = reconstruct_short_time(
                chis,
                filters,
                overlap_matrix(filters),
                rcond=params.rcond,
                quality_ratio=params.quality_ratio,
                discarded=discarded_labels,
            )
    except (ConfigError, DataError):
        raise
    except ValueError as exc:
        raise DataError(str(exc)) from exc

    report.write_long_time_csv(long_estimates, out / "long_time.csv", config.seed)

    boundary = None
    if short is not None:
        report.write_short_time_csv(short, out / "short_time.csv", config.seed)
        if short.reliable.any():
            boundary = reliability_boundary(short.u, short.reliable)

    metadata = {
        "seed": config.seed,
        "config_sha256": config.sha256,
        "long_time": {
            "points": len(long_estimates),
            "max_lag": config.reconstruction.max_lag,
            "evolution_time": config.schedule.evolution_time,
            "offset_squared": None if offset is None else offset.offset_squared,
            "offset_squared_stderr": None if offset is None else offset.offset_squared_stderr,
        },
        "short_time": None
        if short is None
        else {
            "mode": "analytic" if args.analytic_chi else "measured",
            "rcond": short.rcond,
            "rank": short.rank,
            "quality_ratio": params.quality_ratio,
            "reliability_boundary": boundary,
            "kept": len(estimates) - len(short.discarded),
            "discarded": list(short.discarded),
        },
    }
    if short is None:
        metadata["note"] = "no short-time estimate"
    (out / "metadata.json").write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")

    analytic = None
    if config.noise is not None:
        model = config.noise
        analytic = lambda t: float(analytic_correlation(model, t) - model.offset**2)  # noqa: E731
    report.save_reconstruction_figure(
        short, long_estimates, out / "reconstruction.svg",
        analytic=analytic, quality_ratio=params.quality_ratio,
    )
    report.write_manifest(out, config.seed, config.sha256)

    names = ["long_time.csv", "metadata.json", "reconstruction.svg", "manifest.json"]
    if short is not None:
        names.insert(1, "short_time.csv")
    for name in names:
        print(f"wrote {out / name}")
    if short is None:
        print("no short-time estimate (no decoupling data in input)")
    return 0


def cmd_filters(args) -> int:
    config = _effective_config(args)
    config.require("filters")
    params = _recon_params(args, config)
    out = _out_dir(args, config)
    request = config.filters

    curves = [
        _labelled_filter(family, duration, params.resolution, request.pulse_width)
        for family, duration in request.sequences
    ]
    written = []
    for (family, duration), curve in zip(request.sequences, curves):
        path = out / f"filter_{_slug(family, duration)}.csv"
        report.write_filter_csv(curve, path, config.seed)
        written.append(path)

    overlap = overlap_matrix(curves)
    report.write_overlap_csv(overlap, out / "overlap.csv", config.seed)
    written.append(out / "overlap.csv")

    frequency = None
    if request.frequency is not None:
        grid = np.geomspace(request.frequency.min, request.frequency.max, request.frequency.count)
        frequency = {}
        for (family, duration), curve in zip(request.sequences, curves):
            sequence = sequence_from_family(family, duration, request.pulse_width)
            values = frequency_filter(sequence, grid)
            path = out / f"frequency_{_slug(family, duration)}.csv"
            report.write_frequency_csv(grid, values, path, config.seed)
            written.append(path)
            frequency[curve.name] = (grid, values)

    report.save_filter_figure(curves, out / "filters.svg", frequency)
    written.append(out / "filters.svg")
    report.write_manifest(out, config.seed, config.sha256)
    written.append(out / "manifest.json")
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_oracle(args) -> int:
    config = _effective_config(args)
    config.require("noise")
    params = _recon_params(args, config)
    out = _out_dir(args, config)
    model = config.noise

    pairs = [
        (row.family, float(tau))
        for row in config.campaign
        for tau in row.durations()
    ]
    if not pairs and config.filters is not None:
        pairs = list(config.filters.sequences)

    durations = [tau for _, tau in pairs]
    t_lo = min(durations) / 10.0 if durations else (
        config.schedule.evolution_time if config.schedule else 1e-3
    )
    t_hi = max(durations) if durations else 1.0
    if config.schedule is not None:
        t_hi = max(t_hi, config.reconstruction.max_lag * config.schedule.spacing)
    grid = np.geomspace(t_lo, t_hi, 200)
    c_full = analytic_correlation(model, grid)
    c_eta = c_full - model.offset**2
    report.write_csv(
        out / "correlation_oracle.csv",
        ["t", "C", "C_eta"],
        zip(grid, c_full, c_eta),
        config.seed,
    )

    written = [out / "correlation_oracle.csv"]
    if pairs:
        rows = []
        for family, tau in pairs:
            curve = _labelled_filter(family, tau, params.resolution)
            rows.append((family, tau, analytic_coherence_integral(curve, model)))
        report.write_csv(out / "chi_oracle.csv", ["family", "tau", "chi"], rows, config.seed)
        written.append(out / "chi_oracle.csv")

    report.write_manifest(out, config.seed, config.sha256)
    written.append(out / "manifest.json")
    for path in written:
        print(f"wrote {path}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisespec",
        description="Simulate a qubit dephasing experiment and reconstruct the noise correlation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, recon=False):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory (defaults to config out_dir)")
        if recon:
            p.add_argument("--rcond", type=float, default=None,
                           help="override the pseudoinverse cutoff")
            p.add_argument("--quality-ratio", type=float, default=None, dest="quality_ratio",
                           help="override the reliability threshold ratio")

    p = sub.add_parser("simulate", help="run the configured experiment and write shot tables")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="estimate C(t) from a directory of shot tables")
    p.add_argument("input_dir", help="directory holding shots_long_time.csv and coherence.csv")
    common(p, recon=True)
    p.add_argument("--analytic-chi", action="store_true", dest="analytic_chi",
                   help="replace measured attenuation exponents with the exact model integrals")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("filters", help="export filter curves and their overlap matrix")
    common(p, recon=True)
    p.set_defaults(func=cmd_filters)

    p = sub.add_parser("oracle", help="write analytic correlation and attenuation tables")
    common(p, recon=True)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
