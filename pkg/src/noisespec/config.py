"""Experiment configuration: one JSON file describing a full run.

A config bundles the noise model, the long-time measurement schedule, the
decoupling campaign table, reconstruction parameters and the master seed, so
that a run is reproducible from the file alone.  Unknown keys are rejected
(a typo must fail loudly, not silently fall back to a default).

Schema (all blocks except `seed` optional; subcommands check for what they
need)::

    {
      "seed": 12345,
      "out_dir": "runs/demo",
      "noise": {
        "offset": 0.0,
        "fluctuators": [{"amplitude": 1.0, "rate": 10.0, "label": "fast"}]
      },
      "schedule": {
        "shots": 5000, "spacing": 1.0, "evolution_time": 0.04, "basis": "y"
      },
      "campaign": [
        {"family": "FE", "time_range": [0.1, 0.5],
         "divisions": 10, "repetitions": 100}
      ],
      "reconstruction": {
        "resolution": 2000.0, "rcond": 1e-6, "quality_ratio": 5.0,
        "floor_sigmas": 3.0, "max_lag": 50, "tail_window": 0
      },
      "filters": {
        "sequences": [{"family": "UDD(4)", "duration": 1.0}],
        "pulse_width": 0.0,
        "frequency": {"count": 200, "min": 0.1, "max": 1000.0}
      }
    }
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from noisespec.noise import Fluctuator, NoiseModel
from noisespec.sequences import GRID_RESOLUTION, sequence_from_family
from noisespec.simulator import CampaignRow

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "FilterRequest",
    "FrequencyGrid",
    "ReconstructionParams",
    "Schedule",
    "load_config",
    "parse_config",
]


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class Schedule:
    """Long-time chain: `shots` free evolutions of `evolution_time`, one per `spacing`."""

    shots: int
    spacing: float
    evolution_time: float
    basis: str = "y"


@dataclass(frozen=True)
class ReconstructionParams:
    resolution: float = GRID_RESOLUTION
    rcond: float = 1e-6
    quality_ratio: float = 5.0
    floor_sigmas: float = 3.0
    max_lag: int = 50
    tail_window: int = 0


@dataclass(frozen=True)
class FrequencyGrid:
    """Logarithmic omega grid for the frequency-domain filter export."""

    count: int = 200
    min: float = 0.1
    max: float = 1000.0


@dataclass(frozen=True)
class FilterRequest:
    sequences: tuple[tuple[str, float], ...] = ()
    pulse_width: float = 0.0
    frequency: FrequencyGrid | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    noise: NoiseModel | None = None
    schedule: Schedule | None = None
    campaign: tuple[CampaignRow, ...] = ()
    reconstruction: ReconstructionParams = field(default_factory=ReconstructionParams)
    filters: FilterRequest | None = None
    out_dir: str | None = None
    sha256: str = ""

    def require(self, block: str) -> None:
        if getattr(self, block) in (None, ()):
            raise ConfigError(f"config is missing the '{block}' block required here")


def _reject_unknown(mapping: dict, allowed: set[str], where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")


def _number(mapping: dict, key: str, where: str, default=None):
    value = mapping.get(key, default)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{where}.{key}: expected a number, got {value!r}")
    return value


def _integer(mapping: dict, key: str, where: str, default=None):
    value = mapping.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{where}.{key}: expected an integer, got {value!r}")
    return value


def _parse_noise(block: dict) -> NoiseModel:
    _reject_unknown(block, {"offset", "fluctuators"}, "noise")
    raw = block.get("fluctuators", [])
    if not isinstance(raw, list):
        raise ConfigError("noise.fluctuators: expected a list")
    fluctuators = []
    for i, entry in enumerate(raw):
        where = f"noise.fluctuators[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: expected an object")
        _reject_unknown(entry, {"amplitude", "rate", "label"}, where)
        if "amplitude" not in entry or "rate" not in entry:
            raise ConfigError(f"{where}: needs both 'amplitude' and 'rate'")
        label = entry.get("label", "")
        if not isinstance(label, str):
            raise ConfigError(f"{where}.label: expected a string")
        try:
            fluctuators.append(
                Fluctuator(
                    amplitude=float(_number(entry, "amplitude", where)),
                    rate=float(_number(entry, "rate", where)),
                    label=label,
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    return NoiseModel(
        offset=float(_number(block, "offset", "noise", default=0.0)),
        fluctuators=tuple(fluctuators),
    )


def _parse_schedule(block: dict) -> Schedule:
    _reject_unknown(block, {"shots", "spacing", "evolution_time", "basis"}, "schedule")
    for key in ("shots", "spacing", "evolution_time"):
        if key not in block:
            raise ConfigError(f"schedule.{key}: required")
    schedule = Schedule(
        shots=_integer(block, "shots", "schedule"),
        spacing=float(_number(block, "spacing", "schedule")),
        evolution_time=float(_number(block, "evolution_time", "schedule")),
        basis=block.get("basis", "y"),
    )
    if schedule.shots < 2:
        raise ConfigError("schedule.shots: need at least 2 shots")
    if not schedule.spacing > 0:
        raise ConfigError("schedule.spacing: must be > 0")
    if not 0 < schedule.evolution_time <= schedule.spacing:
        raise ConfigError("schedule.evolution_time: must satisfy 0 < dt <= spacing")
    if schedule.basis not in ("x", "y"):
        raise ConfigError(f"schedule.basis: must be 'x' or 'y', got {schedule.basis!r}")
    return schedule


def _parse_campaign(rows: list, spacing: float | None) -> tuple[CampaignRow, ...]:
    if not isinstance(rows, list):
        raise ConfigError("campaign: expected a list of rows")
    parsed = []
    for i, entry in enumerate(rows):
        where = f"campaign[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: expected an object")
        _reject_unknown(entry, {"family", "time_range", "divisions", "repetitions"}, where)
        family = entry.get("family")
        if not isinstance(family, str):
            raise ConfigError(f"{where}.family: expected a string")
        try:
            sequence_from_family(family, 1.0)
        except ValueError as exc:
            raise ConfigError(f"{where}.family: {exc}") from exc
        time_range = entry.get("time_range")
        if (
            not isinstance(time_range, list)
            or len(time_range) != 2
            or not all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in time_range)
        ):
            raise ConfigError(f"{where}.time_range: expected [t_min, t_max]")
        try:
            row = CampaignRow(
                family=family,
                t_min=float(time_range[0]),
                t_max=float(time_range[1]),
                divisions=_integer(entry, "divisions", where, default=1),
                repetitions=_integer(entry, "repetitions", where, default=1),
            )
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        if spacing is not None and row.t_max > spacing + 1e-12:
            raise ConfigError(
                f"{where}: sequence duration {row.t_max} exceeds the shot spacing {spacing}"
            )
        parsed.append(row)
    return tuple(parsed)


def _parse_reconstruction(block: dict) -> ReconstructionParams:
    allowed = {"resolution", "rcond", "quality_ratio", "floor_sigmas", "max_lag", "tail_window"}
    _reject_unknown(block, allowed, "reconstruction")
    params = ReconstructionParams(
        resolution=float(_number(block, "resolution", "reconstruction", default=GRID_RESOLUTION)),
        rcond=float(_number(block, "rcond", "reconstruction", default=1e-6)),
        quality_ratio=float(_number(block, "quality_ratio", "reconstruction", default=5.0)),
        floor_sigmas=float(_number(block, "floor_sigmas", "reconstruction", default=3.0)),
        max_lag=_integer(block, "max_lag", "reconstruction", default=50),
        tail_window=_integer(block, "tail_window", "reconstruction", default=0),
    )
    if not params.resolution > 0:
        raise ConfigError("reconstruction.resolution: must be > 0")
    if not 0 <= params.rcond < 1:
        raise ConfigError("reconstruction.rcond: must be in [0, 1)")
    if not params.quality_ratio > 0:
        raise ConfigError("reconstruction.quality_ratio: must be > 0")
    if params.floor_sigmas < 0:
        raise ConfigError("reconstruction.floor_sigmas: must be >= 0")
    if params.max_lag < 1:
        raise ConfigError("reconstruction.max_lag: must be >= 1")
    if params.tail_window < 0:
        raise ConfigError("reconstruction.tail_window: must be >= 0")
    return params


def _parse_filters(block: dict) -> FilterRequest:
    _reject_unknown(block, {"sequences", "pulse_width", "frequency"}, "filters")
    raw = block.get("sequences", [])
    if not isinstance(raw, list) or not raw:
        raise ConfigError("filters.sequences: expected a non-empty list")
    sequences = []
    for i, entry in enumerate(raw):
        where = f"filters.sequences[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: expected an object")
        _reject_unknown(entry, {"family", "duration"}, where)
        family = entry.get("family")
        duration = _number(entry, "duration", where)
        if not isinstance(family, str):
            raise ConfigError(f"{where}.family: expected a string")
        if not duration > 0:
            raise ConfigError(f"{where}.duration: must be > 0")
        try:
            sequence_from_family(family, float(duration))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
        sequences.append((family, float(duration)))
    frequency = None
    if "frequency" in block:
        fblock = block["frequency"]
        if not isinstance(fblock, dict):
            raise ConfigError("filters.frequency: expected an object")
        _reject_unknown(fblock, {"count", "min", "max"}, "filters.frequency")
        frequency = FrequencyGrid(
            count=_integer(fblock, "count", "filters.frequency", default=200),
            min=float(_number(fblock, "min", "filters.frequency", default=0.1)),
            max=float(_number(fblock, "max", "filters.frequency", default=1000.0)),
        )
        if frequency.count < 2:
            raise ConfigError("filters.frequency.count: need at least 2 points")
        if not 0 < frequency.min < frequency.max:
            raise ConfigError("filters.frequency: need 0 < min < max")
    pulse_width = float(_number(block, "pulse_width", "filters", default=0.0))
    if pulse_width < 0:
        raise ConfigError("filters.pulse_width: must be >= 0")
    return FilterRequest(
        sequences=tuple(sequences), pulse_width=pulse_width, frequency=frequency
    )


def parse_config(data: dict) -> ExperimentConfig:
    """Validate a parsed JSON object and build the typed config."""
    if not isinstance(data, dict):
        raise ConfigError("config root: expected an object")
    allowed = {"seed", "out_dir", "noise", "schedule", "campaign", "reconstruction", "filters"}
    _reject_unknown(data, allowed, "config root")
    if "seed" not in data:
        raise ConfigError("config root: 'seed' is required")
    seed = _integer(data, "seed", "config root")
    if seed < 0:
        raise ConfigError("seed: must be >= 0")

    out_dir = data.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("out_dir: expected a string")

    noise = _parse_noise(data["noise"]) if "noise" in data else None
    schedule = _parse_schedule(data["schedule"]) if "schedule" in data else None
    spacing = schedule.spacing if schedule is not None else None
    campaign = _parse_campaign(data["campaign"], spacing) if "campaign" in data else ()
    reconstruction = (
        _parse_reconstruction(data["reconstruction"])
        if "reconstruction" in data
        else ReconstructionParams()
    )
    filters = _parse_filters(data["filters"]) if "filters" in data else None

    canonical = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    return ExperimentConfig(
        seed=seed,
        noise=noise,
        schedule=schedule,
        campaign=campaign,
        reconstruction=reconstruction,
        filters=filters,
        out_dir=out_dir,
        sha256=hashlib.sha256(canonical).hexdigest(),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a JSON config file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(data)
