"""Monte Carlo qubit measurements under classical dephasing noise.

Each experiment prepares the +1 eigenstate of sigma_x, lets the qubit pick up
the noise phase

    phi = integral y(s) * eta(s) ds

over one pulse sequence (y is the sequence sign function, eta the sampled
noise including the offset), and projectively measures sigma_x or sigma_y.
With the convention <sigma_x> = cos(phi), <sigma_y> = -sin(phi), the single
shot returns +1 with probability (1 + <sigma_basis>) / 2.

Two runners cover the two halves of the spectroscopy protocol:

* :func:`run_long_time_chain` - many short free evolutions spaced dt apart,
  whose outcome products estimate C(k * dt) at long times;
* :func:`run_dd_campaign` - batches of decoupled (or free) evolutions of
  varying duration, whose coherence magnitudes give attenuation exponents for
  the short-time reconstruction.

Fluctuator states are conditioned across every gap of a chain, so the record
stream carries the true noise correlations.  Chains draw from independent
seeded substreams, which makes runs reproducible and order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from noisespec.noise import (
    NoiseModel,
    NoiseTrajectory,
    propagate_model_state,
    sample_trajectory,
    stationary_state,
)
from noisespec.sequences import (
    PulseFunction,
    PulseSequence,
    free_evolution,
    pulse_function,
    sequence_from_family,
)

__all__ = [
    "CampaignResult",
    "CampaignRow",
    "CoherenceEstimate",
    "ExperimentSchedule",
    "MeasurementRecord",
    "MeasurementSpec",
    "accumulate_phase",
    "born_measure",
    "outcome_probability",
    "run_dd_campaign",
    "run_long_time_chain",
]


@dataclass(frozen=True)
class MeasurementSpec:
    """What a single shot does: which sequence is applied and which axis is read out."""

    sequence: PulseSequence
    basis: str

    def __post_init__(self) -> None:
        if self.basis not in ("x", "y"):
            raise ValueError(f"basis must be 'x' or 'y', got {self.basis!r}")

    @property
    def duration(self) -> float:
        return self.sequence.duration

    @property
    def spec_id(self) -> str:
        name = self.sequence.name or f"{self.sequence.npulses}-pulse"
        return f"{name}@{self.sequence.duration:.6g}"


@dataclass(frozen=True)
class ExperimentSchedule:
    """A chain of equally spaced shots; shot j starts at j * spacing."""

    spacing: float
    specs: tuple[MeasurementSpec, ...]

    def __post_init__(self) -> None:
        if not self.spacing > 0:
            raise ValueError("shot spacing must be > 0")
        object.__setattr__(self, "specs", tuple(self.specs))
        if not self.specs:
            raise ValueError("schedule needs at least one shot")
        worst = max(s.duration for s in self.specs)
        if worst > self.spacing + 1e-12:
            raise ValueError(
                f"sequence duration {worst} exceeds the shot spacing {self.spacing}"
            )

    def start_time(self, index: int) -> float:
        return index * self.spacing


@dataclass(frozen=True)
class MeasurementRecord:
    """One projective outcome: which shot, when it started, what was run, what came out."""

    index: int
    t_start: float
    spec_id: str
    basis: str
    outcome: int

    def __post_init__(self) -> None:
        if self.outcome not in (-1, 1):
            raise ValueError("outcome must be +-1")


@dataclass(frozen=True)
class CoherenceEstimate:
    """|2 <sigma_+>| for one (sequence family, duration) batch of shots."""

    family: str
    duration: float
    magnitude: float
    stderr: float
    shots: int


@dataclass(frozen=True)
class CampaignRow:
    """One campaign line: a family swept over `divisions` durations, `repetitions` shots each."""

    family: str
    t_min: float
    t_max: float
    divisions: int
    repetitions: int

    def __post_init__(self) -> None:
        if not 0 < self.t_min <= self.t_max:
            raise ValueError("need 0 < t_min <= t_max")
        if self.divisions < 1:
            raise ValueError("divisions must be >= 1")
        if self.divisions > 1 and self.t_min == self.t_max:
            raise ValueError("divisions > 1 needs a non-degenerate time range")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    def durations(self) -> np.ndarray:
        if self.divisions == 1:
            return np.array([self.t_min])
        return np.linspace(self.t_min, self.t_max, self.divisions)


@dataclass(frozen=True)
class CampaignResult:
    records: tuple[MeasurementRecord, ...]
    estimates: tuple[CoherenceEstimate, ...]


def accumulate_phase(trajectory: NoiseTrajectory, y: PulseFunction) -> float:
    """Exact phase integral of y(s) * eta(s) over the sequence support.

    The sign function lives on [0, D] and is applied in trajectory-local time,
    i.e. against eta(t_start + s).  Both factors are piecewise constant, so the
    integral is an exact sum over the merged breakpoints.  The trajectory must
    cover the whole sequence.
    """
    duration = y.duration
    # Absolute start times enter the coverage arithmetic, so the tolerance
    # must scale with them or late shots in a long chain fail spuriously.
    tol = 1e-9 * max(1.0, abs(trajectory.t_start))
    if trajectory.duration < duration - tol:
        raise ValueError(
            f"trajectory of length {trajectory.duration} cannot cover a sequence of length {duration}"
        )
    local_times = trajectory.times - trajectory.t_start
    cuts = np.concatenate([y.breakpoints, local_times])
    cuts = np.unique(np.clip(cuts, 0.0, duration))
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    idx = np.clip(np.searchsorted(local_times, mids, side="right") - 1, 0, None)
    eta = trajectory.values[idx]
    return float(np.sum(np.asarray(y(mids)) * eta * np.diff(cuts)))


def outcome_probability(phase: float, basis: str) -> float:
    """P(+1) for a projective measurement after phase accumulation.

    x basis: (1 + cos phi) / 2; y basis: (1 - sin phi) / 2.
    """
    if basis == "x":
        return 0.5 * (1.0 + np.cos(phase))
    if basis == "y":
        return 0.5 * (1.0 - np.sin(phase))
    raise ValueError(f"basis must be 'x' or 'y', got {basis!r}")


def born_measure(phase: float, basis: str, rng: np.random.Generator) -> int:
    """Draw a single +-1 outcome from the exact Born probability."""
    return 1 if rng.random() < outcome_probability(phase, basis) else -1


def run_long_time_chain(
    model: NoiseModel,
    shots: int,
    spacing: float,
    evolution_time: float,
    basis: str,
    rng: np.random.Generator,
    spec_id: str | None = None,
) -> list[MeasurementRecord]:
    """Chain of `shots` free evolutions of length `evolution_time`, one every `spacing`.

    The fluctuator state starts stationary and is conditioned across every
    inter-shot gap, so outcome products inherit the noise correlations.
    """
    spec = MeasurementSpec(sequence=free_evolution(evolution_time), basis=basis)
    schedule = ExperimentSchedule(spacing=spacing, specs=(spec,) * shots)
    y = pulse_function(spec.sequence)
    label = spec.spec_id if spec_id is None else spec_id

    records = []
    state = stationary_state(model, rng)
    for j in range(shots):
        t0 = schedule.start_time(j)
        trajectory = sample_trajectory(model, state, t0, evolution_time, rng)
        phase = accumulate_phase(trajectory, y)
        outcome = born_measure(phase, basis, rng)
        records.append(
            MeasurementRecord(index=j, t_start=t0, spec_id=label, basis=basis, outcome=outcome)
        )
        state = propagate_model_state(model, trajectory.final_state, spacing - evolution_time, rng)
    return records


def run_dd_campaign(
    model: NoiseModel,
    rows: list[CampaignRow],
    spacing: float,
    rng: np.random.Generator | np.random.SeedSequence,
    pulse_width: float = 0.0,
) -> CampaignResult:
    """Run every campaign row as its own conditioned chain and estimate coherences.

    Each row draws from an independent substream (rows can be evaluated in any
    order without changing results).  Within a row the durations are swept in
    order; the shots of one (family, duration) batch are contiguous, x-basis
    first then y-basis, and the fluctuator state is carried across the whole
    row with one shot every `spacing`.

    The coherence magnitude is |2 <sigma_+>| = hypot(<sigma_x>, <sigma_y>),
    clipped to 1, with a first-order (delta method) standard error from the
    binomial shot noise of the two basis means.
    """
    if not rows:
        raise ValueError("campaign needs at least one row")
    if isinstance(rng, np.random.SeedSequence):
        streams = [np.random.default_rng(s) for s in rng.spawn(len(rows))]
    else:
        streams = [rng] * len(rows)

    records: list[MeasurementRecord] = []
    estimates: list[CoherenceEstimate] = []
    index = 0
    for row, row_rng in zip(rows, streams):
        state = stationary_state(model, row_rng)
        shot_in_row = 0
        for tau in row.durations():
            sequence = sequence_from_family(row.family, float(tau), pulse_width)
            if sequence.duration > spacing + 1e-12:
                raise ValueError(
                    f"sequence duration {sequence.duration} exceeds the shot spacing {spacing}"
                )
            y = pulse_function(sequence)
            n_x = (row.repetitions + 1) // 2
            outcomes = {"x": [], "y": []}
            for rep in range(row.repetitions):
                basis = "x" if rep < n_x else "y"
                spec = MeasurementSpec(sequence=sequence, basis=basis)
                t0 = shot_in_row * spacing
                trajectory = sample_trajectory(model, state, t0, sequence.duration, row_rng)
                phase = accumulate_phase(trajectory, y)
                outcome = born_measure(phase, basis, row_rng)
                outcomes[basis].append(outcome)
                records.append(
                    MeasurementRecord(
                        index=index,
                        t_start=t0,
                        spec_id=spec.spec_id,
                        basis=basis,
                        outcome=outcome,
                    )
                )
                state = propagate_model_state(
                    model, trajectory.final_state, spacing - sequence.duration, row_rng
                )
                shot_in_row += 1
                index += 1
            estimates.append(
                _coherence_from_outcomes(row.family, float(tau), outcomes["x"], outcomes["y"])
            )
    return CampaignResult(records=tuple(records), estimates=tuple(estimates))


def _coherence_from_outcomes(
    family: str, duration: float, x_outcomes: list[int], y_outcomes: list[int]
) -> CoherenceEstimate:
    sx = float(np.mean(x_outcomes))
    sy = float(np.mean(y_outcomes)) if y_outcomes else 0.0
    var_sx = (1.0 - sx**2) / len(x_outcomes)
    var_sy = (1.0 - sy**2) / len(y_outcomes) if y_outcomes else 0.0
    magnitude = float(np.hypot(sx, sy))
    if magnitude > 0:
        stderr = float(np.sqrt(sx**2 * var_sx + sy**2 * var_sy) / magnitude)
    else:
        stderr = float(np.sqrt(var_sx + var_sy))
    return CoherenceEstimate(
        family=family,
        duration=duration,
        magnitude=min(magnitude, 1.0),
        stderr=stderr,
        shots=len(x_outcomes) + len(y_outcomes),
    )
