"""Classical dephasing noise built from random telegraph fluctuators.

The noise coupled to the qubit is a static offset plus a sum of independent
two-state (random telegraph) fluctuators.  Fluctuator i jumps between
+amplitude_i and -amplitude_i at Poisson rate rate_i, which makes the total
process wide-sense stationary with correlation function

    C(t) = offset**2 + sum_i amplitude_i**2 * exp(-2 * rate_i * |t|)

Trajectories are exact event lists (piecewise constant between flips, no time
discretisation), so phase integrals computed from them are closed-form sums.
The flip statistics over a gap admit two independent derivations, the
two-state rate-matrix propagator and a sum over odd Poisson event counts;
both are implemented here and cross-checked in the tests.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

__all__ = [
    "Fluctuator",
    "NoiseModel",
    "NoiseTrajectory",
    "analytic_correlation",
    "flip_probability",
    "flip_probability_matrix_exponential",
    "flip_probability_poisson_sum",
    "propagate_model_state",
    "propagate_state",
    "sample_trajectory",
    "stationary_state",
    "write_trajectory_csv",
]


@dataclass(frozen=True)
class Fluctuator:
    """A single random telegraph fluctuator: value +-amplitude, flip rate `rate`."""

    amplitude: float
    rate: float
    label: str = ""

    def __post_init__(self) -> None:
        if not np.isfinite(self.amplitude) or self.amplitude < 0:
            raise ValueError(f"fluctuator amplitude must be finite and >= 0, got {self.amplitude}")
        if not np.isfinite(self.rate) or self.rate < 0:
            raise ValueError(f"fluctuator rate must be finite and >= 0, got {self.rate}")


@dataclass(frozen=True)
class NoiseModel:
    """Offset plus independent random telegraph fluctuators."""

    offset: float = 0.0
    fluctuators: tuple[Fluctuator, ...] = ()

    def __post_init__(self) -> None:
        if not np.isfinite(self.offset):
            raise ValueError("noise offset must be finite")
        object.__setattr__(self, "fluctuators", tuple(self.fluctuators))

    @property
    def zero_lag(self) -> float:
        """C(0) = offset**2 + sum of squared amplitudes."""
        return float(self.offset**2 + sum(f.amplitude**2 for f in self.fluctuators))


@dataclass(frozen=True)
class NoiseTrajectory:
    """One piecewise-constant realisation of the total noise on [t_start, t_end).

    ``times[i]`` is the start of segment i (``times[0] == t_start``) and
    ``values[i]`` is the total noise value, offset included, on
    [times[i], times[i+1]).  The arrays are treated as immutable.
    """

    t_start: float
    t_end: float
    times: np.ndarray
    values: np.ndarray
    final_state: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size == 0:
            raise ValueError("trajectory needs matching 1-d times and values")
        if times[0] != self.t_start:
            raise ValueError("first segment must start at t_start")
        if np.any(np.diff(times) <= 0):
            raise ValueError("segment start times must be strictly increasing")
        if not self.t_end > times[-1]:
            raise ValueError("t_end must lie beyond the last segment start")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    def value_at(self, t: float) -> float:
        """Noise value at time t (right-continuous in the flip times)."""
        if t < self.t_start or t > self.t_end:
            raise ValueError(f"t={t} outside trajectory support [{self.t_start}, {self.t_end}]")
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self.values[max(idx, 0)])

    def values_at(self, t: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`value_at`."""
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t_start) or np.any(t > self.t_end):
            raise ValueError("sample times outside trajectory support")
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, None)
        return self.values[idx]


def flip_probability(rate: float, gap: float) -> float:
    """Probability that a telegraph fluctuator changed sign after `gap`.

    Equals the probability of an odd number of Poisson flips,
    (1 - exp(-2*rate*gap)) / 2; it saturates at 1/2 for rate*gap >> 1.
    """
    if rate < 0 or gap < 0:
        raise ValueError("rate and gap must be >= 0")
    return float(-0.5 * np.expm1(-2.0 * rate * gap))


def flip_probability_matrix_exponential(rate: float, gap: float) -> float:
    """Flip probability from the two-state rate-matrix propagator.

    The occupation vector obeys dp/dt = G p with G = rate * [[-1, 1], [1, -1]];
    the flip probability is the off-diagonal entry of expm(G * gap).
    Independent route used to cross-check :func:`flip_probability`.
    """
    if rate < 0 or gap < 0:
        raise ValueError("rate and gap must be >= 0")
    generator = rate * np.array([[-1.0, 1.0], [1.0, -1.0]])
    return float(expm(generator * gap)[1, 0])


def flip_probability_poisson_sum(rate: float, gap: float, terms: int | None = None) -> float:
    """Flip probability as a truncated sum over odd Poisson flip counts.

    P(odd) = sum_{n odd} exp(-m) m**n / n! with m = rate * gap.  Independent
    route used to cross-check :func:`flip_probability`.
    """
    if rate < 0 or gap < 0:
        raise ValueError("rate and gap must be >= 0")
    mean = rate * gap
    if mean == 0.0:
        return 0.0
    if terms is None:
        terms = int(mean + 40.0 * np.sqrt(mean) + 60.0)
    n = np.arange(1, terms + 1, 2, dtype=float)
    log_pmf = n * np.log(mean) - mean - gammaln(n + 1.0)
    return float(np.exp(log_pmf).sum())


def analytic_correlation(model: NoiseModel, t: float | np.ndarray) -> float | np.ndarray:
    """Correlation C(t) = offset**2 + sum_i amplitude_i**2 exp(-2 rate_i |t|)."""
    t = np.abs(np.asarray(t, dtype=float))
    out = np.full_like(t, model.offset**2)
    for f in model.fluctuators:
        out += f.amplitude**2 * np.exp(-2.0 * f.rate * t)
    return float(out) if out.ndim == 0 else out


def stationary_state(model: NoiseModel, rng: np.random.Generator) -> tuple[int, ...]:
    """Draw each fluctuator sign +-1 with probability 1/2 (the stationary law)."""
    return tuple(int(s) for s in rng.integers(0, 2, size=len(model.fluctuators)) * 2 - 1)


def propagate_state(fluctuator: Fluctuator, sign: int, gap: float, rng: np.random.Generator) -> int:
    """Advance one fluctuator sign across an unobserved gap.

    Flips the sign with probability :func:`flip_probability`.  Always consumes
    exactly one uniform draw so the stream layout does not depend on the gap.
    """
    if sign not in (-1, 1):
        raise ValueError(f"fluctuator sign must be +-1, got {sign}")
    flipped = rng.random() < flip_probability(fluctuator.rate, gap)
    return -sign if flipped else sign


def propagate_model_state(
    model: NoiseModel, state: tuple[int, ...], gap: float, rng: np.random.Generator
) -> tuple[int, ...]:
    """Advance every fluctuator sign across a gap, in model order."""
    _check_state(model, state)
    return tuple(propagate_state(f, s, gap, rng) for f, s in zip(model.fluctuators, state))


def sample_trajectory(
    model: NoiseModel,
    state: tuple[int, ...],
    t_start: float,
    duration: float,
    rng: np.random.Generator,
) -> NoiseTrajectory:
    """Draw one exact noise realisation on [t_start, t_start + duration).

    Flip times are sampled event by event (exponential waiting times per
    fluctuator, in model order), merged, and turned into piecewise-constant
    segments of the total noise.  ``final_state`` holds the fluctuator signs
    at the end of the window, for conditioning the next draw.
    """
    _check_state(model, state)
    if not duration > 0:
        raise ValueError("trajectory duration must be > 0")
    t_end = t_start + duration

    events: list[tuple[float, int]] = []
    for idx, f in enumerate(model.fluctuators):
        if f.rate <= 0:
            continue
        scale = 1.0 / f.rate
        t = t_start + rng.exponential(scale)
        while t < t_end:
            events.append((t, idx))
            t += rng.exponential(scale)
    events.sort()

    signs = list(state)
    times = [t_start]
    values = [_total(model, signs)]
    for t, idx in events:
        signs[idx] = -signs[idx]
        if t == times[-1]:
            values[-1] = _total(model, signs)
        else:
            times.append(t)
            values.append(_total(model, signs))
    return NoiseTrajectory(
        t_start=t_start,
        t_end=t_end,
        times=np.array(times),
        values=np.array(values),
        final_state=tuple(signs),
    )


def write_trajectory_csv(trajectory: NoiseTrajectory, path) -> None:
    """Dump a trajectory as CSV with columns (t_start, value), one row per segment."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t_start", "value"])
        for t, v in zip(trajectory.times, trajectory.values):
            writer.writerow([repr(float(t)), repr(float(v))])


def _total(model: NoiseModel, signs: list[int]) -> float:
    return model.offset + sum(s * f.amplitude for f, s in zip(model.fluctuators, signs))


def _check_state(model: NoiseModel, state: tuple[int, ...]) -> None:
    if len(state) != len(model.fluctuators):
        raise ValueError(
            f"state has {len(state)} entries for {len(model.fluctuators)} fluctuators"
        )
    if any(s not in (-1, 1) for s in state):
        raise ValueError("fluctuator signs must be +-1")
