"""Estimators that turn measurement records into the noise correlation function.

Long times: for a chain of short free evolutions (length dt, one every Dt)
read out along y, the product of outcomes k shots apart estimates

    C(k * Dt) ~ <r_i r_{i+k}> / dt**2,

and the x-basis mean of the same protocol estimates the zero-lag variance
C(0) ~ 2 (1 - <sigma_x>) / dt**2.  A tail-window mean removes the static
offset**2 plateau.

Short times: each decoupled batch gives an attenuation exponent
chi = -log(coherence), modelled as chi_i = integral C(u) F_i(u) du.  Inverting
that linear map with a truncated-SVD pseudoinverse of the filter overlap
matrix yields the minimum-norm estimate

    C_hat(u) = sum_ij chi_i (F^+)_ij F_j(u),

with the resolution kernel diagnostic

    Q(u) = integral ( sum_ij F_i(u) (F^+)_ij F_j(t) )**2 dt

flagging the u where the filter set actually constrains the estimate (the
mask keeps points with Q above max(Q) / ratio).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from noisespec.noise import NoiseModel
from noisespec.sequences import FilterFunctionCurve, OverlapMatrix, sample_filters
from noisespec.simulator import CoherenceEstimate, MeasurementRecord

__all__ = [
    "CoherenceIntegral",
    "LongTimeEstimate",
    "OffsetSubtraction",
    "ShortTimeEstimate",
    "analytic_coherence_integral",
    "chi_from_coherence",
    "chis_from_coherences",
    "long_time_correlator",
    "long_time_correlations",
    "quality_function",
    "quality_mask",
    "reconstruct_short_time",
    "reliability_boundary",
    "subtract_offset",
    "truncated_pinv",
    "variance_estimate",
]

DEFAULT_RCOND = 1e-6
DEFAULT_QUALITY_RATIO = 5.0
DEFAULT_FLOOR_SIGMAS = 3.0


@dataclass(frozen=True)
class LongTimeEstimate:
    """C(lag * spacing) estimated from outcome products."""

    lag: int
    time: float
    value: float
    stderr: float
    samples: int


@dataclass(frozen=True)
class OffsetSubtraction:
    """Long-time estimates with the tail plateau (offset**2) removed."""

    estimates: tuple[LongTimeEstimate, ...]
    offset_squared: float
    offset_squared_stderr: float


@dataclass(frozen=True)
class CoherenceIntegral:
    """chi = -log(coherence) for one sequence, with its propagated uncertainty."""

    family: str
    duration: float
    value: float
    stderr: float


@dataclass(frozen=True)
class ShortTimeEstimate:
    """Reconstructed C(u) on a grid, with the quality diagnostic and mask."""

    u: np.ndarray
    values: np.ndarray
    quality: np.ndarray
    reliable: np.ndarray
    rcond: float
    rank: int
    discarded: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        for attr in ("u", "values", "quality"):
            object.__setattr__(self, attr, np.asarray(getattr(self, attr), dtype=float))
        object.__setattr__(self, "reliable", np.asarray(self.reliable, dtype=bool))


def _outcomes(records: list[MeasurementRecord], basis: str) -> np.ndarray:
    if not records:
        raise ValueError("no measurement records")
    bad = {r.basis for r in records if r.basis != basis}
    if bad:
        raise ValueError(f"expected {basis}-basis records, found {sorted(bad)}")
    return np.array([r.outcome for r in records], dtype=float)


def long_time_correlator(
    records: list[MeasurementRecord], lag: int, evolution_time: float
) -> LongTimeEstimate:
    """Estimate C(lag * spacing) = <r_i r_{i+lag}> / dt**2 from a y-basis chain.

    The standard error is the sample deviation of the products over
    sqrt(N - lag); it grows as the number of usable pairs 1 / (N - lag) shrinks.
    """
    outcomes = _outcomes(records, "y")
    n = outcomes.size
    if not 1 <= lag <= n - 2:
        raise ValueError(f"lag must be in [1, {n - 2}], got {lag}")
    if not evolution_time > 0:
        raise ValueError("evolution time must be > 0")
    spacing = records[1].t_start - records[0].t_start
    products = outcomes[:-lag] * outcomes[lag:]
    scale = evolution_time**2
    mean = float(products.mean())
    stderr = float(products.std(ddof=1) / np.sqrt(products.size))
    return LongTimeEstimate(
        lag=lag,
        time=lag * spacing,
        value=mean / scale,
        stderr=stderr / scale,
        samples=products.size,
    )


def long_time_correlations(
    records: list[MeasurementRecord], max_lag: int, evolution_time: float
) -> list[LongTimeEstimate]:
    """:func:`long_time_correlator` for every lag 1..max_lag."""
    return [long_time_correlator(records, k, evolution_time) for k in range(1, max_lag + 1)]


def variance_estimate(records: list[MeasurementRecord], evolution_time: float) -> float:
    """Zero-lag variance C(0) ~ 2 (1 - <sigma_x>) / dt**2 from x-basis shots.

    With our convention <sigma_x> = <cos phi> ~ 1 - <phi**2>/2, the factor 2
    makes the small-angle estimator unbiased for C(0) = <phi**2> / dt**2.  It
    saturates once C(0) * dt**2 is not << 1, so use an evolution time short
    enough for the noise at hand; a fully dephased chain returns 2 / dt**2.
    """
    outcomes = _outcomes(records, "x")
    if not evolution_time > 0:
        raise ValueError("evolution time must be > 0")
    return float(2.0 * (1.0 - outcomes.mean()) / evolution_time**2)


def subtract_offset(estimates: list[LongTimeEstimate], tail_window: int) -> OffsetSubtraction:
    """Remove the static plateau: subtract the mean of the last `tail_window` lags.

    The tail must sit at lags where the stochastic part has decayed; its mean
    estimates offset**2 and is reported alongside the corrected estimates.
    """
    if not 1 <= tail_window <= len(estimates):
        raise ValueError(
            f"tail window must be in [1, {len(estimates)}], got {tail_window}"
        )
    tail = estimates[-tail_window:]
    offset_sq = float(np.mean([e.value for e in tail]))
    offset_se = float(np.sqrt(np.mean([e.stderr**2 for e in tail]) / tail_window))
    corrected = tuple(replace(e, value=e.value - offset_sq) for e in estimates)
    return OffsetSubtraction(
        estimates=corrected, offset_squared=offset_sq, offset_squared_stderr=offset_se
    )


def chi_from_coherence(
    estimate: CoherenceEstimate, floor_sigmas: float = DEFAULT_FLOOR_SIGMAS
) -> CoherenceIntegral | None:
    """chi = -log(m) with stderr sigma_m / m, or None when m is too close to zero.

    A coherence below `floor_sigmas` standard errors (or exactly zero) carries
    no usable exponent; the point is discarded with a warning.
    """
    m = estimate.magnitude
    if m <= 0 or m < floor_sigmas * estimate.stderr:
        warnings.warn(
            f"discarding {estimate.family} at tau={estimate.duration:.6g}: "
            f"coherence {m:.4f} +- {estimate.stderr:.4f} is below the "
            f"{floor_sigmas:g}-sigma floor",
            stacklevel=2,
        )
        return None
    return CoherenceIntegral(
        family=estimate.family,
        duration=estimate.duration,
        value=float(-np.log(m)),
        stderr=float(estimate.stderr / m),
    )


def chis_from_coherences(
    estimates: list[CoherenceEstimate], floor_sigmas: float = DEFAULT_FLOOR_SIGMAS
) -> tuple[list[CoherenceIntegral], list[CoherenceEstimate]]:
    """Convert a batch of coherences, returning (kept integrals, discarded estimates)."""
    kept: list[CoherenceIntegral] = []
    discarded: list[CoherenceEstimate] = []
    for est in estimates:
        chi = chi_from_coherence(est, floor_sigmas)
        if chi is None:
            discarded.append(est)
        else:
            kept.append(chi)
    return kept, discarded


def analytic_coherence_integral(curve: FilterFunctionCurve, model: NoiseModel) -> float:
    """Exact chi = integral C_stoch(u) F(u) du for a telegraph model.

    Uses the piecewise-linear kink representation of the filter and the
    closed form of integral (p + q u) exp(-c u) du on each kink interval, so
    there is no quadrature error.  Only the stochastic part of C enters (the
    offset does not decay and is handled by the long-time offset subtraction).
    """
    u0 = curve.kink_u[:-1]
    u1 = curve.kink_u[1:]
    f0 = curve.kink_values[:-1]
    f1 = curve.kink_values[1:]
    slope = (f1 - f0) / (u1 - u0)
    intercept = f0 - slope * u0

    total = 0.0
    for f in model.fluctuators:
        c = 2.0 * f.rate
        if c == 0.0:
            pieces = intercept * (u1 - u0) + 0.5 * slope * (u1**2 - u0**2)
        else:
            e0 = np.exp(-c * u0)
            e1 = np.exp(-c * u1)
            pieces = ((intercept + slope * u0) * e0 - (intercept + slope * u1) * e1) / c
            pieces += slope * (e0 - e1) / c**2
        total += f.amplitude**2 * float(np.sum(pieces))
    return total


def truncated_pinv(matrix: np.ndarray, rcond: float) -> tuple[np.ndarray, int]:
    """Moore-Penrose pseudoinverse keeping singular values > rcond * s_max.

    Returns (pinv, retained rank).  Raises if every singular value falls below
    the cutoff (the filter set spans nothing at this tolerance).
    """
    u, s, vt = np.linalg.svd(np.asarray(matrix, dtype=float))
    keep = s > rcond * s[0]
    rank = int(np.count_nonzero(keep))
    if rank == 0:
        raise ValueError("all singular values fall below the rcond cutoff")
    pinv = (vt[keep].T / s[keep]) @ u[:, keep].T
    return pinv, rank


def quality_function(
    filters: list[FilterFunctionCurve], overlap: OverlapMatrix, rcond: float = DEFAULT_RCOND
) -> np.ndarray:
    """Q(u) = integral (sum_ij F_i(u) (F^+)_ij F_j(t))**2 dt on the overlap grid.

    Because the overlap matrix uses the same trapezoid weights as the t
    integral here, Q reduces to the quadratic form w(u)^T F w(u) with
    w(u) = F^+ f(u); that identity is exercised against the literal double
    integral in the tests.  Q is invariant under a global rescaling of the
    filter set.
    """
    pinv, _ = truncated_pinv(overlap.matrix, rcond)
    samples = sample_filters(filters, overlap.grid)
    coeff = pinv @ samples
    return np.einsum("im,ij,jm->m", coeff, overlap.matrix, coeff)


def quality_mask(quality: np.ndarray, ratio: float = DEFAULT_QUALITY_RATIO) -> np.ndarray:
    """True where Q(u) >= max(Q) / ratio."""
    quality = np.asarray(quality, dtype=float)
    if not ratio > 0:
        raise ValueError("quality ratio must be > 0")
    return quality >= quality.max() / ratio


def reliability_boundary(u: np.ndarray, reliable: np.ndarray) -> float:
    """Largest u of the contiguous reliable run that contains the first reliable point."""
    reliable = np.asarray(reliable, dtype=bool)
    idx = np.flatnonzero(reliable)
    if idx.size == 0:
        raise ValueError("no reliable points")
    end = idx[0]
    while end + 1 < reliable.size and reliable[end + 1]:
        end += 1
    return float(u[end])


def reconstruct_short_time(
    chis: list[CoherenceIntegral],
    filters: list[FilterFunctionCurve],
    overlap: OverlapMatrix,
    rcond: float = DEFAULT_RCOND,
    quality_ratio: float = DEFAULT_QUALITY_RATIO,
    discarded: tuple[str, ...] = (),
) -> ShortTimeEstimate:
    """Minimum-norm correlation estimate C_hat(u) = sum_ij chi_i (F^+)_ij F_j(u).

    `chis` and `filters` must be aligned one to one (same sequence, same
    order) and the overlap matrix must be built from exactly these filters.
    """
    if not chis:
        raise ValueError("no coherence integrals to invert")
    if len(chis) != len(filters) or len(filters) != len(overlap.names):
        raise ValueError("chis, filters and overlap matrix must be aligned 1:1")
    for chi, f in zip(chis, filters):
        if abs(chi.duration - f.duration) > 1e-9:
            raise ValueError(
                f"chi/filter duration mismatch: {chi.family}@{chi.duration} vs "
                f"{f.name}@{f.duration}"
            )
    pinv, rank = truncated_pinv(overlap.matrix, rcond)
    samples = sample_filters(filters, overlap.grid)
    chi_vec = np.array([c.value for c in chis])
    values = (pinv @ chi_vec) @ samples
    quality = quality_function(filters, overlap, rcond)
    return ShortTimeEstimate(
        u=overlap.grid,
        values=values,
        quality=quality,
        reliable=quality_mask(quality, quality_ratio),
        rcond=rcond,
        rank=rank,
        discarded=discarded,
    )
