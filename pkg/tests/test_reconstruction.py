import numpy as np
import pytest
from scipy.integrate import quad

from noisespec.noise import Fluctuator, NoiseModel, analytic_correlation
from noisespec.reconstruction import (
    CoherenceIntegral,
    analytic_coherence_integral,
    chi_from_coherence,
    chis_from_coherences,
    long_time_correlations,
    long_time_correlator,
    quality_function,
    quality_mask,
    reconstruct_short_time,
    reliability_boundary,
    subtract_offset,
    truncated_pinv,
    variance_estimate,
)
from noisespec.sequences import (
    correlation_filter,
    free_evolution,
    hahn_echo,
    overlap_matrix,
    sample_filters,
    trapezoid_weights,
    udd,
)
from noisespec.simulator import CoherenceEstimate, MeasurementRecord

TWO = NoiseModel(
    fluctuators=(
        Fluctuator(amplitude=1.0, rate=10.0),
        Fluctuator(amplitude=10.0, rate=0.01),
    )
)


def make_records(outcomes, basis="y", spacing=1.0, spec_id="FE@0.04"):
    return [
        MeasurementRecord(index=i, t_start=i * spacing, spec_id=spec_id, basis=basis, outcome=o)
        for i, o in enumerate(outcomes)
    ]


def test_long_time_correlator_counts_products():
    # +--+ : lag-1 products are -1, +1, -1
    records = make_records([1, -1, -1, 1])
    est = long_time_correlator(records, 1, 0.5)
    assert est.value == pytest.approx((-1 + 1 - 1) / 3 / 0.25)
    assert est.time == 1.0
    assert est.samples == 3


def test_long_time_correlator_validation():
    records = make_records([1, -1, 1, -1, 1])
    with pytest.raises(ValueError):
        long_time_correlator(records, 0, 0.1)
    with pytest.raises(ValueError):
        long_time_correlator(records, 4, 0.1)
    with pytest.raises(ValueError):
        long_time_correlator(records, 1, 0.0)
    with pytest.raises(ValueError):
        long_time_correlator(make_records([1, 1, 1], basis="x"), 1, 0.1)


def test_long_time_correlations_range():
    records = make_records([1, -1] * 20)
    ests = long_time_correlations(records, 5, 0.1)
    assert [e.lag for e in ests] == [1, 2, 3, 4, 5]
    # alternating outcomes: products are exactly (-1)^k
    assert ests[0].value == pytest.approx(-1 / 0.01)
    assert ests[1].value == pytest.approx(1 / 0.01)


def test_long_time_correlator_linearized_unbiasedness():
    # synthetic +-1 records with P(+1) = (1 - phi)/2, Gaussian phi whose
    # covariance is dt^2 C(k Dt): the estimator mean must recover C(k Dt)
    dt, n, k = 0.22, 1000, 1
    target = float(np.exp(-0.5 * k))
    idx = np.arange(n)
    cov = dt**2 * np.exp(-0.5 * np.abs(idx[:, None] - idx[None, :]))
    chol = np.linalg.cholesky(cov)
    rng = np.random.default_rng(77)
    values = []
    for _ in range(300):
        phi = chol @ rng.standard_normal(n)
        outcomes = np.where(rng.random(n) < 0.5 * (1 - phi), 1, -1)
        values.append(long_time_correlator(make_records(outcomes), k, dt).value)
    values = np.asarray(values)
    se = values.std(ddof=1) / np.sqrt(values.size)
    assert values.mean() == pytest.approx(target, abs=4 * se)


def test_window_average_approximates_point_correlation():
    # the shot integrates C over a (dt x dt) window around k Dt; for the
    # two-fluctuator model at dt = 0.04 that window average is C(1) to 1e-7
    dt = 0.04
    cov, _ = quad(
        lambda s: (dt - abs(s)) * float(analytic_correlation(TWO, 1.0 + s)),
        -dt,
        dt,
        limit=200,
    )
    assert cov == pytest.approx(0.15683179609692058, rel=1e-10)
    assert cov / dt**2 == pytest.approx(float(analytic_correlation(TWO, 1.0)), rel=1e-6)


def test_variance_estimate_pins():
    dt = 0.1
    assert variance_estimate(make_records([1, 1, 1, 1], basis="x"), dt) == 0.0
    # fair coin saturates at 2 / dt^2
    assert variance_estimate(make_records([1, -1] * 10, basis="x"), dt) == pytest.approx(200.0)
    with pytest.raises(ValueError):
        variance_estimate(make_records([1, 1], basis="y"), dt)
    with pytest.raises(ValueError):
        variance_estimate(make_records([1, 1], basis="x"), 0.0)


def test_variance_estimate_monte_carlo():
    from noisespec.simulator import run_long_time_chain

    model = NoiseModel(fluctuators=(Fluctuator(amplitude=3.0, rate=1.0),))
    dt = 0.1
    records = run_long_time_chain(model, 4000, 1.0, dt, "x", np.random.default_rng(19))
    est = variance_estimate(records, dt)
    outcomes = np.array([r.outcome for r in records], dtype=float)
    se = 2.0 * outcomes.std(ddof=1) / np.sqrt(outcomes.size) / dt**2
    # small-angle bias at phi ~ 0.3 is ~0.7%; allow 1% on top of shot noise
    assert est == pytest.approx(9.0, abs=4 * se + 0.09)


def test_subtract_offset():
    ests = long_time_correlations(make_records([1, -1] * 30), 6, 1.0)
    # fake a plateau: shift every value by replacing via dataclasses would be
    # overkill; instead check the arithmetic on the real estimates
    out = subtract_offset(ests, tail_window=2)
    plateau = np.mean([e.value for e in ests[-2:]])
    assert out.offset_squared == pytest.approx(plateau)
    for before, after in zip(ests, out.estimates):
        assert after.value == pytest.approx(before.value - plateau)
        assert after.stderr == before.stderr
    with pytest.raises(ValueError):
        subtract_offset(ests, 0)
    with pytest.raises(ValueError):
        subtract_offset(ests, 7)


def test_chi_from_coherence_pins():
    est = CoherenceEstimate(family="FE", duration=0.1, magnitude=float(np.exp(-1)), stderr=0.01, shots=100)
    chi = chi_from_coherence(est)
    assert chi.value == pytest.approx(1.0, rel=1e-12)
    assert chi.stderr == pytest.approx(0.01 * np.e, rel=1e-12)
    est = CoherenceEstimate(family="FE", duration=0.1, magnitude=1.0, stderr=0.01, shots=100)
    assert chi_from_coherence(est).value == 0.0


def test_chi_floor_discards_with_warning():
    est = CoherenceEstimate(family="FE", duration=0.5, magnitude=0.01, stderr=0.02, shots=100)
    with pytest.warns(UserWarning, match="below the 3-sigma floor"):
        assert chi_from_coherence(est) is None
    dead = CoherenceEstimate(family="FE", duration=0.5, magnitude=0.0, stderr=0.0, shots=100)
    with pytest.warns(UserWarning):
        assert chi_from_coherence(dead) is None
    with pytest.warns(UserWarning):
        kept, discarded = chis_from_coherences(
            [est, CoherenceEstimate(family="FE", duration=0.1, magnitude=0.9, stderr=0.01, shots=100)]
        )
    assert len(kept) == 1 and len(discarded) == 1
    assert discarded[0].duration == 0.5


def test_chi_round_trip_identity():
    for m in (1.0, 0.5, 0.037, 1e-3):
        est = CoherenceEstimate(family="FE", duration=0.2, magnitude=m, stderr=0.0, shots=10)
        chi = chi_from_coherence(est, floor_sigmas=0.0)
        assert float(np.exp(-chi.value)) == pytest.approx(m, rel=1e-12)


def test_analytic_coherence_integral_closed_form():
    # FE tau=0.5 under a single (eta=1, gamma=10) fluctuator:
    # chi = 2 [tau/c - (1 - e^{-c tau}) / c^2], c = 2 gamma
    model = NoiseModel(fluctuators=(Fluctuator(amplitude=1.0, rate=10.0),))
    curve = correlation_filter(free_evolution(0.5))
    assert analytic_coherence_integral(curve, model) == pytest.approx(
        0.04500022699964881, rel=1e-12
    )
    # the static offset must not contribute
    shifted = NoiseModel(offset=5.0, fluctuators=model.fluctuators)
    assert analytic_coherence_integral(curve, shifted) == pytest.approx(
        0.04500022699964881, rel=1e-12
    )


def test_analytic_coherence_integral_vs_quadrature():
    # Hahn tau=1 with C = e^{-2|t|}: frozen independent quadrature value
    model = NoiseModel(fluctuators=(Fluctuator(amplitude=1.0, rate=1.0),))
    curve = correlation_filter(hahn_echo(1.0))
    assert analytic_coherence_integral(curve, model) == pytest.approx(
        0.16809124072457832, rel=1e-12
    )


def test_truncated_pinv_contract():
    filters = [correlation_filter(free_evolution(1.0)), correlation_filter(hahn_echo(1.0))]
    m = overlap_matrix(filters).matrix
    pinv, rank = truncated_pinv(m, 1e-12)
    assert rank == 2
    np.testing.assert_allclose(m @ pinv @ m, m, atol=1e-12)
    np.testing.assert_allclose(pinv, np.linalg.inv(m), atol=1e-12)


def test_truncated_pinv_rank_deficiency():
    f = correlation_filter(free_evolution(1.0))
    m = overlap_matrix([f, f]).matrix  # rank 1 by construction
    pinv, rank = truncated_pinv(m, 1e-8)
    assert rank == 1
    np.testing.assert_allclose(m @ pinv @ m, m, atol=1e-10)
    with pytest.raises(ValueError):
        truncated_pinv(np.zeros((2, 2)), 1e-6)


def test_quality_single_fe_closed_form():
    # Q(u) = F(u)^2 / F_11 = 3 (1-u)^2 for one FE filter at tau = 1
    filters = [correlation_filter(free_evolution(1.0))]
    overlap = overlap_matrix(filters)
    q = quality_function(filters, overlap, rcond=1e-12)
    np.testing.assert_allclose(q, 3.0 * (1.0 - overlap.grid) ** 2, atol=2e-6)
    mask = quality_mask(q, 5.0)
    boundary = reliability_boundary(overlap.grid, mask)
    assert boundary == pytest.approx(1.0 - 1.0 / np.sqrt(5.0), abs=1e-3)


def test_quality_matches_literal_double_integral():
    filters = [
        correlation_filter(free_evolution(0.5)),
        correlation_filter(hahn_echo(1.0)),
        correlation_filter(udd(3, 0.8)),
    ]
    overlap = overlap_matrix(filters)
    q = quality_function(filters, overlap, rcond=1e-10)
    pinv, _ = truncated_pinv(overlap.matrix, 1e-10)
    samples = sample_filters(filters, overlap.grid)
    w = trapezoid_weights(overlap.grid)
    # literal reading: integrate the squared summed kernel over t
    kernel = samples.T @ pinv @ samples  # kernel[m, t]
    literal = (kernel**2) @ w
    np.testing.assert_allclose(q, literal, rtol=1e-10, atol=1e-12)


def test_quality_invariances():
    f = correlation_filter(free_evolution(1.0))
    overlap1 = overlap_matrix([f])
    q1 = quality_function([f], overlap1, rcond=1e-12)
    # duplicated filter: pseudoinverse of the rank-1 overlap gives the same Q
    overlap2 = overlap_matrix([f, f])
    q2 = quality_function([f, f], overlap2, rcond=1e-8)
    np.testing.assert_allclose(q2, q1, rtol=1e-9, atol=1e-12)
    # global rescaling: values unchanged
    from dataclasses import replace

    g = replace(f, values=3.0 * f.values, kink_values=3.0 * f.kink_values)
    overlap3 = overlap_matrix([g])
    q3 = quality_function([g], overlap3, rcond=1e-12)
    np.testing.assert_allclose(q3, q1, rtol=1e-9, atol=1e-12)


def test_quality_mask_constant_is_all_true():
    assert quality_mask(np.ones(5), 5.0).all()
    with pytest.raises(ValueError):
        quality_mask(np.ones(3), 0.0)


def test_reliability_boundary_first_run():
    u = np.array([0.0, 0.1, 0.2, 0.3, 0.4])
    assert reliability_boundary(u, [True, True, False, True, False]) == 0.1
    assert reliability_boundary(u, [False, True, True, True, False]) == 0.3
    with pytest.raises(ValueError):
        reliability_boundary(u, [False] * 5)


def test_reconstruction_in_span_fixed_point():
    # target C0 = F itself: chi = integral F^2, estimate returns exactly C0
    f = correlation_filter(free_evolution(1.0))
    overlap = overlap_matrix([f])
    chi = CoherenceIntegral(
        family="FE", duration=1.0, value=float(overlap.matrix[0, 0]), stderr=0.0
    )
    short = reconstruct_short_time([chi], [f], overlap, rcond=1e-12)
    np.testing.assert_allclose(short.values, f.sample(overlap.grid), rtol=1e-10, atol=1e-12)
    assert short.rank == 1


def test_reconstruction_zero_chis_gives_zero():
    filters = [correlation_filter(free_evolution(1.0)), correlation_filter(hahn_echo(1.0))]
    overlap = overlap_matrix(filters)
    chis = [
        CoherenceIntegral(family="FE", duration=1.0, value=0.0, stderr=0.0),
        CoherenceIntegral(family="Hahn", duration=1.0, value=0.0, stderr=0.0),
    ]
    short = reconstruct_short_time(chis, filters, overlap)
    np.testing.assert_array_equal(short.values, 0.0)


def test_reconstruction_recovers_span_combination():
    # chi_i for a target already in the filter span: exact recovery
    filters = [
        correlation_filter(free_evolution(0.5)),
        correlation_filter(hahn_echo(1.0)),
        correlation_filter(udd(3, 0.8)),
    ]
    overlap = overlap_matrix(filters)
    coeff = np.array([0.7, -0.4, 1.3])
    # chi_i = integral F_i * target = (F coeff)_i on the shared grid
    chi_values = overlap.matrix @ coeff
    chis = [
        CoherenceIntegral(family=name, duration=f.duration, value=float(v), stderr=0.0)
        for name, f, v in zip(("FE", "Hahn", "UDD(3)"), filters, chi_values)
    ]
    short = reconstruct_short_time(chis, filters, overlap, rcond=1e-12)
    target = coeff @ sample_filters(filters, overlap.grid)
    np.testing.assert_allclose(short.values, target, atol=1e-9)


def test_reconstruction_minimum_norm():
    # single FE filter on a 2-filter grid: any null-space perturbation must
    # leave the chi residual unchanged and increase the L2 norm
    filters = [correlation_filter(free_evolution(1.0)), correlation_filter(hahn_echo(1.0))]
    overlap = overlap_matrix(filters)
    chis = [
        CoherenceIntegral(family="FE", duration=1.0, value=0.9, stderr=0.0),
        CoherenceIntegral(family="Hahn", duration=1.0, value=0.2, stderr=0.0),
    ]
    short = reconstruct_short_time(chis, filters, overlap, rcond=1e-12)
    samples = sample_filters(filters, overlap.grid)
    w = trapezoid_weights(overlap.grid)
    residual = samples @ (w * short.values) - [0.9, 0.2]
    np.testing.assert_allclose(residual, 0.0, atol=1e-9)
    # perturb within the orthogonal complement of the filter span
    rng = np.random.default_rng(3)
    noise = rng.standard_normal(overlap.grid.size)
    gram = samples @ (samples * w).T
    proj = samples.T @ np.linalg.solve(gram, samples @ (w * noise))
    null = noise - proj
    perturbed = short.values + null
    np.testing.assert_allclose(samples @ (w * perturbed), [0.9, 0.2], atol=1e-6)
    assert float(w @ perturbed**2) > float(w @ short.values**2)


def test_reconstruction_alignment_errors():
    f = correlation_filter(free_evolution(1.0))
    overlap = overlap_matrix([f])
    chi = CoherenceIntegral(family="FE", duration=0.5, value=0.1, stderr=0.0)
    with pytest.raises(ValueError):
        reconstruct_short_time([chi], [f], overlap)
    with pytest.raises(ValueError):
        reconstruct_short_time([], [], overlap)
