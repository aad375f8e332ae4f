import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from neutron_chsh.constants import CONTRAST_CRIT, ETA_CRIT, TSIRELSON
from neutron_chsh.counting import (
    RateModel,
    SettingQuad,
    bell_quad_angles,
    bell_run_from_quads,
    bell_run_from_records,
    draw_alpha_offsets,
    expectation_from_counts,
    expected_counts,
    run_bell_experiment,
    sample_counts,
    thresholds_report,
    violation_significance,
)
from neutron_chsh.qstate import CANONICAL_ANGLES


def quad_from_model(model, alpha, gamma):
    return SettingQuad(alpha, gamma, [expected_counts(model, a, g) for a, g in SettingQuad.settings(alpha, gamma)])


@pytest.mark.parametrize("contrast, phase, expected", [
    (1.0, 0.0, 32000.0),
    (0.838, math.pi / 2, 16000.0),
    (0.838, math.pi, 2592.0),
])
def test_expected_counts(contrast, phase, expected):
    model = RateModel(32000, contrast)
    assert expected_counts(model, phase, 0.0) == pytest.approx(expected, abs=1e-9)


def test_expected_counts_background_and_offset():
    model = RateModel(32000, 1.0, background=25)
    assert expected_counts(model, 0.0, 0.0, alpha_offset=math.pi) == pytest.approx(25)


def test_rate_model_validation():
    with pytest.raises(ValueError):
        RateModel(0)
    with pytest.raises(ValueError):
        RateModel(contrast=1.2)
    with pytest.raises(ValueError):
        RateModel(background=-1)


def test_sample_counts_zero_mean():
    assert sample_counts(0.0, 1) == 0
    with pytest.raises(ValueError):
        sample_counts(-1.0, 1)


def test_sample_counts_large_mean():
    draws = np.array([sample_counts(1e6, [7, k]) for k in range(1000)])
    assert abs(draws.mean() - 1e6) < 3 * 1000


def test_sample_counts_variance():
    draws = np.array([sample_counts(32000, [9, k]) for k in range(10_000)])
    assert draws.var() == pytest.approx(32000, rel=0.05)


def test_sample_counts_deterministic():
    assert sample_counts(1234.5, [1, 2, 3]) == sample_counts(1234.5, [1, 2, 3])


@pytest.mark.parametrize("counts, e, sigma", [
    ((100, 100, 0, 0), 1.0, 0.0),
    ((50, 50, 50, 50), 0.0, 1 / math.sqrt(200)),
])
def test_expectation_from_counts_examples(counts, e, sigma):
    got_e, got_s = expectation_from_counts(SettingQuad(0, 0, counts))
    assert got_e == pytest.approx(e, abs=1e-12)
    assert got_s == pytest.approx(sigma, abs=1e-12)


def test_expectation_rejects_empty_quad():
    with pytest.raises(ValueError):
        expectation_from_counts(SettingQuad(0, 0, (0, 0, 0, 0)))
    with pytest.raises(ValueError):
        SettingQuad(0, 0, (1, 2, 3))


def test_sigma_e_monte_carlo_oracle_small_counts():
    rng = np.random.default_rng(5)
    draws = rng.poisson(50, size=(100_000, 4))
    t = draws.sum(axis=1)
    es = (draws[:, 0] + draws[:, 1] - draws[:, 2] - draws[:, 3]) / t
    assert es.std() == pytest.approx(1 / math.sqrt(200), rel=0.03)


def test_large_n0_expectation_matches_contrast_cosine():
    model = RateModel(1e9, 0.838)
    e, _ = expectation_from_counts(quad_from_model(model, 0.0, math.pi / 4))
    assert e == pytest.approx(0.5926, abs=1e-4)


@given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi), st.floats(0, 1))
def test_estimator_consistency(alpha, gamma, contrast):
    e, _ = expectation_from_counts(quad_from_model(RateModel(32000, contrast), alpha, gamma))
    assert abs(e - contrast * math.cos(alpha - gamma)) < 1e-12


def test_sigma_s_quadrature():
    quads = [SettingQuad(0, 0, (1, 1, 1, 1))] * 4
    run = bell_run_from_quads(quads)
    assert run.sigma_S == pytest.approx(2 * run.sigma_E[0])
    assert math.sqrt(4 * 0.001**2) == 0.002


@pytest.mark.parametrize("contrast, expected", [(1.0, TSIRELSON), (0.838, 0.838 * TSIRELSON)])
def test_noiseless_run(contrast, expected):
    run = run_bell_experiment(model=RateModel(32000, contrast), noise=False)
    assert run.S == pytest.approx(expected, abs=1e-12)
    assert run.S == pytest.approx(2.371 if contrast < 1 else TSIRELSON, abs=0.005)


def test_noisy_run_is_deterministic():
    a = run_bell_experiment(seed=42)
    b = run_bell_experiment(seed=42)
    assert a.S == b.S and a.records == b.records
    assert run_bell_experiment(seed=43).S != a.S


def test_noisy_run_statistics():
    run = run_bell_experiment(seed=0)
    assert 2.30 < run.S < 2.40
    assert run.sigma_S == pytest.approx(0.0037, abs=2e-4)
    assert run.repetitions == 3
    assert len(run.records) == 48
    assert sum(q.counts[0] for q in run.quads) > 0


def test_alpha_offsets_bounded_and_per_setting():
    offsets = draw_alpha_offsets(RateModel(), CANONICAL_ANGLES, 3)
    assert len(offsets) == 4
    assert all(abs(d) <= math.radians(2) for d in offsets.values())
    assert draw_alpha_offsets(RateModel(), CANONICAL_ANGLES, 3) == offsets


def test_pinned_alpha_offsets():
    model = RateModel(alpha_offsets={0.0: 0.01})
    offsets = draw_alpha_offsets(model, CANONICAL_ANGLES, 3)
    assert offsets[0.0] == 0.01 and offsets[math.pi / 2] == 0.0


def test_sigma_s_scaling_with_counts():
    sig = {n0: run_bell_experiment(model=RateModel(n0), seed=1).sigma_S for n0 in (8000, 32000, 128000)}
    assert sig[8000] / sig[32000] == pytest.approx(2.0, rel=0.05)
    assert sig[32000] / sig[128000] == pytest.approx(2.0, rel=0.05)


def test_records_round_trip():
    run = run_bell_experiment(seed=9)
    again = bell_run_from_records(run.records)
    assert again.S == run.S and again.sigma_S == run.sigma_S
    assert again.repetitions == 3


def test_records_with_explicit_angles():
    run = run_bell_experiment(seed=9)
    assert bell_run_from_records(run.records, CANONICAL_ANGLES).S == run.S


def test_records_incomplete_quad():
    records = run_bell_experiment(seed=9).records[1:16]
    with pytest.raises(ValueError, match="incomplete"):
        bell_run_from_records(records)


def test_records_angles_tolerate_wraparound():
    run = run_bell_experiment(seed=2, repetitions=1)
    shifted = [(a + 2 * math.pi, g - 2 * math.pi, r, n) for a, g, r, n in run.records]
    assert bell_run_from_records(shifted).S == pytest.approx(run.S, abs=1e-12)


def test_bell_quad_order():
    assert bell_quad_angles((1, 2, 3, 4)) == [(1, 3), (2, 3), (1, 4), (2, 4)]


@pytest.mark.parametrize("s, sigma, expected", [
    (2.333, 0.002, 166.5),
    (2.0, 0.01, 0.0),
    (TSIRELSON, 0.01, 82.8),
])
def test_violation_significance(s, sigma, expected):
    assert violation_significance(s, sigma) == pytest.approx(expected, abs=0.05)


def test_violation_significance_needs_positive_sigma():
    with pytest.raises(ValueError):
        violation_significance(2.3, 0.0)


def test_thresholds_report():
    r = thresholds_report(0.838, 0.99)
    assert r.contrast_ok and r.efficiency_ok
    assert r.contrast_margin == pytest.approx(0.131, abs=5e-4)
    assert r.efficiency_margin == pytest.approx(0.162, abs=5e-4)
    assert r.warnings() == []
    assert r.max_chsh == pytest.approx(0.838 * TSIRELSON)


def test_thresholds_boundary_and_below():
    r = thresholds_report(0.707, 0.99)
    assert r.contrast_at_boundary and not r.contrast_ok
    assert any("threshold" in w for w in r.warnings())
    low = thresholds_report(0.5, 0.5)
    assert low.contrast_margin == pytest.approx(0.5 - CONTRAST_CRIT)
    assert low.efficiency_margin == pytest.approx(0.5 - ETA_CRIT)
    assert len(low.warnings()) == 2
    with pytest.raises(ValueError):
        thresholds_report(1.2, 0.9)


def test_seed_ensemble_centre():
    s = np.array([run_bell_experiment(seed=k).S for k in range(100)])
    # offsets only cost second order, so the centre sits at C * 2 sqrt(2) = 2.370
    assert 2.30 <= round(s.mean(), 2) <= 2.37
    assert s.mean() == pytest.approx(0.838 * TSIRELSON, abs=1e-3)
