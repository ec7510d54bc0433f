import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import poisson

from ionspam import rng as rngmod
from ionspam.readout import (
    CountModel,
    Histogram,
    ThresholdClassifier,
    classify,
    dark_mean_closed_form,
    dark_pmf_with_decay,
    optimal_threshold,
    sample_counts,
    threshold_error,
    threshold_sweep,
)

M = CountModel()


def test_decay_weight_matches_closed_form():
    d = dark_pmf_with_decay(M)
    assert abs(d.decay_weight - (1 - math.exp(-4.5e-3 / 30))) < 1e-10
    assert d.pmf.sum() == pytest.approx(1.0, abs=1e-12)


def test_dark_mean_matches_closed_form():
    assert dark_pmf_with_decay(M).mean == pytest.approx(dark_mean_closed_form(M), rel=1e-10)


def test_no_decay_limit():
    m = CountModel(lifetime=1e12)
    d = dark_pmf_with_decay(m)
    assert np.allclose(d.pmf, poisson.pmf(np.arange(d.pmf.size), m.dark_mean), atol=1e-12)


@given(st.floats(5, 80), st.floats(0, 3), st.floats(1e-4, 1e-2), st.floats(0.1, 100))
@settings(max_examples=25, deadline=None)
def test_pmf_normalized_for_random_models(bright, dark, window, tau):
    if bright <= dark:
        return
    d = dark_pmf_with_decay(CountModel(bright, dark, window, tau))
    assert d.pmf.sum() == pytest.approx(1.0, abs=1e-10)
    assert (d.pmf >= 0).all()


def test_threshold_errors_monotone():
    sweep = threshold_sweep(M, 40)
    assert np.all(np.diff(sweep[:, 1]) >= 0)  # bright-as-dark grows with threshold
    assert np.all(np.diff(sweep[:, 2]) <= 1e-18)


def test_default_threshold_near_optimal():
    sweep = threshold_sweep(M, 40)
    best = sweep[:, 3].min()
    assert sweep[12, 3] <= 1.1 * best
    assert optimal_threshold(M, 40) in range(11, 16)


def test_sampled_counts_follow_pmf():
    key = rngmod.derive_key(2, "readout")
    n = 200_000
    counts = sample_counts("shelved", M, key, np.arange(n))
    a, b = threshold_error(M, 12)
    frac = (counts > 12).mean()
    assert abs(frac - b) < 4 * math.sqrt(b / n) + 1e-5
    bright = sample_counts("bright", M, key, np.arange(n))
    assert abs(bright.mean() - 39) < 0.1


def test_classifier():
    c = ThresholdClassifier(12)
    assert c.classify(12) == "shelved" and c.classify(13) == "bright"
    assert list(classify(np.array([0, 12, 13]), c)) == [True, True, False]
    with pytest.raises(ValueError):
        ThresholdClassifier(-1)


def test_histogram_csv_roundtrip():
    h = Histogram.from_counts([0, 1, 1, 5, 39, 39, 39])
    h2 = Histogram.from_csv(h.to_csv())
    assert np.array_equal(h.occurrences, h2.occurrences) and h2.total == 7


def test_count_model_validation():
    with pytest.raises(ValueError):
        CountModel(bright_mean=1, dark_mean=2)
    with pytest.raises(ValueError):
        CountModel(window=0)
