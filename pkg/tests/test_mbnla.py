import math

import numpy as np
import pytest
from scipy import stats

from errors import ClosedFormMismatchWarning
from mbnla import (
    FilterSpec,
    accept,
    closed_form_success_probability,
    default_cutoff,
    filter_probabilities,
    filter_probability,
    heterodyne_amplitude,
    nla_amplify_tmsv_lambda,
    nla_average_moments,
    nla_transform_coherent,
    postselect,
    success_probability,
)


def _disk_cdf(x, nc):
    return stats.ncx2.cdf(x, 2, nc) if nc > 0 else stats.chi2.cdf(x, 2)


def _success_oracle(g, alpha_c, c, s2):
    """Disk and tail probabilities in closed form via noncentral chi-square."""
    a = 0.5 * (1.0 - g ** -2)
    b = 1.0 / (2.0 * s2) - a
    c2 = abs(c) ** 2
    centre2 = c2 / (2.0 * b * s2) ** 2
    inside = (math.exp(-a * alpha_c ** 2) / (2.0 * math.pi * s2) * (math.pi / b)
              * math.exp(c2 / (4.0 * b * s2 ** 2) - c2 / (2.0 * s2))
              * _disk_cdf(2.0 * b * alpha_c ** 2, 2.0 * b * centre2))
    outside = 1.0 - _disk_cdf(alpha_c ** 2 / s2, c2 / s2)
    return inside + outside


def test_filter_spec_validation():
    with pytest.raises(ValueError):
        FilterSpec(0.9, 4.0)
    with pytest.raises(ValueError):
        FilterSpec(1.5, -1.0)


def test_filter_probability_values():
    spec = FilterSpec(2.0, 4.0)
    assert filter_probability(spec, 0j) == pytest.approx(math.exp(-6.0), rel=1e-12)
    assert filter_probability(spec, 4.0) == 1.0
    assert filter_probability(spec, 5.0 + 1.0j) == 1.0
    assert filter_probability(FilterSpec(1.0, 4.0), 0.3j) == 1.0


def test_filter_probabilities_match_scalar():
    spec = FilterSpec(1.7, 3.0)
    alphas = np.array([0.0, 1.0 + 1.0j, 2.5, 3.1j, -4.0])
    expected = [filter_probability(spec, a) for a in alphas]
    assert filter_probabilities(spec, alphas) == pytest.approx(expected, rel=1e-12)


def test_accept():
    assert accept(FilterSpec(1.0, 4.0), 0.1, 0.999999)
    assert not accept(FilterSpec(2.0, 4.0), 0.1, 0.999999)
    assert accept(FilterSpec(2.0, 4.0), 0.1, 0.0)
    with pytest.raises(ValueError):
        accept(FilterSpec(2.0, 4.0), 0.1, 1.0)


def test_postselect_matches_accept():
    spec = FilterSpec(1.4, 3.0)
    rng = np.random.default_rng(5)
    alphas = rng.normal(size=200) + 1j * rng.normal(size=200)
    draws = rng.random(200)
    mask = postselect(spec, alphas, draws)
    assert mask.tolist() == [accept(spec, a, u) for a, u in zip(alphas, draws)]


def _accepted_u_cdf(u, g, alpha_c):
    """CDF of |alpha|^2 / 2 after the filter, for a unit-variance source centred at 0."""
    uc = 0.5 * alpha_c ** 2
    shrink = 1.0 - g ** -2
    inside_mass = g * g * (math.exp(-shrink * uc) - math.exp(-uc))
    total = inside_mass + math.exp(-uc)
    u = np.asarray(u, dtype=float)
    below = g * g * math.exp(-shrink * uc) * (1.0 - np.exp(-np.minimum(u, uc) / (g * g)))
    above = np.where(u > uc, math.exp(-uc) - np.exp(-np.maximum(u, uc)), 0.0)
    return (below + above) / total


def test_rejection_sampling_follows_filtered_density():
    g, alpha_c = 1.3, 3.0
    spec = FilterSpec(g, alpha_c)
    rng = np.random.default_rng(77)
    kept = []
    n_kept = 0
    while n_kept < 1_000_000:
        alphas = rng.standard_normal(1_000_000) + 1j * rng.standard_normal(1_000_000)
        mask = postselect(spec, alphas, rng.random(1_000_000))
        kept.append(0.5 * np.abs(alphas[mask]) ** 2)
        n_kept += int(mask.sum())
    u = np.concatenate(kept)[:1_000_000]
    result = stats.kstest(u, lambda x: _accepted_u_cdf(x, g, alpha_c))
    assert result.statistic < 0.01


def test_heterodyne_amplitude():
    assert heterodyne_amplitude(1.0, 1.0) == pytest.approx((1.0 + 1.0j) / math.sqrt(2.0))
    rng = np.random.default_rng(0)
    x = rng.normal(scale=math.sqrt(3.0), size=200_000)
    y = rng.normal(scale=math.sqrt(0.5), size=200_000)
    alphas = heterodyne_amplitude(x, y, 3.0, 0.5)
    assert np.var(alphas.real) == pytest.approx(1.0, rel=0.02)
    assert np.var(alphas.imag) == pytest.approx(1.0, rel=0.02)
    with pytest.raises(ValueError):
        heterodyne_amplitude(1.0, 1.0, 0.0, 1.0)


def test_default_cutoff():
    assert default_cutoff(1.0) == 4.0
    assert default_cutoff(1.5, 5.0) == pytest.approx(7.5)
    assert default_cutoff(2.0, 3.0) > default_cutoff(1.0, 3.0)
    with pytest.raises(ValueError):
        default_cutoff(0.0)


def test_success_probability_trivial_cases():
    assert success_probability(FilterSpec(1.0, 4.0)) == 1.0
    assert success_probability(FilterSpec(2.0, 0.0)) == 1.0


def test_success_probability_reference_value():
    p = success_probability(FilterSpec(2.0, 4.0))
    assert 1e-3 < p < 1e-2
    assert p == pytest.approx(_success_oracle(2.0, 4.0, 0j, 0.5), rel=1e-5)


@pytest.mark.parametrize("g,alpha_c,c,s2", [
    (1.5, 4.0, 0.5 + 0.3j, 1.0),
    (2.0, 3.0, -0.4 + 0.2j, 0.5),
    (1.2, 5.0, 1.0 + 0.0j, 1.0),
])
def test_success_probability_matches_chi_square_oracle(g, alpha_c, c, s2):
    p = success_probability(FilterSpec(g, alpha_c), c, source_var=s2)
    assert p == pytest.approx(_success_oracle(g, alpha_c, c, s2), rel=1e-5)


def test_success_probability_monotone():
    gains = [1.1, 1.5, 2.0, 2.5]
    cutoffs = [2.0, 3.0, 4.0, 5.0]
    grid = np.array([[success_probability(FilterSpec(g, ac)) for ac in cutoffs] for g in gains])
    assert np.all(np.diff(grid, axis=0) <= 1e-12)
    assert np.all(np.diff(grid, axis=1) <= 1e-12)
    assert grid[1, 2] > grid[3, 2]


def test_closed_form_success_probability():
    assert closed_form_success_probability(FilterSpec(1.0, 4.0)) == pytest.approx(1.0, rel=1e-12)
    assert 0.0 < closed_form_success_probability(FilterSpec(2.0, 4.0), 0.5j) < 1.0


def test_cross_check_flags_disagreement():
    with pytest.warns(ClosedFormMismatchWarning):
        success_probability(FilterSpec(2.0, 4.0), cross_check=True)


def test_nla_transform_coherent():
    assert nla_transform_coherent(2.0, 0j) == (0j, 1.0)
    assert nla_transform_coherent(1.0, 0.5 + 0.5j) == (0.5 + 0.5j, 1.0)
    amplified, weight = nla_transform_coherent(2.0, 0.5)
    assert amplified == pytest.approx(1.0)
    assert weight == pytest.approx(math.exp(0.75))
    with pytest.raises(ValueError):
        nla_transform_coherent(2.0, 20.0)
    with pytest.raises(ValueError):
        nla_transform_coherent(0.5, 1.0)


def test_nla_average_moments():
    full = nla_average_moments(2.0, 0.5 + 0.25j, 1.0)
    assert full.mean == pytest.approx([2.0, 1.0])
    assert np.allclose(full.cov, np.eye(2))

    none = nla_average_moments(2.0, 0.5, 0.0)
    assert np.allclose(none.mean, 0.0)
    assert np.allclose(none.cov, np.eye(2))

    half = nla_average_moments(2.0, 0.5, 0.5)
    assert half.mean == pytest.approx([1.0, 0.0])
    assert np.allclose(half.cov, [[2.0, 0.0], [0.0, 1.0]])


def test_nla_amplify_tmsv_lambda():
    out = nla_amplify_tmsv_lambda(0.5, 1.5)
    assert out.valid
    assert out.lam == pytest.approx(0.75)
    assert out.r == pytest.approx(math.atanh(0.75))

    bad = nla_amplify_tmsv_lambda(0.8, 1.5)
    assert not bad.valid
    assert math.isnan(bad.r)
