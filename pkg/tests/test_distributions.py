import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from powerbayes.distributions import (
    DEFAULT_PRIOR,
    BivariateLogNormalPrior,
    DiscreteLogNormalParams,
    PowerLawParams,
    TruncatedPoissonParams,
    bivariate_lognormal_log_density,
    discrete_lognormal_log_pmf,
    discrete_lognormal_sample,
    discrete_lognormal_sf,
    powerlaw_cdf,
    powerlaw_log_pmf,
    powerlaw_sample,
    powerlaw_sf,
    truncated_poisson_log_pmf,
    truncated_poisson_sample,
)


# --- power law -------------------------------------------------------------------


def test_powerlaw_pmf_at_one():
    assert powerlaw_log_pmf(1, PowerLawParams(2.0)) == pytest.approx(math.log(6 / math.pi**2), abs=1e-13)


def test_powerlaw_log_ratio():
    p = PowerLawParams(2.0)
    assert powerlaw_log_pmf(2, p) - powerlaw_log_pmf(1, p) == pytest.approx(-2 * math.log(2), abs=1e-14)


def test_powerlaw_pmf_sums_to_one():
    p = PowerLawParams(2.5)
    w = np.arange(1, 10**6 + 1)
    head = math.fsum(np.exp(powerlaw_log_pmf(w, p)))
    tail = float(mpmath.zeta(2.5, 10**6 + 1) / mpmath.zeta(2.5))
    assert abs(head - 1) < 1e-6
    assert abs(head + tail - 1) < 1e-12


def test_powerlaw_domain():
    with pytest.raises(ValueError):
        powerlaw_log_pmf(3, PowerLawParams(2.0, xmin=5))
    with pytest.raises(ValueError):
        PowerLawParams(1.0)
    with pytest.raises(ValueError):
        PowerLawParams(2.0, xmin=0)


def test_powerlaw_cdf_examples():
    assert powerlaw_cdf(1, PowerLawParams(2.0)) == pytest.approx(6 / math.pi**2, abs=1e-13)
    p = PowerLawParams(2.3, xmin=4)
    assert powerlaw_cdf(4, p) == pytest.approx(math.exp(powerlaw_log_pmf(4, p)), rel=1e-12)
    assert powerlaw_cdf(10**6, PowerLawParams(2.5)) > 0.999999


@given(st.floats(1.5, 3.0), st.integers(1, 50), st.integers(0, 10**6))
def test_cdf_and_sf_agree_with_pmf_sum(a, xmin, k):
    p = PowerLawParams(a, xmin)
    w = xmin + k % 40
    pmf = np.exp(powerlaw_log_pmf(np.arange(xmin, w + 1), p)).sum()
    assert powerlaw_cdf(w, p) == pytest.approx(pmf, rel=1e-10)
    assert powerlaw_sf(w, p) == pytest.approx(1 - pmf, abs=1e-12)


def test_sampler_support_and_seed():
    x = powerlaw_sample(PowerLawParams(2.5, 7), 5000, 3)
    assert x.min() >= 7
    assert np.array_equal(x, powerlaw_sample(PowerLawParams(2.5, 7), 5000, 3))


def test_sampler_ks_distance():
    p = PowerLawParams(2.5)
    x = powerlaw_sample(p, 10**5, 11)
    values, counts = np.unique(x, return_counts=True)
    emp = np.cumsum(counts) / x.size
    assert np.max(np.abs(emp - powerlaw_cdf(values, p))) < 0.01


def test_sampler_capped_mean():
    p = PowerLawParams(2.2)
    cap = 10**8
    w = np.arange(1, 10**6 + 1, dtype=float)
    pmf = np.exp(powerlaw_log_pmf(w, p))
    # E[min(W, cap)] = sum_{w < 1e6} w pmf + (tail beyond 1e6, approximated by its zeta form)
    zeta = mpmath.zeta(2.2)
    tail_first = float((mpmath.zeta(1.2, 10**6 + 1) - mpmath.zeta(1.2, cap + 1)) / zeta)
    tail_cap = float(cap * mpmath.zeta(2.2, cap + 1) / zeta)
    mean = math.fsum(w * pmf) + tail_first + tail_cap
    second = math.fsum(w * w * pmf) + float((mpmath.zeta(0.2, 10**6 + 1) - mpmath.zeta(0.2, cap + 1)) / zeta)
    sd = math.sqrt(second - mean**2)
    x = np.minimum(powerlaw_sample(p, 20000, 5), cap)
    assert abs(x.mean() - mean) < 3 * sd / math.sqrt(x.size)


def test_sampler_chi_square_small_values():
    p = PowerLawParams(2.2)
    x = powerlaw_sample(p, 10**5, 8)
    k = np.arange(1, 21)
    expected = np.exp(powerlaw_log_pmf(k, p)) * x.size
    observed = np.array([(x == v).sum() for v in k])
    rest_obs = x.size - observed.sum()
    rest_exp = x.size - expected.sum()
    stat = ((np.append(observed, rest_obs) - np.append(expected, rest_exp)) ** 2 / np.append(expected, rest_exp)).sum()
    assert stats.chi2.sf(stat, df=20) > 1e-3


def test_sum_of_sample_median():
    sums = [powerlaw_sample(PowerLawParams(2.2), 20000, s).sum() for s in range(50)]
    assert abs(np.median(sums) / 64000 - 1) < 0.2


def test_log_pmf_finite_far_out():
    assert np.isfinite(powerlaw_log_pmf(10**9, PowerLawParams(2.5)))
    assert np.isfinite(truncated_poisson_log_pmf(10**9, 3.0))
    assert np.isfinite(discrete_lognormal_log_pmf(10**9, DiscreteLogNormalParams(2.0, 1.0)))


# --- truncated Poisson -----------------------------------------------------------


def test_tp_pmf_at_one():
    assert truncated_poisson_log_pmf(1, 1.0) == pytest.approx(math.log(math.exp(-1) / (1 - math.exp(-1))), abs=1e-15)
    assert math.exp(truncated_poisson_log_pmf(1, 1.0)) == pytest.approx(0.58198, abs=1e-5)


def test_tp_pmf_sums_to_one():
    y = np.arange(1, 201)
    assert abs(np.exp(truncated_poisson_log_pmf(y, 5.0)).sum() - 1) < 1e-12


def test_tp_mode():
    y = np.arange(1, 101)
    assert y[np.argmax(truncated_poisson_log_pmf(y, 3.0))] in (2, 3)
    # at integer rate the pmf ties at x - 1 and x
    assert truncated_poisson_log_pmf(3, 3.0) == pytest.approx(truncated_poisson_log_pmf(2, 3.0))


def test_tp_domain():
    with pytest.raises(ValueError):
        truncated_poisson_log_pmf(0, 2.0)
    with pytest.raises(ValueError):
        truncated_poisson_log_pmf(1, 0.0)
    with pytest.raises(ValueError):
        TruncatedPoissonParams(-1.0)


def test_tp_sample_small_rate():
    y = truncated_poisson_sample(np.full(10**5, 0.01), 1)
    assert y.min() >= 1
    p1 = math.exp(truncated_poisson_log_pmf(1, 0.01))
    assert abs((y == 1).mean() - p1) < 4 * math.sqrt(p1 * (1 - p1) / y.size)


def test_tp_sample_chi_square():
    y = truncated_poisson_sample(np.full(10**6, 2.0), 2)
    k = np.arange(1, 10)
    expected = np.exp(truncated_poisson_log_pmf(k, 2.0)) * y.size
    observed = np.array([(y == v).sum() for v in k])
    expected = np.append(expected, y.size - expected.sum())
    observed = np.append(observed, y.size - observed.sum())
    assert stats.chi2.sf(((observed - expected) ** 2 / expected).sum(), df=9) > 1e-3


@given(st.floats(1e-3, 1e4), st.integers(0, 2**32 - 1))
def test_tp_sample_positive(x, seed):
    assert truncated_poisson_sample(x, seed) >= 1


# --- discrete log-normal ---------------------------------------------------------


def test_dln_partial_sum_matches_normal_tail():
    p = DiscreteLogNormalParams(2.0, 1.0)
    w = np.arange(1, 10**6 + 1)
    total = math.fsum(np.exp(discrete_lognormal_log_pmf(w, p)))
    assert abs(total - (1 - discrete_lognormal_sf(10**6, p))) < 1e-10


def test_dln_concentrates_at_one():
    assert math.exp(discrete_lognormal_log_pmf(1, DiscreteLogNormalParams(0.0, 0.01))) > 1 - 1e-12


def test_dln_first_bin_takes_lower_mass():
    p = DiscreteLogNormalParams(1.0, 2.0)
    assert discrete_lognormal_log_pmf(1, p) == pytest.approx(stats.norm.logcdf((math.log(1.5) - 1.0) / 2.0))


def test_dln_upper_tail_accuracy():
    p = DiscreteLogNormalParams(0.0, 0.3)
    w = 200
    lo, hi = (math.log(w - 0.5)) / 0.3, (math.log(w + 0.5)) / 0.3
    ref = float(mpmath.log(mpmath.ncdf(-lo) - mpmath.ncdf(-hi)))
    assert discrete_lognormal_log_pmf(w, p) == pytest.approx(ref, rel=1e-9)


def test_dln_sample_median():
    x = discrete_lognormal_sample(DiscreteLogNormalParams(3.0, 0.5), 10**5, 4)
    assert abs(np.median(x) - math.exp(3)) <= 1


def test_dln_domain():
    with pytest.raises(ValueError):
        discrete_lognormal_log_pmf(0, DiscreteLogNormalParams(0.0, 1.0))
    with pytest.raises(ValueError):
        DiscreteLogNormalParams(0.0, 0.0)


# --- prior -----------------------------------------------------------------------


def test_prior_at_mode_region():
    mean = np.array([0.0, -3.0])
    cov = np.array([[1.0, 0.6], [0.6, 2.0]])
    ref = stats.multivariate_normal(mean, cov).logpdf(mean) - (0.0 - 3.0)
    assert bivariate_lognormal_log_density((1.0, math.exp(-3)), DEFAULT_PRIOR) == pytest.approx(ref, abs=1e-12)


def test_prior_integrates_to_one():
    # integrate on the log scale: density * a * b over a grid in (log a, log b)
    u = np.linspace(-7, 7, 401)
    v = np.linspace(-12, 6, 401)
    du, dv = u[1] - u[0], v[1] - v[0]
    total = 0.0
    for ui in u:
        a = math.exp(ui)
        for vj in v[::1]:
            b = math.exp(vj)
            total += math.exp(bivariate_lognormal_log_density((a, b)) + ui + vj)
    assert abs(total * du * dv - 1) < 1e-3


def test_prior_separates_when_diagonal():
    prior = BivariateLogNormalPrior((0.5, -1.0), ((1.5, 0.0), (0.0, 0.7)))
    a, b = 2.0, 0.3
    ref = stats.lognorm(s=math.sqrt(1.5), scale=math.exp(0.5)).logpdf(a) + stats.lognorm(
        s=math.sqrt(0.7), scale=math.exp(-1.0)
    ).logpdf(b)
    assert bivariate_lognormal_log_density((a, b), prior) == pytest.approx(ref, abs=1e-12)


def test_prior_validation():
    with pytest.raises(ValueError):
        bivariate_lognormal_log_density((0.0, 1.0))
    with pytest.raises(ValueError):
        BivariateLogNormalPrior((0.0, 0.0), ((1.0, 2.0), (2.0, 1.0)))
