import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from randamp.entropy import (
    REFERENCE_OUTPUT_BITS,
    REFERENCE_RATE,
    REFERENCE_RUN,
    AffineEta,
    ConstantEta,
    ParameterError,
    SecurityParams,
    adaptive_output_length,
    compose_security,
    default_eta,
    dodis_error,
    eat_minentropy_bound,
    implied_eta,
    output_length,
    sv_bits_consumed,
)

N_REF = 1_342_177_280
# 6 (m + log2(6 / (eps - 6 eps_s))) / n + 2 - 2 log2(1 / 0.5075) evaluated with mpmath at 40 digits
ETA_REF = 0.13429541506648054


def test_reference_run_parameters():
    assert REFERENCE_RUN.n == N_REF
    assert REFERENCE_RUN.epsilon_s == pytest.approx(1e-12 / 12)
    assert REFERENCE_RUN.log_term == pytest.approx(math.log2(12e12), rel=1e-12)


def test_implied_eta_oracle():
    import mpmath

    mpmath.mp.dps = 40
    eps = mpmath.mpf("1e-12")
    log_term = mpmath.log(6 / (eps - 6 * eps / 12), 2)
    eta = 6 * (REFERENCE_OUTPUT_BITS + log_term) / N_REF + 2 - 2 * mpmath.log(1 / mpmath.mpf("0.5075"), 2)
    assert float(eta) == pytest.approx(ETA_REF, rel=1e-13)
    assert implied_eta(REFERENCE_OUTPUT_BITS, REFERENCE_RUN) == pytest.approx(ETA_REF, rel=1e-12)
    assert REFERENCE_RATE == pytest.approx(0.1343, abs=5e-4)


def test_round_trip_is_exact_at_unrounded_rate():
    m = output_length(0.0, ConstantEta(ETA_REF), REFERENCE_RUN)
    assert abs(m - REFERENCE_OUTPUT_BITS) <= 3


def test_six_digit_rate_loses_bits():
    # truncating the rate to 0.134294 costs n/6 * 1.4e-6 ~ 317 bits
    m = output_length(0.0, ConstantEta(0.134294), REFERENCE_RUN)
    assert m == pytest.approx(REFERENCE_OUTPUT_BITS - N_REF / 6 * (ETA_REF - 0.134294), abs=2)


def test_implied_eta_at_zero_length():
    p = REFERENCE_RUN
    assert implied_eta(0, p) == pytest.approx(2 - 2 * math.log2(1 / 0.5075) + 6 * p.log_term / p.n)


def test_eat_bound_examples():
    assert eat_minentropy_bound(AffineEta(10.0), 0.0, REFERENCE_RUN) == 0.0
    assert eat_minentropy_bound(ConstantEta(0.134294), 0.003, REFERENCE_RUN) == pytest.approx(
        0.134294 * N_REF, abs=1
    )
    small = SecurityParams(1000, 0.0075)
    assert eat_minentropy_bound(ConstantEta(0.2), 0.01, small.with_n(4000)) == pytest.approx(
        4 * eat_minentropy_bound(ConstantEta(0.2), 0.01, small)
    )
    with pytest.raises(ParameterError):
        eat_minentropy_bound(ConstantEta(0.2), -0.1, small)


@pytest.mark.parametrize(
    "n, k1, k2, m, expected",
    [(64, 60, 60, 8, 2.0**-20), (100, 100, 100, 10, 2.0**-40), (40, 30, 30, 10, 1.0)],
)
def test_dodis_error(n, k1, k2, m, expected):
    assert dodis_error(n, k1, k2, m) == pytest.approx(expected, rel=1e-15)


def test_compose_security_examples():
    r = compose_security(2.0**-20, 8, 1e-6, 1e-6, 1e-6, 1e-6)
    assert r.eps_quantum == pytest.approx(math.sqrt(3 * 2.0**-14), rel=1e-15)
    assert r.eps_quantum == pytest.approx(0.013531, abs=1e-6)
    assert r.total == pytest.approx(16e-6 + 2 * math.sqrt(3 * 2.0**-14), rel=1e-15)
    assert r.entropy_offset == pytest.approx(20)


@given(st.integers(0, 5), st.floats(1e-9, 1e-3))
def test_compose_security_monotone(which, bump):
    args = [2.0**-30, 8, 1e-6, 1e-6, 1e-6, 1e-6]
    base = compose_security(*args).total
    idx = [0, 2, 3, 4, 5][which % 5]
    args[idx] += bump
    assert compose_security(*args).total > base


def test_output_length_clamps_and_is_linear():
    p = SecurityParams(10**6, 0.0075)
    assert output_length(0.01, ConstantEta(0.0), p) == 0
    rate = 0.3
    real = lambda n: n / 6 * (rate + p.source_rate) - p.log_term  # noqa: E731
    assert output_length(0.01, ConstantEta(rate), p) == math.floor(real(10**6))
    assert output_length(0.01, ConstantEta(rate), p.with_n(2 * 10**6)) == math.floor(real(2 * 10**6))
    with pytest.raises(ParameterError):
        SecurityParams(10, 0.0075, epsilon=1e-12, epsilon_s=1e-12)


@given(st.floats(0.0, 0.01), st.integers(1000, 10**9))
def test_output_length_monotone_in_s_mu(s_mu, n):
    p = SecurityParams(n, 0.0075)
    eta = default_eta()
    assert output_length(s_mu, eta, p) <= output_length(s_mu + 1e-4, eta, p)


def test_adaptive_grid():
    p = SecurityParams(10**8, 0.0075, epsilon=1e-14)
    eta = default_eta()
    s_max = 0.004
    assert adaptive_output_length(0.00003, s_max, 100, eta, p).m == 0
    capped = adaptive_output_length(0.01, s_max, 100, eta, p)
    assert capped.m == output_length(s_max, eta, p)
    assert capped.security == pytest.approx(1e-12)
    mid = adaptive_output_length(0.00295, s_max, 100, eta, p)
    assert mid.s_mu_used == pytest.approx(0.00292)
    assert mid.m == output_length(0.00292, eta, p)


@given(st.floats(0.0, 0.01), st.integers(1, 200))
def test_adaptive_never_exceeds_fixed(s_obs, grid):
    p = SecurityParams(10**9, 0.0075)
    eta = default_eta()
    r = adaptive_output_length(s_obs, 0.005, grid, eta, p)
    assert r.s_mu_used <= s_obs + 1e-15
    assert r.m <= output_length(min(s_obs, 0.005), eta, p)


def test_default_eta_reproduces_reference():
    eta = default_eta()
    assert eta(0.00296, N_REF, REFERENCE_RUN) == pytest.approx(REFERENCE_RATE)
    assert eta(0.0, N_REF, REFERENCE_RUN) == 0.0


def test_bit_accounting():
    assert sv_bits_consumed(N_REF) == 5_368_709_120
