import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randamp.bitstore import BitString
from randamp.extractor import (
    CapacityError,
    ShiftExtractorSpec,
    exact_tv_to_uniform,
    extract_fast,
    extract_ints,
    extract_naive,
    shift_matrix,
)


def matrix_oracle(x, y, m):
    """Literal x^T A_i y with dense shift matrices."""
    xa, ya = np.asarray(x), np.asarray(y)
    return [int(xa @ shift_matrix(xa.size, i) @ ya) & 1 for i in range(m)]


def rand_bits(rng, n):
    return BitString.from_bits(rng.integers(0, 2, n))


def test_worked_example():
    spec = ShiftExtractorSpec(4, 2)
    x, y = BitString.from_string("1011"), BitString.from_string("1101")
    assert str(extract_naive(spec, x, y)) == "01"
    assert str(extract_fast(spec, x, y)) == "01"
    assert matrix_oracle([1, 0, 1, 1], [1, 1, 0, 1], 2) == [0, 1]


def test_shift_matrix_shape():
    a = shift_matrix(5, 2)
    assert a[2, 0] == 1 and a[4, 2] == 1 and a.sum() == 3
    assert (shift_matrix(5, 0) == np.eye(5, dtype=np.uint8)).all()


def test_zero_and_delta_inputs(rng):
    spec = ShiftExtractorSpec(100, 30)
    y = rand_bits(rng, 100)
    assert extract_fast(spec, BitString.zeros(100), y) == BitString.zeros(30)
    delta = BitString.from_bits([1] + [0] * 99)
    assert str(extract_fast(spec, delta, delta)) == "1" + "0" * 29


@given(st.integers(1, 40).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
    st.integers(1, n))))
def test_naive_matches_matrix_oracle(case):
    x, y, m = case
    spec = ShiftExtractorSpec(len(x), m)
    out = extract_naive(spec, BitString.from_bits(x), BitString.from_bits(y))
    assert out.to_array().tolist() == matrix_oracle(x, y, m)


@given(st.integers(1, 3000), st.data())
@settings(max_examples=60, deadline=None)
def test_fast_matches_naive_across_plans(n, data):
    m = data.draw(st.integers(1, n))
    product_bits = data.draw(st.sampled_from([16, 64, 1000, 1 << 21]))
    workers = data.draw(st.sampled_from([1, 3]))
    seed = data.draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    spec = ShiftExtractorSpec(n, m)
    x, y = rand_bits(rng, n), rand_bits(rng, n)
    assert extract_fast(spec, x, y, product_bits=product_bits, workers=workers) == extract_naive(spec, x, y)


def test_exhaustive_n8_against_integer_oracle():
    spec = ShiftExtractorSpec(8, 4)
    vals = np.arange(256, dtype=np.uint64)
    table = extract_ints(vals[:, None], vals[None, :], 4)
    rng = np.random.default_rng(0)
    for xv, yv in rng.integers(0, 256, (300, 2)):
        x = BitString.from_bits([(int(xv) >> j) & 1 for j in range(8)])
        y = BitString.from_bits([(int(yv) >> j) & 1 for j in range(8)])
        got = extract_fast(spec, x, y).to_array()
        assert int(sum(int(b) << i for i, b in enumerate(got))) == int(table[xv, yv])


def test_linearity_in_each_argument(rng):
    spec = ShiftExtractorSpec(500, 77)
    x1, x2, y = rand_bits(rng, 500), rand_bits(rng, 500), rand_bits(rng, 500)
    xor = lambda a, b: BitString.from_bits(a.to_array() ^ b.to_array())  # noqa: E731
    assert extract_fast(spec, xor(x1, x2), y) == xor(extract_fast(spec, x1, y), extract_fast(spec, x2, y))


def test_length_mismatch():
    with pytest.raises(ValueError):
        extract_naive(ShiftExtractorSpec(4, 2), BitString.zeros(4), BitString.zeros(5))
    with pytest.raises(ValueError):
        ShiftExtractorSpec(4, 5)


def test_tv_uniform_n4():
    spec = ShiftExtractorSpec(4, 1)
    u = np.full(16, 1 / 16)
    r = exact_tv_to_uniform(spec, u, u)
    assert r.tv == pytest.approx(2.0**-5, abs=1e-15)
    assert r.bound == pytest.approx(0.5)
    assert r.k1 == r.k2 == 4.0


def test_tv_point_mass_is_far():
    spec = ShiftExtractorSpec(4, 2)
    p = np.zeros(16)
    p[5] = 1.0
    r = exact_tv_to_uniform(spec, p, p)
    assert r.tv == pytest.approx(0.75)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=10, deadline=None)
def test_tv_obeys_bound_on_flat_sources(seed):
    rng = np.random.default_rng(seed)
    n, m, k = 8, 1, 7
    px, py = np.zeros(256), np.zeros(256)
    px[rng.choice(256, 2**k, replace=False)] = 2.0**-k
    py[rng.choice(256, 2**k, replace=False)] = 2.0**-k
    r = exact_tv_to_uniform(ShiftExtractorSpec(n, m), px, py)
    assert r.tv <= r.tv_strong + 1e-15
    assert r.tv_strong <= r.bound


def test_tv_capacity_and_validation():
    with pytest.raises(CapacityError):
        exact_tv_to_uniform(ShiftExtractorSpec(15, 1), None, None)
    with pytest.raises(ValueError):
        exact_tv_to_uniform(ShiftExtractorSpec(2, 1), [0.5, 0.5, 0, 0.1], [0.25] * 4)
