import csv
import itertools
import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from randamp.bitstore import CountTable16, TrialRecordSet
from randamp.device import QuantumDeviceModel, born_probabilities, sample_trials
from randamp.inequality import (
    EstimationError,
    MdlParams,
    block_series,
    chsh_observed,
    correlators,
    s_mu_observed,
    s_mu_sigma,
    tally,
    write_series_csv,
)


def table(entries):
    c = np.zeros((2, 2, 2, 2), dtype=np.int64)
    for (a, b, x, y), v in entries.items():
        c[a, b, x, y] = v
    return CountTable16(c)


def simulate(model, n, seed=0):
    rng = np.random.default_rng(seed)
    x, y = rng.integers(0, 2, n).astype(np.uint8), rng.integers(0, 2, n).astype(np.uint8)
    a, b = sample_trials(model, x, y)
    return TrialRecordSet.from_columns(x, y, a, b)


def test_tally_small_cases():
    one = tally(TrialRecordSet.from_columns([0], [0], [0], [0]))
    assert one.counts[0, 0, 0, 0] == 1 and one.total == 1
    combos = np.array(list(itertools.product((0, 1), repeat=4)), dtype=np.uint8)
    full = tally(TrialRecordSet.from_columns(*combos.T))
    assert (full.counts == 1).all()
    with pytest.raises(ValueError):
        tally(TrialRecordSet(np.zeros(0, dtype=np.uint8)))


@given(st.lists(st.tuples(*[st.integers(0, 1)] * 4), min_size=1, max_size=60))
def test_tally_index_order(rows):
    x, y, a, b = (np.array(c, dtype=np.uint8) for c in zip(*rows))
    c = tally(TrialRecordSet.from_columns(x, y, a, b)).counts
    for xx, yy, aa, bb in set(rows):
        assert c[aa, bb, xx, yy] == rows.count((xx, yy, aa, bb))


def test_tally_matches_born_rule():
    model = QuantumDeviceModel(seed=3)
    n = 10**6
    p = tally(simulate(model, n, seed=5)).probabilities()
    for x, y in itertools.product((0, 1), repeat=2):
        expect = born_probabilities(model, x, y).reshape(2, 2) / 4
        sigma = np.sqrt(expect * (1 - expect) / n)
        assert (np.abs(p[:, :, x, y] - expect) <= 4 * sigma).all()


def test_s_mu_arithmetic():
    s, abort = s_mu_observed(table({(0, 0, 0, 0): 10}), MdlParams(0.0))
    assert s == pytest.approx(0.25) and not abort
    s, abort = s_mu_observed(
        table({(0, 0, 0, 0): 1, (0, 1, 0, 1): 1, (1, 0, 1, 0): 1, (0, 0, 1, 1): 1}), MdlParams(0.0)
    )
    assert s == pytest.approx(-0.125) and abort


def test_s_mu_warns_outside_envelope(caplog):
    with caplog.at_level(logging.WARNING):
        s_mu_observed(table({(0, 0, 0, 0): 10_000}), MdlParams(0.0075))
    assert "outside" in caplog.text


def test_s_mu_sigma_matches_spread():
    model = QuantumDeviceModel(visibility=0.9, seed=1)
    params = MdlParams(0.0075)
    vals = [s_mu_observed(tally(simulate(model, 20_000, seed=k)), params)[0] for k in range(40)]
    sigma = s_mu_sigma(tally(simulate(model, 20_000, seed=99)), params)
    assert np.std(vals, ddof=1) == pytest.approx(sigma, rel=0.35)


def test_chsh_extremes():
    c = table({(0, 0, 0, 0): 5, (1, 1, 0, 1): 5, (0, 0, 1, 0): 5, (0, 1, 1, 1): 5})
    assert chsh_observed(c) == 4.0
    with pytest.raises(EstimationError, match=r"\(1, 1\)"):
        correlators(table({(0, 0, 0, 0): 1, (0, 0, 0, 1): 1, (0, 0, 1, 0): 1}))


def test_chsh_uniform_outcomes_near_zero():
    t = simulate(QuantumDeviceModel(visibility=0.0, seed=8), 10**5)
    assert abs(chsh_observed(tally(t))) < 5 * math.sqrt(4 / 10**5 * 4)


def test_chsh_operating_point():
    v = 2.271 / (2 * math.sqrt(2))
    n = 10**7
    s = chsh_observed(tally(simulate(QuantumDeviceModel(visibility=v, seed=2), n, seed=3)))
    # each correlator has variance (1 - E^2) / (n/4)
    sigma = math.sqrt(sum(4 * (1 - (v / math.sqrt(2)) ** 2) / n for _ in range(4)))
    assert abs(s - 2.271) < 5 * sigma


def test_block_series(tmp_path):
    t = simulate(QuantumDeviceModel(seed=6), 2 * 50_000)
    params = MdlParams(0.0075)
    pts = block_series(t, 50_000, params)
    assert len(pts) == 2 and not any(p.partial for p in pts)
    assert abs(pts[0].s - pts[1].s) < 5 * math.sqrt(2 * 16 * 0.5 / 50_000)
    whole = block_series(t, t.n, params)
    assert len(whole) == 1
    assert whole[0].s == pytest.approx(chsh_observed(tally(t)))
    big = block_series(t, 10 * t.n, params)
    assert len(big) == 1 and big[0].partial
    write_series_csv(pts, tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0] == ["block", "S", "S_mu"] and len(rows) == 3


def test_stationary_series_has_no_trend():
    t = simulate(QuantumDeviceModel(visibility=0.8, seed=12), 40 * 20_000)
    pts = block_series(t, 20_000, MdlParams(0.0075))
    s = np.array([p.s for p in pts])
    k = np.arange(s.size)
    slope, _ = np.polyfit(k, s, 1)
    resid = s - np.polyval(np.polyfit(k, s, 1), k)
    se = math.sqrt(resid.var(ddof=2) / ((k - k.mean()) ** 2).sum())
    assert abs(slope) < 3 * se
