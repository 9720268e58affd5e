"""Empirical MDL (S_mu) and CHSH estimators over recorded trials."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from randamp.bitstore import CountTable16, TrialRecordSet

log = logging.getLogger(__name__)


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class MdlParams:
    mu: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.mu <= 0.5:
            raise ValueError(f"mu must lie in [0, 0.5], got {self.mu}")

    @property
    def mu_min(self) -> float:
        return (0.5 - self.mu) ** 2

    @property
    def mu_max(self) -> float:
        return (0.5 + self.mu) ** 2


def tally_cells(cells: np.ndarray) -> CountTable16:
    """Count cells ``x | y<<1 | a<<2 | b<<3`` into a (a, b, x, y) table."""
    flat = np.bincount(np.asarray(cells, dtype=np.uint8), minlength=16)
    # bincount index is x + 2y + 4a + 8b, i.e. C-order axes (b, a, y, x)
    return CountTable16(flat.reshape(2, 2, 2, 2).transpose(1, 0, 3, 2))


def tally(trials: TrialRecordSet) -> CountTable16:
    if trials.n < 1:
        raise ValueError("cannot tally an empty trial set")
    return tally_cells(trials.cells)


def s_mu_observed(counts: CountTable16, params: MdlParams) -> tuple[float, bool]:
    """(S_mu, abort) from the empirical joint distribution; aborts when S_mu < 0."""
    if counts.total < 1:
        raise ValueError("count table is empty")
    p = counts.probabilities()
    s_mu = params.mu_min * p[0, 0, 0, 0] - params.mu_max * (
        p[0, 1, 0, 1] + p[1, 0, 1, 0] + p[0, 0, 1, 1]
    )
    _warn_input_envelope(counts, params)
    return float(s_mu), bool(s_mu < 0)


def s_mu_sigma(counts: CountTable16, params: MdlParams) -> float:
    """Standard error of S_mu treating trials as multinomial draws."""
    p = counts.probabilities()
    p_win = p[0, 0, 0, 0]
    p_lose = p[0, 1, 0, 1] + p[1, 0, 1, 0] + p[0, 0, 1, 1]
    m1 = params.mu_min * p_win - params.mu_max * p_lose
    m2 = params.mu_min**2 * p_win + params.mu_max**2 * p_lose
    return math.sqrt(max(m2 - m1 * m1, 0.0) / counts.total)


def _warn_input_envelope(counts: CountTable16, params: MdlParams) -> None:
    n = counts.total
    pxy = counts.counts.sum(axis=(0, 1)) / n
    for (x, y), p in np.ndenumerate(pxy):
        slack = 5 * math.sqrt(max(p * (1 - p), 1e-300) / n)
        if p < params.mu_min - slack or p > params.mu_max + slack:
            log.warning(
                "empirical p(x=%d, y=%d)=%.6f lies outside [%.6f, %.6f] beyond 5 sigma",
                x, y, p, params.mu_min, params.mu_max,
            )


def correlators(counts: CountTable16) -> np.ndarray:
    """``E[x, y] = (N_agree - N_disagree) / N_xy``."""
    c = counts.counts
    n_xy = c.sum(axis=(0, 1))
    missing = [(int(x), int(y)) for x, y in zip(*np.nonzero(n_xy == 0))]
    if missing:
        raise EstimationError(f"no trials for input pair(s) {missing}")
    agree = c[0, 0] + c[1, 1]
    return (2 * agree - n_xy) / n_xy


def chsh_observed(counts: CountTable16) -> float:
    e = correlators(counts)
    return float(e[0, 0] + e[0, 1] + e[1, 0] - e[1, 1])


@dataclass(frozen=True)
class BlockPoint:
    block: int
    trials: int
    s: float
    s_mu: float
    partial: bool


def block_series(trials: TrialRecordSet, chunk: int, params: MdlParams) -> list[BlockPoint]:
    """Both statistics per consecutive chunk; a trailing short chunk is flagged ``partial``."""
    if chunk < 1:
        raise ValueError("chunk must be at least 1")
    out = []
    for k, start in enumerate(range(0, max(trials.n, 1), chunk)):
        cells = trials.cells[start : start + chunk]
        counts = tally_cells(cells)
        try:
            s = chsh_observed(counts)
        except EstimationError:
            s = float("nan")
        s_mu = s_mu_observed(counts, params)[0] if counts.total else float("nan")
        out.append(BlockPoint(k, int(cells.size), s, s_mu, cells.size < chunk))
    return out


def write_series_csv(points: list[BlockPoint], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block", "S", "S_mu"])
        for pt in points:
            w.writerow([pt.block, repr(pt.s), repr(pt.s_mu)])
