"""Distribution distance and a small NIST SP 800-22 style test subset.

The battery (frequency, block frequency with M=128, runs) is a sanity
layer against gross implementation faults, not a randomness certificate.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np
from scipy.special import gammaincc

from randamp.bitstore import BitString

ALPHA = 0.01
MIN_BITS = 10_000
BLOCK_SIZE = 128


@dataclass(frozen=True)
class Distribution:
    labels: tuple[Hashable, ...]
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.labels) != len(self.probs) or len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be unique and match probabilities")
        if any(p < 0 for p in self.probs):
            raise ValueError("probabilities must be nonnegative")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")

    @classmethod
    def from_mapping(cls, m: Mapping[Hashable, float]) -> "Distribution":
        return cls(tuple(m), tuple(float(v) for v in m.values()))

    @classmethod
    def uniform(cls, labels: Sequence[Hashable]) -> "Distribution":
        return cls(tuple(labels), (1.0 / len(labels),) * len(labels))

    def as_dict(self) -> dict:
        return dict(zip(self.labels, self.probs))


def trace_distance(p: Distribution, q: Distribution) -> float:
    """Half the l1 distance between two distributions on the same outcome set."""
    if set(p.labels) != set(q.labels):
        raise ValueError("distributions are defined on different outcome spaces")
    qd = q.as_dict()
    return 0.5 * math.fsum(abs(pv - qd[lab]) for lab, pv in zip(p.labels, p.probs))


@dataclass(frozen=True)
class TestResult:
    __test__ = False

    name: str
    statistic: float
    p_value: float
    passed: bool


def monobit(bits: np.ndarray) -> TestResult:
    n = bits.size
    s = 2 * int(np.count_nonzero(bits)) - n
    stat = abs(s) / math.sqrt(n)
    p = math.erfc(stat / math.sqrt(2))
    return TestResult("monobit", stat, p, p >= ALPHA)


def block_frequency(bits: np.ndarray, block: int = BLOCK_SIZE) -> TestResult:
    nblocks = bits.size // block
    pi = bits[: nblocks * block].reshape(nblocks, block).mean(axis=1)
    chi2 = 4.0 * block * float(((pi - 0.5) ** 2).sum())
    p = float(gammaincc(nblocks / 2, chi2 / 2))
    return TestResult("block_frequency", chi2, p, p >= ALPHA)


def runs(bits: np.ndarray) -> TestResult:
    n = bits.size
    pi = np.count_nonzero(bits) / n
    if abs(pi - 0.5) >= 2 / math.sqrt(n):
        # frequency prerequisite failed
        return TestResult("runs", float("nan"), 0.0, False)
    v = 1 + int(np.count_nonzero(np.diff(bits)))
    p = math.erfc(abs(v - 2 * n * pi * (1 - pi)) / (2 * math.sqrt(2 * n) * pi * (1 - pi)))
    return TestResult("runs", float(v), p, p >= ALPHA)


def test_battery(bits: BitString) -> list[TestResult]:
    """Run the three tests; each passes iff its p-value is at least 0.01."""
    if bits.length < MIN_BITS:
        raise ValueError(f"battery needs at least {MIN_BITS} bits, got {bits.length}")
    arr = bits.to_array().astype(np.int8)
    return [monobit(arr), block_frequency(arr), runs(arr)]


test_battery.__test__ = False
run_battery = test_battery


def battery_json(results: list[TestResult]) -> str:
    return json.dumps([asdict(r) for r in results], indent=2)
