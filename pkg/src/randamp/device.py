"""Simulated untrusted two-node device.

Two families share one interface, ``outcome_table(model)[x, y, a, b]``:

* :class:`QuantumDeviceModel` measures a depolarized |Psi+> pair along
  real-plane angles, followed by independent readout bit flips.
* :class:`LhvDeviceModel` is a finite mixture of deterministic local
  response tables.

Sampling is counter-based: trial ``i`` consumes word ``i`` of the device
stream, so outcomes depend only on (seed, trial index).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq

from randamp import _rng

SQRT2 = math.sqrt(2.0)
TSIRELSON = 2.0 * SQRT2

# Psi+ with B's outcome relabelled gives E(x, y) = cos(theta_Ax + theta_By);
# these angles maximise E00 + E01 + E10 - E11.
DEFAULT_ANGLES = (0.0, -math.pi / 2, math.pi / 4, -math.pi / 4)

_PSI_PLUS = np.array([0.0, 1.0, 1.0, 0.0]) / SQRT2


@dataclass(frozen=True)
class QuantumDeviceModel:
    visibility: float = 1.0
    angles: tuple[float, float, float, float] = DEFAULT_ANGLES
    flip_a: float = 0.0
    flip_b: float = 0.0
    relabel_b: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError(f"visibility must lie in [0, 1], got {self.visibility}")
        for f in (self.flip_a, self.flip_b):
            if not 0.0 <= f <= 0.5:
                raise ValueError(f"readout flip probability must lie in [0, 0.5], got {f}")
        if len(self.angles) != 4:
            raise ValueError("need four angles (A0, A1, B0, B1)")


@dataclass(frozen=True)
class LhvDeviceModel:
    """Mixture of deterministic strategies ``(a(0), a(1), b(0), b(1))``.

    ``input_dists[k]`` optionally gives p(x, y | lambda_k) as four numbers in
    the order (00, 01, 10, 11); it only matters when checked against a bias.
    """

    responses: tuple[tuple[int, int, int, int], ...] = ((0, 0, 0, 0),)
    weights: tuple[float, ...] = (1.0,)
    input_dists: tuple[tuple[float, float, float, float], ...] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.responses) != len(self.weights) or not self.responses:
            raise ValueError("responses and weights must be nonempty and of equal length")
        if any(len(r) != 4 or set(r) - {0, 1} for r in self.responses):
            raise ValueError("each response table is four bits (a0, a1, b0, b1)")
        if min(self.weights) < 0 or not math.isclose(sum(self.weights), 1.0, abs_tol=1e-12):
            raise ValueError("weights must be a probability vector")
        if self.input_dists is not None:
            if len(self.input_dists) != len(self.responses):
                raise ValueError("one input distribution per hidden value")
            for p in self.input_dists:
                if min(p) < 0 or not math.isclose(sum(p), 1.0, abs_tol=1e-12):
                    raise ValueError("each input distribution must sum to 1")

    def check_bias(self, mu: float) -> None:
        """Raise if some p(x, y | lambda) leaves [mu_min, mu_max]."""
        if self.input_dists is None:
            return
        lo, hi = (0.5 - mu) ** 2, (0.5 + mu) ** 2
        for k, p in enumerate(self.input_dists):
            if min(p) < lo - 1e-12 or max(p) > hi + 1e-12:
                raise ValueError(f"input distribution {k} violates the mu={mu} envelope")


DeviceModel = QuantumDeviceModel | LhvDeviceModel


def _measurement_vector(theta: float, outcome: int) -> np.ndarray:
    if outcome == 0:
        return np.array([math.cos(theta / 2), math.sin(theta / 2)])
    return np.array([-math.sin(theta / 2), math.cos(theta / 2)])


def _flip_channel(f: float) -> np.ndarray:
    return np.array([[1 - f, f], [f, 1 - f]])


def born_probabilities(model: QuantumDeviceModel, x: int, y: int) -> np.ndarray:
    """``p[a, b]`` for inputs (x, y), readout flips included."""
    v = model.visibility
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {v}")
    rho = v * np.outer(_PSI_PLUS, _PSI_PLUS) + (1 - v) / 4 * np.eye(4)
    ta, tb = model.angles[x], model.angles[2 + y]
    p = np.empty((2, 2))
    for a in (0, 1):
        for b in (0, 1):
            b_phys = 1 - b if model.relabel_b else b
            psi = np.kron(_measurement_vector(ta, a), _measurement_vector(tb, b_phys))
            p[a, b] = psi @ rho @ psi
    p = _flip_channel(model.flip_a) @ p @ _flip_channel(model.flip_b).T
    return np.clip(p, 0.0, None)


def outcome_table(model: DeviceModel) -> np.ndarray:
    """``table[x, y, a, b] = p(a, b | x, y)``."""
    table = np.zeros((2, 2, 2, 2))
    if isinstance(model, QuantumDeviceModel):
        for x, y in itertools.product((0, 1), repeat=2):
            table[x, y] = born_probabilities(model, x, y)
        return table
    for (a0, a1, b0, b1), w in zip(model.responses, model.weights):
        for x, y in itertools.product((0, 1), repeat=2):
            table[x, y, (a0, a1)[x], (b0, b1)[y]] += w
    return table


def sample_trials(model: DeviceModel, x: np.ndarray, y: np.ndarray, start: int = 0):
    """Outcomes for trials ``start .. start+len(x)-1``; returns (a, b) uint8 arrays."""
    x = np.asarray(x, dtype=np.intp)
    y = np.asarray(y, dtype=np.intp)
    u = _rng.uniforms(_rng.stream_key(model.seed, "device"), start, x.size)
    if isinstance(model, LhvDeviceModel):
        cum = np.cumsum(model.weights)
        lam = np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)
        resp = np.asarray(model.responses, dtype=np.uint8)[lam]
        a = resp[np.arange(x.size), x]
        b = resp[np.arange(x.size), 2 + y]
        return a, b
    cum = np.cumsum(outcome_table(model).reshape(4, 4), axis=1)
    cum[:, -1] = 1.0
    k = (u[:, None] >= cum[2 * x + y][:, :3]).sum(axis=1).astype(np.uint8)
    return k >> 1, k & 1


def sample_trial(model: DeviceModel, x: int, y: int, index: int = 0) -> tuple[int, int]:
    a, b = sample_trials(model, np.array([x]), np.array([y]), start=index)
    return int(a[0]), int(b[0])


def mdl_bounds(mu: float) -> tuple[float, float]:
    return (0.5 - mu) ** 2, (0.5 + mu) ** 2


def expected_values(model: DeviceModel, mu: float = 0.0) -> tuple[float, float]:
    """Analytic (S, S_mu) under uniformly random inputs."""
    if not 0.0 <= mu < 0.5:
        raise ValueError(f"mu must lie in [0, 0.5), got {mu}")
    t = outcome_table(model)
    corr = t[:, :, 0, 0] + t[:, :, 1, 1] - t[:, :, 0, 1] - t[:, :, 1, 0]
    s = corr[0, 0] + corr[0, 1] + corr[1, 0] - corr[1, 1]
    lo, hi = mdl_bounds(mu)
    s_mu = (lo * t[0, 0, 0, 0] - hi * (t[0, 1, 0, 1] + t[1, 0, 1, 0] + t[1, 1, 0, 0])) / 4
    return float(s), float(s_mu)


def calibrate_visibility(target_s: float, template: QuantumDeviceModel | None = None) -> float:
    """Visibility at which the template model's expected CHSH value equals ``target_s``."""
    template = template or QuantumDeviceModel()

    def s_of(v: float) -> float:
        return expected_values(_with_visibility(template, v))[0]

    s_max = s_of(1.0)
    if not 2.0 < target_s <= s_max + 1e-12:
        raise ValueError(f"target S must lie in (2, {s_max:.9f}], got {target_s}")
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if s_of(mid) < target_s:
            lo = mid
        else:
            hi = mid
    return hi


def _with_visibility(model: QuantumDeviceModel, v: float) -> QuantumDeviceModel:
    return QuantumDeviceModel(v, model.angles, model.flip_a, model.flip_b, model.relabel_b, model.seed)


def critical_bias(model: QuantumDeviceModel) -> float:
    """Largest mu at which the model's expected S_mu is still non-negative."""
    f = lambda mu: expected_values(model, mu)[1]  # noqa: E731
    if f(0.0) <= 0:
        return 0.0
    return brentq(f, 0.0, 0.5 - 1e-12, xtol=1e-14)


# -- classical bound --------------------------------------------------------


@dataclass(frozen=True)
class LhvOptimum:
    value: Fraction
    response: tuple[int, int, int, int]
    inputs: tuple[Fraction, Fraction, Fraction, Fraction]
    evaluated: int = field(default=0, compare=False)


def _box_simplex_vertices(lo: Fraction, hi: Fraction):
    """Vertices of {p in [lo, hi]^4 : sum p = 1}: three coordinates at a bound."""
    for free in range(4):
        for bounds in itertools.product((lo, hi), repeat=3):
            rest = 1 - sum(bounds)
            if lo <= rest <= hi:
                p = list(bounds)
                p.insert(free, rest)
                yield tuple(p)


def lhv_optimum(mu: float | Fraction | str) -> LhvOptimum:
    """Exact maximum of S_mu over measurement-dependent local models.

    Mixtures are convex combinations, so the maximum sits at a deterministic
    response table paired with a vertex of the admissible input polytope.
    """
    mu = Fraction(str(mu)) if isinstance(mu, float) else Fraction(mu)
    if not 0 <= mu < Fraction(1, 2):
        raise ValueError("mu must lie in [0, 0.5)")
    lo, hi = (Fraction(1, 2) - mu) ** 2, (Fraction(1, 2) + mu) ** 2
    vertices = list(_box_simplex_vertices(lo, hi))
    best = None
    count = 0
    for a0, a1, b0, b1 in itertools.product((0, 1), repeat=4):
        # coefficient of p(x, y) in S_mu for this response table
        c = (
            lo if (a0, b0) == (0, 0) else 0,
            -hi if (a0, b1) == (0, 1) else 0,
            -hi if (a1, b0) == (1, 0) else 0,
            -hi if (a1, b1) == (0, 0) else 0,
        )
        for p in vertices:
            count += 1
            val = sum(ci * pi for ci, pi in zip(c, p))
            if best is None or val > best.value:
                best = LhvOptimum(val, (a0, a1, b0, b1), p)
    return LhvOptimum(best.value, best.response, best.inputs, count)


def lhv_max_smu(mu: float | Fraction | str) -> Fraction:
    return lhv_optimum(mu).value
