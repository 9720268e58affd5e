"""Output-length security calculus.

All logarithms are base 2. The single-round entropy rate ``eta`` is a
pluggable strategy: its true form is not reproduced here, so two simple
models are shipped (a constant rate and a clipped affine rate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class SecurityParams:
    n: int
    mu: float
    epsilon: float = 1e-12
    epsilon_s: float | None = None
    epsilon_ea: float = 1e-12

    def __post_init__(self) -> None:
        if self.epsilon_s is None:
            object.__setattr__(self, "epsilon_s", self.epsilon / 12)
        for name in ("epsilon", "epsilon_s", "epsilon_ea"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ParameterError(f"{name} must lie in (0, 1), got {v}")
        if self.epsilon - 6 * self.epsilon_s <= 0:
            raise ParameterError("epsilon - 6 * epsilon_s must be positive")
        if not 0.0 <= self.mu < 0.5:
            raise ParameterError(f"mu must lie in [0, 0.5), got {self.mu}")
        if self.n < 1:
            raise ParameterError("n must be at least 1")

    def with_n(self, n: int) -> "SecurityParams":
        return SecurityParams(n, self.mu, self.epsilon, self.epsilon_s, self.epsilon_ea)

    @property
    def log_term(self) -> float:
        """log2(6 / (epsilon - 6 epsilon_s))."""
        return math.log2(6.0 / (self.epsilon - 6 * self.epsilon_s))

    @property
    def source_rate(self) -> float:
        """2 log2(1 / (1/2 + mu)) - 2: per-trial entropy deficit of the seed."""
        return 2 * math.log2(1.0 / (0.5 + self.mu)) - 2


class EtaStrategy(Protocol):
    name: str

    def __call__(self, s_mu: float, n: int, params: SecurityParams) -> float: ...


@dataclass(frozen=True)
class ConstantEta:
    rate: float
    name: str = "constant"

    def __call__(self, s_mu: float, n: int, params: SecurityParams) -> float:
        return min(max(self.rate, 0.0), 2.0)


@dataclass(frozen=True)
class AffineEta:
    """``max(0, alpha (S_mu - s0)) - beta / sqrt(n)`` clipped to [0, 2].

    A labelled stand-in model, not a derived entropy bound.
    """

    alpha: float
    s0: float = 0.0
    beta: float = 0.0
    name: str = "affine"

    def __call__(self, s_mu: float, n: int, params: SecurityParams) -> float:
        r = max(0.0, self.alpha * (s_mu - self.s0)) - self.beta / math.sqrt(n)
        return min(max(r, 0.0), 2.0)


def eat_minentropy_bound(eta: EtaStrategy, s_mu: float, params: SecurityParams) -> float:
    """Smooth min-entropy of AB in bits: ``n * eta``, clamped at 0."""
    if s_mu < 0:
        raise ParameterError("S_mu must be non-negative")
    return max(params.n * eta(s_mu, params.n, params), 0.0)


def dodis_error(n_bits: int, k1: float, k2: float, m: int) -> float:
    """Extractor error 2^{-(k1 + k2 - N - 2m)/2}; may exceed 1."""
    if min(n_bits, k1, k2) < 0 or m < 1:
        raise ParameterError("need non-negative N, k1, k2 and m >= 1")
    return 2.0 ** (-(k1 + k2 - n_bits - 2 * m) / 2)


@dataclass(frozen=True)
class ComposedSecurity:
    eps_quantum: float
    entropy_offset: float
    total: float


def compose_security(
    eps_ext: float, m: int, delta1: float, delta2: float, eps1: float, eps2: float
) -> ComposedSecurity:
    """Lift a classical extractor error to the Markov model and add smoothing terms.

    ``entropy_offset`` is the extra min-entropy log2(1/eps_ext) each source
    needs for the quantum-proof guarantee.
    """
    for v in (eps_ext, delta1, delta2, eps1, eps2):
        if not 0.0 < v <= 1.0:
            raise ParameterError("error terms must lie in (0, 1]")
    eps_q = math.sqrt(3 * eps_ext * 2.0 ** (m - 2))
    total = 6 * delta1 + 6 * delta2 + 2 * eps1 + 2 * eps2 + 2 * eps_q
    return ComposedSecurity(eps_q, math.log2(1.0 / eps_ext), total)


def output_length_real(rate: float, params: SecurityParams) -> float:
    """Right-hand side of the output-length condition before flooring."""
    return params.n / 6 * (rate + params.source_rate) - params.log_term


def output_length(s_mu: float, eta: EtaStrategy, params: SecurityParams) -> int:
    """Largest admissible output length m for a fixed violation level."""
    if s_mu < 0:
        raise ParameterError("S_mu must be non-negative")
    rate = eta(s_mu, params.n, params)
    return max(math.floor(output_length_real(rate, params)), 0)


@dataclass(frozen=True)
class AdaptiveLength:
    m: int
    s_mu_used: float
    security: float


def adaptive_output_length(
    s_mu_obs: float, s_mu_max: float, grid: int, eta: EtaStrategy, params: SecurityParams
) -> AdaptiveLength:
    """Output length on a grid of ``grid`` violation levels; security degrades to grid * epsilon."""
    if grid < 1 or s_mu_max <= 0:
        raise ParameterError("need grid >= 1 and S_mu_max > 0")
    step = s_mu_max / grid
    level = math.floor(s_mu_obs / step) if s_mu_obs > 0 else 0
    s_used = min(s_mu_max, level * step)
    security = grid * params.epsilon
    if level <= 0:
        return AdaptiveLength(0, 0.0, security)
    return AdaptiveLength(output_length(s_used, eta, params), s_used, security)


def implied_eta(m: int, params: SecurityParams) -> float:
    """Entropy rate at which the output-length condition holds with equality for ``m``."""
    return 6 * (m + params.log_term) / params.n - params.source_rate


def sv_bits_consumed(n: int) -> int:
    """Weak-source bits used by one run: 2n for the inputs, 2n for the seed."""
    return 4 * n


# Reported run: 20,431,465 output bits from n = 20 * 2**26 trials at mu = 0.0075,
# observed S_mu = 0.00296.
REFERENCE_RUN = SecurityParams(n=20 * 2**26, mu=0.0075)
REFERENCE_OUTPUT_BITS = 20_431_465
REFERENCE_S_MU = 0.00296
REFERENCE_RATE = implied_eta(REFERENCE_OUTPUT_BITS, REFERENCE_RUN)


def default_eta() -> AffineEta:
    """Affine model through the origin that reproduces REFERENCE_RATE at REFERENCE_S_MU."""
    return AffineEta(alpha=REFERENCE_RATE / REFERENCE_S_MU)
