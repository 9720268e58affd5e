"""Santha-Vazirani (SV) weak-source models.

A source with bias ``mu`` emits bits whose probability of being 1, given all
previous output, lies in ``[0.5 - mu, 0.5 + mu]``. Three strategies are
provided: a fixed iid bias, an adaptive adversary that always sits on the
envelope edge, and a file-backed replay of a RABITS01 file.

X, Y and the extractor seed Z are drawn from one model as a single merged
stream in acquisition order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from randamp import _rng
from randamp.bitstore import BitString, read_bits


class SourceUnderflowError(RuntimeError):
    """A file-backed source ran out of bits."""


def _check_mu(mu: float) -> None:
    if not 0.0 <= mu <= 0.5 or math.isnan(mu):
        raise ValueError(f"bias mu must lie in [0, 0.5], got {mu}")


@dataclass(frozen=True)
class IidBias:
    delta: float = 0.0


@dataclass(frozen=True)
class AdaptiveAdversary:
    """Pushes each bit toward the parity of ``history & mask``.

    ``window`` recent bits form the history; ``mask`` is drawn from the seed
    when left at 0.
    """

    window: int = 8
    mask: int = 0


@dataclass(frozen=True)
class FileBacked:
    path: str


@dataclass
class SVModel:
    """Stateful SV bit generator; successive calls continue the stream."""

    mu: float
    strategy: IidBias | AdaptiveAdversary | FileBacked = field(default_factory=IidBias)
    seed: int = 0
    debug: bool = False

    position: int = field(default=0, init=False)
    prob_log: list[float] = field(default_factory=list, init=False, repr=False)
    _history: int = field(default=0, init=False, repr=False)
    _file_bits: np.ndarray | None = field(default=None, init=False, repr=False)

    def __post_init__(self) -> None:
        _check_mu(self.mu)
        if isinstance(self.strategy, IidBias) and abs(self.strategy.delta) > self.mu:
            raise ValueError(f"delta {self.strategy.delta} exceeds SV envelope mu={self.mu}")
        if isinstance(self.strategy, AdaptiveAdversary) and not 1 <= self.strategy.window <= 62:
            raise ValueError("adversary window must lie in [1, 62]")
        self._key = _rng.stream_key(self.seed, "sv-source")

    def _adversary_mask(self) -> int:
        s = self.strategy
        if s.mask:
            return s.mask & ((1 << s.window) - 1)
        word = int(_rng.raw_words(_rng.stream_key(self.seed, "sv-adversary-mask"), 0, 1)[0])
        return (word & ((1 << s.window) - 1)) | 1

    def _draw(self, count: int) -> np.ndarray:
        s = self.strategy
        if isinstance(s, FileBacked):
            if self._file_bits is None:
                self._file_bits = read_bits(s.path).to_array()
            stop = self.position + count
            if stop > self._file_bits.size:
                raise SourceUnderflowError(
                    f"{s.path}: requested bits up to {stop}, file holds {self._file_bits.size}"
                )
            return self._file_bits[self.position : stop].copy()

        u = _rng.uniforms(self._key, self.position, count)
        if isinstance(s, IidBias):
            out = (u < 0.5 + s.delta).astype(np.uint8)
            if self.debug:
                self.prob_log.extend([0.5 + s.delta] * count)
            return out

        mask = self._adversary_mask()
        keep = (1 << s.window) - 1
        h = self._history
        out = np.empty(count, dtype=np.uint8)
        lo, hi = 0.5 - self.mu, 0.5 + self.mu
        for j in range(count):
            p1 = hi if (h & mask).bit_count() & 1 else lo
            bit = 1 if u[j] < p1 else 0
            out[j] = bit
            h = ((h << 1) | bit) & keep
            if self.debug:
                self.prob_log.append(p1)
        self._history = h
        return out

    def sample(self, count: int) -> BitString:
        return BitString.from_bits(self.sample_array(count))

    def sample_array(self, count: int) -> np.ndarray:
        if count < 0:
            raise ValueError("count must be non-negative")
        out = self._draw(count)
        self.position += count
        return out


def sample_bits(model: SVModel, count: int) -> BitString:
    """Next ``count`` bits of the model's stream."""
    return model.sample(count)


def sv_minentropy_bound(d: int, mu: float) -> float:
    """Min-entropy lower bound in bits for ``d`` bits of a ``mu``-SV source."""
    _check_mu(mu)
    if d < 0:
        raise ValueError("d must be non-negative")
    if mu == 0.5:
        return 0.0
    return -d * math.log2(0.5 + mu)


@dataclass(frozen=True)
class BiasAudit:
    n: int
    mean: float
    max_window_deviation: float
    window: int
    allowance: float
    passed: bool

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def bias_audit(bits: BitString, mu: float, window: int = 65536, sigmas: float = 5.0) -> BiasAudit:
    """Advisory check that bit frequencies stay inside the SV envelope.

    Flags the string if the overall mean, or any full window's mean, departs
    from 1/2 by more than ``mu`` plus ``sigmas`` binomial standard deviations.
    Passing does not certify the SV property.
    """
    _check_mu(mu)
    if bits.length == 0:
        raise ValueError("bias_audit needs a nonempty bit string")
    arr = bits.to_array()
    n = arr.size
    mean = float(arr.mean())
    allowance = mu + sigmas * 0.5 / math.sqrt(n)
    ok = abs(mean - 0.5) <= allowance

    w = min(window, n)
    nwin = n // w
    win_means = arr[: nwin * w].reshape(nwin, w).mean(axis=1)
    win_dev = float(np.abs(win_means - 0.5).max())
    ok = ok and win_dev <= mu + sigmas * 0.5 / math.sqrt(w)
    return BiasAudit(n, mean, win_dev, w, allowance, bool(ok))

