"""Shift-matrix two-source extractor.

Output bit ``i`` (0-based) of ``Ext(x, y)`` is ``x^T A_i y`` where ``A_i`` is
the N x N non-cyclic shift with ``(A_i)[j, k] = 1`` iff ``k = j - i``::

    out[i] = XOR_{k=0}^{N-1-i} x[k + i] & y[k]

The first argument is the strong input: the output stays close to uniform
even given ``x``. In the protocol ``x`` is the weak-source seed Z and ``y``
is the device output AB.

The fast engine reads the outputs off the product of two GF(2)
polynomials, ``X(t) * Y_rev(t)``, whose coefficient at ``t^(N-1+i)`` is
the correlation above. The carryless product is obtained exactly by
Kronecker substitution: each bit is spread into an ``s``-bit slot of a big
integer, the integers are multiplied (GMP's FFT multiply when available),
and the low bit of each slot is the coefficient's parity. ``s`` is chosen so
no slot can overflow. The y axis is cut into blocks and the output range
into windows, so memory stays bounded and the per-block partial results
combine by XOR.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from randamp.bitstore import BitString

try:
    import gmpy2

    def _to_int(buf: bytes):
        return gmpy2.mpz.from_bytes(buf, "little")

    def _to_bytes(v, length: int) -> bytes:
        return v.to_bytes(length, "little")

    def _enable_gil_release() -> None:
        gmpy2.get_context().allow_release_gil = True

except ImportError:  # pragma: no cover - exercised only without gmpy2

    def _to_int(buf: bytes):
        return int.from_bytes(buf, "little")

    def _to_bytes(v, length: int) -> bytes:
        return int(v).to_bytes(length, "little")

    def _enable_gil_release() -> None:
        pass


MAX_EXACT_BITS = 14
DEFAULT_PRODUCT_BITS = 1 << 21


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class ShiftExtractorSpec:
    n_bits: int
    m: int

    def __post_init__(self) -> None:
        if not 1 <= self.m <= self.n_bits:
            raise ValueError(f"need 1 <= m <= N, got m={self.m}, N={self.n_bits}")

    def check(self, x: BitString, y: BitString) -> None:
        if x.length != self.n_bits or y.length != self.n_bits:
            raise ValueError(
                f"inputs must both have {self.n_bits} bits, got {x.length} and {y.length}"
            )


def shift_matrix(n_bits: int, i: int) -> np.ndarray:
    """Dense ``A_i`` for small N (test oracle only)."""
    a = np.zeros((n_bits, n_bits), dtype=np.uint8)
    j = np.arange(i, n_bits)
    a[j, j - i] = 1
    return a


def extract_naive(spec: ShiftExtractorSpec, x: BitString, y: BitString) -> BitString:
    """Reference evaluation, one inner product per output bit: O(N m)."""
    spec.check(x, y)
    xa, ya = x.to_array(), y.to_array()
    n = spec.n_bits
    out = np.empty(spec.m, dtype=np.uint8)
    for i in range(spec.m):
        # x^T A_i y = sum_k x[k+i] y[k]
        out[i] = np.count_nonzero(xa[i:] & ya[: n - i]) & 1
    return BitString.from_bits(out)


def _spread(bits: np.ndarray, slot: int) -> bytes:
    """Little-endian integer with bit ``bits[j]`` at position ``j * slot`` (slot >= 8)."""
    pos = np.arange(bits.size, dtype=np.int64) * slot
    buf = np.zeros((bits.size * slot + 7) // 8 + 1, dtype=np.uint8)
    buf[pos >> 3] = bits << (pos & 7).astype(np.uint8)
    return buf.tobytes()


def _window_block(xw: np.ndarray, yb: np.ndarray, count: int) -> np.ndarray:
    """Parities of ``sum_k xw[k + i] yb[k]`` for i in [0, count)."""
    ly = yb.size
    slot = max(ly.bit_length(), 8)
    prod = _to_int(_spread(xw, slot)) * _to_int(_spread(yb[::-1].copy(), slot))
    first = ly - 1
    need = (first + count) * slot // 8 + 1
    raw = np.frombuffer(_to_bytes(prod, max(need, (prod.bit_length() + 7) // 8)), dtype=np.uint8)
    pos = (first + np.arange(count, dtype=np.int64)) * slot
    return (raw[pos >> 3] >> (pos & 7).astype(np.uint8)) & 1


def _plan(n: int, m: int, product_bits: int) -> tuple[int, int]:
    """(output window L, y-block B) with L + B close to ``product_bits``."""
    half = max(product_bits // 2, 1)
    if m <= half:
        window = m
        block = max(product_bits - m, half)
    else:
        window = block = half
    return window, min(block, n)


def extract_fast(
    spec: ShiftExtractorSpec,
    x: BitString,
    y: BitString,
    *,
    product_bits: int = DEFAULT_PRODUCT_BITS,
    workers: int = 1,
) -> BitString:
    """Bit-identical to :func:`extract_naive` in O(N log N) time.

    ``product_bits`` bounds the size of each partial product (and hence
    memory); ``workers`` threads share the partial products. Neither changes
    the result.
    """
    spec.check(x, y)
    n, m = spec.n_bits, spec.m
    xa, ya = x.to_array(), y.to_array()
    window, block = _plan(n, m, product_bits)

    tasks = []
    for i0 in range(0, m, window):
        count = min(window, m - i0)
        for k0 in range(0, n, block):
            if k0 + i0 >= n:
                break
            tasks.append((i0, count, k0))

    def run(task):
        i0, count, k0 = task
        k1 = min(k0 + block, n)
        xw = xa[k0 + i0 : min(k1 + i0 + count - 1, n)]
        return _window_block(xw, ya[k0:k1], count)

    out = np.zeros(m, dtype=np.uint8)
    lock = threading.Lock()

    def accumulate(task):
        part = run(task)
        i0, count, _ = task
        with lock:
            out[i0 : i0 + count] ^= part

    if workers <= 1 or len(tasks) == 1:
        for t in tasks:
            accumulate(t)
    else:
        def worker(t):
            _enable_gil_release()
            accumulate(t)

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(worker, tasks))
    return BitString.from_bits(out)


def extract_ints(xs: np.ndarray, ys: np.ndarray, m: int) -> np.ndarray:
    """Outputs for integer-encoded inputs (bit j of the integer = x[j]), broadcasting.

    Output bit i is stored at bit i of the result.
    """
    xs = np.asarray(xs, dtype=np.uint64)
    ys = np.asarray(ys, dtype=np.uint64)
    out = np.zeros(np.broadcast_shapes(xs.shape, ys.shape), dtype=np.uint64)
    for i in range(m):
        par = np.bitwise_count((xs >> np.uint64(i)) & ys).astype(np.uint64) & np.uint64(1)
        out |= par << np.uint64(i)
    return out


@dataclass(frozen=True)
class TvReport:
    tv: float
    tv_strong: float
    bound: float
    k1: float
    k2: float


def _min_entropy(p: np.ndarray) -> float:
    return 0.0 - math.log2(float(p.max()))


def exact_tv_to_uniform(spec: ShiftExtractorSpec, dist_x, dist_y) -> TvReport:
    """Exact distance of Ext(X, Y) from uniform, plain and X-strong, by enumeration.

    ``dist_x[v]`` is the probability of the N-bit string whose bit j is bit j
    of the integer ``v``.
    """
    n, m = spec.n_bits, spec.m
    if n > MAX_EXACT_BITS:
        raise CapacityError(f"exhaustive analysis supports N <= {MAX_EXACT_BITS}, got {n}")
    px = np.asarray(dist_x, dtype=np.float64)
    py = np.asarray(dist_y, dtype=np.float64)
    for p in (px, py):
        if p.shape != (1 << n,):
            raise ValueError(f"distributions must have {1 << n} entries")
        if (p < 0).any() or not math.isclose(p.sum(), 1.0, abs_tol=1e-12):
            raise ValueError("distributions must be nonnegative and normalized")

    xs = np.flatnonzero(px)
    ys = np.flatnonzero(py)
    outs = extract_ints(xs[:, None], ys[None, :], m).astype(np.intp)
    wy = py[ys]
    # cond[r, o] = Pr[Ext(x_r, Y) = o]
    flat = (np.arange(xs.size)[:, None] << m) + outs
    weights = np.broadcast_to(py[ys], outs.shape)
    cond = np.bincount(flat.ravel(), weights.ravel(), minlength=xs.size << m)
    cond = cond.reshape(xs.size, 1 << m)
    wx = px[xs]
    uni = 2.0**-m
    tv = 0.5 * float(np.abs(wx @ cond - uni).sum())
    tv_strong = 0.5 * float(wx @ np.abs(cond - uni).sum(axis=1))

    k1, k2 = _min_entropy(px), _min_entropy(py)
    bound = 2.0 ** (-(k1 + k2 - n - 2 * m) / 2)
    return TvReport(tv, tv_strong, bound, k1, k2)
