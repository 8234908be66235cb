"""PRBS generation and BER checking.

Fibonacci LFSR, shifting left. The output bit is the MSB shifted out of the
register, and the new LSB is MSB xor the tap bit. With this convention the
output sequence obeys ``o[n + order] = o[n] ^ o[n + order - tap]`` and the
first ``order`` output bits are the seed, MSB first.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import as_bits

# order -> non-MSB tap (x^order + x^tap + 1)
TAPS = {7: 6, 15: 14, 31: 28}

NO_LOCK_RATE = 0.4


@dataclass(frozen=True)
class LfsrSpec:
    order: int = 31
    seed: int | None = None

    def __post_init__(self):
        if self.order not in TAPS:
            raise ValueError(f"unsupported PRBS order {self.order}; use one of {sorted(TAPS)}")
        if self.seed is None:
            object.__setattr__(self, "seed", (1 << self.order) - 1)
        if not 0 < self.seed < (1 << self.order):
            raise ValueError(f"seed must be a nonzero {self.order}-bit value, got {self.seed}")

    @property
    def taps(self) -> tuple[int, int]:
        return (self.order, TAPS[self.order])

    @property
    def period(self) -> int:
        return (1 << self.order) - 1


def lfsr_step(spec: LfsrSpec, state: int) -> tuple[int, int]:
    """Advance one clock; return ``(output_bit, new_state)``."""
    n, t = spec.taps
    out = (state >> (n - 1)) & 1
    fb = out ^ ((state >> (t - 1)) & 1)
    return out, ((state << 1) | fb) & ((1 << n) - 1)


def _gf2_matmul(a: list[int], b: list[int], n: int) -> list[int]:
    # rows as bitmasks; (a @ b)[i] = xor of b[j] for set bits j of a[i]
    out = []
    for row in a:
        acc = 0
        j = 0
        while row:
            if row & 1:
                acc ^= b[j]
            row >>= 1
            j += 1
        out.append(acc)
    return out


def advance_state(spec: LfsrSpec, k: int, state: int | None = None) -> int:
    """Register state after ``k`` clocks, via GF(2) matrix powers (O(n^3 log k))."""
    if k < 0:
        raise ValueError("k must be >= 0")
    n, t = spec.taps
    state = spec.seed if state is None else state
    # step matrix M with new_bit[i] = xor over set bits of M[i] in old state
    step = [0] * n
    step[0] = (1 << (n - 1)) | (1 << (t - 1))
    for i in range(1, n):
        step[i] = 1 << (i - 1)
    result = [1 << i for i in range(n)]
    base = step
    while k:
        if k & 1:
            result = _gf2_matmul(result, base, n)
        base = _gf2_matmul(base, base, n)
        k >>= 1
    new = 0
    for i, row in enumerate(result):
        if bin(row & state).count("1") & 1:
            new |= 1 << i
    return new


def prbs_generate(spec: LfsrSpec, n: int) -> np.ndarray:
    """First ``n`` output bits from ``spec.seed`` as a uint8 array."""
    if n < 0:
        raise ValueError("n must be >= 0")
    order, tap = spec.taps
    out = np.empty(n + order, dtype=np.uint8)
    out[:order] = [(spec.seed >> (order - 1 - i)) & 1 for i in range(order)]
    # o[m] = o[m - order] ^ o[m - tap]; blocks of `tap` values only depend on history
    m = order
    end = n + order
    while m < end:
        k = min(tap, end - m)
        np.bitwise_xor(out[m - order:m - order + k], out[m - tap:m - tap + k], out=out[m:m + k])
        m += k
    return out[:n]


@dataclass(frozen=True)
class Alignment:
    lag: int
    error_count: int
    compared: int
    locked: bool

    @property
    def ber(self) -> float:
        return self.error_count / self.compared if self.compared else float("nan")


def align_and_count(reference, received, max_lag: int, start: int = 0) -> Alignment:
    """Best lag in ``[0, max_lag]`` for ``received[i] == reference[i - lag]``.

    Only received positions ``>= start`` are compared. The lag with the lowest
    mismatch rate wins (ties to the smaller lag); a best rate above 0.4 is
    reported as not locked.
    """
    ref = as_bits(reference)
    rx = as_bits(received)
    if max_lag < 0:
        raise ValueError("max_lag must be >= 0")
    best = None
    for lag in range(max_lag + 1):
        lo = max(start, lag)
        hi = min(rx.size, ref.size + lag)
        if hi <= lo:
            continue
        errors = int(np.count_nonzero(rx[lo:hi] != ref[lo - lag:hi - lag]))
        compared = hi - lo
        if best is None or errors * best[2] < best[1] * compared:
            best = (lag, errors, compared)
    if best is None:
        raise ValueError("received stream too short to align")
    lag, errors, compared = best
    return Alignment(lag, errors, compared, errors <= NO_LOCK_RATE * compared)


def prbs_align_and_count_errors(spec: LfsrSpec, received, max_lag: int,
                                start: int = 0) -> Alignment:
    """Regenerate the reference PRBS and align ``received`` against it."""
    rx = as_bits(received)
    if rx.size <= spec.order + max_lag:
        raise ValueError(f"received length {rx.size} must exceed order + max_lag "
                         f"= {spec.order + max_lag}")
    return align_and_count(prbs_generate(spec, rx.size), rx, max_lag, start)
