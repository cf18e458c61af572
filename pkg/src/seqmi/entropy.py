"""Bias-corrected entropy estimation over sparse count tables.

The naive plug-in estimator H = log N - (1/N) sum n_m log n_m underestimates
entropy when many counts are small. The correction used throughout this
package replaces log n_m with

    G(n) = psi(n) + ((-1)^n / 2) * (psi((n+1)/2) - psi(n/2))

where psi is the digamma function. G(n) -> log n for large n, so the two
estimators agree on well-sampled tables and differ exactly where the bias
lives.

digamma is implemented here rather than imported: upward recurrence to
x >= 6 followed by the asymptotic series with Bernoulli terms through
x^-14, which holds 1e-12 absolute accuracy for x >= 1e-3. The
implementation is checked against a frozen arbitrary-precision table in the
test suite.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyTable,
    NonPositiveArgument,
    ZeroCount,
)

__all__ = [
    "CountTable",
    "digamma",
    "entropy_grassberger",
    "entropy_naive",
    "grassberger_g",
    "pack_pair",
    "unpack_pair",
]

_KEY_LIMIT = 1 << 64
_ID_LIMIT = 1 << 32

# Asymptotic series coefficients: psi(x) ~ ln x - 1/(2x) - sum c_k / x^(2k),
# c_k = B_{2k} / (2k) for Bernoulli numbers B_2..B_14.
_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
_RECURRENCE_CUTOFF = 6.0


def _digamma_series(x: np.ndarray) -> np.ndarray:
    """Asymptotic expansion, valid for x >= _RECURRENCE_CUTOFF."""
    inv2 = 1.0 / (x * x)
    # Horner over inv2: c1 + inv2*(c2 + inv2*(...))
    acc = np.zeros_like(x)
    for c in reversed(_SERIES):
        acc = inv2 * (c + acc)
    return np.log(x) - 0.5 / x - acc


def digamma(x):
    """Digamma psi(x) for x > 0; scalar or ndarray.

    Raises NonPositiveArgument if any element is <= 0. Accuracy: 1e-12
    absolute for x >= 1e-3 (below that the 1/x recurrence terms grow so the
    absolute error grows with them).
    """
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr).copy()
    if not np.all(arr > 0.0):
        raise NonPositiveArgument(f"digamma requires x > 0, got min {arr.min()}")
    # Kahan-compensated accumulation of the recurrence terms 1/x, 1/(x+1), ...
    # keeps the x ~ 1e-3 cases inside the 1e-12 budget (1/x is ~1e3 there).
    acc = np.zeros_like(arr)
    comp = np.zeros_like(arr)
    mask = arr < _RECURRENCE_CUTOFF
    while mask.any():
        term = np.where(mask, 1.0 / arr, 0.0)
        y = term - comp
        t = acc + y
        comp = (t - acc) - y
        acc = t
        arr = np.where(mask, arr + 1.0, arr)
        mask = arr < _RECURRENCE_CUTOFF
    out = _digamma_series(arr) - acc
    return float(out[0]) if scalar else out


# G(n) memo, grown on demand. Index n holds G(n); slot 0 is unused padding.
_G_CACHE = np.empty(0, dtype=np.float64)
_G_CACHE_MAX = 1 << 20


def _grow_g_cache(upto: int) -> None:
    global _G_CACHE
    if len(_G_CACHE) >= upto + 1:
        return
    upto = min(max(upto, 2 * len(_G_CACHE), 256), _G_CACHE_MAX)
    n = np.arange(1, upto + 1, dtype=np.float64)
    signs = np.where(np.arange(1, upto + 1) % 2 == 0, 1.0, -1.0)
    vals = digamma(n) + signs / 2.0 * (digamma((n + 1) / 2.0) - digamma(n / 2.0))
    _G_CACHE = np.concatenate(([np.nan], vals))


def grassberger_g(n: int) -> float:
    """G(n) for a single positive integer count."""
    if n < 1:
        raise ZeroCount(f"G(n) needs n >= 1, got {n}")
    if n <= _G_CACHE_MAX:
        _grow_g_cache(min(max(n, 256), _G_CACHE_MAX))
        return float(_G_CACHE[n])
    nf = float(n)
    sign = 1.0 if n % 2 == 0 else -1.0
    return float(digamma(nf) + sign / 2.0 * (digamma((nf + 1) / 2.0) - digamma(nf / 2.0)))


def _g_of_counts(counts: np.ndarray) -> np.ndarray:
    """Vectorized G over an integer count array, routed through the memo."""
    counts = np.asarray(counts)
    top = int(counts.max())
    if top <= _G_CACHE_MAX:
        _grow_g_cache(min(max(top, 256), _G_CACHE_MAX))
        return _G_CACHE[counts]
    small = counts <= _G_CACHE_MAX
    out = np.empty(len(counts), dtype=np.float64)
    if small.any():
        _grow_g_cache(_G_CACHE_MAX)
        out[small] = _G_CACHE[counts[small]]
    big = counts[~small].astype(np.float64)
    signs = np.where(counts[~small] % 2 == 0, 1.0, -1.0)
    out[~small] = digamma(big) + signs / 2.0 * (digamma((big + 1) / 2.0) - digamma(big / 2.0))
    return out


def pack_pair(first: int, second: int) -> int:
    """Pack an ordered pair of 32-bit token ids into one 64-bit key."""
    if not (0 <= first < _ID_LIMIT and 0 <= second < _ID_LIMIT):
        raise ValueError(f"pair ids must be 32-bit non-negative, got ({first}, {second})")
    return (first << 32) | second


def unpack_pair(key: int) -> tuple[int, int]:
    return key >> 32, key & (_ID_LIMIT - 1)


@dataclass
class CountTable:
    """Sparse histogram of token keys (or packed pairs) with total count N.

    entries maps key -> count; arity is "unigram" or "pair". Pair keys pack
    two 32-bit ids as first * 2^32 + second.
    """

    entries: dict[int, int]
    arity: str = "unigram"
    total: int = field(default=0)

    def __post_init__(self):
        if self.arity not in ("unigram", "pair"):
            raise ValueError(f"arity must be unigram or pair, got {self.arity!r}")
        if self.total == 0:
            self.total = sum(self.entries.values())
        self.validate()

    def validate(self) -> None:
        if any(c < 1 for c in self.entries.values()):
            raise ValueError("all counts must be >= 1")
        if self.total != sum(self.entries.values()):
            raise ValueError("total does not match the sum of entries")
        limit = _KEY_LIMIT if self.arity == "pair" else _ID_LIMIT
        bad = [k for k in self.entries if not (0 <= k < limit)]
        if bad:
            raise ValueError(f"keys out of range for arity {self.arity}: {bad[:5]}")

    def merge(self, other: "CountTable") -> "CountTable":
        """Commutative merge; counting under sharding must equal sequential."""
        if other.arity != self.arity:
            raise ValueError("cannot merge tables of different arity")
        merged = dict(self.entries)
        for k, c in other.entries.items():
            merged[k] = merged.get(k, 0) + c
        return CountTable(merged, self.arity, self.total + other.total)

    def counts_array(self) -> np.ndarray:
        return np.fromiter(self.entries.values(), dtype=np.int64, count=len(self.entries))

    # --- CTB1 binary serialization: canonical (key-sorted) and diffable ---

    _MAGIC = b"CTB1"
    _ARITY_CODE = {"unigram": 0, "pair": 1}
    _ARITY_NAME = {0: "unigram", 1: "pair"}

    def write(self, path: str | Path) -> None:
        keys = sorted(self.entries)
        with open(path, "wb") as f:
            f.write(self._MAGIC)
            f.write(struct.pack("<B", self._ARITY_CODE[self.arity]))
            f.write(struct.pack("<Q", len(keys)))
            buf = np.empty(2 * len(keys), dtype="<u8")
            buf[0::2] = keys
            buf[1::2] = [self.entries[k] for k in keys]
            f.write(buf.tobytes())

    @classmethod
    def read(cls, path: str | Path) -> "CountTable":
        with open(path, "rb") as f:
            magic = f.read(4)
            if magic != cls._MAGIC:
                raise ValueError(f"{path}: bad magic {magic!r}, expected CTB1")
            (arity_code,) = struct.unpack("<B", f.read(1))
            if arity_code not in cls._ARITY_NAME:
                raise ValueError(f"{path}: unknown arity code {arity_code}")
            (n_entries,) = struct.unpack("<Q", f.read(8))
            raw = f.read(16 * n_entries)
            if len(raw) != 16 * n_entries:
                raise ValueError(f"{path}: truncated entry block")
        buf = np.frombuffer(raw, dtype="<u8")
        entries = {int(k): int(c) for k, c in zip(buf[0::2], buf[1::2])}
        if len(entries) != n_entries:
            raise ValueError(f"{path}: duplicate keys in entry block")
        return cls(entries, cls._ARITY_NAME[arity_code])


def _counts_or_raise(table: CountTable) -> np.ndarray:
    if not table.entries or table.total < 1:
        raise EmptyTable("entropy of an empty table is undefined")
    return table.counts_array()


def entropy_naive(table: CountTable) -> float:
    """Plug-in entropy estimate log N - (1/N) sum n_m log n_m, in nats."""
    counts = _counts_or_raise(table).astype(np.float64)
    n_total = float(table.total)
    value = math.log(n_total) - float(np.sum(counts * np.log(counts))) / n_total
    # exact algebra guarantees >= 0; clear rounding dust
    return 0.0 if -1e-12 < value < 0.0 else value


def entropy_grassberger(table: CountTable) -> float:
    """Bias-corrected entropy estimate log N - (1/N) sum n_m G(n_m), in nats."""
    counts = _counts_or_raise(table)
    n_total = float(table.total)
    g_vals = _g_of_counts(counts)
    return math.log(n_total) - float(np.sum(counts.astype(np.float64) * g_vals)) / n_total
