"""Counter-based random stream compatible with the cte toolkit.

The cte package publishes frozen vectors for its splitmix64 stream at
``docs/rng-test-vectors.json``; this module reimplements that stream so
dropout masks and sampled rates are reproducible without importing the
toolkit.  Output ``i`` is a pure function of ``(key, i)``:

    out_i = mix64(key + (i + 1) * GOLDEN)     (mod 2^64)

Doubles take the top 53 bits.  The adapter only ever needs a handful of
draws per layer, so everything here is scalar Python.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX_A) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & _MASK64
    return z ^ (z >> 31)


def _label_to_u64(label: int | str) -> int:
    if isinstance(label, int):
        return label & _MASK64
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_key(seed: int, *labels: int | str) -> int:
    """Fold labels into a seed, producing an independent stream key."""
    key = mix64(seed)
    for label in labels:
        key = mix64(((key + GOLDEN) & _MASK64) ^ _label_to_u64(label))
    return key


def uniforms(key: int, count: int, start: int = 0) -> list[float]:
    """Stream doubles in [0, 1), 53-bit resolution."""
    out = []
    for i in range(start, start + count):
        raw = mix64((key + (i + 1) * GOLDEN) & _MASK64)
        out.append((raw >> 11) * 2.0**-53)
    return out


def uniform_in(lo: float, hi: float, key: int) -> float:
    """One double in [lo, hi); a degenerate range returns exactly lo."""
    if hi == lo:
        return lo
    return lo + (hi - lo) * uniforms(key, 1)[0]
