"""Counter-based random streams built on the splitmix64 finalizer.

All randomness in the toolkit flows through these streams.  Output ``i``
of a stream is a pure function of ``(key, i)``, so any slice of a stream
can be regenerated without state, in any order, on any platform.  Keys
are derived by folding integer or string labels into a 64-bit value;
strings are hashed with BLAKE2b-64 so the mapping is stable across
processes and languages.

The generator is pinned by frozen vectors in ``tests/data/rng_vectors.json``
(mirrored at ``docs/rng-test-vectors.json``); a reimplementation that
reproduces those vectors reproduces every noise field and every sampled
strength byte-for-byte.

Layout of one 64-bit draw:

    state_i = key + (i + 1) * GOLDEN          (mod 2^64)
    out_i   = mix64(state_i)

where ``mix64`` is the splitmix64 finalizer and GOLDEN is 2^64 / phi.
Doubles in [0, 1) take the top 53 bits; normal deviates come from the
Box-Muller transform on consecutive pairs of open-interval uniforms.
"""

from __future__ import annotations

import hashlib

import numpy as np

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
    """Fold ``labels`` into ``seed``, producing an independent stream key.

    Distinct label sequences give (for all practical purposes) distinct,
    uncorrelated streams; the same sequence always gives the same key.
    """
    key = mix64(seed)
    for label in labels:
        key = mix64(((key + GOLDEN) & _MASK64) ^ _label_to_u64(label))
    return key


def raw_uint64(key: int, count: int, start: int = 0) -> np.ndarray:
    """Outputs ``start .. start+count-1`` of the stream, as uint64."""
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(key & _MASK64) + idx * np.uint64(GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX_A)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX_B)
        z = z ^ (z >> np.uint64(31))
    return z


def uniforms(key: int, count: int, start: int = 0) -> np.ndarray:
    """Doubles in [0, 1), 53-bit resolution."""
    return (raw_uint64(key, count, start) >> np.uint64(11)) * 2.0**-53


def _open_uniforms(key: int, count: int, start: int = 0) -> np.ndarray:
    # (0, 1): offset by half an ulp so log() below never sees zero.
    return ((raw_uint64(key, count, start) >> np.uint64(11)) + 0.5) * 2.0**-53


def normals(key: int, count: int) -> np.ndarray:
    """Standard normal deviates via Box-Muller on stream pairs.

    Draw ``2k``/``2k+1`` consume uniforms ``2k``/``2k+1``, so the mapping
    from stream position to deviate is fixed regardless of ``count``.
    """
    pairs = (count + 1) // 2
    u = _open_uniforms(key, 2 * pairs)
    r = np.sqrt(-2.0 * np.log(u[0::2]))
    theta = (2.0 * np.pi) * u[1::2]
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:count]


def normal_field(key: int, shape: tuple[int, ...]) -> np.ndarray:
    """Standard normal field of the given shape, C-order filled."""
    return normals(key, int(np.prod(shape))).reshape(shape)


def uniform_in(key: int, lo: float, hi: float, count: int = 1) -> np.ndarray:
    """Uniform doubles in [lo, hi]; a degenerate range returns exactly ``lo``."""
    return lo + (hi - lo) * uniforms(key, count)


def permutation_matrix(key: int, n_perms: int, n: int) -> np.ndarray:
    """``n_perms`` independent permutations of ``range(n)``, one per row.

    Each row is the argsort of ``n`` fresh uniforms, which is an unbiased
    shuffle (ties have probability zero at 53-bit resolution).
    """
    u = uniforms(key, n_perms * n).reshape(n_perms, n)
    return np.argsort(u, axis=1, kind="stable")
