"""Counter-based RNG: frozen vectors, pure-Python reference, stream laws."""

import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cte import rng

VECTORS = json.loads(
    (Path(__file__).parent / "data" / "rng_vectors.json").read_text()
)

MASK = (1 << 64) - 1


# Independent scalar reference, (re)stated here so the test does not
# trust the vectorized code it is checking.

def ref_mix64(z):
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def ref_stream(key, count, start=0):
    return [ref_mix64(key + (start + i + 1) * rng.GOLDEN) for i in range(count)]


def test_mix64_frozen():
    for row in VECTORS["mix64"]:
        assert rng.mix64(int(row["input"], 16)) == int(row["output"], 16)


def test_derive_key_frozen():
    for row in VECTORS["derive_key"]:
        labels = [l if isinstance(l, int) else str(l) for l in row["labels"]]
        assert rng.derive_key(row["seed"], *labels) == int(row["key"], 16)


def test_raw_uint64_frozen():
    for row in VECTORS["raw_uint64"]:
        got = rng.raw_uint64(int(row["key"], 16), len(row["values"]), row["start"])
        assert got.dtype == np.uint64
        assert [int(v) for v in got] == [int(v, 16) for v in row["values"]]


def test_uniforms_frozen():
    for row in VECTORS["uniforms"]:
        got = rng.uniforms(int(row["key"], 16), len(row["values"]), row["start"])
        assert got.tolist() == row["values"]


def test_normals_frozen():
    # libm-dependent, hence tolerance instead of bit equality.
    for row in VECTORS["normals"]:
        got = rng.normals(int(row["key"], 16), len(row["values"]))
        assert np.allclose(got, row["values"], rtol=1e-12, atol=0)


def test_uniform_in_frozen():
    for row in VECTORS["uniform_in"]:
        got = rng.uniform_in(
            int(row["key"], 16), row["lo"], row["hi"], len(row["values"])
        )
        assert got.tolist() == row["values"]


@given(st.integers(min_value=0, max_value=MASK))
def test_mix64_matches_reference(z):
    assert rng.mix64(z) == ref_mix64(z)


@given(
    st.integers(min_value=0, max_value=MASK),
    st.integers(min_value=0, max_value=100),
    st.integers(min_value=1, max_value=50),
)
@settings(max_examples=50)
def test_raw_stream_matches_reference(key, start, count):
    got = rng.raw_uint64(key, count, start)
    assert [int(v) for v in got] == ref_stream(key, count, start)


@given(st.integers(min_value=0, max_value=MASK), st.integers(min_value=1, max_value=64))
@settings(max_examples=30)
def test_slices_are_position_stable(key, count):
    """Any slice of a stream equals the same positions of a longer run."""
    full = rng.raw_uint64(key, count + 16)
    for start in (0, 1, 7):
        part = rng.raw_uint64(key, count, start)
        assert np.array_equal(part, full[start : start + count])


def test_derive_key_string_folding_is_blake2b():
    digest = hashlib.blake2b(b"img003", digest_size=8).digest()
    folded = int.from_bytes(digest, "little")
    key = rng.mix64(7)
    key = rng.mix64(((key + rng.GOLDEN) & MASK) ^ folded)
    assert rng.derive_key(7, "img003") == key


def test_derive_key_distinguishes_label_order():
    assert rng.derive_key(0, "a", "b") != rng.derive_key(0, "b", "a")
    assert rng.derive_key(0, "ab") != rng.derive_key(0, "a", "b")
    assert rng.derive_key(1) != rng.derive_key(2)


def test_uniforms_are_53_bit_dyadics():
    u = rng.uniforms(rng.derive_key(3), 1000)
    assert np.all(u >= 0.0) and np.all(u < 1.0)
    assert np.all(u * 2.0**53 == np.floor(u * 2.0**53))


def test_normals_pairing_independent_of_count():
    """Deviate k is the same whether 5 or 50 are requested."""
    key = rng.derive_key(11, "pairing")
    long = rng.normals(key, 50)
    for count in (1, 2, 3, 5, 49):
        assert np.array_equal(rng.normals(key, count), long[:count])


def test_normals_match_scalar_box_muller():
    key = rng.derive_key(5, "bm")
    u = [((int(x) >> 11) + 0.5) * 2.0**-53 for x in rng.raw_uint64(key, 8)]
    expect = []
    for k in range(4):
        r = math.sqrt(-2.0 * math.log(u[2 * k]))
        theta = 2.0 * math.pi * u[2 * k + 1]
        expect.extend([r * math.cos(theta), r * math.sin(theta)])
    assert np.allclose(rng.normals(key, 8), expect, rtol=1e-12, atol=0)


def test_normals_moments():
    x = rng.normals(rng.derive_key(17, "moments"), 200_000)
    assert abs(x.mean()) < 0.01
    assert abs(x.std() - 1.0) < 0.01


def test_normal_field_shape_and_order():
    key = rng.derive_key(2, "field")
    field = rng.normal_field(key, (6, 7))
    assert field.shape == (6, 7)
    assert np.array_equal(field.ravel(), rng.normals(key, 42))


def test_uniform_in_degenerate_range_is_exact():
    got = rng.uniform_in(rng.derive_key(9), 0.3, 0.3, 5)
    assert np.all(got == 0.3)


def test_uniform_in_bounds():
    got = rng.uniform_in(rng.derive_key(9, "b"), -2.0, 3.5, 10_000)
    assert np.all(got >= -2.0) and np.all(got <= 3.5)


def test_permutation_matrix_rows_are_permutations():
    mat = rng.permutation_matrix(rng.derive_key(1, "perm"), 200, 7)
    assert mat.shape == (200, 7)
    ident = np.arange(7)
    for row in mat:
        assert np.array_equal(np.sort(row), ident)
    # Not all rows equal: the shuffle actually shuffles.
    assert len({tuple(r) for r in mat}) > 100
