"""Regenerate the frozen RNG test vectors.

Computes every value with plain Python integers and the math module,
independently of the package's vectorized implementation.  Integer and
uniform blocks are exact by construction; normal deviates go through
libm (log/cos/sin) and are compared with a 1e-12 relative tolerance.

Usage: python3 tools/make_rng_vectors.py
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX_A = 0xBF58476D1CE4E5B9
MIX_B = 0x94D049BB133111EB


def mix64(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * MIX_A) & MASK
    z = ((z ^ (z >> 27)) * MIX_B) & MASK
    return z ^ (z >> 31)


def label_u64(label: int | str) -> int:
    if isinstance(label, int):
        return label & MASK
    return int.from_bytes(
        hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest(), "little"
    )


def derive_key(seed: int, *labels: int | str) -> int:
    key = mix64(seed)
    for label in labels:
        key = mix64(((key + GOLDEN) & MASK) ^ label_u64(label))
    return key


def raw(key: int, count: int, start: int = 0) -> list[int]:
    return [mix64(key + (start + i + 1) * GOLDEN) for i in range(count)]


def uniform(key: int, count: int, start: int = 0) -> list[float]:
    return [(x >> 11) * 2.0**-53 for x in raw(key, count, start)]


def open_uniform(key: int, count: int) -> list[float]:
    return [((x >> 11) + 0.5) * 2.0**-53 for x in raw(key, count)]


def normals(key: int, count: int) -> list[float]:
    pairs = (count + 1) // 2
    u = open_uniform(key, 2 * pairs)
    out: list[float] = []
    for k in range(pairs):
        r = math.sqrt(-2.0 * math.log(u[2 * k]))
        theta = (2.0 * math.pi) * u[2 * k + 1]
        out.append(r * math.cos(theta))
        out.append(r * math.sin(theta))
    return out[:count]


def hx(v: int) -> str:
    return f"0x{v:016X}"


def main() -> None:
    keys = {
        "k_base": derive_key(0),
        "k_seed7": derive_key(7),
        "k_labeled": derive_key(7, "alpha", 3),
        "k_strength": derive_key(42, "strength", "img003"),
    }
    doc = {
        "comment": (
            "Frozen vectors for the counter-based generator: "
            "out_i = splitmix64_finalizer(key + (i+1)*GOLDEN). "
            "Integer and uniform values must match bit-for-bit; normal "
            "deviates pass through libm and allow 1e-12 relative error."
        ),
        "golden": hx(GOLDEN),
        "mix64": [
            {"input": hx(z), "output": hx(mix64(z))}
            for z in (0, 1, 2, 0x0123456789ABCDEF, MASK)
        ],
        "derive_key": [
            {"seed": 0, "labels": [], "key": hx(derive_key(0))},
            {"seed": 7, "labels": [], "key": hx(derive_key(7))},
            {"seed": 7, "labels": ["alpha", 3], "key": hx(derive_key(7, "alpha", 3))},
            {
                "seed": 42,
                "labels": ["strength", "img003"],
                "key": hx(derive_key(42, "strength", "img003")),
            },
            {
                "seed": 7,
                "labels": ["toymodel", "m0", "img000"],
                "key": hx(derive_key(7, "toymodel", "m0", "img000")),
            },
        ],
        "raw_uint64": [
            {
                "key": hx(keys["k_seed7"]),
                "start": 0,
                "values": [hx(v) for v in raw(keys["k_seed7"], 8)],
            },
            {
                "key": hx(keys["k_seed7"]),
                "start": 5,
                "values": [hx(v) for v in raw(keys["k_seed7"], 4, 5)],
            },
            {
                "key": hx(keys["k_labeled"]),
                "start": 0,
                "values": [hx(v) for v in raw(keys["k_labeled"], 8)],
            },
        ],
        "uniforms": [
            {
                "key": hx(keys["k_seed7"]),
                "start": 0,
                "values": uniform(keys["k_seed7"], 8),
            },
            {
                "key": hx(keys["k_strength"]),
                "start": 0,
                "values": uniform(keys["k_strength"], 8),
            },
        ],
        "normals": [
            {"key": hx(keys["k_seed7"]), "values": normals(keys["k_seed7"], 8)},
            {"key": hx(keys["k_labeled"]), "values": normals(keys["k_labeled"], 7)},
        ],
        "uniform_in": [
            {
                "key": hx(keys["k_strength"]),
                "lo": 0.01,
                "hi": 0.03,
                "values": [
                    0.01 + (0.03 - 0.01) * u for u in uniform(keys["k_strength"], 4)
                ],
            },
            {
                "key": hx(keys["k_strength"]),
                "lo": 0.25,
                "hi": 0.25,
                "values": [0.25, 0.25, 0.25, 0.25],
            },
        ],
    }
    text = json.dumps(doc, indent=2) + "\n"
    root = Path(__file__).resolve().parent.parent
    (root / "tests" / "data" / "rng_vectors.json").write_text(text)
    (root / "docs" / "rng-test-vectors.json").write_text(text)
    print("wrote", root / "tests" / "data" / "rng_vectors.json")
    print("wrote", root / "docs" / "rng-test-vectors.json")


if __name__ == "__main__":
    main()
