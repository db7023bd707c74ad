"""Rank-correlation statistics with permutation p-values.

Kendall tau-b, Spearman rho and Pearson r between a consistency ranking
and a ground-truth performance ranking.  Model sets in this setting hold
5 to 15 entries, where asymptotic p-value approximations are unreliable,
so every p-value is a two-sided permutation test on |coefficient|: full
enumeration of all n! orderings for n <= 8, otherwise 100,000 Monte-Carlo
permutations drawn from the counter-based generator with a fixed,
published seed.  Scalar coefficients are accumulated with ``math.fsum``
so the result does not depend on summation order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from cte import rng
from cte.errors import DegenerateStatisticError, ValidationError

PERM_SEED = 1729
MC_DRAWS = 100_000
EXACT_MAX_N = 8
P_TOL = 1e-12
_CHUNK = 25_000


def significance(p_value: float) -> str:
    """Star annotation: ** below 0.01, * below 0.05, empty otherwise."""
    if p_value < 0.01:
        return "**"
    if p_value < 0.05:
        return "*"
    return ""


@dataclass(frozen=True)
class CorrelationReport:
    n: int
    models: tuple[str, ...]
    kendall_tau: float
    kendall_p: float
    spearman_rho: float
    spearman_p: float
    pearson_r: float
    pearson_p: float
    method: str

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "models": list(self.models),
            "kendall_tau": {
                "coefficient": self.kendall_tau,
                "p_value": self.kendall_p,
                "significance": significance(self.kendall_p),
            },
            "spearman_rho": {
                "coefficient": self.spearman_rho,
                "p_value": self.spearman_p,
                "significance": significance(self.spearman_p),
            },
            "pearson_r": {
                "coefficient": self.pearson_r,
                "p_value": self.pearson_p,
                "significance": significance(self.pearson_p),
            },
            "method": self.method,
        }


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.size != y.size:
        raise ValidationError(f"score vectors must be 1-D and equal length, got {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValidationError(f"correlation needs at least 2 entries, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("score vectors must be finite")
    return x, y


def average_ranks(v: np.ndarray) -> np.ndarray:
    """1-based ranks, ties averaged.  Tied entries all get the mean position."""
    v = np.asarray(v, dtype=np.float64)
    uniq, inv, counts = np.unique(v, return_inverse=True, return_counts=True)
    # positions each value block occupies in sort order, averaged per block
    starts = np.zeros(len(uniq), dtype=np.float64)
    starts[1:] = np.cumsum(counts)[:-1]
    mean_rank = starts + (counts + 1) / 2.0
    return mean_rank[inv]


def _permutations(n: int, n_draws: int, seed: int, label: str):
    """Yield permutation index blocks: exact enumeration or seeded Monte-Carlo."""
    if n <= EXACT_MAX_N:
        perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
        total = perms.shape[0]
        for lo in range(0, total, _CHUNK):
            yield perms[lo : lo + _CHUNK]
    else:
        key = rng.derive_key(seed, "permtest", label)
        done = 0
        while done < n_draws:
            block = min(_CHUNK, n_draws - done)
            u = rng.uniforms(key, block * n, start=done * n).reshape(block, n)
            yield np.argsort(u, axis=1, kind="stable")
            done += block


def _perm_pvalue(coef_fn, n: int, obs_abs: float, seed: int, label: str) -> float:
    """Two-sided permutation p on |coefficient|.

    Exact for n <= 8 (p = hits / n!); Monte-Carlo otherwise with the
    add-one correction p = (1 + hits) / (1 + draws).
    """
    hits = 0
    total = 0
    for block in _permutations(n, MC_DRAWS, seed, label):
        coefs = coef_fn(block)
        hits += int(np.count_nonzero(np.abs(coefs) >= obs_abs - P_TOL))
        total += block.shape[0]
    if n <= EXACT_MAX_N:
        return hits / total
    return (1 + hits) / (1 + total)


def kendall_tau(x, y, seed: int = PERM_SEED) -> tuple[float, float]:
    """Tie-corrected Kendall tau-b with a permutation p-value.

    tau-b = (C - D) / sqrt(n_x * n_y) where C - D sums sign products over
    all index pairs and n_x, n_y count the pairs not tied in x and in y.
    Raises when either vector is entirely tied (zero denominator).
    """
    x, y = _pair(x, y)
    n = x.size
    i0, j0 = np.triu_indices(n, 1)
    sx = np.sign(x[i0] - x[j0])
    sy = np.sign(y[i0] - y[j0])
    n_x = int(np.count_nonzero(sx))
    n_y = int(np.count_nonzero(sy))
    if n_x == 0 or n_y == 0:
        which = "first" if n_x == 0 else "second"
        raise DegenerateStatisticError(f"all values tied in {which} vector; tau undefined")
    concordance = float(np.dot(sx, sy))  # integer-valued, exact in float64
    denom = math.sqrt(n_x * n_y)
    tau = concordance / denom

    def coef_fn(perms: np.ndarray) -> np.ndarray:
        yp = y[perms]
        syp = np.sign(yp[:, i0] - yp[:, j0])
        return (syp @ sx) / denom

    return tau, _perm_pvalue(coef_fn, n, abs(tau), seed, "kendall")


def _pearson_core(x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray, np.ndarray, float]:
    """Coefficient plus the centered vectors and denominator for reuse."""
    n = x.size
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    xc = x - mx
    yc = y - my
    sxx = math.fsum(v * v for v in xc)
    syy = math.fsum(v * v for v in yc)
    if sxx == 0.0 or syy == 0.0:
        which = "first" if sxx == 0.0 else "second"
        raise DegenerateStatisticError(f"zero variance in {which} vector; correlation undefined")
    sxy = math.fsum(a * b for a, b in zip(xc, yc))
    denom = math.sqrt(sxx * syy)
    return sxy / denom, xc, yc, denom


def _linear_pvalue(xc: np.ndarray, yc: np.ndarray, denom: float, obs: float, n: int,
                   seed: int, label: str) -> float:
    def coef_fn(perms: np.ndarray) -> np.ndarray:
        return (yc[perms] @ xc) / denom

    return _perm_pvalue(coef_fn, n, abs(obs), seed, label)


def spearman_rho(x, y, seed: int = PERM_SEED) -> tuple[float, float]:
    """Spearman rho: Pearson correlation of average ranks, permutation p."""
    x, y = _pair(x, y)
    rx = average_ranks(x)
    ry = average_ranks(y)
    try:
        rho, xc, yc, denom = _pearson_core(rx, ry)
    except DegenerateStatisticError as exc:
        raise DegenerateStatisticError(f"rank {exc}") from None
    return rho, _linear_pvalue(xc, yc, denom, rho, x.size, seed, "spearman")


def pearson_r(x, y, seed: int = PERM_SEED) -> tuple[float, float]:
    """Sample Pearson correlation with a permutation p-value."""
    x, y = _pair(x, y)
    r, xc, yc, denom = _pearson_core(x, y)
    return r, _linear_pvalue(xc, yc, denom, r, x.size, seed, "pearson")


def evaluate(ranking_scores: dict, performance: dict, seed: int = PERM_SEED) -> CorrelationReport:
    """All three statistics between a CTE map and a performance map.

    The two mappings must cover the identical model set (at least 3
    models); vectors are aligned by sorted model id, which none of the
    statistics is sensitive to.
    """
    keys_x = set(ranking_scores)
    keys_y = set(performance)
    if keys_x != keys_y:
        missing = sorted(keys_x ^ keys_y)
        raise ValidationError(f"model sets disagree between scores and performance: {missing}")
    if len(keys_x) < 3:
        raise ValidationError(f"evaluation needs at least 3 models, got {len(keys_x)}")
    models = tuple(sorted(keys_x))
    x = np.array([float(ranking_scores[m]) for m in models])
    y = np.array([float(performance[m]) for m in models])
    tau, tau_p = kendall_tau(x, y, seed=seed)
    rho, rho_p = spearman_rho(x, y, seed=seed)
    r, r_p = pearson_r(x, y, seed=seed)
    n = len(models)
    if n <= EXACT_MAX_N:
        scheme = f"exact enumeration of all {math.factorial(n)} orderings"
    else:
        scheme = f"{MC_DRAWS} Monte-Carlo permutations, seed {seed}"
    method = (
        "tau-b with tie correction; Spearman on average ranks; "
        f"two-sided permutation p-values on |coefficient| ({scheme})"
    )
    return CorrelationReport(
        n=n,
        models=models,
        kendall_tau=tau,
        kendall_p=tau_p,
        spearman_rho=rho,
        spearman_p=rho_p,
        pearson_r=r,
        pearson_p=r_p,
        method=method,
    )


def scatter_svg(
    x: list[float],
    y: list[float],
    labels: list[str],
    x_label: str = "consistency score",
    y_label: str = "performance",
    title: str = "",
) -> str:
    """Static scatter plot, one labelled point per model.

    Hand-rolled SVG so output is a pure function of the inputs
    (byte-identical across runs and platforms).
    """
    if not (len(x) == len(y) == len(labels)) or not x:
        raise ValidationError("scatter needs equally many x, y and labels")
    width, height = 640, 480
    ml, mr, mt, mb = 70, 24, 36, 56
    span_x = _axis_span(min(x), max(x))
    span_y = _axis_span(min(y), max(y))

    def px(v: float) -> float:
        return ml + (v - span_x[0]) / (span_x[1] - span_x[0]) * (width - ml - mr)

    def py(v: float) -> float:
        return height - mb - (v - span_y[0]) / (span_y[1] - span_y[0]) * (height - mt - mb)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" '
        'stroke="black" stroke-width="1"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black" stroke-width="1"/>',
    ]
    for k in range(5):
        vx = span_x[0] + k * (span_x[1] - span_x[0]) / 4
        vy = span_y[0] + k * (span_y[1] - span_y[0]) / 4
        tx, ty = px(vx), py(vy)
        parts.append(
            f'<line x1="{tx:.2f}" y1="{height - mb}" x2="{tx:.2f}" y2="{height - mb + 5}" '
            'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{tx:.2f}" y="{height - mb + 18}" font-size="11" text-anchor="middle" '
            f'font-family="sans-serif">{vx:.4g}</text>'
        )
        parts.append(
            f'<line x1="{ml - 5}" y1="{ty:.2f}" x2="{ml}" y2="{ty:.2f}" '
            'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{ml - 8}" y="{ty + 4:.2f}" font-size="11" text-anchor="end" '
            f'font-family="sans-serif">{vy:.4g}</text>'
        )
    for xv, yv, name in zip(x, y, labels):
        cx, cy = px(float(xv)), py(float(yv))
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="4" fill="#2c6fbb"/>')
        parts.append(
            f'<text x="{cx + 6:.2f}" y="{cy - 6:.2f}" font-size="10" '
            f'font-family="sans-serif">{_svg_escape(name)}</text>'
        )
    parts.append(
        f'<text x="{(ml + width - mr) / 2:.2f}" y="{height - 12}" font-size="13" '
        f'text-anchor="middle" font-family="sans-serif">{_svg_escape(x_label)}</text>'
    )
    parts.append(
        f'<text x="16" y="{(mt + height - mb) / 2:.2f}" font-size="13" text-anchor="middle" '
        f'font-family="sans-serif" transform="rotate(-90 16 {(mt + height - mb) / 2:.2f})">'
        f"{_svg_escape(y_label)}</text>"
    )
    if title:
        parts.append(
            f'<text x="{width / 2:.2f}" y="22" font-size="14" text-anchor="middle" '
            f'font-family="sans-serif">{_svg_escape(title)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _axis_span(lo: float, hi: float) -> tuple[float, float]:
    if lo == hi:
        pad = 0.5 if lo == 0 else abs(lo) * 0.1
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.06
    return lo - pad, hi + pad


def _svg_escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
