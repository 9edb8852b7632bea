"""Gaussian-bridge stopping rule and robust noise scale."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import DegenerateScaleError
from .linop import apply, blocked_gram, build_difference_operator, last_inverse_diagonal, solve_gram

SERIES_TOL = 1e-14
MAX_TERMS = 200


@dataclass(frozen=True)
class StoppingConfig:
    """``sigma=None`` means: estimate it from the data by MAD."""

    alpha: float = 0.05
    sigma: float | None = None
    series_tol: float = SERIES_TOL
    max_terms: int = MAX_TERMS
    per_block: bool = False

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class BridgeScale:
    k: int
    S2: float


def _half_series(x: float, S2: float, tol: float = SERIES_TOL, max_terms: int = MAX_TERMS) -> float:
    # sum_{i>=1} (-1)^(i+1) exp(-2 i^2 x^2 / S2)
    total = 0.0
    for i in range(1, max_terms + 1):
        term = math.exp(-2.0 * i * i * x * x / S2)
        total += term if i % 2 else -term
        if term < tol:
            break
    return total


def excursion_prob(x: float, S2: float = 1.0, tol: float = SERIES_TOL, max_terms: int = MAX_TERMS) -> float:
    """Probability that the scaled bridge's sup-norm exceeds ``x``."""
    if S2 <= 0:
        raise ValueError("S2 must be positive")
    if x <= 0:
        return 1.0
    z = x / math.sqrt(S2)
    if z < 0.6:
        # the alternating series converges slowly here; use the dual theta form
        inside = 0.0
        for k in range(1, max_terms + 1):
            term = math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8.0 * z * z))
            inside += term
            if term < tol:
                break
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / z * inside))
    return min(1.0, max(0.0, 2.0 * _half_series(x, S2, tol, max_terms)))


def threshold_x_alpha(alpha: float, S2: float = 1.0, tol: float = 1e-10) -> float:
    """Solve ``excursion_prob(x, S2) = alpha`` by bisection on ``[0, 10 sqrt(S2)]``."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    lo, hi = 0.0, 10.0 * math.sqrt(S2)
    f = lambda x: excursion_prob(x, S2) - alpha  # noqa: E731
    if f(hi) > 0:
        raise ArithmeticError(f"no bracket for alpha={alpha}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bridge_scale(state) -> BridgeScale:
    """``k = m - |A|`` and the last diagonal entry of the interior Gram inverse."""
    gram = blocked_gram(state.op, state.boundary)
    S2 = last_inverse_diagonal(gram) if gram.blocks else 0.0
    return BridgeScale(gram.size, S2)


def stop_threshold(sigma: float, alpha: float, k: int, r: int, S2: float) -> float:
    return sigma * threshold_x_alpha(alpha, S2) * (k - r) ** ((2 * r + 1) / 2)


def should_stop(state, y=None, cfg: StoppingConfig = StoppingConfig(), sigma: float | None = None) -> bool:
    """True when the interior stochastic term stays below the bridge threshold.

    ``y`` defaults to the state's own signal; the interior intercept ``a`` is
    exactly ``M y`` so it is reused when ``y`` is the path's signal.
    """
    sigma = cfg.sigma if sigma is None else sigma
    if sigma is None:
        raise ValueError("a noise scale is required; estimate it with estimate_sigma_mad")
    r = state.op.r
    gram = blocked_gram(state.op, state.boundary)
    if y is None or y is state.y:
        ust = state.a
    else:
        ust = solve_gram(gram, apply(state.op, np.asarray(y, float))[gram.interior])
    if cfg.per_block:
        return _should_stop_blocks(gram, ust, sigma, cfg)
    scale = BridgeScale(gram.size, last_inverse_diagonal(gram) if gram.blocks else 0.0)
    if scale.k <= r:
        return True
    stat = float(np.max(np.abs(ust))) if ust.size else 0.0
    return stat <= stop_threshold(sigma, cfg.alpha, scale.k, r, scale.S2)


def _should_stop_blocks(gram, ust, sigma, cfg) -> bool:
    r = gram.op.r
    for j, (start, size) in enumerate(zip(gram.offsets.tolist(), gram.block_sizes.tolist())):
        if size <= r:
            continue
        block = ust[start:start + size]
        S2 = last_inverse_diagonal(gram, j)
        if np.max(np.abs(block)) > stop_threshold(sigma, cfg.alpha, size, r, S2):
            return False
    return True


def estimate_sigma_mad(y, r: int) -> float:
    """Robust noise scale from the median absolute ``(r+1)``-th difference."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] < r + 3:
        raise ValueError(f"need at least {r + 3} samples to estimate sigma at order {r}")
    med = float(np.median(np.abs(apply(build_difference_operator(y.shape[0], r), y))))
    sigma = med / (math.sqrt(math.comb(2 * r + 2, r + 1)) * norm.ppf(0.75))
    if not sigma > 0:
        raise DegenerateScaleError(
            "the median absolute difference is zero; supply sigma explicitly"
        )
    return sigma
