"""Difference operators and the structured linear algebra behind the dual path.

Every matrix the path needs is built from the ``(r+1)``-th order difference
operator ``D`` (shape ``m x n`` with ``m = n - r - 1``). ``D`` is never stored
densely: it is represented by its stencil, applied by correlation, and its
Gram matrix ``D D^T`` is a banded Toeplitz matrix whose entries are signed
binomial coefficients.

Removing the rows of an augmented boundary set splits ``D_{-A} D_{-A}^T`` into
independent diagonal blocks, each equal to a leading principal submatrix of
``D D^T``. The Cholesky factor of a leading principal submatrix is the leading
block of the full factor, so a single banded factorization serves every block
of every boundary set that can occur on the path. Pinned coordinates (single
removed rows) are the exception; see :class:`BlockedGram`.

Coordinates are 0-based throughout this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .errors import DimensionError, GramFactorError, NonFiniteError, SignalTooShortError


def run_offsets(r: int) -> tuple[int, int]:
    """Return ``(r_a, r_b)`` for polynomial order ``r``.

    ``r_a = floor((r+1)/2)`` coordinates follow a change coordinate inside its
    augmented run and ``r_b = ceil((r+1)/2) - 1`` precede it.
    """
    r_a = (r + 1) // 2
    r_b = (r + 2) // 2 - 1
    return r_a, r_b


def difference_stencil(r: int) -> np.ndarray:
    """Signed binomial stencil of the ``(r+1)``-th forward difference.

    Coefficient ``k`` multiplies ``v[i + k]``; for ``r = 0`` this is ``(-1, 1)``.
    """
    q = r + 1
    return np.array([(-1) ** (q - k) * comb(q, k) for k in range(q + 1)], dtype=np.int64)


@dataclass(frozen=True)
class DifferenceOperator:
    """The ``(r+1)``-th order difference matrix for signals of length ``n``."""

    n: int
    r: int

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"polynomial order must be >= 0, got {self.r}")
        if self.n < self.r + 2:
            raise SignalTooShortError(
                f"signal of length {self.n} is too short for order r={self.r}; "
                f"need at least {self.r + 2} samples"
            )

    @property
    def m(self) -> int:
        return self.n - self.r - 1

    @property
    def rows(self) -> int:
        return self.m

    @cached_property
    def band(self) -> np.ndarray:
        return difference_stencil(self.r)

    @cached_property
    def _band_float(self) -> np.ndarray:
        return self.band.astype(float)

    @cached_property
    def gram_band(self) -> np.ndarray:
        """``D D^T`` in LAPACK upper banded storage, shape ``(r+2, m)``."""
        u = self.r + 1
        ab = np.zeros((u + 1, self.m))
        for row in range(u + 1):
            offset = u - row
            ab[row, offset:] = gram_entry(self.r, 0, offset)
        return ab

    @cached_property
    def gram_factor(self) -> np.ndarray:
        """Upper banded Cholesky factor of the full ``D D^T``."""
        try:
            factor = cholesky_banded(self.gram_band, lower=False)
        except np.linalg.LinAlgError as exc:
            raise GramFactorError(
                f"D D^T is not numerically positive definite for n={self.n}, r={self.r}"
            ) from exc
        if not np.all(np.isfinite(factor)):
            raise GramFactorError("non-finite Cholesky factor")
        return factor

    def dense(self) -> np.ndarray:
        """Dense ``m x n`` matrix. Intended for tests and small diagnostics only."""
        out = np.zeros((self.m, self.n))
        for k, c in enumerate(self.band):
            out[np.arange(self.m), np.arange(self.m) + k] = c
        return out


def build_difference_operator(n: int, r: int) -> DifferenceOperator:
    return DifferenceOperator(int(n), int(r))


def apply(op: DifferenceOperator, v) -> np.ndarray:
    """Compute ``D v``; ``out[i] = sum_k stencil[k] * v[i + k]``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (op.n,):
        raise DimensionError(f"expected vector of length {op.n}, got shape {v.shape}")
    return np.correlate(v, op._band_float, mode="valid")


def apply_transpose(op: DifferenceOperator, w) -> np.ndarray:
    """Compute ``D^T w`` for ``w`` of length ``m``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (op.m,):
        raise DimensionError(f"expected vector of length {op.m}, got shape {w.shape}")
    return np.convolve(w, op._band_float, mode="full")


def gram_entry(r: int, i: int, j: int) -> int:
    """Entry ``(i, j)`` of ``D D^T``: ``(-1)^(i-j) * C(2r+2, r+1+i-j)`` inside the band."""
    d = i - j
    if abs(d) > r + 1:
        return 0
    return (-1) ** abs(d) * comb(2 * r + 2, r + 1 + d)


@dataclass(frozen=True)
class AugmentedBoundary:
    """Boundary and augmented boundary sets of the dual path.

    The sets are stored as change coordinates with a sign each, plus optional
    pinned coordinates. A change at dual coordinate ``tau`` contributes the run
    ``tau - r_b .. tau`` to the boundary set B and ``tau - r_b .. tau + r_a`` to
    the augmented set A, all carrying the change's sign. A pinned coordinate is
    a single coordinate held at the box boundary without forming a change point
    (used when a coordinate hits the box too close to an existing run or to the
    edge of the dual vector to host a run of its own). Pins belong to A only.
    """

    m: int
    r: int
    changes: tuple[tuple[int, int], ...] = ()
    pins: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        changes = tuple(sorted((int(t), int(s)) for t, s in self.changes))
        pins = tuple(sorted((int(t), int(s)) for t, s in self.pins))
        object.__setattr__(self, "changes", changes)
        object.__setattr__(self, "pins", pins)
        taken = np.zeros(self.m, dtype=bool)
        r_a, r_b = run_offsets(self.r)
        for tau, s in changes:
            if s not in (-1, 0, 1):
                raise ValueError(f"sign must be -1, 0 or 1, got {s}")
            lo, hi = tau - r_b, tau + r_a
            if lo < 0 or hi >= self.m:
                raise ValueError(f"run of change {tau} leaves the dual range [0, {self.m})")
            if taken[lo:hi + 1].any():
                raise ValueError(f"run of change {tau} overlaps another run")
            taken[lo:hi + 1] = True
        for i, s in pins:
            if s not in (-1, 1):
                raise ValueError(f"pin sign must be -1 or 1, got {s}")
            if not 0 <= i < self.m or taken[i]:
                raise ValueError(f"invalid pinned coordinate {i}")
            taken[i] = True

    @property
    def r_a(self) -> int:
        return run_offsets(self.r)[0]

    @property
    def r_b(self) -> int:
        return run_offsets(self.r)[1]

    @property
    def taus(self) -> np.ndarray:
        return np.array([t for t, _ in self.changes], dtype=np.int64)

    @property
    def change_signs(self) -> np.ndarray:
        return np.array([s for _, s in self.changes], dtype=np.int64)

    @cached_property
    def _sign_map(self) -> np.ndarray:
        # sign per dual coordinate; 2 marks "not in A"
        out = np.full(self.m, 2, dtype=np.int64)
        r_a, r_b = self.r_a, self.r_b
        for tau, s in self.changes:
            out[tau - r_b:tau + r_a + 1] = s
        for i, s in self.pins:
            out[i] = s
        return out

    @cached_property
    def augmented(self) -> np.ndarray:
        return np.flatnonzero(self._sign_map != 2)

    @cached_property
    def signs_a(self) -> np.ndarray:
        return self._sign_map[self.augmented]

    @cached_property
    def boundary(self) -> np.ndarray:
        r_b = self.r_b
        idx = [np.arange(t - r_b, t + 1) for t, _ in self.changes]
        return np.concatenate(idx) if idx else np.zeros(0, dtype=np.int64)

    @cached_property
    def signs_b(self) -> np.ndarray:
        sg = [np.full(self.r_b + 1, s) for _, s in self.changes]
        return np.concatenate(sg).astype(np.int64) if sg else np.zeros(0, dtype=np.int64)

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self._sign_map == 2)

    @cached_property
    def signs_full(self) -> np.ndarray:
        """Length-``m`` vector holding ``s_A`` on A and zero elsewhere."""
        out = np.where(self._sign_map == 2, 0, self._sign_map)
        return out.astype(float)

    @cached_property
    def blocks(self) -> list[tuple[int, int]]:
        """Maximal runs of consecutive interior coordinates as ``(start, stop)``."""
        inside = self._sign_map == 2
        edges = np.diff(np.concatenate(([0], inside.astype(np.int8), [0])))
        starts = np.flatnonzero(edges == 1)
        stops = np.flatnonzero(edges == -1)
        return list(zip(starts.tolist(), stops.tolist()))

    def is_augmented(self, i: int) -> bool:
        return bool(self._sign_map[i] != 2)

    def run_fits(self, tau: int) -> bool:
        lo, hi = tau - self.r_b, tau + self.r_a
        if lo < 0 or hi >= self.m:
            return False
        return bool(np.all(self._sign_map[lo:hi + 1] == 2))

    def change_containing(self, coord: int) -> int | None:
        """Change coordinate whose boundary run contains ``coord``."""
        for tau, _ in self.changes:
            if tau - self.r_b <= coord <= tau:
                return tau
        return None

    def with_change(self, tau: int, sign: int) -> AugmentedBoundary:
        return AugmentedBoundary(self.m, self.r, self.changes + ((tau, sign),), self.pins)

    def without_change(self, tau: int) -> AugmentedBoundary:
        kept = tuple(c for c in self.changes if c[0] != tau)
        if len(kept) == len(self.changes):
            raise KeyError(tau)
        return AugmentedBoundary(self.m, self.r, kept, self.pins)

    def with_sign(self, tau: int, sign: int) -> AugmentedBoundary:
        changes = tuple((t, sign if t == tau else s) for t, s in self.changes)
        return AugmentedBoundary(self.m, self.r, changes, self.pins)

    def with_pin(self, i: int, sign: int) -> AugmentedBoundary:
        return AugmentedBoundary(self.m, self.r, self.changes, self.pins + ((i, sign),))

    def key(self) -> tuple:
        return (tuple(self.augmented.tolist()), tuple(self.signs_a.tolist()))


def empty_boundary(op: DifferenceOperator) -> AugmentedBoundary:
    return AugmentedBoundary(op.m, op.r)


@dataclass(frozen=True)
class BlockedGram:
    """Block-diagonal ``D_{-A} D_{-A}^T`` with one banded factor per block.

    Two interior coordinates interact when they are at most ``r + 1`` apart,
    so a block is a maximal group of interior coordinates whose consecutive
    gaps are at most ``r + 1``. A gap-free block is a leading principal
    submatrix of ``D D^T`` and its factor is a slice of the full factor; a
    block with holes (left by pinned coordinates) is factored on its own.
    """

    op: DifferenceOperator
    interior: np.ndarray
    offsets: np.ndarray = field(repr=False)
    block_sizes: np.ndarray = field(repr=False)
    blocks: tuple[np.ndarray, ...] = field(repr=False, default=())

    @property
    def size(self) -> int:
        return int(self.block_sizes.sum())

    def dense(self) -> np.ndarray:
        """Assemble the ``k x k`` block-diagonal matrix (test helper)."""
        k = self.size
        out = np.zeros((k, k))
        r = self.op.r
        for start, size in zip(self.offsets.tolist(), self.block_sizes.tolist()):
            idx = self.interior[start:start + size]
            for i in range(size):
                for j in range(size):
                    out[start + i, start + j] = gram_entry(r, int(idx[i]), int(idx[j]))
        return out


def _band_of(r: int, idx: np.ndarray) -> np.ndarray:
    u = r + 1
    size = idx.size
    ab = np.zeros((u + 1, size))
    for off in range(1, min(u, size - 1) + 1):
        gaps = idx[off:] - idx[:-off]
        ab[u - off, off:] = [gram_entry(r, 0, int(g)) for g in gaps]
    ab[u, :] = gram_entry(r, 0, 0)
    return ab


def blocked_gram(op: DifferenceOperator, boundary: AugmentedBoundary) -> BlockedGram:
    if boundary.m != op.m or boundary.r != op.r:
        raise DimensionError("boundary set does not match the difference operator")
    interior = boundary.interior
    if interior.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return BlockedGram(op, interior, empty, empty, ())
    cuts = np.flatnonzero(np.diff(interior) > op.r + 1) + 1
    starts = np.concatenate(([0], cuts)).astype(np.int64)
    stops = np.concatenate((cuts, [interior.size])).astype(np.int64)
    factors = []
    for lo, hi in zip(starts.tolist(), stops.tolist()):
        idx = interior[lo:hi]
        if idx[-1] - idx[0] == hi - lo - 1:
            factors.append(op.gram_factor[:, :hi - lo])
            continue
        try:
            factors.append(cholesky_banded(_band_of(op.r, idx), lower=False))
        except np.linalg.LinAlgError as exc:
            raise GramFactorError("interior block is not numerically positive definite") from exc
    return BlockedGram(op, interior, starts, stops - starts, tuple(factors))


def solve_gram(gram: BlockedGram, v) -> np.ndarray:
    """Solve ``(D_{-A} D_{-A}^T) x = v`` block by block.

    ``v`` may be a vector of length ``k`` (the interior count) or a ``k x p``
    matrix of right-hand sides.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[0] != gram.size:
        raise DimensionError(f"right-hand side has {v.shape[0]} rows, expected {gram.size}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError("right-hand side contains non-finite values")
    out = np.empty_like(v)
    for start, size, factor in zip(gram.offsets.tolist(), gram.block_sizes.tolist(), gram.blocks):
        seg = slice(start, start + size)
        out[seg] = cho_solve_banded((factor, False), v[seg], check_finite=False)
    return out


def last_inverse_diagonal(gram: BlockedGram, block: int = -1) -> float:
    """Last diagonal entry of the inverse of one block."""
    factor = gram.blocks[block]
    e = np.zeros(factor.shape[1])
    e[-1] = 1.0
    return float(cho_solve_banded((factor, False), e)[-1])


def weighted_rows(gram: BlockedGram, y) -> np.ndarray:
    """Compute ``M y`` with ``M = (D_{-A} D_{-A}^T)^{-1} D_{-A}``.

    Every row of ``M`` is a contrast (sums to zero), so ``M`` annihilates
    constant vectors.
    """
    dy = apply(gram.op, y)
    return solve_gram(gram, dy[gram.interior])


def weighted_matrix(gram: BlockedGram) -> np.ndarray:
    """Dense ``M`` (``k x n``). For diagnostics and tests on small problems."""
    op = gram.op
    rows = op.dense()[gram.interior]
    return solve_gram(gram, rows)


def boundary_load(op: DifferenceOperator, boundary: AugmentedBoundary) -> np.ndarray:
    """The length-``n`` vector ``D_A^T s_A``."""
    return apply_transpose(op, boundary.signs_full)


def run_load(op: DifferenceOperator, boundary: AugmentedBoundary, tau: int, sign: float = 1.0):
    """Contribution ``D_{A_j}^T s_j`` of the single run of change ``tau``."""
    r_a, r_b = run_offsets(op.r)
    w = np.zeros(op.m)
    w[tau - r_b:tau + r_a + 1] = sign
    return apply_transpose(op, w)
