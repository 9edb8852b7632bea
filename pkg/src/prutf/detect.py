"""Change point detection on top of the dual path.

Change points are reported as split positions: ``c`` means the new segment
starts at 0-based index ``c``, equivalently the previous segment ends at
1-based index ``c``. A dual change coordinate ``tau`` (0-based) maps to
``c = tau + 1 + r_a``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UnderdeterminedSegmentError
from .linop import apply, run_offsets
from .path import PathEvent, PathState, SolutionPath, dual_at, primal_at
from .stopping import StoppingConfig, estimate_sigma_mad, should_stop


@dataclass(frozen=True)
class DetectionResult:
    change_points: np.ndarray
    signs: np.ndarray
    lambda_stop: float
    sigma: float
    fitted: np.ndarray
    events: tuple[PathEvent, ...]
    zeroed: tuple[int, ...] = ()
    path_fit: np.ndarray | None = field(default=None, repr=False)
    state: PathState | None = field(default=None, repr=False)
    recurrences: int = 0

    @property
    def n_changes(self) -> int:
        return int(self.change_points.size)


def to_primal_changepoints(tau_dual, r: int) -> np.ndarray:
    """Shift 1-based dual change coordinates to primal locations ``tau + r_a``."""
    r_a, _ = run_offsets(r)
    return np.sort(np.asarray(tau_dual, dtype=np.int64) + r_a)


def split_positions(tau0, r: int) -> np.ndarray:
    """0-based dual coordinates to split positions."""
    return to_primal_changepoints(np.asarray(tau0, dtype=np.int64) + 1, r)


def segment_polynomial_fit(y, change_points, r: int) -> np.ndarray:
    """Per-segment degree-``r`` least squares on inputs ``i / n``."""
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    x = np.arange(n) / n
    bounds = [0, *[int(c) for c in change_points], n]
    out = np.empty(n)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi - lo < r + 1:
            raise UnderdeterminedSegmentError(
                f"segment [{lo}, {hi}) has {hi - lo} points, need at least {r + 1}"
            )
        X = np.vander(x[lo:hi], r + 1)
        coef, *_ = np.linalg.lstsq(X, y[lo:hi], rcond=None)
        out[lo:hi] = X @ coef
    return out


def _run_signs(state: PathState, fit: np.ndarray, refit: np.ndarray) -> np.ndarray:
    op, bnd = state.op, state.boundary
    r_a, r_b = run_offsets(op.r)
    dfit, drefit = apply(op, fit), apply(op, refit)
    out = []
    for tau, _ in bnd.changes:
        run = slice(tau - r_b, tau + r_a + 1)
        v = dfit[run].sum()
        if abs(v) <= 1e-10 * max(1.0, np.abs(fit).max()):
            v = drefit[run].sum()
        out.append(int(np.sign(v)))
    return np.array(out, dtype=np.int64)


def _detect(y, r: int, cfg: StoppingConfig, modified: bool, cap: int | None) -> DetectionResult:
    y = np.asarray(y, dtype=float)
    sigma = cfg.sigma if cfg.sigma is not None else estimate_sigma_mad(y, r)
    sp = SolutionPath(y, r, modified=modified, cap=cap)
    chosen = None
    for state in sp:
        if state.next_event is not None and state.lam_next >= state.lam:
            continue  # empty interval: a transition, not a model on the path
        chosen = state
        if should_stop(state, cfg=cfg, sigma=sigma):
            break
    lam = chosen.lam_next
    fit = primal_at(chosen, lam)
    cps = split_positions(chosen.boundary.taus, r)
    refit = segment_polynomial_fit(y, cps, r)
    events = chosen.events
    zeroed = tuple(ev.coordinate for ev in events if ev.kind == "zero")
    return DetectionResult(
        change_points=cps,
        signs=_run_signs(chosen, fit, refit),
        lambda_stop=float(lam),
        sigma=float(sigma),
        fitted=refit,
        events=events,
        zeroed=zeroed,
        path_fit=fit,
        state=chosen,
        recurrences=sp.recurrences,
    )


def detect_prutf(y, r: int = 0, cfg: StoppingConfig = StoppingConfig(), cap: int | None = None) -> DetectionResult:
    """Run the unmodified path until the stopping rule fires."""
    return _detect(y, r, cfg, modified=False, cap=cap)


def detect_mprutf(y, r: int = 0, cfg: StoppingConfig = StoppingConfig(), cap: int | None = None) -> DetectionResult:
    """Run the sign-zeroing path until the stopping rule fires."""
    return _detect(y, r, cfg, modified=True, cap=cap)


def is_staircase(signs, j: int) -> bool:
    """Whether block ``j`` (between change ``j`` and ``j+1``) is a staircase."""
    s0, s1 = int(signs[j]), int(signs[j + 1])
    return s0 != 0 and s0 == s1


@dataclass(frozen=True)
class BlockReport:
    block: int
    start: int
    stop: int
    kind: str
    staircase: bool
    lower_ok: bool
    upper_ok: bool
    one_sided: bool | None

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.upper_ok and self.one_sided is not False


def pattern_diagnostics(state: PathState, lam: float | None = None) -> list[BlockReport]:
    """Check the per-block envelope constraints on the interior stochastic term.

    For each interior block the drift ``lam * b`` is subtracted from the
    stochastic term ``a`` and the result must stay inside ``[-lam, lam]``,
    which is the envelope written per block. Within a staircase block (equal
    signs on both sides) the stochastic term must in addition keep one sign.
    """
    if lam is None:
        lam = state.lam_next if state.lam_next is not None else 0.0
    bnd = state.boundary
    signs = bnd.change_signs
    blocks = bnd.blocks
    reports = []
    start = 0
    for j, (lo, hi) in enumerate(blocks):
        size = hi - lo
        ust = state.a[start:start + size]
        drift = state.b[start:start + size]
        start += size
        u = ust - lam * drift
        tol = 1e-9 * max(1.0, lam)
        lower_ok = bool(np.all(u >= -lam - tol))
        upper_ok = bool(np.all(u <= lam + tol))
        kind = "first" if lo == 0 else ("last" if hi == bnd.m else "interior")
        # block j sits between change j-1 and change j
        left = _change_left_of(bnd, lo)
        right = _change_right_of(bnd, hi)
        stair = left is not None and right is not None and left[1] != 0 and left[1] == right[1]
        one_sided = None
        if stair:
            one_sided = bool(np.all(ust <= tol) or np.all(ust >= -tol))
        reports.append(BlockReport(j, lo, hi, kind, stair, lower_ok, upper_ok, one_sided))
    return reports


def _change_left_of(bnd, coord):
    best = None
    for tau, s in bnd.changes:
        if tau < coord:
            best = (tau, s)
    return best


def _change_right_of(bnd, coord):
    for tau, s in bnd.changes:
        if tau >= coord:
            return (tau, s)
    return None


def kkt_violation(state: PathState, lam: float) -> float:
    """``max(|u(lam)|) - lam``; non-positive when the dual is feasible."""
    return float(np.max(np.abs(dual_at(state, lam))) - lam) if state.op.m else 0.0
