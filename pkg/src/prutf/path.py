"""Dual solution path of trend filtering.

The path starts at ``lambda = inf`` with an empty augmented boundary set and
moves down in ``lambda``. Between two events the dual vector is linear in
``lambda``: ``a - lambda * b`` on interior coordinates and ``lambda * s`` on the
augmented boundary set. An event is a join (an interior coordinate reaches the
box ``|u| <= lambda``), a leave (a boundary coordinate's optimality condition
fails) or, for the modified algorithm, a sign zeroing.

Three guards keep the path inside the box when ``r >= 1``:

* an interior coordinate that is already outside the box at the current
  ``lambda`` joins immediately at that ``lambda``;
* a coordinate that reaches the box but cannot host a full run (the run would
  overlap another run or leave the dual range) is pinned: it joins A with its
  sign but creates no change point and never leaves;
* a leave must happen strictly below the current ``lambda``, and removes the
  whole run of the change point whose boundary run holds the coordinate.

For ``r = 0`` none of these guards ever fire and the path is the exact dual
path. All coordinates here are 0-based dual indices.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, NamedTuple

import numpy as np

from .errors import (
    CapExceededError,
    DimensionError,
    LambdaOutOfRangeError,
    NonFiniteError,
)
from .linop import (
    AugmentedBoundary,
    DifferenceOperator,
    apply,
    apply_transpose,
    blocked_gram,
    boundary_load,
    build_difference_operator,
    empty_boundary,
    solve_gram,
)

DENOM_EPS = 1e-12
TIE_RTOL = 1e-12
AT_LAM_RTOL = 1e-9
IMMEDIATE_RTOL = 1e-10
LEAVE_RTOL = 1e-12
CAP_FACTOR = 5


class PathEvent(NamedTuple):
    """One event on the path.

    ``kind`` is ``"join"``, ``"pin"``, ``"leave"`` or ``"zero"``. For joins and
    zeroings ``coordinate`` is the change coordinate; for leaves it is the
    boundary coordinate whose condition failed. ``sign`` is the sign the
    coordinate carried (0 for a zeroing).
    """

    lam: float
    kind: str
    coordinate: int
    sign: int


@dataclass(frozen=True)
class PathState:
    """The path between two consecutive events.

    Valid for ``lam_next <= lambda <= lam``. ``lam`` is ``inf`` for the root
    state; ``lam_next`` is ``None`` until the next event has been decided.
    """

    op: DifferenceOperator
    y: np.ndarray
    step: int
    lam: float
    boundary: AugmentedBoundary
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    events: tuple[PathEvent, ...] = ()
    lam_next: float | None = None
    next_event: PathEvent | None = None

    @property
    def interior(self) -> np.ndarray:
        return self.boundary.interior

    @property
    def tau_dual(self) -> np.ndarray:
        return self.boundary.taus

    @property
    def is_terminal(self) -> bool:
        return self.lam_next is not None and self.next_event is None

    def interval(self) -> tuple[float, float]:
        lo = 0.0 if self.lam_next is None else self.lam_next
        return lo, self.lam


def _check_signal(op: DifferenceOperator, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != op.n:
        raise DimensionError(f"expected a vector of length {op.n}, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise NonFiniteError("signal contains NaN or infinite values")
    return y


def compute_ab(op: DifferenceOperator, boundary: AugmentedBoundary, y) -> tuple[np.ndarray, np.ndarray]:
    """Interior intercept ``a = M y`` and slope ``b = M D_A^T s_A``."""
    gram = blocked_gram(op, boundary)
    interior = boundary.interior
    a = solve_gram(gram, apply(op, y)[interior])
    if boundary.signs_full.any():
        load = boundary_load(op, boundary)
        b = solve_gram(gram, apply(op, load)[interior])
    else:
        b = np.zeros(interior.size)
    return a, b


def compute_cd(op, boundary, y, a, b) -> tuple[np.ndarray, np.ndarray]:
    """Leave-test vectors over the boundary set B."""
    bset = boundary.boundary
    if bset.size == 0:
        return np.zeros(0), np.zeros(0)
    interior = boundary.interior
    s_b = boundary.signs_b.astype(float)
    u_a = np.zeros(op.m)
    u_a[interior] = a
    c = s_b * apply(op, y - apply_transpose(op, u_a))[bset]
    w = boundary.signs_full.copy()
    w[interior] -= b
    d = s_b * apply(op, apply_transpose(op, w))[bset]
    return c, d


def make_state(op, y, boundary, lam, step=0, events=()) -> PathState:
    a, b = compute_ab(op, boundary, y)
    c, d = compute_cd(op, boundary, y, a, b)
    return PathState(op, y, step, float(lam), boundary, a, b, c, d, tuple(events))


def path_init(y, op: DifferenceOperator | None = None, r: int | None = None) -> PathState:
    """Root state: empty boundary set, valid for every ``lambda >= lambda_1``."""
    if op is None:
        if r is None:
            raise ValueError("pass a difference operator or an order r")
        op = build_difference_operator(len(np.atleast_1d(y)), r)
    y = _check_signal(op, y)
    return make_state(op, y, empty_boundary(op), np.inf)


def next_join(state: PathState) -> PathEvent | None:
    """Largest hitting time of the box among interior coordinates.

    Ties go to the smallest coordinate, then to sign +1.
    """
    a, b, lam = state.a, state.b, state.lam
    idx = state.interior
    if idx.size == 0:
        return None
    times, signs, coords = [], [], []
    for s in (1.0, -1.0):
        den = s + b
        ok = np.abs(den) >= DENOM_EPS
        t = np.full(a.shape, -1.0)
        t[ok] = a[ok] / den[ok]
        # a hit at the current lambda counts only when the coordinate is
        # heading out of the box, otherwise it has just left
        at_lam = t >= lam * (1 - AT_LAM_RTOL)
        ok &= (t >= 0) & (t <= lam * (1 + AT_LAM_RTOL)) & (~at_lam | (s * b + 1 > 0))
        t = np.minimum(t, lam)
        times.append(t[ok])
        signs.append(np.full(int(ok.sum()), s))
        coords.append(idx[ok])
    if np.isfinite(lam):
        v = a - lam * b
        hot = np.abs(v) > lam * (1 + IMMEDIATE_RTOL)
        times.append(np.full(int(hot.sum()), lam))
        signs.append(np.sign(v[hot]))
        coords.append(idx[hot])
    t = np.concatenate(times)
    if t.size == 0:
        return None
    s = np.concatenate(signs)
    i = np.concatenate(coords)
    # times within the tie tolerance of the maximum count as equal;
    # then smallest coordinate, then sign +1
    top = t.max()
    near = np.flatnonzero(t >= top - TIE_RTOL * max(1.0, top))
    k = near[np.lexsort((-s[near], i[near]))[0]]
    tau, sign = int(i[k]), int(s[k])
    kind = "join" if state.boundary.run_fits(tau) else "pin"
    return PathEvent(float(t[k]), kind, tau, sign)


def leave_times(state: PathState) -> np.ndarray:
    """Candidate leave time per boundary coordinate (0 when none)."""
    c, d = state.c, state.d
    out = np.zeros(c.shape)
    ok = (c < 0) & (d < 0)
    out[ok] = c[ok] / d[ok]
    out[out >= state.lam * (1 - LEAVE_RTOL)] = 0.0
    return out


def next_leave(state: PathState) -> PathEvent | None:
    if state.c.size == 0:
        return None
    times = leave_times(state)
    k = int(np.argmax(times))  # first maximum = smallest coordinate
    if times[k] <= 0:
        return None
    coord = int(state.boundary.boundary[k])
    return PathEvent(float(times[k]), "leave", coord, int(state.boundary.signs_b[k]))


def same_sign_neighbour(boundary: AugmentedBoundary, tau: int, sign: int) -> int | None:
    """Nearest nonzero-signed change on either side of ``tau`` sharing ``sign``.

    When both neighbours qualify the closer one is returned (left on a tie).
    """
    left = right = None
    for t, s in boundary.changes:
        if s == 0:
            continue
        if t < tau:
            left = (t, s)
        elif t > tau and right is None:
            right = (t, s)
    hits = [nb for nb in (left, right) if nb is not None and nb[1] == sign]
    if not hits:
        return None
    return min(hits, key=lambda nb: (abs(nb[0] - tau), nb[0]))[0]


def path_step(state: PathState, modified: bool = False) -> tuple[PathState, PathState | None]:
    """Decide the event that ends ``state``.

    Returns the settled state (with ``lam_next`` and ``next_event`` filled in,
    and possibly a zeroed sign when ``modified``) and the state that follows
    the event, or ``None`` when the path has reached ``lambda = 0``.
    """
    join = next_join(state)
    if modified and join is not None and join.kind == "join":
        nb = same_sign_neighbour(state.boundary, join.coordinate, join.sign)
        if nb is not None:
            zeroed = state.boundary.with_sign(nb, 0)
            ev = PathEvent(state.lam, "zero", nb, 0)
            state = make_state(state.op, state.y, zeroed, state.lam, state.step, state.events + (ev,))
            join = next_join(state)
    leave = next_leave(state)

    t_join = join.lam if join is not None else 0.0
    t_leave = leave.lam if leave is not None else 0.0
    tol = TIE_RTOL * max(1.0, t_join, t_leave)
    event = join if t_join >= t_leave - tol else leave
    if event is None or event.lam <= 0:
        return replace(state, lam_next=0.0, next_event=None), None

    settled = replace(state, lam_next=event.lam, next_event=event)
    bnd = state.boundary
    if event.kind == "join":
        bnd = bnd.with_change(event.coordinate, event.sign)
    elif event.kind == "pin":
        bnd = bnd.with_pin(event.coordinate, event.sign)
    else:
        bnd = bnd.without_change(bnd.change_containing(event.coordinate))
    nxt = make_state(state.op, state.y, bnd, event.lam, state.step + 1, state.events + (event,))
    return settled, nxt


def dual_at(state: PathState, lam: float) -> np.ndarray:
    """Full dual vector at ``lam`` from the state whose interval contains it."""
    lo, hi = state.interval()
    tol = 1e-12 * max(1.0, abs(lam))
    if not (lo - tol <= lam <= hi + tol):
        raise LambdaOutOfRangeError(f"lambda={lam} outside [{lo}, {hi}]")
    bnd = state.boundary
    u = lam * bnd.signs_full
    u[bnd.interior] = state.a - lam * state.b
    return u


def primal_at(state: PathState, lam: float) -> np.ndarray:
    """Trend filtering fit ``y - D^T u(lam)``."""
    return state.y - apply_transpose(state.op, dual_at(state, lam))


class SolutionPath:
    """Iterates the path and keeps every settled state.

    ``cap`` bounds the number of events (default ``5 n``); exceeding it raises
    :class:`CapExceededError`. ``recurrences`` counts states whose ``(A, s_A)``
    pair already appeared earlier on the path.
    """

    def __init__(self, y, r: int, modified: bool = False, cap: int | None = None):
        y = np.asarray(y, dtype=float)
        self.op = build_difference_operator(y.shape[0], r)
        self.y = _check_signal(self.op, y)
        self.modified = modified
        self.cap = CAP_FACTOR * self.op.n if cap is None else int(cap)
        self.states: list[PathState] = []
        self.recurrences = 0
        self._seen: set = set()

    def __iter__(self) -> Iterator[PathState]:
        state = path_init(self.y, self.op)
        while True:
            key = state.boundary.key()
            if key in self._seen:
                self.recurrences += 1
            self._seen.add(key)
            settled, nxt = path_step(state, self.modified)
            self.states.append(settled)
            yield settled
            if nxt is None:
                return
            if nxt.step > self.cap:
                raise CapExceededError(f"path exceeded {self.cap} events")
            state = nxt

    def run(self) -> list[PathState]:
        for _ in self:
            pass
        return self.states

    def state_at(self, lam: float) -> PathState:
        """State whose interval contains ``lam``.

        States with an empty interval (a leave immediately undone by a join
        at the same ``lambda``) are transitions, not part of the path, and
        are skipped.
        """
        for st in self.states:
            lo, hi = st.interval()
            if lo <= lam <= hi and hi > lo:
                return st
        raise LambdaOutOfRangeError(f"lambda={lam} is not covered by the computed path")

    def dual_at(self, lam: float) -> np.ndarray:
        return dual_at(self.state_at(lam), lam)

    def primal_at(self, lam: float) -> np.ndarray:
        return primal_at(self.state_at(lam), lam)

    @property
    def knots(self) -> np.ndarray:
        """Critical values ``lambda_1 >= lambda_2 >= ...`` of accepted events."""
        return np.array([st.lam_next for st in self.states if st.next_event is not None])


def solution_path(y, r: int, modified: bool = False, cap: int | None = None) -> SolutionPath:
    sp = SolutionPath(y, r, modified=modified, cap=cap)
    sp.run()
    return sp
