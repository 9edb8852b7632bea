"""Simulation scenarios, noise generation, metrics and the replicate harness.

Signals are evaluated on ``x = t / n`` for ``t = 1..n``. Segment ``j`` covers
the 0-based index range ``[tau_j, tau_{j+1})`` where ``tau`` are the change
points (split positions) padded with ``0`` and ``n``. Coefficients are stored
in increasing powers of ``x``.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .detect import detect_mprutf, detect_prutf
from .stopping import StoppingConfig

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Scenario:
    name: str
    n: int
    r: int
    change_points: tuple[int, ...]
    coefficients: tuple[tuple[float, ...], ...]
    sigma: float = 1.0
    rho: float = 0.0
    seed: int = 0
    noise: str = "iid"

    def __post_init__(self):
        cps = tuple(int(c) for c in self.change_points)
        object.__setattr__(self, "change_points", cps)
        object.__setattr__(
            self, "coefficients", tuple(tuple(float(v) for v in c) for c in self.coefficients)
        )
        if any(b <= a for a, b in zip((0, *cps), (*cps, self.n))):
            raise ValueError("change points must be strictly increasing inside (0, n)")
        if len(self.coefficients) != len(cps) + 1:
            raise ValueError(f"need {len(cps) + 1} coefficient rows, got {len(self.coefficients)}")
        if any(len(c) != self.r + 1 for c in self.coefficients):
            raise ValueError(f"each segment needs {self.r + 1} coefficients")
        if self.noise not in ("iid", "ar1"):
            raise ValueError(f"unknown noise model {self.noise!r}")
        if abs(self.rho) >= 1:
            raise ValueError("AR(1) coefficient must satisfy |rho| < 1")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def with_noise(self, sigma: float | None = None, rho: float | None = None, seed: int | None = None):
        kw = {}
        if sigma is not None:
            kw["sigma"] = float(sigma)
        if rho is not None:
            kw["rho"] = float(rho)
            kw["noise"] = "ar1"
        if seed is not None:
            kw["seed"] = int(seed)
        return replace(self, **kw)

    def signal(self) -> np.ndarray:
        x = np.arange(1, self.n + 1) / self.n
        bounds = (0, *self.change_points, self.n)
        f = np.empty(self.n)
        for lo, hi, coef in zip(bounds[:-1], bounds[1:], self.coefficients):
            f[lo:hi] = np.polynomial.polynomial.polyval(x[lo:hi], coef)
        return f


def _from_levels(name, n, cps, levels, **kw):
    return Scenario(name, n, 0, tuple(cps), tuple((v,) for v in levels), **kw)


def scenario_pwc(**kw) -> Scenario:
    cps = (205, 308, 512, 820, 902, 1332, 1557, 1659)
    jumps = (1.464, -0.656, 0.098, 1.830, 0.537, 0.768, -0.574, -3.335)
    levels = np.concatenate(([0.0], np.cumsum(jumps)))
    return _from_levels("pwc", 2024, cps, levels, **kw)


def scenario_pwl(**kw) -> Scenario:
    cps = (256, 512, 768, 1024, 1152, 1280, 1344)
    intercepts = (0.111, 0.553, -0.481, 3.002, -7.169, -0.030, 7.217, -0.958)
    slopes = (-8, 6, -3, -11, 12, 4, -7, 8)
    return Scenario("pwl", 1408, 1, cps, tuple(zip(intercepts, slopes)), **kw)


_REGIMES = ((1, 50, 10, 0.4), (51, 150, 20, 0.2), (151, 250, 40, 0.1), (251, 500, 100, 0.04))


def _regime_branch(t: int) -> tuple[bool, float]:
    for lo, hi, period, slope in _REGIMES:
        if lo <= t <= hi:
            return 1 <= t % period <= period // 2, slope
    raise ValueError(t)


def _segments(values, n):
    cps, rows = [], [values[0]]
    for t in range(1, n):
        if values[t] != values[t - 1]:
            cps.append(t)
            rows.append(values[t])
    return tuple(cps), tuple(rows)


def scenario_teeth(**kw) -> Scenario:
    n = 500
    vals = [(0.0,) if _regime_branch(t)[0] else (1.0,) for t in range(1, n + 1)]
    cps, rows = _segments(vals, n)
    return Scenario("teeth", n, 0, cps, rows, **kw)


def scenario_wave(**kw) -> Scenario:
    # f_t = -1 + s t or 1 - s t with t the global time index; slope in x = t/n is s n
    n = 500
    vals = []
    for t in range(1, n + 1):
        low, s = _regime_branch(t)
        vals.append((-1.0, s * n) if low else (1.0, -s * n))
    cps, rows = _segments(vals, n)
    return Scenario("wave", n, 1, cps, rows, **kw)


def staircase_demo(**kw) -> Scenario:
    """Four changes at 15, 40, 50, 80 with a staircase on (50, 80]."""
    return _from_levels("staircase", 100, (15, 40, 50, 80), (0.0, 3.0, 1.0, 4.0, 6.0), **kw)


SCENARIOS = {
    "pwc": scenario_pwc,
    "pwl": scenario_pwl,
    "teeth": scenario_teeth,
    "wave": scenario_wave,
    "staircase": staircase_demo,
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]()
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None


def rng_for(seed: int) -> np.random.Generator:
    """Philox-4x64 stream keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=int(seed) & (2**64 - 1)))


def noise(scn: Scenario, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(scn.n)
    if scn.noise == "iid" or scn.rho == 0.0:
        return scn.sigma * z
    rho = scn.rho
    eps = np.empty(scn.n)
    eps[0] = scn.sigma * z[0]
    innov = scn.sigma * math.sqrt(1.0 - rho * rho) * z
    for i in range(1, scn.n):
        eps[i] = rho * eps[i - 1] + innov[i]
    return eps


def generate(scn: Scenario, seed: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(y, f_true)``; deterministic in ``seed`` (defaults to ``scn.seed``)."""
    f = scn.signal()
    if scn.sigma == 0:
        return f.copy(), f
    rng = rng_for(scn.seed if seed is None else seed)
    return f + noise(scn, rng), f


def metric_mse(f_hat, f_true) -> float:
    f_hat, f_true = np.asarray(f_hat, float), np.asarray(f_true, float)
    if f_hat.shape != f_true.shape:
        raise ValueError(f"length mismatch: {f_hat.shape} vs {f_true.shape}")
    return float(np.mean((f_hat - f_true) ** 2))


def metric_hausdorff(tau_hat, tau_true, n: int | None = None) -> float:
    """Larger of the two directed max-min distances.

    If exactly one set is empty the result is ``n`` (``inf`` when ``n`` is not
    given); two empty sets are at distance 0.
    """
    a = np.asarray(tau_hat, dtype=float).ravel()
    b = np.asarray(tau_true, dtype=float).ravel()
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return float(n) if n is not None else math.inf
    dist = np.abs(a[:, None] - b[None, :])
    return float(max(dist.min(axis=0).max(), dist.min(axis=1).max()))


@dataclass(frozen=True)
class RunMetrics:
    sigma: float
    replicate: int
    detected: int
    mse: float
    hausdorff: float
    runtime_s: float
    change_points: tuple[int, ...] = field(default=())


METHODS = {"prutf": detect_prutf, "mprutf": detect_mprutf}


def run_replicate(scn: Scenario, method: str, replicate: int, alpha: float = 0.05, timing: bool = True) -> RunMetrics:
    y, f = generate(scn, seed=scn.seed ^ replicate)
    cfg = StoppingConfig(alpha=alpha, sigma=scn.sigma if scn.sigma > 0 else None)
    t0 = time.perf_counter()
    res = METHODS[method](y, scn.r, cfg)
    elapsed = time.perf_counter() - t0 if timing else math.nan
    return RunMetrics(
        sigma=scn.sigma,
        replicate=replicate,
        detected=res.n_changes,
        mse=metric_mse(res.fitted, f),
        hausdorff=metric_hausdorff(res.change_points, scn.change_points, scn.n),
        runtime_s=elapsed,
        change_points=tuple(int(c) for c in res.change_points),
    )


def _job(args):
    return run_replicate(*args)


def default_workers() -> int:
    cap = os.environ.get("PRUTF_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


@dataclass(frozen=True)
class ExperimentRow:
    sigma: float
    mean_ncpts: float
    mean_mse: float
    mean_hausdorff: float
    mean_runtime_s: float
    replicates: int


def aggregate(runs: list[RunMetrics]) -> ExperimentRow:
    # fsum keeps the means independent of completion order
    N = len(runs)
    mean = lambda xs: math.fsum(xs) / N  # noqa: E731
    return ExperimentRow(
        sigma=runs[0].sigma,
        mean_ncpts=mean(r.detected for r in runs),
        mean_mse=mean(r.mse for r in runs),
        mean_hausdorff=mean(r.hausdorff for r in runs),
        mean_runtime_s=mean(r.runtime_s for r in runs),
        replicates=N,
    )


def run_experiment(
    scn: Scenario,
    method: str = "mprutf",
    replicates: int = 100,
    sigma_grid=None,
    alpha: float = 0.05,
    workers: int | None = None,
    timing: bool = True,
) -> tuple[list[ExperimentRow], list[RunMetrics]]:
    """Replicate ``k`` at every sigma uses seed ``scn.seed ^ k``."""
    if replicates < 1:
        raise ValueError("need at least one replicate")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    grid = [scn.sigma] if sigma_grid is None else [float(s) for s in sigma_grid]
    jobs = [(scn.with_noise(sigma=s), method, k, alpha, timing) for s in grid for k in range(replicates)]
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(jobs) == 1:
        runs = [_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    rows = [aggregate(runs[i * replicates:(i + 1) * replicates]) for i in range(len(grid))]
    return rows, runs


def write_scenario(scn: Scenario, path) -> None:
    """Plain-text ``key = value`` file, one field per line."""
    lines = [
        f"format = prutf-scenario/{FORMAT_VERSION}",
        f"name = {scn.name}",
        f"n = {scn.n}",
        f"r = {scn.r}",
        "change_points = " + ",".join(str(c) for c in scn.change_points),
        "coefficients = " + ";".join(",".join(repr(v) for v in row) for row in scn.coefficients),
        f"noise = {scn.noise}",
        f"sigma = {scn.sigma!r}",
        f"rho = {scn.rho!r}",
        f"seed = {scn.seed}",
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_scenario(path) -> Scenario:
    fields = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"malformed line: {raw!r}")
        fields[key.strip()] = value.strip()
    fmt = fields.pop("format", "")
    if fmt != f"prutf-scenario/{FORMAT_VERSION}":
        raise ValueError(f"unsupported scenario format {fmt!r}")
    cps = tuple(int(v) for v in fields["change_points"].split(",") if v.strip())
    coefs = tuple(tuple(float(v) for v in row.split(",")) for row in fields["coefficients"].split(";"))
    return Scenario(
        name=fields["name"],
        n=int(fields["n"]),
        r=int(fields["r"]),
        change_points=cps,
        coefficients=coefs,
        sigma=float(fields.get("sigma", 1.0)),
        rho=float(fields.get("rho", 0.0)),
        seed=int(fields.get("seed", 0)),
        noise=fields.get("noise", "iid"),
    )
