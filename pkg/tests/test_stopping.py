import math

import numpy as np
import pytest

from prutf.errors import DegenerateScaleError
from prutf.linop import AugmentedBoundary
from prutf.path import make_state, path_init
from prutf.linop import build_difference_operator
from prutf.stopping import (
    StoppingConfig,
    bridge_scale,
    estimate_sigma_mad,
    excursion_prob,
    should_stop,
    stop_threshold,
    threshold_x_alpha,
)

from conftest import dense_D


def kolmogorov_tail(x, terms=100):
    # independent evaluation of 2 sum (-1)^(i+1) exp(-2 i^2 x^2)
    i = np.arange(1, terms + 1)
    return float(2 * np.sum((-1.0) ** (i + 1) * np.exp(-2 * i**2 * x**2)))


def test_excursion_limits():
    assert excursion_prob(50.0) == 0.0
    assert excursion_prob(1e-6) == pytest.approx(1.0, abs=1e-9)
    assert excursion_prob(0.0) == 1.0


def test_excursion_matches_independent_series():
    for x in (0.5, 1.0, 1.3581, 2.0):
        assert excursion_prob(x) == pytest.approx(kolmogorov_tail(x), abs=1e-13)


def test_excursion_branches_agree():
    # both series forms hold everywhere; compare them where both converge fast
    for z in (0.55, 0.6, 0.65):
        theta = 1 - math.sqrt(2 * math.pi) / z * sum(
            math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * z * z)) for k in range(1, 50)
        )
        assert kolmogorov_tail(z, 400) == pytest.approx(theta, abs=1e-12)
        assert excursion_prob(z) == pytest.approx(theta, abs=1e-12)


def test_excursion_monotone():
    xs = np.linspace(0.2, 3, 200)
    p = [excursion_prob(x) for x in xs]
    assert np.all(np.diff(p) < 0)


def test_x_alpha_value():
    assert threshold_x_alpha(0.05) == pytest.approx(1.3581, abs=1e-3)


def test_x_alpha_round_trip():
    for alpha in (0.01, 0.05, 0.1, 0.5):
        assert excursion_prob(threshold_x_alpha(alpha)) == pytest.approx(alpha, abs=1e-8)


def test_x_alpha_monotone_and_scaling():
    assert threshold_x_alpha(0.01) > threshold_x_alpha(0.10)
    for c in (0.25, 2.0, 9.0):
        assert threshold_x_alpha(0.05, c) == pytest.approx(math.sqrt(c) * threshold_x_alpha(0.05), rel=1e-8)


def test_x_alpha_bad_alpha():
    with pytest.raises(ValueError):
        threshold_x_alpha(0.0)
    with pytest.raises(ValueError):
        StoppingConfig(alpha=1.0)


def test_bridge_scale_is_last_inverse_diagonal():
    n, r = 40, 1
    op = build_difference_operator(n, r)
    bnd = AugmentedBoundary(op.m, r, ((10, 1),))
    st = make_state(op, np.zeros(n), bnd, 1.0)
    scale = bridge_scale(st)
    D = dense_D(n, r)
    Di = D[bnd.interior]
    Ginv = np.linalg.inv(Di @ Di.T)
    assert scale.k == op.m - 2
    assert scale.S2 == pytest.approx(Ginv[-1, -1], rel=1e-10)


def test_r0_threshold_is_sqrt_k():
    n = 101
    st = path_init(np.zeros(n), r=0)
    scale = bridge_scale(st)
    expected = 2.0 * threshold_x_alpha(0.05, scale.S2) * math.sqrt(scale.k)
    assert stop_threshold(2.0, 0.05, scale.k, 0, scale.S2) == pytest.approx(expected)


def test_stop_on_noiseless_after_all_changes():
    y = np.r_[np.zeros(30), np.full(30, 2.0), np.full(40, -1.0)]
    op = build_difference_operator(100, 0)
    bnd = AugmentedBoundary(op.m, 0, ((29, 1), (59, -1)))
    st = make_state(op, y, bnd, 1.0)
    assert should_stop(st, cfg=StoppingConfig(sigma=0.1))
    assert not should_stop(path_init(y, r=0), cfg=StoppingConfig(sigma=0.1))


def test_should_stop_when_nothing_left():
    op = build_difference_operator(7, 1)
    bnd = AugmentedBoundary(op.m, 1, ((1, 1), (3, -1)))
    st = make_state(op, np.arange(7.0) ** 2, bnd, 1.0)
    assert bridge_scale(st).k <= 1
    assert should_stop(st, cfg=StoppingConfig(sigma=1.0))


def test_pure_noise_level_quick():
    rng = np.random.default_rng(3)
    hits = 0
    for _ in range(300):
        st = path_init(rng.normal(size=200), r=0)
        hits += not should_stop(st, cfg=StoppingConfig(sigma=1.0))
    assert 0.01 <= hits / 300 <= 0.10


def test_mad_constants_and_equivariance(rng):
    y = rng.normal(size=10_000) * 1.7
    assert estimate_sigma_mad(y, 0) == pytest.approx(1.7, rel=0.05)
    assert estimate_sigma_mad(y, 1) == pytest.approx(1.7, rel=0.05)
    assert estimate_sigma_mad(2 * y, 0) == pytest.approx(2 * estimate_sigma_mad(y, 0))
    # explicit r=0 and r=1 normalisations
    med0 = np.median(np.abs(np.diff(y)))
    assert estimate_sigma_mad(y, 0) == pytest.approx(med0 / (math.sqrt(2) * 0.6744897501960817))
    med1 = np.median(np.abs(np.diff(y, 2)))
    assert estimate_sigma_mad(y, 1) == pytest.approx(med1 / (math.sqrt(6) * 0.6744897501960817))


def test_mad_degenerate():
    with pytest.raises(DegenerateScaleError):
        estimate_sigma_mad(np.full(20, 3.0), 0)


def test_stochastic_term_covariance_small():
    # quick version of the bridge-law check; the full one lives in the acceptance suite
    rng = np.random.default_rng(11)
    n, r, N = 30, 0, 4000
    op = build_difference_operator(n, r)
    bnd = AugmentedBoundary(op.m, r, ((9, 1), (19, -1)))
    D = dense_D(n, r)
    Di = D[bnd.interior]
    M = np.linalg.solve(Di @ Di.T, Di)
    draws = rng.normal(size=(N, n)) @ M.T
    emp = np.cov(draws, rowvar=False)
    ref = np.linalg.inv(Di @ Di.T)
    se = np.sqrt((np.outer(np.diag(ref), np.diag(ref)) + ref**2) / N)
    assert np.all(np.abs(emp - ref) <= 5 * se)
