import math

import numpy as np
import pytest

from ibptc.analysis import (
    SNR_CAP,
    BerResult,
    StopRule,
    ber_crossing,
    consistent_llrs,
    exit_chart,
    exit_trajectory,
    extrinsic_covariance,
    j_function,
    j_inverse,
    mutual_information,
    pearson,
    resolve_workers,
    run_ber,
    snr_evolution,
)
from ibptc.turbo import TurboConfig


def _j_oracle(sigma, n=200_001):
    """Trapezoid-rule J(sigma) on a fine grid."""
    mu = sigma * sigma / 2
    x = np.linspace(mu - 12 * sigma, mu + 12 * sigma, n)
    pdf = np.exp(-((x - mu) ** 2) / (2 * sigma * sigma)) / (sigma * math.sqrt(2 * math.pi))
    return 1 - np.trapezoid(pdf * np.logaddexp(0, -x), x) / math.log(2)


@pytest.mark.parametrize("sigma", [0.3, 1.0, 2.0, 4.0, 8.0])
def test_j_function_against_quadrature_oracle(sigma):
    assert j_function(sigma) == pytest.approx(_j_oracle(sigma), abs=1e-6)


def test_j_function_limits():
    assert j_function(0.0) == 0.0
    assert j_function(60.0) > 0.999999


@pytest.mark.parametrize("v", [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
def test_j_round_trip(v):
    assert abs(j_function(j_inverse(v)) - v) < 1e-4


def test_j_inverse_errors():
    with pytest.raises(ValueError):
        j_inverse(1.0)
    with pytest.raises(ValueError):
        j_inverse(-0.1)
    with pytest.raises(ArithmeticError):
        j_inverse(0.5, tol=1e-20)


@pytest.mark.parametrize("sigma", [0.5, 1.5, 3.0])
def test_mi_estimator_reproduces_j(sigma):
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, 100_000)
    llr = consistent_llrs(bits, sigma, rng)
    assert abs(mutual_information(llr, bits) - j_function(sigma)) < 0.01


def test_pearson():
    rng = np.random.default_rng(1)
    assert abs(pearson(rng.normal(size=1_000_000), rng.normal(size=1_000_000))) < 0.01
    assert pearson(np.zeros(10), np.arange(10)) == 0.0
    a = rng.normal(size=100)
    assert pearson(a, 2 * a + 1) == pytest.approx(1.0)
    assert pearson(a, -a) == pytest.approx(-1.0)
    b = rng.normal(size=100)
    assert pearson(a, b) == pytest.approx(np.corrcoef(a, b)[0, 1], abs=1e-12)


def test_ber_crossing_interpolates_log_linearly():
    pts = [BerResult(0.0, 1000, 100, 10, 5, 10, 0), BerResult(1.0, 100000, 100, 1000, 10, 10, 0)]
    assert ber_crossing(pts, 1e-2) == pytest.approx(0.5)
    assert ber_crossing(pts, 1e-5) is None
    zero = [BerResult(0.0, 1000, 100, 10, 5, 10, 0), BerResult(0.5, 1000, 0, 10, 0, 10, 0)]
    assert ber_crossing(zero, 1e-3) == 0.5


def test_noiseless_point_has_no_errors():
    cfg = TurboConfig.make(40, 1, 5, iterations=2)
    (r,) = run_ber(cfg, [math.inf], StopRule(max_blocks=10))
    assert r.ber == 0.0 and r.fer == 0.0
    assert r.frames == 10 and r.under_sampled


def test_run_ber_counts_and_stops():
    cfg = TurboConfig.make(40, 1, 5, iterations=2)
    res = run_ber(cfg, [-1.0, 0.0], StopRule(max_blocks=200, min_bit_errors=50), seed=3)
    for r in res:
        assert r.bit_errors >= 50 or r.frames >= 200
        assert r.ber == r.bit_errors / r.bits_simulated
        assert r.frame_errors <= r.frames
        assert r.bits_simulated == r.frames * 40
    assert res[1].ber <= res[0].ber
    with pytest.raises(ValueError):
        run_ber(cfg, [])


def test_run_ber_independent_of_workers():
    cfg = TurboConfig.make(40, 1, 5, iterations=3)
    stop = StopRule(max_blocks=60, min_bit_errors=30)
    a = run_ber(cfg, [0.0, 0.5], stop, seed=4, workers=1)
    b = run_ber(cfg, [0.0, 0.5], stop, seed=4, workers=4)
    assert [(r.bits_simulated, r.bit_errors, r.frame_errors) for r in a] == [
        (r.bits_simulated, r.bit_errors, r.frame_errors) for r in b
    ]


def test_resolve_workers(monkeypatch):
    monkeypatch.setenv("IBPTC_THREADS", "3")
    assert resolve_workers() == 3
    assert resolve_workers(2) == 2
    monkeypatch.setenv("IBPTC_THREADS", "0")
    assert resolve_workers() >= 1


def test_exit_chart_structure_and_perfect_apriori():
    cfg = TurboConfig.make(400, 0, 1, iterations=1)
    pts = exit_chart(cfg, 0.5, [0.0, 0.5, 0.9999], samples_per_point=20_000)
    assert [p.constituent for p in pts] == [1, 1, 1, 2, 2, 2]
    assert all(0.0 <= p.ie <= 1.0 for p in pts)
    assert pts[0].ie < pts[1].ie < pts[2].ie
    assert pts[2].ie >= 0.99 and pts[5].ie >= 0.99
    with pytest.raises(ValueError):
        exit_chart(cfg, 0.5, [1.0])


def test_exit_trajectory_shape():
    cfg = TurboConfig.make(100, 1, 4, iterations=4)
    pts = exit_trajectory(cfg, 1.0, trials=2)
    assert len(pts) == 8
    assert pts[0].ia == pytest.approx(0.0, abs=1e-12)
    for a, b in zip(pts, pts[1:]):
        assert b.ia == a.ie


def test_trajectory_dominance_at_same_srid():
    classic = exit_trajectory(TurboConfig.make(800, 0, 10), 0.5, trials=4)
    ibp = exit_trajectory(TurboConfig.make(400, 1, 20), 0.5, trials=4)
    assert np.mean([p.ie for p in ibp]) >= np.mean([p.ie for p in classic])
    assert ibp[-1].ie >= classic[-1].ie


def test_noiseless_snr_saturates_from_first_iteration():
    cfg = TurboConfig.make(40, 1, 5, iterations=3)
    tr = snr_evolution(cfg, math.inf, trials=2)
    assert tr.iterations == 3
    assert np.all(tr.snr == SNR_CAP)


def test_trace_properties():
    cfg = TurboConfig.make(60, 1, 5, iterations=4)
    tr = extrinsic_covariance(cfg, 0.5, trials=3)
    assert tr.snr.shape == tr.correlation.shape == (4, 2)
    assert tr.correlation[0, 0] == 0.0
    assert np.all(np.abs(tr.correlation) <= 1.0)
    assert np.all(tr.snr >= 0.0)
    with pytest.raises(ValueError):
        snr_evolution(cfg, 0.5, trials=0)


def test_traces_deterministic_across_workers():
    cfg = TurboConfig.make(60, 1, 5, iterations=3)
    a = snr_evolution(cfg, 0.5, trials=6, seed=2, workers=1)
    b = snr_evolution(cfg, 0.5, trials=6, seed=2, workers=3)
    assert np.array_equal(a.snr, b.snr)
    assert np.array_equal(a.correlation, b.correlation)
