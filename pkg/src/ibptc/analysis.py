"""Monte Carlo experiments: BER/FER sweeps, EXIT charts, extrinsic SNR and correlation traces.

Every random quantity of trial ``t`` is keyed by ``(seed, t, lane)`` (see
:mod:`ibptc.channel`), so results depend only on the configuration and the
master seed, never on the number of worker threads.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .channel import ChannelConfig, modulate, random_bits, to_llr, transmit
from .siso import CLAMP
from .turbo import LlrFrame, TurboCode, TurboConfig, turbo_code

__all__ = [
    "StopRule",
    "BerResult",
    "ExitPoint",
    "EvolutionTrace",
    "TrialOutcome",
    "SNR_CAP",
    "resolve_workers",
    "simulate_trial",
    "run_ber",
    "ber_crossing",
    "j_function",
    "j_inverse",
    "consistent_llrs",
    "mutual_information",
    "exit_chart",
    "exit_trajectory",
    "snr_evolution",
    "extrinsic_covariance",
    "pearson",
]

SNR_CAP = 1.0e4
"""Reported extrinsic SNR when the pooled variance vanishes (or the ratio exceeds it)."""


def resolve_workers(workers: int | None = None) -> int:
    """Worker count: explicit value, else ``IBPTC_THREADS`` (0 = one per CPU)."""
    if workers is None:
        workers = int(os.environ.get("IBPTC_THREADS", "0") or 0)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


@dataclass(frozen=True)
class StopRule:
    max_blocks: int = 1000
    min_bit_errors: int = 100


@dataclass
class BerResult:
    ebn0_db: float
    bits_simulated: int
    bit_errors: int
    frames: int
    frame_errors: int
    mean_iterations: float
    wall_seconds: float
    under_sampled: bool = False

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_simulated if self.bits_simulated else 0.0

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames if self.frames else 0.0


@dataclass
class TrialOutcome:
    bits: int
    bit_errors: int
    blocks: int
    block_errors: int
    moments: np.ndarray
    extrinsic: list | None = None
    truth: np.ndarray | None = None


def _channel_frame(code: TurboCode, bits: np.ndarray, ebn0_db: float, seed: int, trial: int):
    cw = code.encode(bits)
    ch = ChannelConfig(ebn0_db, cw.rate, seed)
    s2 = ch.sigma2
    lanes = {
        name: to_llr(transmit(modulate(arr), ch, trial, lane=k + 1), s2)
        for k, (name, arr) in enumerate(cw.lanes().items())
    }
    return cw, LlrFrame.from_lanes(cw, lanes)


def simulate_trial(
    code: TurboCode, ebn0_db: float, seed: int, trial: int, keep_extrinsic: bool = False
) -> TrialOutcome:
    """Encode, transmit and decode one stream of ``B`` blocks."""
    cfg = code.cfg
    n = cfg.block_len * cfg.num_blocks
    bits = random_bits(seed, n, trial)
    _, frame = _channel_frame(code, bits, ebn0_db, seed, trial)
    decided, diag = code.decode(frame, truth=bits, keep_extrinsic=keep_extrinsic)
    wrong = (decided != bits).reshape(cfg.num_blocks, cfg.block_len)
    return TrialOutcome(
        n,
        int(wrong.sum()),
        cfg.num_blocks,
        int(wrong.any(axis=1).sum()),
        diag.moments,
        diag.extrinsic,
        bits if keep_extrinsic else None,
    )


def _ordered_trials(fn, workers: int):
    """Yield ``fn(0), fn(1), ...`` in order, evaluating up to ``workers`` ahead."""
    if workers <= 1:
        t = 0
        while True:
            yield fn(t)
            t += 1
    with ThreadPoolExecutor(workers) as pool:
        pending = [pool.submit(fn, t) for t in range(workers)]
        nxt = workers
        try:
            while True:
                yield pending.pop(0).result()
                pending.append(pool.submit(fn, nxt))
                nxt += 1
        finally:
            for f in pending:
                f.cancel()


def run_ber(
    cfg: TurboConfig,
    ebn0_grid,
    stop: StopRule = StopRule(),
    seed: int = 0,
    workers: int | None = None,
    progress=None,
) -> list[BerResult]:
    """BER/FER at every grid point.

    Trials (streams of ``B`` blocks) are run until ``stop.min_bit_errors``
    information-bit errors or ``stop.max_blocks`` blocks.  Trial ``t`` uses the
    same information bits and noise samples at every grid point.
    """
    grid = [float(x) for x in ebn0_grid]
    if not grid:
        raise ValueError("empty Eb/N0 grid")
    code = turbo_code(cfg)
    w = resolve_workers(workers)
    results = []
    for ebn0 in grid:
        t0 = time.perf_counter()
        bits = errs = frames = ferrs = 0
        for out in _ordered_trials(lambda t: simulate_trial(code, ebn0, seed, t), w):
            bits += out.bits
            errs += out.bit_errors
            frames += out.blocks
            ferrs += out.block_errors
            if errs >= stop.min_bit_errors or frames >= stop.max_blocks:
                break
        r = BerResult(
            ebn0, bits, errs, frames, ferrs, float(cfg.iterations),
            time.perf_counter() - t0, errs < stop.min_bit_errors,
        )
        results.append(r)
        if progress:
            progress(cfg, r)
    return results


def ber_crossing(results, target: float) -> float | None:
    """Eb/N0 where the BER curve crosses ``target`` (log-linear interpolation).

    Uses the last point above ``target`` followed by a point at or below it;
    returns ``None`` if the sweep does not bracket the target.
    """
    pts = sorted(results, key=lambda r: r.ebn0_db)
    for lo, hi in zip(pts, pts[1:]):
        if lo.ber > target >= hi.ber:
            if hi.ber <= 0:
                return hi.ebn0_db
            f = (math.log10(lo.ber) - math.log10(target)) / (math.log10(lo.ber) - math.log10(hi.ber))
            return lo.ebn0_db + f * (hi.ebn0_db - lo.ebn0_db)
    return None


# -- mutual information ----------------------------------------------------------


def j_function(sigma: float) -> float:
    """Mutual information between a bit and a consistent Gaussian LLR of std ``sigma``.

    ``J(sigma) = 1 - E[log2(1 + exp(-L))]`` with ``L ~ N(sigma^2/2, sigma^2)``.
    """
    if sigma <= 0:
        return 0.0
    mu = 0.5 * sigma * sigma

    def integrand(z):
        return math.exp(-0.5 * z * z) * np.logaddexp(0.0, -(mu + sigma * z))

    val, _ = integrate.quad(integrand, -12.0, 12.0, epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(min(1.0, max(0.0, 1.0 - val / (math.sqrt(2 * math.pi) * math.log(2)))))


def j_inverse(info: float, tol: float = 1e-6) -> float:
    if not 0.0 <= info < 1.0:
        raise ValueError(f"mutual information must lie in [0, 1), got {info}")
    if info == 0.0:
        return 0.0
    hi = 1.0
    while j_function(hi) < info:
        hi *= 2.0
        if hi > 1e3:
            raise ArithmeticError(f"J inversion did not bracket {info}")
    sigma = optimize.brentq(lambda s: j_function(s) - info, 0.0, hi, xtol=1e-12, rtol=1e-12)
    if abs(j_function(sigma) - info) > tol:
        raise ArithmeticError(f"J inversion missed {info} by more than {tol}")
    return sigma


def consistent_llrs(bits, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian LLRs with mean ``x sigma^2 / 2`` and variance ``sigma^2`` (``x = 1 - 2 bit``)."""
    x = 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)
    return 0.5 * sigma * sigma * x + sigma * rng.standard_normal(x.shape)


def mutual_information(llrs, bits) -> float:
    """Sample estimate ``1 - mean(log2(1 + exp(-x L)))``, clamped to [0, 1]."""
    x = 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)
    v = 1.0 - np.mean(np.logaddexp(0.0, -x * np.asarray(llrs, dtype=np.float64))) / math.log(2)
    return float(min(1.0, max(0.0, v)))


@dataclass(frozen=True)
class ExitPoint:
    ia: float
    ie: float
    snr_db: float
    constituent: int
    iteration: int | None = None


def exit_chart(
    cfg: TurboConfig, snr_db: float, ia_grid, samples_per_point: int = 100_000, seed: int = 0
) -> list[ExitPoint]:
    """Transfer curve of each constituent under synthetic a-priori input.

    A-priori LLRs are consistent Gaussian with mutual information ``ia``; the
    constituent runs one APP pass and ``ie`` is estimated from its extrinsic
    output.  Returns points for constituent 1 then constituent 2.
    """
    ia_grid = [float(v) for v in ia_grid]
    if any(not 0.0 <= v < 1.0 for v in ia_grid):
        raise ValueError("ia grid must lie in [0, 1)")
    code = turbo_code(cfg)
    n = cfg.block_len * cfg.num_blocks
    trials = max(1, -(-samples_per_point // n))
    sigmas = [j_inverse(v) for v in ia_grid]
    pts = {1: [], 2: []}
    for gi, (ia, sa) in enumerate(zip(ia_grid, sigmas)):
        ext = {1: [], 2: []}
        truth = {1: [], 2: []}
        for t in range(trials):
            bits = random_bits(seed, n, t)
            cw, fr = _channel_frame(code, bits, snr_db, seed, t)
            rng = np.random.default_rng([seed, t, gi])
            B, L = cfg.num_blocks, cfg.block_len
            pbits = code.perm.apply(bits)
            for c, ub, ls, lp, ts, tp in (
                (1, bits, fr.systematic, fr.parity1, fr.tail_sys1, fr.tail_par1),
                (2, pbits, code.perm.apply(fr.systematic.ravel()).reshape(B, L), fr.parity2, fr.tail_sys2, fr.tail_par2),
            ):
                apr = np.clip(consistent_llrs(ub, sa, rng), -CLAMP, CLAMP).reshape(B, L)
                ext[c].append(code._constituent_decode(ls, lp, apr, ts, tp).ravel())
                truth[c].append(ub)
        for c in (1, 2):
            ie = mutual_information(np.concatenate(ext[c]), np.concatenate(truth[c]))
            pts[c].append(ExitPoint(ia, ie, snr_db, c))
    return pts[1] + pts[2]


def exit_trajectory(cfg: TurboConfig, ebn0_db: float, trials: int = 1, seed: int = 0) -> list[ExitPoint]:
    """Measured (ia, ie) of each half-iteration of the real iterative decoder."""
    code = turbo_code(cfg)
    per = [[[], []] for _ in range(cfg.iterations)]
    truths = []
    for t in range(trials):
        out = simulate_trial(code, ebn0_db, seed, t, keep_extrinsic=True)
        truths.append(out.truth)
        for it, (e1, e2) in enumerate(out.extrinsic):
            per[it][0].append(e1)
            per[it][1].append(e2)
    truth = np.concatenate(truths)
    pts = []
    prev_e2 = np.zeros(truth.size)
    for it in range(cfg.iterations):
        e1 = np.concatenate(per[it][0])
        e2 = np.concatenate(per[it][1])
        pts.append(ExitPoint(mutual_information(prev_e2, truth), mutual_information(e1, truth), ebn0_db, 1, it + 1))
        pts.append(ExitPoint(mutual_information(e1, truth), mutual_information(e2, truth), ebn0_db, 2, it + 1))
        prev_e2 = e2
    return pts


# -- density evolution proxies ----------------------------------------------------


@dataclass
class EvolutionTrace:
    """Per-iteration statistics, shape ``(iterations, 2)`` (column = constituent).

    ``snr`` is mean^2 / variance of the sign-adjusted extrinsic output;
    ``correlation`` the Pearson correlation between a-priori input and
    extrinsic output of the same constituent (0 when either is constant).
    """

    snr: np.ndarray
    correlation: np.ndarray
    ebn0_db: float
    trials: int

    @property
    def iterations(self) -> int:
        return self.snr.shape[0]


def _pool(moment_list) -> np.ndarray:
    stack = np.stack(moment_list)  # (trials, iters, 2, 6)
    pooled = np.empty(stack.shape[1:])
    for idx in np.ndindex(pooled.shape):
        pooled[idx] = math.fsum(stack[(slice(None),) + idx])
    return pooled


def _snr_from_moments(m) -> float:
    n, _, _, se, se2, _ = m
    mean = se / n
    var = se2 / n - mean * mean
    if var <= 1e-12 * max(mean * mean, 1e-300):
        return SNR_CAP
    return float(min(SNR_CAP, max(0.0, mean * mean / var)))


def _corr_from_moments(m) -> float:
    n, sa, sa2, se, se2, sae = m
    ma, me = sa / n, se / n
    va = sa2 / n - ma * ma
    ve = se2 / n - me * me
    if va <= 1e-12 * max(ma * ma, 1e-300) or ve <= 1e-12 * max(me * me, 1e-300):
        return 0.0
    r = (sae / n - ma * me) / math.sqrt(va * ve)
    return float(min(1.0, max(-1.0, r)))


def pearson(a, b) -> float:
    """Pearson correlation of two samples; 0 when either is constant."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    m = np.array([a.size, a.sum(), (a * a).sum(), b.sum(), (b * b).sum(), (a * b).sum()])
    return _corr_from_moments(m)


def _trace(cfg: TurboConfig, ebn0_db: float, trials: int, seed: int, workers: int | None) -> EvolutionTrace:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    code = turbo_code(cfg)
    w = resolve_workers(workers)
    moments = []
    for out in _ordered_trials(lambda t: simulate_trial(code, ebn0_db, seed, t), w):
        moments.append(out.moments)
        if len(moments) == trials:
            break
    pooled = _pool(moments)
    iters = cfg.iterations
    snr = np.array([[_snr_from_moments(pooled[i, c]) for c in range(2)] for i in range(iters)])
    corr = np.array([[_corr_from_moments(pooled[i, c]) for c in range(2)] for i in range(iters)])
    return EvolutionTrace(snr, corr, ebn0_db, trials)


def snr_evolution(
    cfg: TurboConfig, ebn0_db: float, trials: int = 10, seed: int = 0, workers: int | None = None
) -> EvolutionTrace:
    """Extrinsic SNR per iteration, pooled over ``trials`` streams."""
    return _trace(cfg, ebn0_db, trials, seed, workers)


def extrinsic_covariance(
    cfg: TurboConfig, ebn0_db: float, trials: int = 10, seed: int = 0, workers: int | None = None
) -> EvolutionTrace:
    """A-priori/extrinsic correlation per iteration, pooled over ``trials`` streams."""
    return _trace(cfg, ebn0_db, trials, seed, workers)

