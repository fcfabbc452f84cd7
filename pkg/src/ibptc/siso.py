"""Soft-in/soft-out APP decoding of one RSC trellis (BCJR forward-backward).

LLRs are natural-log ratios ``ln P(bit=0) / P(bit=1)``: positive favours 0.
Branch metrics use the symmetric form
``gamma = (x_u * (L_sys + L_apriori) + x_p * L_parity) / 2`` with ``x = 1 - 2*bit``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit

from .rsc import Trellis

__all__ = [
    "CLAMP",
    "LOGMAP",
    "MAXLOGMAP",
    "DecoderMode",
    "SisoInput",
    "SisoOutput",
    "max_star",
    "app_decode",
    "sliding_window_decode",
    "boundary_metrics",
]

CLAMP = 50.0
NEG = -1.0e30

LOGMAP = "logmap"
MAXLOGMAP = "maxlogmap"

# boundary codes understood by the kernels
_ZERO, _UNIFORM, _CIRCULAR, _GIVEN = 0, 1, 2, 3

Boundary = Union[str, np.ndarray]


@dataclass(frozen=True)
class DecoderMode:
    """APP algorithm and optional sliding window (``window`` W, ``warmup`` W0)."""

    algorithm: str = LOGMAP
    window: int | None = None
    warmup: int | None = None

    def __post_init__(self):
        if self.algorithm not in (LOGMAP, MAXLOGMAP):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.window is not None:
            if self.window < 1:
                raise ValueError("window must be >= 1")
            w0 = self.window if self.warmup is None else self.warmup
            if not 0 <= w0 <= self.window:
                raise ValueError("warmup must satisfy 0 <= warmup <= window")

    @property
    def log_map(self) -> bool:
        return self.algorithm == LOGMAP

    @property
    def warmup_len(self) -> int:
        if self.window is None:
            return 0
        return self.window if self.warmup is None else self.warmup

    def windowed(self, window: int = 32, warmup: int | None = None) -> "DecoderMode":
        """Copy of this mode with a window (keeps an existing one)."""
        if self.window is not None:
            return self
        return DecoderMode(self.algorithm, window, warmup)


@dataclass
class SisoInput:
    """Channel and a-priori LLR lanes of one trellis segment.

    ``start``/``end`` select the boundary state metrics: ``"zero"`` (known
    state 0), ``"uniform"`` (equiprobable), ``"circular"`` (tail-biting, both
    ends) or an explicit log-domain metric vector.
    """

    llr_systematic: np.ndarray
    llr_parity: np.ndarray
    llr_apriori: np.ndarray | None = None
    start: Boundary = "zero"
    end: Boundary = "zero"


@dataclass
class SisoOutput:
    llr_posterior: np.ndarray
    llr_extrinsic: np.ndarray
    alpha_end: np.ndarray
    beta_start: np.ndarray


def max_star(a: float, b: float, algorithm: str = LOGMAP) -> float:
    """Jacobian logarithm ``ln(e^a + e^b)`` (Log-MAP) or its ``max`` approximation."""
    m = max(a, b)
    if algorithm == MAXLOGMAP:
        return m
    if algorithm != LOGMAP:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return m + math.log1p(math.exp(-abs(a - b)))


@njit(cache=True, nogil=True, inline="always")
def _mstar(a, b, log_map):
    if a >= b:
        m = a
        d = b - a
    else:
        m = b
        d = a - b
    if log_map:
        return m + math.log1p(math.exp(d))
    return m


@njit(cache=True, nogil=True)
def _normalize(v):
    m = v[0]
    for s in range(1, v.shape[0]):
        if v[s] > m:
            m = v[s]
    for s in range(v.shape[0]):
        v[s] -= m


@njit(cache=True, nogil=True)
def _forward(lin, lpar, nxt, par, lo, hi, log_map, alpha):
    """alpha[k+1] from alpha[k] for k in [lo, hi); ``lin`` = L_sys + L_apriori."""
    ns_count = alpha.shape[1]
    for k in range(lo, hi):
        for s in range(ns_count):
            alpha[k + 1, s] = NEG
        hs = 0.5 * lin[k]
        hp = 0.5 * lpar[k]
        for s in range(ns_count):
            a = alpha[k, s]
            for u in range(2):
                g = (hs if u == 0 else -hs) + (hp if par[s, u] == 0 else -hp)
                t = nxt[s, u]
                alpha[k + 1, t] = _mstar(alpha[k + 1, t], a + g, log_map)
        _normalize(alpha[k + 1])


@njit(cache=True, nogil=True)
def _backward(lin, lpar, nxt, par, hi, lo, log_map, beta, alpha, ext, with_llr):
    """Run beta from position ``hi`` down to ``lo``; ``beta`` holds beta[hi] on entry.

    With ``with_llr`` the extrinsic LLR of every step in ``[lo, hi)`` is written
    to ``ext``; it excludes the step's own systematic and a-priori terms.
    """
    ns_count = beta.shape[0]
    new = np.empty(ns_count)
    for k in range(hi - 1, lo - 1, -1):
        hs = 0.5 * lin[k]
        hp = 0.5 * lpar[k]
        if with_llr:
            n0 = NEG
            n1 = NEG
            for s in range(ns_count):
                a = alpha[k, s]
                for u in range(2):
                    m = a + (hp if par[s, u] == 0 else -hp) + beta[nxt[s, u]]
                    if u == 0:
                        n0 = _mstar(n0, m, log_map)
                    else:
                        n1 = _mstar(n1, m, log_map)
            ext[k] = n0 - n1
        for s in range(ns_count):
            acc = NEG
            for u in range(2):
                g = (hs if u == 0 else -hs) + (hp if par[s, u] == 0 else -hp)
                acc = _mstar(acc, g + beta[nxt[s, u]], log_map)
            new[s] = acc
        _normalize(new)
        for s in range(ns_count):
            beta[s] = new[s]


@njit(cache=True, nogil=True)
def _init_metric(code, given, out):
    n = out.shape[0]
    if code == 0:
        out[0] = 0.0
        for s in range(1, n):
            out[s] = NEG
    elif code == 3:
        for s in range(n):
            out[s] = given[s]
        _normalize(out)
    else:
        for s in range(n):
            out[s] = 0.0


@njit(cache=True, nogil=True)
def _siso_segment(
    lsys, lpar, lapr, start_code, start_given, end_code, end_given,
    nxt, par, log_map, window, warmup, ext, alpha_end, beta_start,
):
    """Decode one segment in place; ``window <= 0`` means a single full window."""
    K = lsys.shape[0]
    S = nxt.shape[0]
    lin = np.empty(K)
    for k in range(K):
        lin[k] = lsys[k] + lapr[k]
    alpha = np.empty((K + 1, S))
    circular = start_code == 2 or end_code == 2

    if circular:
        # one warm-up lap around the block from equiprobable metrics
        for s in range(S):
            alpha[0, s] = 0.0
        _forward(lin, lpar, nxt, par, 0, K, log_map, alpha)
        for s in range(S):
            alpha[0, s] = alpha[K, s]
    else:
        _init_metric(start_code, start_given, alpha[0])
    _forward(lin, lpar, nxt, par, 0, K, log_map, alpha)
    for s in range(S):
        alpha_end[s] = alpha[K, s]

    beta_last = np.empty(S)
    if circular:
        for s in range(S):
            beta_last[s] = 0.0
        _backward(lin, lpar, nxt, par, K, 0, log_map, beta_last, alpha, ext, False)
    else:
        _init_metric(end_code, end_given, beta_last)

    if window <= 0 or window >= K:
        beta = beta_last.copy()
        _backward(lin, lpar, nxt, par, K, 0, log_map, beta, alpha, ext, True)
        for s in range(S):
            beta_start[s] = beta[s]
        return

    beta = np.empty(S)
    w_start = 0
    while w_start < K:
        w_end = min(w_start + window, K)
        warm_end = min(w_end + warmup, K)
        if warm_end == K:
            for s in range(S):
                beta[s] = beta_last[s]
        else:
            for s in range(S):
                beta[s] = 0.0
        _backward(lin, lpar, nxt, par, warm_end, w_end, log_map, beta, alpha, ext, False)
        _backward(lin, lpar, nxt, par, w_end, w_start, log_map, beta, alpha, ext, True)
        if w_start == 0:
            for s in range(S):
                beta_start[s] = beta[s]
        w_start = w_end


@njit(cache=True, nogil=True)
def _siso_batch(lsys, lpar, lapr, start_code, end_code, nxt, par, log_map, window, warmup, ext):
    """Decode the rows of 2-D lanes independently (one block per row)."""
    nb = lsys.shape[0]
    S = nxt.shape[0]
    dummy = np.zeros(S)
    a_end = np.empty(S)
    b_start = np.empty(S)
    for r in range(nb):
        _siso_segment(
            lsys[r], lpar[r], lapr[r], start_code, dummy, end_code, dummy,
            nxt, par, log_map, window, warmup, ext[r], a_end, b_start,
        )


def _clamped(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if np.isnan(a).any():
        raise ValueError("NaN in LLR input")
    return np.clip(a, -CLAMP, CLAMP)


def _boundary_code(b: Boundary, n_states: int):
    if isinstance(b, str):
        try:
            code = {"zero": _ZERO, "uniform": _UNIFORM, "circular": _CIRCULAR}[b]
        except KeyError:
            raise ValueError(f"unknown boundary {b!r}") from None
        return code, np.zeros(n_states)
    v = np.asarray(b, dtype=np.float64)
    if v.shape != (n_states,) or np.isnan(v).any():
        raise ValueError(f"boundary metrics must be a finite vector of length {n_states}")
    return _GIVEN, np.maximum(v, NEG)


def boundary_metrics(kind: str, n_states: int) -> np.ndarray:
    """Log-domain state metrics for ``"zero"`` or ``"uniform"`` boundaries."""
    out = np.zeros(n_states)
    if kind == "zero":
        out[1:] = NEG
    elif kind != "uniform":
        raise ValueError(f"unknown boundary {kind!r}")
    return out


def _is_circular(b) -> bool:
    return isinstance(b, str) and b == "circular"


def _run(inp: SisoInput, trellis: Trellis, mode: DecoderMode, window: int, warmup: int):
    lsys = _clamped(inp.llr_systematic)
    lpar = _clamped(inp.llr_parity)
    lapr = np.zeros_like(lsys) if inp.llr_apriori is None else _clamped(inp.llr_apriori)
    if lsys.ndim != 1 or lsys.shape != lpar.shape or lsys.shape != lapr.shape:
        raise ValueError("LLR lanes must be 1-D arrays of equal length")
    if lsys.size == 0:
        raise ValueError("empty LLR lanes")
    if _is_circular(inp.start) != _is_circular(inp.end):
        raise ValueError("circular boundaries apply to both ends")
    n = trellis.num_states
    sc, sg = _boundary_code(inp.start, n)
    ec, eg = _boundary_code(inp.end, n)
    ext = np.empty_like(lsys)
    a_end = np.empty(n)
    b_start = np.empty(n)
    _siso_segment(
        lsys, lpar, lapr, sc, sg, ec, eg, trellis.next_state, trellis.parity,
        mode.log_map, window, warmup, ext, a_end, b_start,
    )
    return SisoOutput(ext + lapr + lsys, ext, a_end, b_start)


def app_decode(inp: SisoInput, trellis: Trellis, mode: DecoderMode | None = None) -> SisoOutput:
    """Full forward-backward APP decode of one segment.

    Input lanes are clamped to ``±CLAMP``.  The posterior equals
    ``extrinsic + apriori + systematic`` bit for bit (after clamping).
    """
    return _run(inp, trellis, mode or DecoderMode(), 0, 0)


def sliding_window_decode(inp: SisoInput, trellis: Trellis, mode: DecoderMode) -> SisoOutput:
    """Windowed APP decode: the backward recursion of each length-W window
    starts from equiprobable metrics ``warmup`` steps past the window end
    (or from the segment's end boundary when that is reached)."""
    if mode.window is None:
        raise ValueError("sliding_window_decode needs a window in the decoder mode")
    k = np.asarray(inp.llr_systematic).size
    if k < mode.window:
        raise ValueError(f"segment length {k} shorter than window {mode.window}")
    return _run(inp, trellis, mode, mode.window, mode.warmup_len)
