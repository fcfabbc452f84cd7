"""Intra-block interleavers, the inter-block permutation (IBP) and their composition.

A stream of ``B`` blocks of ``L`` bits is interleaved in two layers.  The bit at
``(block b, position i)`` is first moved to ``(b, j)`` with ``j = intra[i]`` and
then shifted to block ``b + delta(j)``, where ``delta`` is a periodic
block-displacement rule with values in ``[-S, S]``.  ``S`` is the span; ``S = 0``
is an ordinary block interleaver.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from numba import njit

__all__ = [
    "Permutation",
    "IbpConfig",
    "StreamPermutation",
    "LatencyReport",
    "SpreadConstructionError",
    "PermutationFileError",
    "make_srandom",
    "make_modified_srandom",
    "make_rectangular",
    "make_identity",
    "make_ibp",
    "compose_stream",
    "latency_report",
    "spread_violations",
    "block_displacements",
    "default_spread",
    "read_permutation",
    "write_permutation",
    "parse_permutation_text",
]


class SpreadConstructionError(RuntimeError):
    """The randomized s-random construction ran out of restarts."""


class PermutationFileError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class Permutation:
    """Bijection on ``range(N)``; ``map[i]`` is the destination of position ``i``."""

    __slots__ = ("map", "inverse")

    def __init__(self, mapping):
        m = np.array(mapping, dtype=np.int64).reshape(-1)
        n = m.size
        if n == 0:
            raise ValueError("empty permutation")
        if m.min() < 0 or m.max() >= n:
            raise ValueError("permutation entries out of range")
        inv = np.full(n, -1, dtype=np.int64)
        inv[m] = np.arange(n)
        if np.any(inv < 0):
            raise ValueError("mapping is not a bijection")
        m.setflags(write=False)
        inv.setflags(write=False)
        self.map = m
        self.inverse = inv

    def __len__(self) -> int:
        return self.map.size

    def __eq__(self, other) -> bool:
        return isinstance(other, Permutation) and np.array_equal(self.map, other.map)

    def __repr__(self) -> str:
        return f"Permutation(N={len(self)})"

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Move ``x[i]`` to position ``map[i]`` (works along the last axis)."""
        x = np.asarray(x)
        out = np.empty_like(x)
        out[..., self.map] = x
        return out

    def unapply(self, y: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`apply`."""
        return np.asarray(y)[..., self.map]

    def compose(self, then: "Permutation") -> "Permutation":
        """Permutation equal to applying ``self`` first and ``then`` second."""
        return Permutation(then.map[self.map])

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.map, np.arange(len(self))))


def make_identity(n: int) -> Permutation:
    return Permutation(np.arange(n))


def make_rectangular(rows: int, cols: int, length: int | None = None) -> Permutation:
    """Block interleaver writing row by row and reading column by column."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be positive")
    if length is not None and rows * cols != length:
        raise ValueError(f"rows*cols = {rows * cols} does not match L = {length}")
    idx = np.arange(rows * cols)
    r, c = divmod(idx, cols)
    return Permutation(c * rows + r)


def default_spread(length: int) -> int:
    """Largest spread that the randomized construction reliably reaches."""
    return max(1, math.isqrt(length // 2))


def spread_violations(mapping, s: int, limit: int | None = None) -> list[tuple[int, int]]:
    """Pairs ``(i, j)``, ``i < j < i + s``, whose images are closer than ``s``.

    Direct O(N*s) scan; kept free of the construction code so it can serve as an
    independent checker.
    """
    m = [int(v) for v in mapping]
    bad = []
    for i in range(len(m)):
        for j in range(i + 1, min(len(m), i + s)):
            if abs(m[i] - m[j]) < s:
                bad.append((i, j))
                if limit is not None and len(bad) >= limit:
                    return bad
    return bad


@njit(cache=True)
def _srandom_attempt(pool, s, out):
    """Greedy fill in the random order of ``pool``; returns positions filled."""
    n = pool.shape[0]
    remaining = n
    for i in range(n):
        lo = i - s + 1
        if lo < 0:
            lo = 0
        chosen = -1
        for k in range(remaining):
            c = pool[k]
            ok = True
            for p in range(lo, i):
                d = c - out[p]
                if -s < d < s:
                    ok = False
                    break
            if ok:
                chosen = k
                break
        if chosen < 0:
            return i
        out[i] = pool[chosen]
        # keep the random order of the remaining candidates
        for k in range(chosen, remaining - 1):
            pool[k] = pool[k + 1]
        remaining -= 1
    return n


@njit(cache=True)
def _repair_tail(out, filled, pool_left, s, rng_order):
    """Place leftover values by swapping them with earlier compatible entries.

    Returns True when every position has been filled.
    """
    n = out.shape[0]
    for i in range(filled, n):
        placed = False
        for t in range(pool_left.shape[0]):
            c = pool_left[t]
            if c < 0:
                continue
            # direct placement
            ok = True
            for p in range(max(0, i - s + 1), i):
                if abs(c - out[p]) < s:
                    ok = False
                    break
            if ok:
                out[i] = c
                pool_left[t] = -1
                placed = True
                break
            # swap: c goes to an earlier slot k, out[k] goes to i
            for r in range(rng_order.shape[0]):
                k = rng_order[r]
                if k >= i:
                    continue
                v = out[k]
                ok = True
                for p in range(max(0, k - s + 1), min(i, k + s)):
                    if p != k and abs(c - out[p]) < s:
                        ok = False
                        break
                if not ok:
                    continue
                for p in range(max(0, i - s + 1), i):
                    w = c if p == k else out[p]
                    if abs(v - w) < s:
                        ok = False
                        break
                if ok:
                    out[k] = c
                    out[i] = v
                    pool_left[t] = -1
                    placed = True
                    break
            if placed:
                break
        if not placed:
            return False
    return True


def make_srandom(
    length: int, s: int | None = None, seed: int = 0, max_restarts: int = 200
) -> Permutation:
    """Random interleaver with spread ``s``.

    Every pair ``i != j`` with ``|i - j| < s`` satisfies ``|map[i] - map[j]| >= s``.
    Each attempt draws a random candidate order and fills positions greedily;
    when the greedy pass gets stuck the leftover values are placed by swapping
    with compatible earlier entries, and only if that fails is the attempt
    restarted.

    Raises
    ------
    SpreadConstructionError
        If ``max_restarts`` attempts all fail, which means ``s`` is too large
        for ``length``.
    """
    if length < 1:
        raise ValueError("length must be positive")
    s = default_spread(length) if s is None else int(s)
    if s < 1:
        raise ValueError("spread must be >= 1")
    if s > length / 2:
        raise ValueError(f"spread {s} exceeds L/2 = {length / 2}")
    rng = np.random.default_rng(seed)
    for _ in range(max_restarts):
        pool = rng.permutation(length).astype(np.int64)
        out = np.full(length, -1, dtype=np.int64)
        filled = _srandom_attempt(pool, s, out)
        if filled == length:
            return Permutation(out)
        left = np.setdiff1d(np.arange(length), out[:filled])
        order = rng.permutation(filled).astype(np.int64)
        if _repair_tail(out, filled, rng.permutation(left).astype(np.int64), s, order):
            return Permutation(out)
    raise SpreadConstructionError(
        f"no spread-{s} permutation of length {length} after {max_restarts} restarts"
    )


@dataclass(frozen=True)
class IbpConfig:
    """Parameters of the inter-block permutation layer.

    ``period`` defaults to ``2*span + 1``.  ``boundary_mode`` is ``"wrap"``
    (blocks indexed modulo ``num_blocks``) or ``"clamp"`` (a finite line of
    blocks; edge collisions are repaired by pairwise swaps).
    """

    block_len: int
    span: int = 0
    num_blocks: int = 1
    period: int | None = None
    step: int = 1
    boundary_mode: str = "wrap"

    @property
    def ts(self) -> int:
        return 2 * self.span + 1 if self.period is None else self.period

    def validate(self) -> None:
        if self.block_len < 1:
            raise ValueError("block_len must be >= 1")
        if self.span < 0:
            raise ValueError("span must be >= 0")
        if self.num_blocks < 1:
            raise ValueError("num_blocks must be >= 1")
        if self.ts < 1:
            raise ValueError("period must be >= 1")
        if self.boundary_mode not in ("wrap", "clamp"):
            raise ValueError(f"unknown boundary_mode {self.boundary_mode!r}")
        if self.span > 0 and math.gcd(self.step, 2 * self.span + 1) != 1:
            raise ValueError(f"step {self.step} is not coprime to 2S+1 = {2 * self.span + 1}")
        if self.boundary_mode == "wrap" and self.span > 0 and self.num_blocks < 2 * self.span + 1:
            raise ValueError("wrap mode needs num_blocks >= 2*span + 1")


def make_ibp(cfg: IbpConfig) -> np.ndarray:
    """Block displacement ``delta[j]`` for every intra-block position ``j``.

    ``delta(j) = ((j mod T_s) * step mod (2S + 1)) - S``.
    """
    cfg.validate()
    j = np.arange(cfg.block_len, dtype=np.int64)
    if cfg.span == 0:
        return np.zeros(cfg.block_len, dtype=np.int64)
    return ((j % cfg.ts) * cfg.step) % (2 * cfg.span + 1) - cfg.span


@njit(cache=True)
def _msrandom_attempt(pool, s, delta, block_len, out):
    n = pool.shape[0]
    remaining = n
    for i in range(n):
        chosen = -1
        for k in range(remaining):
            c = pool[k]
            ok = True
            # earlier positions of the same block
            for p in range(max(0, i - s + 1), i):
                d = (delta[c] - delta[out[p]]) * block_len + c - out[p]
                if -s < d < s:
                    ok = False
                    break
            # positions at the start of the next block, already placed
            if ok:
                for p in range(0, min(i, i + s - block_len)):
                    d = (1 + delta[out[p]] - delta[c]) * block_len + out[p] - c
                    if -s < d < s:
                        ok = False
                        break
            if ok:
                chosen = k
                break
        if chosen < 0:
            return i
        out[i] = pool[chosen]
        for k in range(chosen, remaining - 1):
            pool[k] = pool[k + 1]
        remaining -= 1
    return n


def make_modified_srandom(
    cfg: IbpConfig, s: int | None = None, seed: int = 0, max_restarts: int = 500
) -> Permutation:
    """Spread-``s`` intra-block interleaver judged on the composite stream map.

    Distances are measured between global destinations after the inter-block
    shift, so pairs that the IBP sends to different blocks are automatically
    far apart, and pairs straddling a block boundary are checked as well.
    """
    cfg.validate()
    length = cfg.block_len
    s = default_spread(length) if s is None else int(s)
    if s < 1 or s > length / 2:
        raise ValueError(f"spread {s} outside [1, L/2]")
    delta = make_ibp(cfg)
    rng = np.random.default_rng(seed)
    for _ in range(max_restarts):
        pool = rng.permutation(length).astype(np.int64)
        out = np.full(length, -1, dtype=np.int64)
        if _msrandom_attempt(pool, s, delta, length, out) == length:
            return Permutation(out)
    raise SpreadConstructionError(
        f"no composite spread-{s} permutation of length {length} after {max_restarts} restarts"
    )


@dataclass(frozen=True, eq=False)
class StreamPermutation:
    """Composite permutation over ``num_blocks * block_len`` stream positions."""

    perm: Permutation
    block_len: int
    num_blocks: int
    span: int
    srid_bits: int
    avg_latency_bits: int
    boundary_mode: str = "wrap"
    repairs: int = 0

    def __len__(self) -> int:
        return len(self.perm)

    @property
    def map(self) -> np.ndarray:
        return self.perm.map

    def apply(self, x):
        return self.perm.apply(x)

    def unapply(self, y):
        return self.perm.unapply(y)


def block_displacements(mapping, block_len: int, num_blocks: int, mode: str = "wrap") -> np.ndarray:
    """Signed block displacement of every stream position (circular in wrap mode)."""
    m = np.asarray(mapping, dtype=np.int64)
    src = np.arange(m.size) // block_len
    dst = m // block_len
    d = dst - src
    if mode == "wrap":
        d = (d + num_blocks // 2) % num_blocks - num_blocks // 2
    return d


def _clamp_repair(delta: np.ndarray, num_blocks: int, span: int):
    """Per-column displacement for a finite line of blocks.

    Columns with displacement ``-d`` and ``+d`` are paired; the bits a paired
    column pushes off one end of the line are swapped into the slots its
    partner leaves empty at that same end.  Columns without a partner cannot
    be shifted bijectively on a line and fall back to zero displacement.
    Returns ``(delta_eff, partner, neutralised)``.
    """
    if num_blocks < 2 * span:
        raise ValueError(f"clamp mode needs num_blocks >= 2*span = {2 * span}")
    eff = delta.copy()
    partner = np.full(delta.size, -1, dtype=np.int64)
    neutralised = 0
    for d in range(1, span + 1):
        neg = list(np.flatnonzero(delta == -d))
        pos = list(np.flatnonzero(delta == d))
        for a, b in zip(neg, pos):
            partner[a], partner[b] = b, a
        for extra in neg[len(pos):] + pos[len(neg):]:
            eff[extra] = 0
            neutralised += 1
    return eff, partner, neutralised


def compose_stream(intra: Permutation, cfg: IbpConfig) -> StreamPermutation:
    """Compose the intra-block permutation with the IBP over the whole stream."""
    cfg.validate()
    L, B, S = cfg.block_len, cfg.num_blocks, cfg.span
    if len(intra) != L:
        raise ValueError(f"intra permutation has length {len(intra)}, expected L = {L}")
    delta = make_ibp(cfg)
    b = np.repeat(np.arange(B, dtype=np.int64), L)
    i = np.tile(np.arange(L, dtype=np.int64), B)
    j = intra.map[i]
    repairs = 0
    if cfg.boundary_mode == "wrap":
        dest_block = (b + delta[j]) % B
        dest_pos = j
    else:
        eff, partner, repairs = _clamp_repair(delta, B, S)
        d = eff[j]
        dest_block = b + d
        dest_pos = j.copy()
        off = (dest_block < 0) | (dest_block >= B)
        # an overflowing bit keeps its block and takes its partner column's empty slot
        dest_block = np.where(off, b, dest_block)
        dest_pos[off] = partner[j[off]]
        repairs += int(off.sum())
    try:
        perm = Permutation(dest_block * L + dest_pos)
    except ValueError as exc:
        raise ValueError(f"boundary repair failed for {cfg}: {exc}") from None
    srid = (1 + S) * L
    return StreamPermutation(perm, L, B, S, srid, srid, cfg.boundary_mode, repairs)


@dataclass(frozen=True)
class LatencyReport:
    srid_bits: int
    avg_latency_bits: int
    classic_equivalent_block: int


def latency_report(cfg: IbpConfig) -> LatencyReport:
    """Single-run interleaving delay and the classic block size with equal delay."""
    cfg.validate()
    d = (1 + cfg.span) * cfg.block_len
    return LatencyReport(d, d, d)


# -- text format: "N" then N lines "i map[i]" ---------------------------------


def parse_permutation_text(text: str) -> np.ndarray:
    """Parse the permutation text format into a raw (unvalidated) map array.

    Raises :class:`PermutationFileError` naming the offending line for
    structural problems; bijectivity is left to the caller.
    """
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise PermutationFileError(1, "missing length header")
    try:
        n = int(lines[0].strip())
    except ValueError:
        raise PermutationFileError(1, f"bad length header {lines[0]!r}") from None
    if n < 1:
        raise PermutationFileError(1, "length must be positive")
    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != n:
        raise PermutationFileError(len(lines) + 1, f"expected {n} entries, found {len(body)}")
    out = np.empty(n, dtype=np.int64)
    for k, raw in enumerate(body):
        lineno = k + 2
        parts = raw.split()
        if len(parts) != 2:
            raise PermutationFileError(lineno, f"expected 'i map[i]', got {raw!r}")
        try:
            i, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise PermutationFileError(lineno, f"non-integer entry {raw!r}") from None
        if i != k:
            raise PermutationFileError(lineno, f"index {i} out of order (expected {k})")
        if not 0 <= v < n:
            raise PermutationFileError(lineno, f"value {v} outside [0, {n})")
        out[k] = v
    return out


def read_permutation(path: str | os.PathLike) -> Permutation:
    with open(path, encoding="ascii") as fh:
        raw = parse_permutation_text(fh.read())
    seen = np.full(raw.size, -1, dtype=np.int64)
    for k, v in enumerate(raw):
        if seen[v] >= 0:
            raise PermutationFileError(k + 2, f"value {v} duplicates line {seen[v] + 2}")
        seen[v] = k
    return Permutation(raw)


def write_permutation(path: str | os.PathLike, perm: Permutation | StreamPermutation) -> None:
    m = perm.map
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"{m.size}\n")
        fh.writelines(f"{i} {v}\n" for i, v in enumerate(m.tolist()))
