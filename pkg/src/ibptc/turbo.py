"""Stream-wise turbo encoding and iterative decoding with an IBP interleaver.

Two identical RSC constituents encode ``B`` blocks of ``L`` bits: constituent 1
sees the natural stream, constituent 2 the stream reordered by the composite
(intra-block + inter-block) permutation.  Stream variants:

``TP``
    every block of both constituents is encoded from state 0 and terminated
    with ``m`` tail steps.
``TB``
    every block is tail-biting (start state equals end state).
``C``
    the state runs on across block boundaries; the stream is terminated once
    at its end.

Rate 1/2 keeps parity 1 at odd and parity 2 at even stream positions.
Systematic and tail bits are never punctured.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .interleave import (
    IbpConfig,
    Permutation,
    StreamPermutation,
    compose_stream,
    default_spread,
    make_identity,
    make_modified_srandom,
    make_rectangular,
    make_srandom,
    read_permutation,
)
from .rsc import GeneratorConfig, Trellis, _encode_kernel, _terminate_kernel, build_trellis, circulation_state
from .siso import CLAMP, DecoderMode, _siso_batch

__all__ = [
    "VARIANTS",
    "RATES",
    "InterleaverSpec",
    "TurboConfig",
    "StreamCodeword",
    "LlrFrame",
    "DecodeDiagnostics",
    "ReleaseSchedule",
    "TurboCode",
    "turbo_code",
    "turbo_encode_stream",
    "turbo_decode_stream",
    "release_schedule",
]

VARIANTS = ("TP", "TB", "C")
RATES = ("1/3", "1/2")
INTRA_KINDS = ("srandom", "msrandom", "rectangular", "identity", "file")

DEFAULT_WINDOW = 32

LANES = ("systematic", "parity1", "parity2", "tail_sys1", "tail_par1", "tail_sys2", "tail_par2")


@dataclass(frozen=True)
class InterleaverSpec:
    """How to build the intra-block permutation.

    ``srandom`` uses spread ``spread`` (default ``floor(sqrt(L/2))``),
    ``msrandom`` the composite-aware variant, ``rectangular`` needs ``rows``,
    ``file`` loads ``path`` in the permutation text format.
    """

    intra: str = "srandom"
    spread: int | None = None
    seed: int = 0
    rows: int | None = None
    path: str | None = None


@dataclass(frozen=True)
class TurboConfig:
    ibp: IbpConfig
    interleaver: InterleaverSpec = InterleaverSpec()
    generator: GeneratorConfig = GeneratorConfig()
    rate: str = "1/3"
    variant: str = "TP"
    iterations: int = 10
    mode: DecoderMode = DecoderMode()

    @classmethod
    def make(
        cls,
        block_len: int,
        span: int = 0,
        num_blocks: int = 1,
        *,
        period: int | None = None,
        step: int = 1,
        boundary_mode: str = "wrap",
        intra: str = "srandom",
        spread: int | None = None,
        intra_seed: int = 0,
        rows: int | None = None,
        path: str | None = None,
        rate: str = "1/3",
        variant: str = "TP",
        iterations: int = 10,
        algorithm: str = "logmap",
        window: int | None = None,
        warmup: int | None = None,
        generator: GeneratorConfig | None = None,
    ) -> "TurboConfig":
        """Flat-keyword constructor."""
        return cls(
            IbpConfig(block_len, span, num_blocks, period, step, boundary_mode),
            InterleaverSpec(intra, spread, intra_seed, rows, path),
            generator or GeneratorConfig(),
            rate,
            variant,
            iterations,
            DecoderMode(algorithm, window, warmup),
        )

    def validate(self) -> None:
        self.ibp.validate()
        self.generator.validate()
        if self.rate not in RATES:
            raise ValueError(f"rate must be one of {RATES}, got {self.rate!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.interleaver.intra not in INTRA_KINDS:
            raise ValueError(f"unknown intra interleaver {self.interleaver.intra!r}")

    def with_blocks(self, num_blocks: int) -> "TurboConfig":
        return replace(self, ibp=replace(self.ibp, num_blocks=num_blocks))

    @property
    def block_len(self) -> int:
        return self.ibp.block_len

    @property
    def num_blocks(self) -> int:
        return self.ibp.num_blocks


def build_intra(cfg: TurboConfig) -> Permutation:
    spec, L = cfg.interleaver, cfg.block_len
    if spec.intra == "identity":
        return make_identity(L)
    if spec.intra == "srandom":
        return make_srandom(L, spec.spread, spec.seed)
    if spec.intra == "msrandom":
        return make_modified_srandom(cfg.ibp, spec.spread, spec.seed)
    if spec.intra == "rectangular":
        if not spec.rows:
            raise ValueError("rectangular intra interleaver needs rows")
        if L % spec.rows:
            raise ValueError(f"rows={spec.rows} does not divide L={L}")
        return make_rectangular(spec.rows, L // spec.rows, L)
    if spec.intra == "file":
        if not spec.path:
            raise ValueError("file intra interleaver needs a path")
        perm = read_permutation(spec.path)
        if len(perm) != L:
            raise ValueError(f"{spec.path}: length {len(perm)} != L = {L}")
        return perm
    raise ValueError(f"unknown intra interleaver {spec.intra!r}")


@dataclass
class StreamCodeword:
    """Code bits of one stream, lane by lane.

    ``systematic`` and ``parity1`` are in natural block order, ``parity2`` in
    permuted block order; all three have shape ``(B, L)``.  Tail lanes have
    shape ``(n_tails, m)`` with ``n_tails = B`` (TP), ``0`` (TB) or ``1`` (C).
    ``keep1``/``keep2`` mark the transmitted parity positions.
    """

    systematic: np.ndarray
    parity1: np.ndarray
    parity2: np.ndarray
    tail_sys1: np.ndarray
    tail_par1: np.ndarray
    tail_sys2: np.ndarray
    tail_par2: np.ndarray
    keep1: np.ndarray
    keep2: np.ndarray

    def lanes(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in LANES}

    @property
    def num_info_bits(self) -> int:
        return self.systematic.size

    @property
    def num_transmitted(self) -> int:
        tails = sum(getattr(self, n).size for n in LANES[3:])
        return self.systematic.size + int(self.keep1.sum()) + int(self.keep2.sum()) + tails

    @property
    def rate(self) -> float:
        return self.num_info_bits / self.num_transmitted

    def transmitted_bits(self) -> np.ndarray:
        """Flat vector of transmitted bits in lane order (punctured bits dropped)."""
        return np.concatenate(
            [self.systematic.ravel(), self.parity1[self.keep1], self.parity2[self.keep2]]
            + [getattr(self, n).ravel() for n in LANES[3:]]
        )


@dataclass
class LlrFrame:
    """Channel LLRs laid out like :class:`StreamCodeword`; punctured entries are 0."""

    systematic: np.ndarray
    parity1: np.ndarray
    parity2: np.ndarray
    tail_sys1: np.ndarray
    tail_par1: np.ndarray
    tail_sys2: np.ndarray
    tail_par2: np.ndarray

    @classmethod
    def from_lanes(cls, cw: StreamCodeword, lane_llrs: dict[str, np.ndarray]) -> "LlrFrame":
        """Wrap full-length lanes, zeroing punctured parity positions."""
        out = {n: np.asarray(lane_llrs[n], dtype=np.float64).reshape(getattr(cw, n).shape) for n in LANES}
        out["parity1"] = np.where(cw.keep1, out["parity1"], 0.0)
        out["parity2"] = np.where(cw.keep2, out["parity2"], 0.0)
        return cls(**out)

    @classmethod
    def from_transmitted(cls, cw: StreamCodeword, flat) -> "LlrFrame":
        """Inverse of :meth:`StreamCodeword.transmitted_bits` for LLR vectors."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != cw.num_transmitted:
            raise ValueError(f"expected {cw.num_transmitted} LLRs, got {flat.size}")
        pos = 0
        out = {}

        def take(n):
            nonlocal pos
            seg = flat[pos : pos + n]
            pos += n
            return seg

        out["systematic"] = take(cw.systematic.size).reshape(cw.systematic.shape)
        for name, keep in (("parity1", cw.keep1), ("parity2", cw.keep2)):
            lane = np.zeros(keep.shape)
            lane[keep] = take(int(keep.sum()))
            out[name] = lane
        for name in LANES[3:]:
            shape = getattr(cw, name).shape
            out[name] = take(int(np.prod(shape))).reshape(shape)
        return cls(**out)

    def lanes(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in LANES}


@dataclass
class DecodeDiagnostics:
    """Per-iteration statistics of the exchanged extrinsic messages.

    ``moments[it, c]`` holds ``(n, sum a, sum a^2, sum e, sum e^2, sum a*e)``
    for constituent ``c``, where ``a`` is the clamped a-priori input and ``e``
    the clamped extrinsic output, both in natural bit order and multiplied by
    ``1 - 2*bit`` when the true bits are known.  ``settled_iteration[b]`` is
    the last iteration (1-based) at which block ``b``'s decisions changed.
    """

    ext_mean: np.ndarray
    ext_var: np.ndarray
    moments: np.ndarray
    ber: np.ndarray | None
    settled_iteration: np.ndarray
    extrinsic: np.ndarray | None = field(default=None, repr=False)

    @property
    def iterations(self) -> int:
        return self.ext_mean.shape[0]


@njit(cache=True, nogil=True)
def _encode_blocks(bits2d, init_states, terminate, nxt, par, tail_input, memory, par_out, tsys, tpar, finals):
    for b in range(bits2d.shape[0]):
        st = _encode_kernel(bits2d[b], init_states[b], nxt, par, par_out[b])
        if terminate:
            st = _terminate_kernel(st, memory, nxt, par, tail_input, tsys[b], tpar[b])
        finals[b] = st


class TurboCode:
    """A configured IBP turbo code: trellis, stream permutation, encoder, decoder."""

    def __init__(self, cfg: TurboConfig):
        cfg.validate()
        self.cfg = cfg
        self.trellis: Trellis = build_trellis(cfg.generator)
        self.intra = build_intra(cfg)
        self.perm: StreamPermutation = compose_stream(self.intra, cfg.ibp)
        L, B = cfg.block_len, cfg.num_blocks
        if cfg.variant == "TB" and L % self.trellis.encoder_period == 0:
            raise ValueError(
                f"tail-biting needs L not a multiple of the encoder period {self.trellis.encoder_period}"
            )
        g = np.arange(B * L).reshape(B, L)
        if cfg.rate == "1/2":
            self.keep1, self.keep2 = g % 2 == 1, g % 2 == 0
        else:
            self.keep1 = self.keep2 = np.ones((B, L), dtype=bool)

    # -- encoding -----------------------------------------------------------

    @property
    def n_tails(self) -> int:
        return {"TP": self.cfg.num_blocks, "TB": 0, "C": 1}[self.cfg.variant]

    def _constituent_encode(self, blocks: np.ndarray):
        t, m = self.trellis, self.trellis.memory
        variant = self.cfg.variant
        if variant == "C":
            rows = blocks.reshape(1, -1)
        else:
            rows = blocks
        nr = rows.shape[0]
        par = np.empty_like(rows)
        tsys = np.empty((nr, m), dtype=np.int64)
        tpar = np.empty((nr, m), dtype=np.int64)
        finals = np.empty(nr, dtype=np.int64)
        init = np.zeros(nr, dtype=np.int64)
        if variant == "TB":
            _encode_blocks(rows, init, False, t.next_state, t.parity, t.tail_input, m, par, tsys, tpar, finals)
            init = np.array([circulation_state(t, int(f), rows.shape[1]) for f in finals], dtype=np.int64)
            _encode_blocks(rows, init, False, t.next_state, t.parity, t.tail_input, m, par, tsys, tpar, finals)
            assert np.array_equal(init, finals)
            tsys = tpar = np.zeros((0, m), dtype=np.int64)
        else:
            _encode_blocks(rows, init, True, t.next_state, t.parity, t.tail_input, m, par, tsys, tpar, finals)
        return par.reshape(blocks.shape), tsys, tpar

    def encode(self, bits) -> StreamCodeword:
        L, B = self.cfg.block_len, self.cfg.num_blocks
        bits = np.asarray(bits, dtype=np.int64).ravel()
        if bits.size % L:
            raise ValueError(f"stream length {bits.size} is not a multiple of L = {L}")
        if bits.size != B * L:
            raise ValueError(f"stream length {bits.size} != B*L = {B * L}")
        if np.any((bits != 0) & (bits != 1)):
            raise ValueError("bits must be 0/1")
        natural = bits.reshape(B, L)
        permuted = self.perm.apply(bits).reshape(B, L)
        p1, ts1, tp1 = self._constituent_encode(natural)
        p2, ts2, tp2 = self._constituent_encode(permuted)
        return StreamCodeword(natural.copy(), p1, p2, ts1, tp1, ts2, tp2, self.keep1, self.keep2)

    # -- decoding -----------------------------------------------------------

    def _constituent_decode(self, lsys, lpar, lapr, tsys, tpar) -> np.ndarray:
        """Extrinsic LLRs, shape (B, L), of one constituent over the whole stream."""
        t, m = self.trellis, self.trellis.memory
        mode = self.cfg.mode
        variant = self.cfg.variant
        B, L = lsys.shape
        if variant == "C":
            mode = mode.windowed(DEFAULT_WINDOW)
            zeros = np.zeros((1, m))
            rs = np.concatenate([lsys.reshape(1, -1), tsys], axis=1)
            rp = np.concatenate([lpar.reshape(1, -1), tpar], axis=1)
            ra = np.concatenate([lapr.reshape(1, -1), zeros], axis=1)
            start = end = 0
        elif variant == "TP":
            zeros = np.zeros((B, m))
            rs = np.concatenate([lsys, tsys], axis=1)
            rp = np.concatenate([lpar, tpar], axis=1)
            ra = np.concatenate([lapr, zeros], axis=1)
            start = end = 0
        else:
            rs, rp, ra = lsys, lpar, lapr
            start = end = 2
        rs = np.clip(rs, -CLAMP, CLAMP)
        rp = np.clip(rp, -CLAMP, CLAMP)
        ra = np.clip(ra, -CLAMP, CLAMP)
        ext = np.empty_like(rs)
        window = mode.window or 0
        if window and window >= rs.shape[1]:
            window = 0
        _siso_batch(rs, rp, ra, start, end, t.next_state, t.parity, mode.log_map, window, mode.warmup_len, ext)
        if variant == "C":
            return ext[0, : B * L].reshape(B, L)
        return ext[:, :L]

    def decode(self, llrs: LlrFrame, truth=None, keep_extrinsic: bool = False):
        """Iteratively decode a stream.

        Returns the hard decisions (bit 1 where the deinterleaved posterior of
        constituent 2 is negative) and a :class:`DecodeDiagnostics`.
        """
        cfg = self.cfg
        B, L = cfg.num_blocks, cfg.block_len
        n = B * L
        shapes = {
            "systematic": (B, L), "parity1": (B, L), "parity2": (B, L),
            "tail_sys1": (self.n_tails, self.trellis.memory),
        }
        for name, shape in shapes.items():
            if getattr(llrs, name).shape != shape:
                raise ValueError(f"lane {name} has shape {getattr(llrs, name).shape}, expected {shape}")
        for name in LANES:
            if np.isnan(getattr(llrs, name)).any():
                raise ValueError(f"NaN in lane {name}")

        perm = self.perm
        ls = np.clip(llrs.systematic.reshape(n), -CLAMP, CLAMP)
        ls_perm = perm.apply(ls).reshape(B, L)
        ls2d = ls.reshape(B, L)
        sign = None
        if truth is not None:
            truth = np.asarray(truth).reshape(n)
            sign = 1.0 - 2.0 * truth

        iters = cfg.iterations
        moments = np.zeros((iters, 2, 6))
        ber = np.zeros(iters) if truth is not None else None
        settled = np.zeros(B, dtype=np.int64)
        ext2_nat = np.zeros(n)
        decisions = None
        ext_trace = [] if keep_extrinsic else None
        for it in range(iters):
            apr1 = ext2_nat
            e1 = self._constituent_decode(ls2d, llrs.parity1, apr1.reshape(B, L), llrs.tail_sys1, llrs.tail_par1)
            e1c = np.clip(e1.reshape(n), -CLAMP, CLAMP)
            apr2 = perm.apply(e1c).reshape(B, L)
            e2 = self._constituent_decode(ls_perm, llrs.parity2, apr2, llrs.tail_sys2, llrs.tail_par2)
            e2_nat = perm.unapply(e2.reshape(n))
            ext2_nat = np.clip(e2_nat, -CLAMP, CLAMP)
            posterior = ls + e1c + e2_nat
            new = (posterior < 0).astype(np.int8)

            for c, (a, e) in enumerate(((apr1, e1c), (e1c, ext2_nat))):
                if sign is not None:
                    a, e = a * sign, e * sign
                moments[it, c] = (n, a.sum(), (a * a).sum(), e.sum(), (e * e).sum(), (a * e).sum())
            if truth is not None:
                ber[it] = np.count_nonzero(new != truth) / n
            if decisions is not None:
                changed = (new != decisions).reshape(B, L).any(axis=1)
                settled[changed] = it + 1
            else:
                settled[:] = 1
            decisions = new
            if keep_extrinsic:
                ext_trace.append((e1c.copy(), ext2_nat.copy()))

        mean = moments[:, :, 3] / moments[:, :, 0]
        var = np.maximum(moments[:, :, 4] / moments[:, :, 0] - mean**2, 0.0)
        diag = DecodeDiagnostics(mean, var, moments, ber, settled, ext_trace)
        return decisions.astype(np.int64), diag


@functools.lru_cache(maxsize=32)
def turbo_code(cfg: TurboConfig) -> TurboCode:
    """Cached :class:`TurboCode` for ``cfg`` (configs are immutable)."""
    return TurboCode(cfg)


def turbo_encode_stream(bits, cfg: TurboConfig) -> StreamCodeword:
    return turbo_code(cfg).encode(bits)


def turbo_decode_stream(llrs: LlrFrame, cfg: TurboConfig, truth=None):
    return turbo_code(cfg).decode(llrs, truth)


@dataclass(frozen=True)
class ReleaseSchedule:
    """Bounded-delay view of the iterative schedule.

    ``offset_blocks``: once blocks up to ``b + offset_blocks`` have been
    received, block ``b``'s final extrinsic is fixed.  ``radius_per_iteration``
    lists the reach of message passing after each iteration.
    """

    span: int
    iterations: int
    offset_blocks: int
    radius_per_iteration: tuple[int, ...]

    def influence(self, block: int, iteration: int | None = None, num_blocks: int | None = None) -> range:
        """Blocks whose channel samples can affect ``block`` after ``iteration`` iterations."""
        it = self.iterations if iteration is None else iteration
        r = 2 * self.span * it
        lo, hi = block - r, block + r + 1
        if num_blocks is not None:
            lo, hi = max(lo, 0), min(hi, num_blocks)
        return range(lo, hi)


def release_schedule(cfg: TurboConfig) -> ReleaseSchedule:
    """Decode-completion offset ``2 * S * I`` of a pipelined decoder.

    Each half-iteration's interleaving moves information by at most ``S``
    blocks, so one iteration widens the dependency range by ``2S``.
    """
    S, it = cfg.ibp.span, cfg.iterations
    return ReleaseSchedule(S, it, 2 * S * it, tuple(2 * S * k for k in range(1, it + 1)))
