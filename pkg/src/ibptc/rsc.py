"""Recursive systematic convolutional (RSC) component code.

The default generator is the 3GPP constituent code
``G(D) = (1 + D + D^3) / (1 + D^2 + D^3)``.

Conventions
-----------
* Bit index 0 is the earliest bit in time.
* Polynomial bitmasks carry the coefficient of ``D^i`` in bit ``i``; ``D^0``
  multiplies the current register input.
* The encoder state packs the register contents ``a[k-1], ..., a[k-m]`` into an
  integer with ``a[k-i]`` in bit ``i-1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "GeneratorConfig",
    "Trellis",
    "EncodedBlock",
    "build_trellis",
    "encode_block",
    "circulation_state",
]

MAX_MEMORY = 16


@dataclass(frozen=True)
class GeneratorConfig:
    """Feedback/forward taps of a rate-1/2 RSC code.

    ``feedback_taps`` and ``forward_taps`` are bitmasks over ``D^0..D^m``.
    """

    feedback_taps: int = 0b1101  # 1 + D^2 + D^3
    forward_taps: int = 0b1011  # 1 + D + D^3
    memory: int = 3

    def validate(self) -> None:
        if not 1 <= self.memory <= MAX_MEMORY:
            raise ValueError(f"memory must lie in [1, {MAX_MEMORY}], got {self.memory}")
        limit = 1 << (self.memory + 1)
        for name in ("feedback_taps", "forward_taps"):
            taps = getattr(self, name)
            if not 0 < taps < limit:
                raise ValueError(f"{name}={taps:#b} does not fit memory {self.memory}")
            if not taps & 1:
                raise ValueError(f"{name} must include the D^0 coefficient")


@dataclass(frozen=True, eq=False)
class Trellis:
    """Precomputed state-transition tables of an RSC code.

    Attributes
    ----------
    next_state : ndarray, shape (num_states, 2)
        ``next_state[s, u]`` is the successor of state ``s`` under input ``u``.
    parity : ndarray, shape (num_states, 2)
        Parity bit emitted on edge ``(s, u)``.
    prev_state : ndarray, shape (num_states, 2)
        ``prev_state[s, u]`` is the state ``p`` with ``next_state[p, u] == s``
        (-1 where no such state exists, which only happens for degenerate
        generators whose top feedback tap is zero).
    tail_input : ndarray, shape (num_states,)
        Input bit that shifts a zero into the register (feedback cancelling
        termination).
    encoder_period : int
        Period of the zero-input state recurrence.
    """

    generator: GeneratorConfig
    num_states: int
    memory: int
    next_state: np.ndarray
    parity: np.ndarray
    prev_state: np.ndarray
    tail_input: np.ndarray
    encoder_period: int
    _zero_input_power: dict = field(default_factory=dict, repr=False)

    def edges(self):
        """Iterate ``(state, input, next_state, parity)`` over all edges."""
        for s in range(self.num_states):
            for u in (0, 1):
                yield s, u, int(self.next_state[s, u]), int(self.parity[s, u])


def _feedback_bit(state: int, taps: int, memory: int) -> int:
    acc = 0
    for i in range(1, memory + 1):
        if (taps >> i) & 1:
            acc ^= (state >> (i - 1)) & 1
    return acc


def _cycle_length(start: int, step) -> int:
    """Length of the eventual cycle reached from ``start`` under ``step``."""
    seen = {}
    s, k = start, 0
    while s not in seen:
        seen[s] = k
        s = step(s)
        k += 1
    return k - seen[s]


def build_trellis(g: GeneratorConfig | None = None) -> Trellis:
    """Tabulate the trellis of ``g`` (defaults to the 3GPP constituent code)."""
    g = g or GeneratorConfig()
    g.validate()
    m = g.memory
    n = 1 << m
    mask = n - 1
    next_state = np.zeros((n, 2), dtype=np.int64)
    parity = np.zeros((n, 2), dtype=np.int64)
    tail_input = np.zeros(n, dtype=np.int64)
    for s in range(n):
        fb = _feedback_bit(s, g.feedback_taps, m)
        tail_input[s] = fb
        for u in (0, 1):
            a = u ^ fb
            p = a if g.forward_taps & 1 else 0
            p ^= _feedback_bit(s, g.forward_taps, m)
            next_state[s, u] = ((s << 1) | a) & mask
            parity[s, u] = p

    prev_state = np.full((n, 2), -1, dtype=np.int64)
    for s in range(n):
        for u in (0, 1):
            prev_state[next_state[s, u], u] = s

    period = 1
    for s in range(1, n):
        period = math.lcm(period, _cycle_length(s, lambda x: int(next_state[x, 0])))

    for arr in (next_state, parity, prev_state, tail_input):
        arr.setflags(write=False)
    return Trellis(g, n, m, next_state, parity, prev_state, tail_input, period)


@dataclass(frozen=True)
class EncodedBlock:
    systematic: np.ndarray
    parity: np.ndarray
    final_state: int
    tail_systematic: np.ndarray | None = None
    tail_parity: np.ndarray | None = None

    @property
    def terminated(self) -> bool:
        return self.tail_systematic is not None


@njit(cache=True, nogil=True)
def _encode_kernel(bits, state, next_state, parity, out):
    for k in range(bits.shape[0]):
        u = bits[k]
        out[k] = parity[state, u]
        state = next_state[state, u]
    return state


@njit(cache=True, nogil=True)
def _terminate_kernel(state, memory, next_state, parity, tail_input, tail_sys, tail_par):
    for k in range(memory):
        u = tail_input[state]
        tail_sys[k] = u
        tail_par[k] = parity[state, u]
        state = next_state[state, u]
    return state


def encode_block(
    bits, initial_state: int = 0, terminate: bool = False, trellis: Trellis | None = None
) -> EncodedBlock:
    """Encode one block of information bits.

    With ``terminate=True`` the encoder appends ``memory`` tail steps whose
    input equals the register feedback, which drives the state to zero.
    """
    t = trellis or build_trellis()
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim != 1 or bits.size < 1:
        raise ValueError("bits must be a non-empty 1-D sequence")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0/1")
    if not 0 <= initial_state < t.num_states:
        raise ValueError(f"initial_state {initial_state} out of range")
    par = np.empty(bits.size, dtype=np.int64)
    state = _encode_kernel(bits, initial_state, t.next_state, t.parity, par)
    if not terminate:
        return EncodedBlock(bits.copy(), par, int(state))
    tail_sys = np.empty(t.memory, dtype=np.int64)
    tail_par = np.empty(t.memory, dtype=np.int64)
    state = _terminate_kernel(
        state, t.memory, t.next_state, t.parity, t.tail_input, tail_sys, tail_par
    )
    return EncodedBlock(bits.copy(), par, int(state), tail_sys, tail_par)


def _zero_input_after(t: Trellis, length: int) -> np.ndarray:
    """State reached from every state after ``length`` zero-input steps."""
    cached = t._zero_input_power.get(length)
    if cached is not None:
        return cached
    states = np.arange(t.num_states)
    for _ in range(length % t.encoder_period if t.encoder_period else length):
        states = t.next_state[states, 0]
    t._zero_input_power[length] = states
    return states


def circulation_state(t: Trellis, zero_start_final: int, length: int) -> int:
    """Tail-biting start state given the final state of a zero-start pass.

    By linearity, starting in ``s`` ends in ``A^length s XOR zero_start_final``;
    the circulation state solves ``s = A^length s XOR zero_start_final``.
    """
    if t.prev_state.min() < 0:
        raise ValueError("tail-biting needs a generator with a bijective zero-input map")
    if length % t.encoder_period == 0:
        raise ValueError(
            f"tail-biting is undefined for block length {length}, "
            f"a multiple of the encoder period {t.encoder_period}"
        )
    zi = _zero_input_after(t, length)
    for s in range(t.num_states):
        if (s ^ int(zi[s])) == zero_start_final:
            return s
    raise ValueError("no circulation state exists")  # unreachable for valid codes
