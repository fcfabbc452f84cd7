import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ibptc.rsc import GeneratorConfig, build_trellis, circulation_state, encode_block
from oracles import shift_register_encode, zero_input_period

bit_lists = st.lists(st.integers(0, 1), min_size=1, max_size=60)


def test_default_trellis_shape(trellis):
    assert trellis.num_states == 8
    assert trellis.memory == 3


def test_encoder_period_matches_state_enumeration(trellis):
    assert zero_input_period() == 7
    assert trellis.encoder_period == 7


def test_memory_one_identity_code():
    t = build_trellis(GeneratorConfig(feedback_taps=1, forward_taps=1, memory=1))
    for s, u, _, p in t.edges():
        assert p == u


@pytest.mark.parametrize("memory", [0, 17])
def test_memory_out_of_range(memory):
    with pytest.raises(ValueError):
        build_trellis(GeneratorConfig(1, 1, memory))


def test_taps_need_d0():
    with pytest.raises(ValueError):
        build_trellis(GeneratorConfig(feedback_taps=0b1100, forward_taps=0b1011, memory=3))


def test_next_state_is_bijective_per_input(trellis):
    for u in (0, 1):
        assert sorted(trellis.next_state[:, u]) == list(range(8))


def test_reverse_edges_invert_forward_edges(trellis):
    for s, u, ns, _ in trellis.edges():
        assert trellis.prev_state[ns, u] == s


def test_all_zero_terminated(trellis):
    e = encode_block(np.zeros(20, dtype=int), 0, True, trellis)
    assert not e.systematic.any() and not e.parity.any()
    assert not e.tail_systematic.any() and not e.tail_parity.any()
    assert e.final_state == 0


def test_impulse_response_is_periodic(trellis):
    bits = [1] + [0] * 40
    e = encode_block(bits, 0, False, trellis)
    ref, _, _, _ = shift_register_encode(bits)
    assert e.parity.tolist() == ref
    tail = e.parity[1:]
    assert np.array_equal(tail[7:], tail[:-7])
    assert not np.array_equal(tail[1:], tail[:-1])


@given(bit_lists, st.integers(0, 7))
def test_matches_shift_register_oracle(bits, start):
    reg = [(start >> i) & 1 for i in range(3)]
    ref_par, ref_ts, ref_tp, _ = shift_register_encode(bits, terminate=True, reg=reg)
    e = encode_block(bits, start, True, build_trellis())
    assert e.systematic.tolist() == bits
    assert e.parity.tolist() == ref_par
    assert e.tail_systematic.tolist() == ref_ts
    assert e.tail_parity.tolist() == ref_tp


@given(bit_lists)
def test_termination_reaches_zero(bits):
    assert encode_block(bits, 0, True, build_trellis()).final_state == 0


@given(st.integers(1, 60).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n))))
def test_parity_is_linear(pair):
    a, b = (np.array(x) for x in pair)
    t = build_trellis()
    pa = encode_block(a, 0, False, t).parity
    pb = encode_block(b, 0, False, t).parity
    assert np.array_equal(encode_block(a ^ b, 0, False, t).parity, pa ^ pb)


@given(bit_lists)
def test_systematic_plus_tail_round_trip(bits):
    """Feeding systematic+tail bits through the plain encoder reproduces parity and ends at 0."""
    t = build_trellis()
    e = encode_block(bits, 0, True, t)
    full = list(e.systematic) + list(e.tail_systematic)
    par, _, _, reg = shift_register_encode(full)
    assert par == list(e.parity) + list(e.tail_parity)
    assert reg == [0, 0, 0]


@settings(max_examples=50)
@given(st.lists(st.integers(0, 1), min_size=8, max_size=50).filter(lambda b: len(b) % 7))
def test_circulation_state_gives_tail_biting(bits):
    t = build_trellis()
    zero_final = encode_block(bits, 0, False, t).final_state
    s = circulation_state(t, zero_final, len(bits))
    assert encode_block(bits, s, False, t).final_state == s


def test_circulation_rejects_period_multiple(trellis):
    with pytest.raises(ValueError):
        circulation_state(trellis, 0, 14)


def test_encode_rejects_bad_input(trellis):
    with pytest.raises(ValueError):
        encode_block([], 0, False, trellis)
    with pytest.raises(ValueError):
        encode_block([0, 2], 0, False, trellis)
    with pytest.raises(ValueError):
        encode_block([0, 1], 8, False, trellis)
