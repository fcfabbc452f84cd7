"""Turbo codes with inter-block permutation interleavers.

Submodules: :mod:`rsc` (constituent code), :mod:`interleave`
(permutations), :mod:`siso` (APP decoders), :mod:`turbo` (stream encoder
and iterative decoder), :mod:`channel` (BPSK/AWGN), :mod:`analysis`
(BER, EXIT and evolution experiments) and :mod:`cli`.
"""

__version__ = "0.1.0"

from .rsc import GeneratorConfig, build_trellis, encode_block
from .interleave import IbpConfig, StreamPermutation, compose_stream, make_ibp, make_srandom
from .siso import DecoderMode, SisoInput, app_decode, sliding_window_decode
from .turbo import TurboConfig, turbo_decode_stream, turbo_encode_stream
from .channel import ChannelConfig, to_llr, transmit

__all__ = [
    "__version__",
    "GeneratorConfig",
    "build_trellis",
    "encode_block",
    "IbpConfig",
    "StreamPermutation",
    "compose_stream",
    "make_ibp",
    "make_srandom",
    "DecoderMode",
    "SisoInput",
    "app_decode",
    "sliding_window_decode",
    "TurboConfig",
    "turbo_encode_stream",
    "turbo_decode_stream",
    "ChannelConfig",
    "to_llr",
    "transmit",
]
