"""Quantization machinery for a constant-bitrate neural speech codec, at desk scale."""

from .bitstream import BitBudget, BitstreamPacket, allocate, bits_per_frame, pack, parse, unpack
from .quantizers import (QuantizerGrid, dequantize, dithered_quantize, dithered_reconstruct,
                         grid_from_levels, make_grid, noise_surrogate, quantize, st_apply)
from .vq import Codebook, RvqStack, ema_update, nearest, rvq_decode, rvq_encode

__version__ = "0.1.0"

__all__ = [
    "BitBudget", "BitstreamPacket", "Codebook", "QuantizerGrid", "RvqStack", "allocate",
    "bits_per_frame", "dequantize", "dithered_quantize", "dithered_reconstruct", "ema_update",
    "grid_from_levels", "make_grid", "nearest", "noise_surrogate", "pack", "parse", "quantize",
    "rvq_decode", "rvq_encode", "st_apply", "unpack",
]
