"""Constant-bitrate framing of quantizer indices.

Packet layout (all multi-byte fields little-endian)::

    offset  size    field
    0       4       magic b"NSQ1"
    4       1       version (1)
    5       2       Q, number of dimensions (uint16)
    7       4*Q     radix of each dimension (uint32)
    ..      4       bits per frame (uint32)
    ..      8       bitrate in bit/s (float64)
    ..      8       frame duration in s (float64)
    ..      4       frame count (uint32)
    ..      4       CRC-32 of all preceding header bytes (uint32)
    ..      ...     payload

Each frame's symbols ``s_1 .. s_Q`` (``0 <= s_q < radix_q``) are folded into
one mixed-radix integer, first dimension most significant, and written as
``bits_per_frame`` bits MSB-first. Frames are concatenated without gaps and
the payload is zero-padded to a whole byte.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass

import numpy as np

MAGIC = b"NSQ1"
VERSION = 1


class PacketError(ValueError):
    pass


class BadMagic(PacketError):
    pass


class BadVersion(PacketError):
    pass


class HeaderCorrupt(PacketError):
    pass


class TruncatedPayload(PacketError):
    pass


class SymbolOutOfRange(PacketError):
    pass


def bits_per_frame(bitrate_bps: float, frame_duration_s: float) -> int:
    if bitrate_bps <= 0 or frame_duration_s <= 0:
        raise ValueError("bitrate and frame duration must be positive")
    # 1500 * 0.02 and friends are not exact in binary; absorb the rounding
    return int(math.floor(bitrate_bps * frame_duration_s + 1e-9))


def allocate(total_bits: int, dims: int) -> list[int]:
    """Split a frame budget into per-dimension bit counts, larger shares first."""
    if dims < 1:
        raise ValueError("dims must be >= 1")
    if total_bits < dims:
        raise ValueError(f"{total_bits} bits cannot give {dims} dimensions one bit each")
    base, extra = divmod(total_bits, dims)
    return [base + 1 if q < extra else base for q in range(dims)]


@dataclass(frozen=True)
class BitBudget:
    bitrate_bps: float
    frame_duration_s: float
    radices: tuple
    bits_per_frame: int = None

    def __post_init__(self):
        radices = tuple(int(r) for r in self.radices)
        if not radices or any(r < 1 for r in radices):
            raise ValueError("radices must be positive and non-empty")
        object.__setattr__(self, "radices", radices)
        if self.bits_per_frame is None:
            object.__setattr__(self, "bits_per_frame",
                               bits_per_frame(self.bitrate_bps, self.frame_duration_s))
        if math.prod(radices) > 2 ** self.bits_per_frame:
            raise ValueError(f"radices {radices} need more than {self.bits_per_frame} bits")

    @property
    def dims(self) -> int:
        return len(self.radices)

    @classmethod
    def from_rate(cls, bitrate_bps: float, frame_duration_s: float, dims: int) -> "BitBudget":
        b = bits_per_frame(bitrate_bps, frame_duration_s)
        return cls(bitrate_bps, frame_duration_s, tuple(2 ** k for k in allocate(b, dims)), b)


@dataclass(frozen=True)
class BitstreamPacket:
    budget: BitBudget
    n_frames: int
    payload: bytes

    def to_bytes(self) -> bytes:
        return _header(self.budget, self.n_frames) + self.payload


def _header(budget: BitBudget, n_frames: int) -> bytes:
    head = bytearray(MAGIC)
    head += struct.pack("<BH", VERSION, budget.dims)
    head += struct.pack(f"<{budget.dims}I", *budget.radices)
    head += struct.pack("<IddI", budget.bits_per_frame, float(budget.bitrate_bps),
                        float(budget.frame_duration_s), n_frames)
    head += struct.pack("<I", zlib.crc32(bytes(head)))
    return bytes(head)


def payload_size(n_frames: int, bits: int) -> int:
    return (n_frames * bits + 7) // 8


def fold(symbols, radices) -> int:
    value = 0
    for s, r in zip(symbols, radices):
        value = value * r + int(s)
    return value


def unfold(value: int, radices) -> list[int]:
    out = []
    for r in reversed(radices):
        value, s = divmod(value, r)
        out.append(s)
    return out[::-1]


def pack(symbols, budget: BitBudget) -> BitstreamPacket:
    """Pack an ``(N, Q)`` array of non-negative symbols."""
    sym = np.asarray(symbols, dtype=np.int64).reshape(-1, budget.dims)
    radices = np.asarray(budget.radices)
    if np.any(sym < 0) or np.any(sym >= radices):
        bad = np.argwhere((sym < 0) | (sym >= radices))[0]
        raise SymbolOutOfRange(f"frame {bad[0]} dim {bad[1]}: symbol {sym[tuple(bad)]} "
                               f"outside radix {radices[bad[1]]}")
    b = budget.bits_per_frame
    n = sym.shape[0]
    if n == 0 or b == 0:
        return BitstreamPacket(budget, n, bytes(payload_size(n, b)))
    bits = "".join(format(fold(row, budget.radices), f"0{b}b") for row in sym.tolist())
    pad = (-len(bits)) % 8
    payload = int(bits + "0" * pad, 2).to_bytes((len(bits) + pad) // 8, "big")
    return BitstreamPacket(budget, n, payload)


def unpack(packet: BitstreamPacket) -> np.ndarray:
    budget = packet.budget
    b = budget.bits_per_frame
    n = packet.n_frames
    if len(packet.payload) != payload_size(n, b):
        raise TruncatedPayload(f"payload has {len(packet.payload)} bytes, "
                               f"expected {payload_size(n, b)}")
    out = np.zeros((n, budget.dims), dtype=np.int64)
    if n == 0 or b == 0:
        return out
    big = int.from_bytes(packet.payload, "big") >> (len(packet.payload) * 8 - n * b)
    mask = (1 << b) - 1
    limit = math.prod(budget.radices)
    for f in range(n - 1, -1, -1):
        value = big & mask
        big >>= b
        if value >= limit:
            raise SymbolOutOfRange(f"frame {f}: value {value} exceeds radix product {limit}")
        out[f] = unfold(value, budget.radices)
    return out


def parse(data: bytes) -> BitstreamPacket:
    """Validate a serialized packet and return it (payload not yet decoded)."""
    data = bytes(data)
    if len(data) < 7:
        raise TruncatedPayload("packet shorter than the fixed header")
    if data[:4] != MAGIC:
        raise BadMagic(f"bad magic {data[:4]!r}")
    version, dims = struct.unpack_from("<BH", data, 4)
    if version != VERSION:
        raise BadVersion(f"unsupported version {version}")
    if dims == 0:
        raise HeaderCorrupt("header declares zero dimensions")
    head_len = 7 + 4 * dims + 24 + 4
    if len(data) < head_len:
        raise TruncatedPayload("packet shorter than its declared header")
    (crc,) = struct.unpack_from("<I", data, head_len - 4)
    if zlib.crc32(data[: head_len - 4]) != crc:
        raise HeaderCorrupt("header checksum mismatch")
    radices = struct.unpack_from(f"<{dims}I", data, 7)
    bpf, rate, dur, n = struct.unpack_from("<IddI", data, 7 + 4 * dims)
    try:
        budget = BitBudget(rate, dur, radices, bpf)
    except ValueError as err:
        raise HeaderCorrupt(str(err)) from None
    payload = data[head_len:]
    if len(payload) != payload_size(n, bpf):
        raise TruncatedPayload(f"payload has {len(payload)} bytes, expected {payload_size(n, bpf)}")
    return BitstreamPacket(budget, n, payload)


def write_packet(path, packet: BitstreamPacket) -> None:
    with open(path, "wb") as fh:
        fh.write(packet.to_bytes())


def read_packet(path) -> BitstreamPacket:
    with open(path, "rb") as fh:
        return parse(fh.read())
