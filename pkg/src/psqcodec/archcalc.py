"""Parameter and MAC counts for the STFT-domain codec architecture.

Nothing here runs a network; every block is reduced to standard layer cost
formulas. Several widths are not pinned down by the published description
(ConvBlock expansion, GRU width, TADE kernels), so they are config fields.

Wiring (``C_0`` is the stacked re/im STFT input, ``2F`` channels)::

    encoder   EncBlock m = 1..M : Conv_{K_m,s_m}(C_{m-1} -> C_m)
                                  ConvBlock(C_m -> 2C_m), ConvBlock(2C_m -> C_m)
              DPCRNN(C_M)                                        [dpcrnn]
              TADEResBlock(C_M | cond = EncBlock m output), m=1..M [enc_skips]
    quantizer Conv_3(C_M -> C_M), Linear(C_M -> Q) | Linear(Q -> C_M)
    decoder   DPCRNN(C_M) with BN                                [dpcrnn]
              DecBlock m = M..1 : ConvBlock(C_m -> 2C_m), ConvBlock(2C_m -> C_m)
                                  TADE(C_m | cond = latent)      [dec_styling]
                                    (kernel K_m unless dec_tade_kernel is set)
                                  ConvT_{K_m,s_m}(C_m -> C_{m-1})

ConvBlock(a -> b): [BN(a)], GELU, channel-wise Conv_K(a), ChannelNorm(a),
Conv1x1(a -> up*b), GELU, Conv1x1(up*b -> b). BN only on the decoder side.
TADE(C | cond c): Conv_K(c -> C) + LeakyReLU, then Conv_K(C -> C) for scale and
for shift; the ChannelNorm inside has no affine parameters.
TADEResBlock(C | cond c): two TADE layers, each followed by a tanh/softmax
gated pair of Conv_K(C -> C).
GRU(in -> h): 3 (h*in + h*h + h) parameters, single bias vector.

MACs are counted per second: a layer producing ``fr`` frames/s costs its
per-frame multiply count times ``fr``. Norm layers count one MAC per element.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, fields, replace

BLOCK_KINDS = ("conv1d", "conv1d_channelwise", "linear", "gru", "conv_transpose", "norm")


def count_block(kind: str, in_ch: int, out_ch: int, kernel: int = 1, frames_per_s: float = 1.0):
    """``(params, macs_per_s)`` of one layer.

    ``frames_per_s`` is the output frame rate, except for ``conv_transpose``
    where it is the input rate. ``gru`` reads ``out_ch`` as the hidden size;
    ``conv1d_channelwise`` and ``norm`` ignore ``out_ch``.
    """
    if min(in_ch, out_ch, kernel) < 1 or frames_per_s <= 0:
        raise ValueError("dimensions and frame rate must be positive")
    if kind == "conv1d":
        return in_ch * out_ch * kernel + out_ch, in_ch * out_ch * kernel * frames_per_s
    if kind == "conv1d_channelwise":
        return in_ch * kernel + in_ch, in_ch * kernel * frames_per_s
    if kind == "linear":
        return in_ch * out_ch + out_ch, in_ch * out_ch * frames_per_s
    if kind == "conv_transpose":
        return in_ch * out_ch * kernel + out_ch, in_ch * out_ch * kernel * frames_per_s
    if kind == "gru":
        h = out_ch
        return 3 * (h * h + h * in_ch + h), 3 * (h * h + h * in_ch) * frames_per_s
    if kind == "norm":
        return 2 * in_ch, in_ch * frames_per_s
    raise ValueError(f"unknown block kind {kind!r}; expected one of {BLOCK_KINDS}")


@dataclass
class ArchConfig:
    kernels: tuple = (7, 5, 5, 5, 3, 3)
    channels: tuple = (256, 128, 64, 64, 32, 32)
    strides: tuple = (1, 1, 1, 1, 1, 2)
    input_channels: int = 514
    frame_rate: float = 100.0
    latent_dims: int = 15
    up_factor: float = 0.75
    gru_hidden: int = 0  # 0: same as the innermost block width
    tade_kernel: int = 3
    dec_tade_kernel: int = 0  # 0: the DecBlock's own kernel size
    io_kernel: int = 1  # kernel of the outermost conv / convT; 0: block 1 kernel
    proj_kernel: int = 3
    dpcrnn: bool = True
    enc_skips: bool = True
    dec_styling: bool = True

    def __post_init__(self):
        self.kernels = tuple(int(k) for k in self.kernels)
        self.channels = tuple(int(c) for c in self.channels)
        self.strides = tuple(int(s) for s in self.strides)
        m = len(self.channels)
        if m < 1 or len(self.kernels) != m or len(self.strides) != m:
            raise ValueError("kernels, channels and strides need one entry per block")
        if min(self.kernels + self.channels + self.strides) < 1:
            raise ValueError("kernel sizes, channel counts and strides must be positive")
        if self.input_channels < 1 or self.frame_rate <= 0 or self.latent_dims < 1:
            raise ValueError("input channels, frame rate and latent dims must be positive")
        if self.up_factor <= 0 or min(self.gru_hidden, self.dec_tade_kernel, self.io_kernel) < 0:
            raise ValueError("up_factor must be positive and gru_hidden non-negative")

    @property
    def n_blocks(self) -> int:
        return len(self.channels)


@dataclass
class BlockCost:
    name: str
    params: int
    macs_per_s: float


@dataclass
class ComplexityReport:
    blocks: list = field(default_factory=list)

    def add(self, name, cost):
        self.blocks.append(BlockCost(name, int(cost[0]), float(cost[1])))

    @property
    def total_params(self) -> int:
        return sum(b.params for b in self.blocks)

    @property
    def total_macs_per_s(self) -> float:
        return sum(b.macs_per_s for b in self.blocks)

    @property
    def mmacs(self) -> float:
        return self.total_macs_per_s / 1e6

    def grouped(self) -> dict:
        out = {}
        for b in self.blocks:
            key = b.name.split(".")[0]
            p, m = out.get(key, (0, 0.0))
            out[key] = (p + b.params, m + b.macs_per_s)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["block", "params", "macs_per_s"])
        for b in self.blocks:
            w.writerow([b.name, b.params, f"{b.macs_per_s:.1f}"])
        w.writerow(["total", self.total_params, f"{self.total_macs_per_s:.1f}"])
        return buf.getvalue()


def _sum(*costs):
    return sum(c[0] for c in costs), sum(c[1] for c in costs)


def _conv_block(c_in, c_out, k, fr, up_factor, bn):
    up = max(1, int(round(up_factor * c_out)))
    parts = [count_block("conv1d_channelwise", c_in, c_in, k, fr),
             count_block("norm", c_in, c_in, 1, fr),
             count_block("conv1d", c_in, up, 1, fr),
             count_block("conv1d", up, c_out, 1, fr)]
    if bn:
        parts.append(count_block("norm", c_in, c_in, 1, fr))
    return _sum(*parts)


def _tade(c, cond, k, fr):
    return _sum(count_block("conv1d", cond, c, k, fr),
                count_block("conv1d", c, c, k, fr),
                count_block("conv1d", c, c, k, fr))


def _tade_res_block(c, cond, k, fr):
    gated = _sum(count_block("conv1d", c, c, k, fr), count_block("conv1d", c, c, k, fr))
    return _sum(_tade(c, cond, k, fr), gated, _tade(c, cond, k, fr), gated)


def _dpcrnn(c, h, fr, bn):
    parts = [count_block("conv1d", c, c, 1, fr),
             count_block("gru", c, h, 1, fr),
             count_block("conv1d", h, c, 1, fr)]
    if bn:
        parts += [count_block("norm", c, c, 1, fr), count_block("norm", c, c, 1, fr),
                  count_block("norm", h, h, 1, fr)]
    return _sum(*parts)


def estimate(config: ArchConfig) -> ComplexityReport:
    cfg = config
    rep = ComplexityReport()
    chans = (cfg.input_channels,) + cfg.channels
    rates = [cfg.frame_rate]
    for s in cfg.strides:
        rates.append(rates[-1] / s)
    M = cfg.n_blocks
    c_lat, fr_lat = chans[M], rates[M]
    h = cfg.gru_hidden or c_lat

    for m in range(1, M + 1):
        k, fr = cfg.kernels[m - 1], rates[m]
        k_in = cfg.io_kernel or k if m == 1 else k
        rep.add(f"enc{m}.conv", count_block("conv1d", chans[m - 1], chans[m], k_in, fr))
        rep.add(f"enc{m}.convblock_up",
                _conv_block(chans[m], 2 * chans[m], k, fr, cfg.up_factor, False))
        rep.add(f"enc{m}.convblock_down",
                _conv_block(2 * chans[m], chans[m], k, fr, cfg.up_factor, False))
    if cfg.dpcrnn:
        rep.add("enc_dpcrnn", _dpcrnn(c_lat, h, fr_lat, False))
    if cfg.enc_skips:
        for m in range(1, M + 1):
            rep.add(f"enc_taderes{m}", _tade_res_block(c_lat, chans[m], cfg.tade_kernel, fr_lat))
    rep.add("quant.proj_in", _sum(count_block("conv1d", c_lat, c_lat, cfg.proj_kernel, fr_lat),
                                  count_block("linear", c_lat, cfg.latent_dims, 1, fr_lat)))
    rep.add("quant.proj_out", count_block("linear", cfg.latent_dims, c_lat, 1, fr_lat))
    if cfg.dpcrnn:
        rep.add("dec_dpcrnn", _dpcrnn(c_lat, h, fr_lat, True))
    for m in range(M, 0, -1):
        k, fr = cfg.kernels[m - 1], rates[m]
        rep.add(f"dec{m}.convblock_up",
                _conv_block(chans[m], 2 * chans[m], k, fr, cfg.up_factor, True))
        rep.add(f"dec{m}.convblock_down",
                _conv_block(2 * chans[m], chans[m], k, fr, cfg.up_factor, True))
        if cfg.dec_styling:
            rep.add(f"dec{m}.tade", _tade(chans[m], c_lat, cfg.dec_tade_kernel or k, fr))
        rep.add(f"dec{m}.convT",
                count_block("conv_transpose", chans[m], chans[m - 1],
                            cfg.io_kernel or k if m == 1 else k, fr))
    return rep


VARIANTS = {
    "default": {},
    "no_dpcrnn": {"dpcrnn": False},
    "no_skips": {"enc_skips": False},
    "no_styling": {"dec_styling": False},
}


def ablation_table(config: ArchConfig | None = None) -> dict:
    base = config or ArchConfig()
    return {name: estimate(replace(base, **kw)) for name, kw in VARIANTS.items()}


def parse_config(text: str) -> ArchConfig:
    """Read ``key = value`` lines; ``#`` starts a comment, lists are comma separated."""
    kinds = {f.name: f.type for f in fields(ArchConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in kinds:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        t = kinds[key]
        if t == "tuple":
            values[key] = tuple(int(v) for v in val.split(",") if v.strip())
        elif t == "bool":
            if val.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"line {lineno}: {key} needs a boolean")
            values[key] = val.lower() in ("true", "1", "yes")
        elif t == "int":
            values[key] = int(val)
        else:
            values[key] = float(val)
    return ArchConfig(**values)


def format_config(config: ArchConfig) -> str:
    lines = []
    for f in fields(ArchConfig):
        v = getattr(config, f.name)
        if isinstance(v, tuple):
            v = ", ".join(str(x) for x in v)
        elif isinstance(v, bool):
            v = str(v).lower()
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
