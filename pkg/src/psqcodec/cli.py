"""Command line entry point: ``psqcodec <subcommand> [options]``.

Exit codes: 0 success, 2 bad input, 3 a statistical or ordering check
failed, 4 training diverged.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, archcalc, bitstream, codec, toytrain
from .fileio import WavFormatError, read_wav, write_csv, write_pgm, write_wav
from .quantizers import dithered_quantize, dithered_reconstruct, grid_from_levels, noise_surrogate

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CHECK = 3
EXIT_DIVERGED = 4

log = logging.getLogger("psqcodec")


class InputError(Exception):
    pass


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    if out.exists() and not out.is_dir():
        raise InputError(f"--out-dir {out} exists and is not a directory")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _record_run(out: Path, name: str, args) -> None:
    """Resolved config in run.json (deterministic); timestamps only in run.log."""
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    (out / "run.json").write_text(json.dumps({"command": name, "args": cfg},
                                             indent=2, sort_keys=True, default=str) + "\n")
    with open(out / "run.log", "a") as fh:
        fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {name} {json.dumps(cfg, default=str)}\n")


def cmd_two_moons(args) -> int:
    out = _out_dir(args)
    try:
        radices = [2 ** b for b in bitstream.allocate(args.bits, args.dims)]
    except ValueError as err:
        raise InputError(str(err)) from None
    grid = grid_from_levels(radices)
    data = toytrain.two_moons(args.n_points, args.noise_std, args.seed)
    cfg = toytrain.TrainConfig(mode=args.mode, grid=grid, learning_rate=args.lr,
                               steps=args.steps, batch_size=args.batch_size, seed=args.seed,
                               optimizer=args.optimizer)
    _record_run(out, "two-moons", args)
    try:
        res = toytrain.train_psq(cfg, data)
    except toytrain.TrainingDiverged as err:
        print(f"training diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED

    raster, points = toytrain.decision_regions(res.encoder, res.decoder, grid, args.resolution)
    top = max(grid.num_cells - 1, 1)
    write_pgm(out / "regions.pgm", np.round(raster * (255 / top)).astype(int), 255)
    centers = toytrain.pixel_centers(args.resolution)
    write_csv(out / "regions.csv", ["x", "y", "cell_index"],
              ((f"{centers[j]:.6f}", f"{centers[::-1][i]:.6f}", int(raster[i, j]))
               for i in range(raster.shape[0]) for j in range(raster.shape[1])))
    book = toytrain.effective_codebook(res.decoder, grid)
    z, _ = res.encoder.forward(data.points)
    used = set(grid.flat_index(toytrain.quantize(grid, z)).tolist())
    write_csv(out / "codepoints.csv", ["cell_index", "x", "y", "used_by_data"],
              ((k, f"{book[k, 0]:.6f}", f"{book[k, 1]:.6f}", int(k in used))
               for k in range(grid.num_cells)))
    write_csv(out / "history.csv", ["step", "mse"], ((s, f"{m:.8f}") for s, m in res.history))
    write_csv(out / "data.csv", ["x", "y"], ((f"{p[0]:.6f}", f"{p[1]:.6f}") for p in data.points))
    baseline, levels = toytrain.direct_grid_baseline(data, args.bits)
    occupied = round(res.utilization * grid.num_cells)
    print(f"mode={args.mode} cells={grid.num_cells} occupied={occupied} "
          f"mse={res.final_mse:.5f} initial={res.initial_mse:.5f} "
          f"axis_grid_baseline={baseline:.5f} {levels}")
    return EXIT_OK


def cmd_dither_test(args) -> int:
    out = _out_dir(args)
    levels = 2.0 / args.step
    if abs(levels - round(levels)) > 1e-9 or round(levels) < 2:
        raise InputError(f"--step must be 2/L for an integer L >= 2, got {args.step}")
    grid = grid_from_levels([int(round(levels))])
    half = args.step / 2
    zs = np.linspace(-1 + half, 1 - half, args.points)
    _record_run(out, "dither-test", args)
    rows, failed = [], []
    for i, z in enumerate(zs):
        base = args.seed * 1_000_003 + 4 * i
        zv = np.full((args.samples, 1), z)
        a = noise_surrogate(grid, zv, base)[:, 0]
        if args.step_mismatch != 1.0:
            a = z + (a - z) * args.step_mismatch
        if args.control:
            b = noise_surrogate(grid, zv, base + 1)[:, 0]
        else:
            k, _ = dithered_quantize(grid, zv, base + 2)
            b = dithered_reconstruct(grid, k, seed=base + 2)[:, 0]
        res = analysis.ks_two_sample(a, b, args.alpha)
        rows.append((f"{z:.6f}", f"{res.statistic:.6f}", f"{res.critical:.6f}", int(res.passed)))
        if not res.passed:
            failed.append(f"z={z:.4f} (D={res.statistic:.5f} > {res.critical:.5f})")
    write_csv(out / "ks.csv", ["z", "statistic", "critical", "passed"], rows)
    if failed:
        print(f"{len(failed)}/{len(zs)} cells rejected at alpha={args.alpha}:", file=sys.stderr)
        for f in failed:
            print("  " + f, file=sys.stderr)
        return EXIT_CHECK
    print(f"all {len(zs)} cells pass at alpha={args.alpha}")
    return EXIT_OK


def cmd_codec_sim(args) -> int:
    try:
        x = read_wav(args.input)
    except (WavFormatError, FileNotFoundError) as err:
        raise InputError(str(err)) from None
    try:
        budget = codec.make_budget(args.bitrate, args.frame_ms / 1000.0, args.dims,
                                   args.bits_per_dim)
    except ValueError as err:
        raise InputError(str(err)) from None
    packet, side = codec.encode(x, budget)
    stream = Path(args.bitstream)
    bitstream.write_packet(stream, packet)
    side.to_npz(stream.with_suffix(stream.suffix + ".side.npz"))

    reread = bitstream.read_packet(stream)
    if reread.to_bytes() != packet.to_bytes():
        print("packet did not survive a file round trip", file=sys.stderr)
        return EXIT_CHECK
    repacked = bitstream.pack(bitstream.unpack(reread), reread.budget)
    if repacked.to_bytes() != packet.to_bytes():
        print("unpack/repack is not byte-identical", file=sys.stderr)
        return EXIT_CHECK
    y = codec.decode(reread, side)
    write_wav(args.output, y)
    snr = analysis.quant_snr(x, y)
    report = {"bits_per_frame": budget.bits_per_frame, "radices": list(budget.radices),
              "frames": packet.n_frames, "payload_bytes": len(packet.payload),
              "snr_db": snr if math.isfinite(snr) else "perfect"}
    if args.report:
        Path(args.report).write_text(json.dumps(report, indent=2) + "\n")
    snr_text = f"{snr:.2f} dB" if math.isfinite(snr) else "perfect"
    print(f"bits/frame={budget.bits_per_frame} frames={packet.n_frames} "
          f"payload={len(packet.payload)}B snr={snr_text}")
    return EXIT_OK


def cmd_report(args) -> int:
    out = _out_dir(args)
    _record_run(out, "report", args)
    ok = True
    rng = np.random.Generator(np.random.Philox(args.seed))

    rows = []
    for i in range(args.tikhonov_pairs):
        E = rng.standard_normal((3, 4))
        D = rng.standard_normal((4, 3))
        r = analysis.tikhonov_check(E, D, args.step, args.samples, args.seed * 7919 + i)
        rows.append((i, f"{r.mc_lhs:.8f}", f"{r.analytic_rhs:.8f}", f"{r.rel_gap:.6f}"))
        ok &= r.rel_gap <= 0.01
    write_csv(out / "tikhonov.csv", ["pair", "mc_lhs", "analytic_rhs", "rel_gap"], rows)

    write_csv(out / "uniform_kl.csv", ["delta", "dims", "kl"],
              ((d, q, f"{analysis.uniform_kl(d, q):.12f}")
               for d in (2.0, 1.0, 0.5, 0.25) for q in (1, 2, 3)))

    mix = rng.standard_normal((6, 6))
    white = rng.standard_normal((6, 4000))
    y = mix @ white
    z = analysis.pca_fit(y, 6).project(y)
    write_csv(out / "avg_corr.csv", ["stream", "rho_temporal", "rho_channel"],
              ((name, f"{analysis.avg_corr(m[:, :400], 'temporal'):.6f}",
                f"{analysis.avg_corr(m, 'channel'):.6f}") for name, m in (("Y", y), ("Z", z))))

    cfg = archcalc.ArchConfig()
    if args.arch_config:
        try:
            cfg = archcalc.parse_config(Path(args.arch_config).read_text())
        except (OSError, ValueError) as err:
            raise InputError(f"arch config: {err}") from None
    table = archcalc.ablation_table(cfg)
    (out / "archcalc.csv").write_text(table["default"].to_csv())
    write_csv(out / "ablation.csv", ["variant", "params", "mmacs"],
              ((k, v.total_params, f"{v.mmacs:.3f}") for k, v in table.items()))
    p = {k: v.total_params for k, v in table.items()}
    ordering = p["no_styling"] < p["no_skips"] < p["no_dpcrnn"] <= p["default"]
    macs_close = abs(table["no_dpcrnn"].mmacs - table["default"].mmacs) < 0.01 * table["default"].mmacs
    ok &= ordering and macs_close
    print(f"tikhonov max gap={max(float(r[3]) for r in rows):.5f} "
          f"ablation ordering={'ok' if ordering else 'VIOLATED'} "
          f"dpcrnn macs delta<1%={'ok' if macs_close else 'VIOLATED'}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_synth_wav(args) -> int:
    sr = 16000
    t = np.arange(int(args.seconds * sr)) / sr
    f0 = 120 + 60 * np.sin(2 * np.pi * 0.7 * t)
    phase = 2 * np.pi * np.cumsum(f0) / sr
    voiced = sum(np.sin(h * phase) / h for h in range(1, 20))
    env = 0.5 * (1 + np.sin(2 * np.pi * 2.5 * t)) ** 2
    noise = np.random.Generator(np.random.Philox(args.seed)).standard_normal(len(t))
    x = 0.15 * env * voiced + 0.005 * noise
    write_wav(args.output, x / max(1.0, np.max(np.abs(x)) / 0.9))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psqcodec", description="Desk-scale quantization experiments and a toy codec.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("two-moons", help="train a 2-D projected scalar quantizer")
    s.add_argument("--mode", choices=toytrain.MODES, default="st")
    s.add_argument("--bits", type=int, default=3, help="total bits per point")
    s.add_argument("--dims", type=int, default=2, help="latent dimensions")
    s.add_argument("--steps", type=int, default=10000)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch-size", type=int, default=256)
    s.add_argument("--optimizer", choices=toytrain.OPTIMIZERS, default="adam")
    s.add_argument("--n-points", type=int, default=2000)
    s.add_argument("--noise-std", type=float, default=0.05)
    s.add_argument("--resolution", type=int, default=256)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", default="out/two_moons")
    s.set_defaults(func=cmd_two_moons)

    s = sub.add_parser("dither-test", help="KS test: dithered quantization vs noise surrogate")
    s.add_argument("--step", type=float, default=0.25)
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--points", type=int, default=20)
    s.add_argument("--alpha", type=float, default=0.01)
    s.add_argument("--control", action="store_true", help="compare surrogate with itself")
    s.add_argument("--step-mismatch", type=float, default=1.0,
                   help="scale the surrogate noise width (values != 1 should fail)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", default="out/dither")
    s.set_defaults(func=cmd_dither_test)

    s = sub.add_parser("codec-sim", help="PCA stand-in codec on a 16 kHz mono WAV")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--bitstream", required=True)
    s.add_argument("--bitrate", type=float, default=1500.0)
    s.add_argument("--frame-ms", type=float, default=20.0)
    s.add_argument("--dims", type=int, default=8)
    s.add_argument("--bits-per-dim", type=int, default=None,
                   help="fixed bits on every dimension instead of the bitrate split")
    s.add_argument("--report", default=None, help="write a JSON report here")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_codec_sim)

    s = sub.add_parser("report", help="analytic checks and complexity tables as CSV")
    s.add_argument("--samples", type=int, default=1_000_000)
    s.add_argument("--tikhonov-pairs", type=int, default=10)
    s.add_argument("--step", type=float, default=0.5)
    s.add_argument("--arch-config", default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", default="out/report")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("synth-wav", help="write a speech-like test signal")
    s.add_argument("output")
    s.add_argument("--seconds", type=float, default=2.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth_wav)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
