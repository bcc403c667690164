"""Command-line front end.

Subcommands: encode, decode, thumbnail, progressive, inspect, analyze,
selftest. Exit codes: 0 success, 1 usage error, 2 corrupt/unreadable input,
3 weight or format mismatch. Model weights come either from an .elwt archive
(--weights) or from the documented seeded initializer (--seed), never both.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import bitstream, codec, imageio
from .codec import Codec, magnitude_rasters, psnr
from .config import ModelConfig
from .errors import (CodecError, CorruptInput, InsufficientData,
                     InvalidArgument, UnsupportedFormat, WeightStoreError)
from .weights import WeightStore

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CORRUPT = 2
EXIT_MISMATCH = 3


def _add_model_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--weights", help="path to an .elwt weight archive")
    g.add_argument("--seed", type=int,
                   help="deterministic random weights from this seed")
    p.add_argument("--variant", choices=["elic", "elic-sm"], default="elic",
                   help="model variant for --seed mode (default: elic)")
    p.add_argument("--num-filters", type=int, default=192,
                   help="transform width N for --seed mode (default: 192)")
    p.add_argument("--latent-channels", type=int, default=320,
                   help="latent channels M for --seed mode (default: 320)")


def _load_store(args):
    if args.weights is not None:
        try:
            return WeightStore.load(args.weights)
        except OSError as e:
            raise CorruptInput(f"cannot read weights: {e}") from None
    seed = args.seed if args.seed is not None else 0
    config = ModelConfig(variant=args.variant, num_filters=args.num_filters,
                         latent_channels=args.latent_channels)
    return WeightStore.seeded(config, seed)


def build_parser():
    p = argparse.ArgumentParser(prog="elic", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="compress an image to .elic")
    enc.add_argument("input")
    enc.add_argument("-o", "--output", required=True)
    enc.add_argument("--json", action="store_true",
                     help="print rate stats as JSON")
    _add_model_args(enc)

    dec = sub.add_parser("decode", help="reconstruct an image from .elic")
    dec.add_argument("input")
    dec.add_argument("-o", "--output", required=True)
    _add_model_args(dec)

    th = sub.add_parser("thumbnail",
                        help="half-resolution preview from the first 4 groups")
    th.add_argument("input")
    th.add_argument("-o", "--output", required=True)
    _add_model_args(th)

    pr = sub.add_parser("progressive",
                        help="reconstruct from the first k channel groups")
    pr.add_argument("input")
    pr.add_argument("-o", "--output", required=True)
    pr.add_argument("--k", type=int, required=True, choices=range(1, 6))
    pr.add_argument("--fill", choices=["zero", "mean"], default="zero",
                    help="treatment of non-decoded chunks (default: zero)")
    _add_model_args(pr)

    ins = sub.add_parser("inspect", help="print container header and segments")
    ins.add_argument("input")
    ins.add_argument("--json", action="store_true")

    an = sub.add_parser("analyze",
                        help="per-channel energy/entropy compaction report")
    an.add_argument("input")
    an.add_argument("--json", action="store_true")
    an.add_argument("--dump-dir",
                    help="also write per-channel magnitude rasters here")
    an.add_argument("--top", type=int, default=0,
                    help="limit report/rasters to the top-N channels")
    _add_model_args(an)

    st = sub.add_parser("selftest", help="seeded encode/decode round-trip")
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--variant", choices=["elic", "elic-sm"],
                    default="elic-sm")
    st.add_argument("--num-filters", type=int, default=32)
    st.add_argument("--latent-channels", type=int, default=160)
    st.add_argument("--size", type=int, nargs=2, default=(96, 80),
                    metavar=("HEIGHT", "WIDTH"))
    return p


def _read_stream(path):
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as e:
        raise CorruptInput(f"cannot read {path}: {e}") from None


def cmd_encode(args):
    store = _load_store(args)
    image = imageio.load_image(args.input)
    data, stats = Codec(store).encode(image)
    with open(args.output, "wb") as f:
        f.write(data)
    if args.json:
        print(json.dumps({
            "width": stats.width, "height": stats.height,
            "bytes": len(data), "bpp": stats.bpp,
            "segments": [{"name": s.name, "bytes": s.nbytes,
                          "symbols": s.symbols,
                          "coded_bits": round(s.coded_bits, 2),
                          "estimate_bits": round(s.estimate_bits, 2)}
                         for s in stats.segments],
        }, sort_keys=True))
    else:
        print(f"{args.input}: {stats.width}x{stats.height} -> {len(data)} bytes "
              f"({stats.bpp:.4f} bpp)")
    return EXIT_OK


def cmd_decode(args):
    store = _load_store(args)
    data = _read_stream(args.input)
    image = Codec(store).decode(data)
    imageio.save_image(args.output, image)
    print(f"{args.input} -> {args.output} "
          f"({image.shape[2]}x{image.shape[1]})")
    return EXIT_OK


def cmd_thumbnail(args):
    store = _load_store(args)
    data = _read_stream(args.input)
    image = Codec(store).decode_thumbnail(data)
    imageio.save_image(args.output, image)
    print(f"thumbnail {image.shape[2]}x{image.shape[1]} -> {args.output}")
    return EXIT_OK


def cmd_progressive(args):
    store = _load_store(args)
    data = _read_stream(args.input)
    image = Codec(store).decode_progressive(data, args.k, fill=args.fill)
    imageio.save_image(args.output, image)
    print(f"progressive k={args.k} fill={args.fill} "
          f"{image.shape[2]}x{image.shape[1]} -> {args.output}")
    return EXIT_OK


def cmd_inspect(args):
    data = _read_stream(args.input)
    bs = bitstream.Bitstream(data)
    lengths = [bs.segment_length(i) for i in range(bitstream.NUM_SEGMENTS)]
    names = ["hyper"] + [f"g{g}.{ph}" for g in range(1, 6)
                         for ph in ("anchor", "nonanchor")]
    info = {
        "magic": "ELIC", "version": bitstream.VERSION,
        "variant_id": bs.variant_id, "width": bs.width, "height": bs.height,
        "file_bytes": len(data), "header_bytes": bitstream.HEADER_LEN,
        "groups_present": bs.groups_present,
        "segments": [{"name": n, "bytes": l}
                     for n, l in zip(names, lengths) if l is not None],
    }
    if args.json:
        print(json.dumps(info, sort_keys=True))
    else:
        print(f"ELIC v{info['version']} variant={bs.variant_id} "
              f"{bs.width}x{bs.height} ({len(data)} bytes, "
              f"{bs.groups_present} groups)")
        for seg in info["segments"]:
            print(f"  {seg['name']:<14} {seg['bytes']:>8} bytes")
    return EXIT_OK


def cmd_analyze(args):
    store = _load_store(args)
    image = imageio.load_image(args.input)
    cdc = Codec(store)
    report = cdc.analyze(image)
    rows = report.channels[:args.top] if args.top else report.channels
    if args.json:
        print(json.dumps({"channels": [
            {"channel": c.index, "energy": c.energy, "bits": c.bits}
            for c in rows]}, sort_keys=True))
    else:
        print(codec.CompactionReport(channels=rows).to_text())
    if args.dump_dir:
        os.makedirs(args.dump_dir, exist_ok=True)
        x = codec.pad_image(image)
        y = cdc.analysis(x)
        z = cdc.hyper_analysis(y)
        _, z_hat, _ = cdc._encode_hyper(z)
        _, y_hat, _, _ = cdc.scctx.encode(y, cdc.hyper_synthesis(z_hat))
        rasters = magnitude_rasters(y_hat)
        for rank, c in enumerate(rows):
            imageio.save_gray(
                os.path.join(args.dump_dir, f"ch{rank:03d}_{c.index:03d}.png"),
                rasters[c.index])
    return EXIT_OK


def cmd_selftest(args):
    config = ModelConfig(variant=args.variant, num_filters=args.num_filters,
                         latent_channels=args.latent_channels)
    store = WeightStore.seeded(config, args.seed)
    cdc = Codec(store)
    rng = np.random.Generator(np.random.PCG64(args.seed + 1))
    h, w = args.size
    image = rng.random((3, h, w), dtype=np.float32)
    t0 = time.perf_counter()
    data, stats = cdc.encode(image)
    y_hat = cdc.decode_latent(data)
    recon = cdc.decode(data)
    dt = time.perf_counter() - t0
    x = codec.pad_image(image)
    y = cdc.analysis(x)
    z = cdc.hyper_analysis(y)
    _, z_hat, _ = cdc._encode_hyper(z)
    _, enc_latent, _, _ = cdc.scctx.encode(y, cdc.hyper_synthesis(z_hat))
    exact = np.array_equal(y_hat, enc_latent)
    quality = psnr(recon, image)
    status = "PASS" if exact else "FAIL"
    print(f"{status}: latent {'bit-exact' if exact else 'MISMATCH'}, "
          f"{len(data)} bytes ({stats.bpp:.4f} bpp), psnr {quality:.2f} dB, "
          f"{dt:.2f}s")
    return EXIT_OK if exact else EXIT_CORRUPT


_COMMANDS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "thumbnail": cmd_thumbnail,
    "progressive": cmd_progressive,
    "inspect": cmd_inspect,
    "analyze": cmd_analyze,
    "selftest": cmd_selftest,
}


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (UnsupportedFormat, WeightStoreError, InvalidArgument) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISMATCH
    except (CorruptInput, InsufficientData) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CORRUPT
    except CodecError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CORRUPT


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
