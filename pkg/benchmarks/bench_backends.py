#!/usr/bin/env python3
"""Compare the compiled kernels with the numpy fallback.

Usage: python benchmarks/bench_backends.py [--full]

Times the individual hot kernels and (with --full) a whole encode/decode of a
random image through both backends, verifying the outputs stay bit-identical
while reporting the speed ratio.
"""

import argparse
import time

import numpy as np

from elic import _fallback

try:
    from elic import _kernels
except ImportError:
    raise SystemExit("compiled extension not built; nothing to compare")


def timeit(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels():
    rng = np.random.default_rng(0)
    cases = [
        ("conv 5x5 s2 192ch 144x208", "conv", (192, 144, 208),
         (192, 192, 5, 5), 2, 2),
        ("conv 3x3 s1  96ch 288x416", "conv", (96, 288, 416),
         (96, 96, 3, 3), 1, 1),
        ("conv 1x1 s1 192ch 144x208", "conv", (192, 144, 208),
         (96, 192, 1, 1), 1, 0),
        ("tconv 5x5 s2 192ch  72x104", "tconv", (192, 72, 104),
         (192, 192, 5, 5), 2, 2),
    ]
    print(f"{'kernel':<28} {'compiled':>10} {'fallback':>10} {'ratio':>7}")
    for name, kind, xshape, wshape, s, p in cases:
        x = rng.standard_normal(xshape, dtype=np.float32)
        w = (rng.standard_normal(wshape) * 0.05).astype(np.float32)
        b = np.zeros(wshape[0], np.float32)
        if kind == "conv":
            oh = (xshape[1] + 2 * p - wshape[2]) // s + 1
            ow = (xshape[2] + 2 * p - wshape[3]) // s + 1
            run_c = lambda: _kernels.conv2d_f32(x, w, b, s, p, np.zeros(
                (wshape[0], oh, ow), np.float32))
            run_f = lambda: _fallback.conv2d_f32(x, w, b, s, p, np.zeros(
                (wshape[0], oh, ow), np.float32))
        else:
            op = min(max(s + 2 * p - wshape[2], 0), s - 1)
            oh = (xshape[1] - 1) * s - 2 * p + wshape[2] + op
            ow = (xshape[2] - 1) * s - 2 * p + wshape[3] + op
            run_c = lambda: _kernels.tconv2d_f32(x, w, b, s, p, np.zeros(
                (wshape[0], oh, ow), np.float32))
            run_f = lambda: _fallback.tconv2d_f32(x, w, b, s, p, np.zeros(
                (wshape[0], oh, ow), np.float32))
        tc = timeit(run_c)
        tf = timeit(run_f, repeat=1)
        print(f"{name:<28} {tc * 1e3:>8.1f}ms {tf * 1e3:>8.1f}ms "
              f"{tf / tc:>6.1f}x")


def bench_coder():
    rng = np.random.default_rng(1)
    from elic.entropy import CdfStore, sigma_to_level
    store = CdfStore()
    n = 500_000
    sigma = np.exp(rng.uniform(np.log(0.11), np.log(30.0), n))
    levels = sigma_to_level(sigma)
    syms = np.round(rng.normal(0, sigma)).astype(np.int32)
    rows, flat, offs, s_los, nsyms = store.gather(levels)

    def enc(mod):
        e = mod.RangeEncoder()
        mod.encode_symbols(e, syms, rows, flat, offs, s_los, nsyms)
        return e.flush()

    tc = timeit(lambda: enc(_kernels))
    tf = timeit(lambda: enc(_fallback), repeat=1)
    data_c, data_f = enc(_kernels), enc(_fallback)
    assert data_c == data_f, "backend streams diverged"
    print(f"{'range coder 500k symbols':<28} {tc * 1e3:>8.1f}ms "
          f"{tf * 1e3:>8.1f}ms {tf / tc:>6.1f}x")


def bench_full():
    import os
    import subprocess
    import sys
    script = (
        "import time, numpy as np\n"
        "from elic import Codec, ModelConfig, WeightStore, backend_name\n"
        "cfg = ModelConfig(variant='elic-sm', num_filters=32,"
        " latent_channels=160)\n"
        "cdc = Codec(WeightStore.seeded(cfg, 3))\n"
        "img = np.random.Generator(np.random.PCG64(1))"
        ".random((3, 256, 256), dtype=np.float32)\n"
        "t0 = time.perf_counter(); data, _ = cdc.encode(img)\n"
        "t1 = time.perf_counter(); out = cdc.decode(data)\n"
        "t2 = time.perf_counter()\n"
        "print(f'{backend_name()}: encode {t1-t0:.2f}s decode {t2-t1:.2f}s"
        " bytes {len(data)}')\n"
    )
    for backend in ("compiled", "python"):
        env = dict(os.environ, ELIC_BACKEND=backend)
        proc = subprocess.run([sys.executable, "-c", script],
                              capture_output=True, text=True, env=env)
        print(proc.stdout.strip() or proc.stderr.strip())


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--full", action="store_true",
                    help="also run a whole encode/decode on both backends")
    args = ap.parse_args()
    bench_kernels()
    bench_coder()
    if args.full:
        bench_full()
