"""The compiled extension and the numpy fallback must be interchangeable:
bit-identical kernel outputs and byte-identical streams."""

import os
import subprocess
import sys

import numpy as np
import pytest

from elic import _fallback

try:
    from elic import _kernels
except ImportError:
    _kernels = None

needs_compiled = pytest.mark.skipif(_kernels is None,
                                    reason="compiled extension not built")


@needs_compiled
class TestKernelEquality:
    def test_conv_bitwise(self, rng):
        for _ in range(60):
            i, o = rng.integers(1, 9, 2)
            k = int(rng.choice([1, 2, 3, 5]))
            s = int(rng.choice([1, 2]))
            p = int(rng.choice([0, 1, 2]))
            h, w = rng.integers(1, 14, 2)
            oh = (h + 2 * p - k) // s + 1
            ow = (w + 2 * p - k) // s + 1
            if oh < 1 or ow < 1:
                continue
            x = rng.standard_normal((i, h, w), dtype=np.float32)
            wt = rng.standard_normal((o, i, k, k), dtype=np.float32)
            b = rng.standard_normal(o, dtype=np.float32)
            a1 = np.zeros((o, oh, ow), np.float32)
            a2 = np.zeros_like(a1)
            _kernels.conv2d_f32(x, wt, b, s, p, a1)
            _fallback.conv2d_f32(x, wt, b, s, p, a2)
            assert a1.tobytes() == a2.tobytes()

    def test_tconv_bitwise(self, rng):
        for _ in range(60):
            i, o = rng.integers(1, 9, 2)
            k = int(rng.choice([2, 3, 5]))
            s = int(rng.choice([1, 2]))
            p = int(rng.choice([0, 1, 2]))
            h, w = rng.integers(1, 11, 2)
            op = min(max(s + 2 * p - k, 0), s - 1)
            oh = (h - 1) * s - 2 * p + k + op
            ow = (w - 1) * s - 2 * p + k + op
            if oh < 1 or ow < 1:
                continue
            x = rng.standard_normal((i, h, w), dtype=np.float32)
            wt = rng.standard_normal((o, i, k, k), dtype=np.float32)
            b = rng.standard_normal(o, dtype=np.float32)
            a1 = np.zeros((o, oh, ow), np.float32)
            a2 = np.zeros_like(a1)
            _kernels.tconv2d_f32(x, wt, b, s, p, a1)
            _fallback.tconv2d_f32(x, wt, b, s, p, a2)
            assert a1.tobytes() == a2.tobytes()

    def test_coder_byte_identical(self, rng):
        from elic.entropy import CdfStore, sigma_to_level
        store = CdfStore()
        n = 5000
        sigma = np.exp(rng.uniform(np.log(0.11), np.log(40.0), n))
        levels = sigma_to_level(sigma)
        syms = np.round(rng.normal(0, sigma)).astype(np.int32)
        rows, flat, offs, s_los, nsyms = store.gather(levels)
        streams = []
        for mod in (_kernels, _fallback):
            enc = mod.RangeEncoder()
            mod.encode_symbols(enc, syms, rows, flat, offs, s_los, nsyms)
            streams.append(enc.flush())
            out = np.zeros(n, np.int32)
            mod.decode_symbols(mod.RangeDecoder(streams[-1]), rows, flat,
                               offs, s_los, nsyms, out)
            np.testing.assert_array_equal(out, syms)
        assert streams[0] == streams[1]


@needs_compiled
class TestWholeCodecEquality:
    def test_encode_bytes_identical_across_backends(self, tmp_path):
        """Same image, same seed, forced backends: identical .elic bytes."""
        script = (
            "import numpy as np\n"
            "from elic import Codec, ModelConfig, WeightStore, backend_name\n"
            "cfg = ModelConfig(variant='elic-sm', num_filters=8,"
            " latent_channels=130)\n"
            "cdc = Codec(WeightStore.seeded(cfg, 11))\n"
            "img = np.random.Generator(np.random.PCG64(4))"
            ".random((3, 24, 40), dtype=np.float32)\n"
            "data, _ = cdc.encode(img)\n"
            "import sys; sys.stdout.buffer.write(backend_name().encode()"
            " + b':' + data)\n"
        )
        outs = {}
        for backend in ("compiled", "python"):
            env = dict(os.environ, ELIC_BACKEND=backend)
            proc = subprocess.run([sys.executable, "-c", script],
                                  capture_output=True, env=env)
            assert proc.returncode == 0, proc.stderr.decode()
            name, _, payload = proc.stdout.partition(b":")
            assert name.decode() == backend
            outs[backend] = payload
        assert outs["compiled"] == outs["python"]
