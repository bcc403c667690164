"""Grouping/schedule arithmetic, context-model causality probes, and the
brute-force sequential decode oracle."""

import numpy as np
import pytest

from elic import nn
from elic.coder import RangeDecoder, decode_with_store, dequantize, quantize
from elic.entropy import CdfStore, sigma_to_level
from elic.errors import InvalidArgument
from elic.scctx import (ANCHOR, NONANCHOR, GroupingScheme, ScctxCoder,
                        anchor_mask, checkerboard_kernel_mask, make_grouping,
                        make_schedule)


def scctx_weights(grouping, hyper_channels, seed, scale=0.25):
    """Ad hoc weight dict for a ScctxCoder (same names the codec uses)."""
    rng = np.random.default_rng(seed)
    m = grouping.total
    p = {}

    def conv(name, cin, cout, k):
        a = scale / np.sqrt(cin * k * k)
        p[name + ".weight"] = rng.uniform(-a, a, (cout, cin, k, k)).astype(np.float32)
        p[name + ".bias"] = rng.uniform(-a, a, cout).astype(np.float32)

    for k in range(1, grouping.num_groups + 1):
        c = grouping.chunk(k)
        conv(f"spatial.g{k}", c, 2 * c, 5)
        if k > 1:
            conv(f"channel.g{k}.c0", grouping.offset(k), 64, 5)
            conv(f"channel.g{k}.c1", 64, 2 * c, 5)
        w_in = 4 * c + 2 * m
        conv(f"agg.g{k}.c0", w_in, 3 * c + m, 1)
        conv(f"agg.g{k}.c1", 3 * c + m, max(4 * c, 64), 1)
        conv(f"agg.g{k}.c2", max(4 * c, 64), 2 * c, 1)
    return p


def build_coder(grouping, seed=0):
    return ScctxCoder(scctx_weights(grouping, 0, seed), grouping, 0, CdfStore())


def random_case(grouping, h, w, seed=5):
    rng = np.random.default_rng(seed)
    latent = rng.normal(0, 2.0, (grouping.total, h, w)).astype(np.float32)
    hyper = rng.normal(0, 1.0, (2 * grouping.total, h, w)).astype(np.float32)
    return latent, hyper


class TestGrouping:
    def test_elic_scheme(self):
        assert make_grouping(320).chunk_sizes == (16, 16, 32, 64, 192)

    def test_boundary(self):
        assert make_grouping(129).chunk_sizes == (16, 16, 32, 64, 1)

    def test_too_small_rejected(self):
        with pytest.raises(InvalidArgument):
            make_grouping(128)

    def test_offsets(self):
        g = make_grouping(320)
        assert [g.offset(k) for k in range(1, 6)] == [0, 16, 32, 64, 128]
        assert g.total == 320


class TestSchedule:
    def test_table_row_for_elic(self):
        # 10 passes; group-1 anchor = 8*HW symbols, group-5 nonanchor = 96*HW
        g = make_grouping(320)
        sched = make_schedule(g, 16, 16)
        hw = 256
        assert len(sched.passes) == 10
        assert sched.passes[0] == (1, ANCHOR)
        assert sched.passes[1] == (1, NONANCHOR)
        assert sched.symbol_counts[0] == 16 * 128 == 8 * hw
        assert sched.symbol_counts[-1] == 192 * 128 == 96 * hw
        assert min(sched.symbol_counts) == 8 * hw
        assert max(sched.symbol_counts) == 96 * hw
        assert sum(sched.symbol_counts) == 320 * hw

    def test_degenerate_grid(self):
        sched = make_schedule(make_grouping(144), 1, 1)
        assert sched.anchor_positions == 1
        assert sched.nonanchor_positions == 0
        assert sched.symbol_counts[0] == 16
        assert sched.symbol_counts[1] == 0

    @pytest.mark.parametrize("h,w", [(1, 2), (3, 3), (2, 5), (7, 4)])
    def test_partition(self, h, w):
        sched = make_schedule(make_grouping(130), h, w)
        assert sched.anchor_positions + sched.nonanchor_positions == h * w
        assert sched.anchor_positions == -(-h * w // 2)


class TestAnchorMask:
    def test_parity_definition(self):
        m = anchor_mask(3, 4)
        for h in range(3):
            for w in range(4):
                assert m[h, w] == ((h + w) % 2 == 0)

    def test_kernel_mask_is_opposite_parity(self):
        km = checkerboard_kernel_mask(5, 5)
        assert km[2, 2] == 0.0            # center (the symbol itself)
        assert km[2, 1] == 1.0 and km[1, 2] == 1.0
        assert km[0, 0] == 0.0 and km[1, 1] == 0.0


class TestContextNets:
    def setup_method(self):
        self.g = make_grouping(130)
        self.coder = build_coder(self.g)

    def test_group1_channel_context_is_zero(self):
        state = np.ones((130, 4, 4), np.float32)
        phi = self.coder.channel_context(1, state)
        assert phi.shape == (32, 4, 4)
        assert np.all(phi == 0.0)

    def test_group5_output_channels_for_elic(self):
        g = make_grouping(320)
        coder = build_coder(g)
        state = np.zeros((320, 4, 4), np.float32)
        phi = coder.channel_context(5, state)
        assert phi.shape == (2 * 192, 4, 4)

    def test_zero_prefix_gives_bias_propagation(self):
        state = np.zeros((130, 9, 9), np.float32)
        phi = self.coder.channel_context(3, state)
        # first conv sees only zeros -> pure bias; after the second 5x5 conv
        # every full-window (interior) position carries the same value
        interior = phi[:, 2:-2, 2:-2]
        assert np.allclose(interior, interior[:, :1, :1], atol=1e-6)
        assert not np.allclose(phi, 0.0)

    def test_anchor_spatial_context_is_zero(self):
        chunk = np.ones((16, 4, 4), np.float32)
        phi = self.coder.spatial_context(1, chunk, ANCHOR)
        assert np.all(phi == 0.0)

    def test_nonanchor_bias_only_when_anchors_zero(self):
        chunk = np.zeros((16, 6, 6), np.float32)
        phi = self.coder.spatial_context(1, chunk, NONANCHOR)
        assert np.allclose(phi, phi[:, :1, :1], atol=1e-7)

    def test_mask_leakage_probe(self):
        # nonanchor outputs must ignore nonanchor inputs inside the window
        rng = np.random.default_rng(3)
        chunk = rng.normal(0, 1, (16, 8, 8)).astype(np.float32)
        amask = anchor_mask(8, 8)
        base = self.coder.spatial_context(1, chunk, NONANCHOR)
        poked = chunk.copy()
        nonanchor_positions = np.argwhere(~amask)
        for h, w in nonanchor_positions[::7]:
            poked[:, h, w] += rng.normal(0, 5)
        after = self.coder.spatial_context(1, poked, NONANCHOR)
        assert np.array_equal(base[:, ~amask], after[:, ~amask])

    def test_aggregate_widths_match_supplementary_formula(self):
        g = make_grouping(320)
        coder = build_coder(g)
        w0 = coder.params["agg.g1.c0.weight"]
        assert w0.shape[1] == 4 * 16 + 2 * 320 == 704
        w2 = coder.params["agg.g1.c2.weight"]
        assert w2.shape[0] == 2 * 16 == 32

    def test_zero_weight_aggregation_still_codes(self):
        g = make_grouping(130)
        params = {k: np.zeros_like(v)
                  for k, v in scctx_weights(g, 0, 0).items()}
        coder = ScctxCoder(params, g, 0, CdfStore())
        latent, hyper = random_case(g, 4, 4)
        segs, state, stats, _ = coder.encode(latent, hyper)
        out = coder.decode(segs, hyper, 4, 4)
        assert np.array_equal(out, state)
        mean, scale = coder.pass_params(1, ANCHOR, np.zeros_like(latent), hyper)
        assert np.all(mean == 0.0)
        softplus0 = float(np.log1p(np.exp(np.float32(0.0))))
        assert np.allclose(scale, softplus0, atol=1e-6)


class TestRoundTripAndSchedule:
    @pytest.mark.parametrize("h,w", [(1, 1), (4, 4), (5, 7), (8, 8)])
    def test_encode_decode_bit_exact(self, h, w):
        g = make_grouping(136)
        coder = build_coder(g, seed=2)
        latent, hyper = random_case(g, h, w, seed=h * 100 + w)
        segs, enc_state, stats, channel_bits = coder.encode(latent, hyper)
        assert len(segs) == 10
        dec_state = coder.decode(segs, hyper, h, w)
        assert np.array_equal(dec_state, enc_state)

    def test_pass_symbol_counts_match_schedule(self):
        g = make_grouping(136)
        coder = build_coder(g)
        latent, hyper = random_case(g, 6, 5)
        _, _, stats, _ = coder.encode(latent, hyper)
        sched = make_schedule(g, 6, 5)
        assert [s.symbols for s in stats] == list(sched.symbol_counts)

    def test_anchor_pass_fills_even_positions_only(self):
        g = make_grouping(130)
        coder = build_coder(g)
        latent, hyper = random_case(g, 6, 6, seed=11)
        amask = anchor_mask(6, 6)
        # run only the first pass by hand
        mean, scale = coder.pass_params(1, ANCHOR, np.zeros_like(latent), hyper)
        q = quantize(latent[:16][:, amask].ravel(), mean[:, amask].ravel())
        state = np.zeros_like(latent)
        state[:16][:, amask] = dequantize(
            q, mean[:, amask].ravel()).reshape(16, -1)
        assert np.all(state[:16][:, ~amask] == 0.0)
        assert np.all(state[16:] == 0.0)
        # generic inputs: anchors are (almost surely) nonzero
        assert np.count_nonzero(state[:16][:, amask]) > 0

    def test_channel_bits_additivity(self):
        g = make_grouping(136)
        coder = build_coder(g)
        latent, hyper = random_case(g, 4, 6)
        _, _, stats, channel_bits = coder.encode(latent, hyper)
        assert channel_bits.shape == (136,)
        total = sum(s.estimate_bits for s in stats)
        assert channel_bits.sum() == pytest.approx(total, rel=1e-9)


class TestCausality:
    """Entropy parameters may depend only on the hyper features and strictly
    earlier passes."""

    def setup_method(self):
        self.g = make_grouping(136)
        self.coder = build_coder(self.g, seed=4)
        self.latent, self.hyper = random_case(self.g, 8, 8, seed=21)
        segs, self.state, _, _ = self.coder.encode(self.latent, self.hyper)
        self.amask = anchor_mask(8, 8)

    def test_anchor_params_ignore_own_chunk(self):
        for k in (1, 3):
            off, c = self.g.offset(k), self.g.chunk(k)
            base = self.coder.pass_params(k, ANCHOR, self.state, self.hyper)
            poked = self.state.copy()
            poked[off:off + c] += 7.5
            after = self.coder.pass_params(k, ANCHOR, poked, self.hyper)
            assert np.array_equal(base[0], after[0])
            assert np.array_equal(base[1], after[1])

    def test_nonanchor_params_ignore_intra_pass_symbols(self):
        k = 2
        off, c = self.g.offset(k), self.g.chunk(k)
        base = self.coder.pass_params(k, NONANCHOR, self.state, self.hyper)
        poked = self.state.copy()
        poked[off:off + c][:, ~self.amask] += 3.0   # other nonanchor symbols
        after = self.coder.pass_params(k, NONANCHOR, poked, self.hyper)
        assert np.array_equal(base[0][:, ~self.amask], after[0][:, ~self.amask])
        assert np.array_equal(base[1][:, ~self.amask], after[1][:, ~self.amask])

    def test_earlier_params_ignore_later_groups(self):
        k = 2
        base = self.coder.pass_params(k, NONANCHOR, self.state, self.hyper)
        poked = self.state.copy()
        poked[self.g.offset(4):] *= -2.0
        after = self.coder.pass_params(k, NONANCHOR, poked, self.hyper)
        assert np.array_equal(base[0], after[0])
        assert np.array_equal(base[1], after[1])

    def test_group1_depends_on_hyper_only(self):
        base = self.coder.pass_params(1, ANCHOR, self.state, self.hyper)
        poked = self.state.copy()
        poked += 11.0
        after = self.coder.pass_params(1, ANCHOR, poked, self.hyper)
        assert np.array_equal(base[0], after[0])
        other_hyper = self.hyper + 1.0
        changed = self.coder.pass_params(1, ANCHOR, self.state, other_hyper)
        assert not np.array_equal(base[0], changed[0])


def serial_decode(coder, segments, hyper, h, w):
    """Brute-force per-symbol sequential decode: re-evaluates the full
    context networks before every single symbol. Must match the pass-parallel
    decoder symbol for symbol."""
    g = coder.grouping
    amask = anchor_mask(h, w)
    state = np.zeros((g.total, h, w), np.float32)
    si = 0
    for k in range(1, g.num_groups + 1):
        off, c = g.offset(k), g.chunk(k)
        for phase in (ANCHOR, NONANCHOR):
            mask = amask if phase == ANCHOR else ~amask
            positions = np.argwhere(mask)
            dec = RangeDecoder(segments[si]) if positions.size else None
            si += 1
            for ci in range(c):
                for ph, pw in positions:
                    mean, scale = coder.pass_params(k, phase, state, hyper)
                    mu = np.float32(mean[ci, ph, pw])
                    lvl = sigma_to_level(np.float64(scale[ci, ph, pw]))
                    q = decode_with_store(dec, np.array([lvl], np.int32),
                                          coder.store)
                    state[off + ci, ph, pw] = dequantize(q, np.array([mu]))[0]
    return state


class TestSerialOracle:
    def test_parallel_equals_per_location_serial_4x4(self):
        g = make_grouping(132)
        coder = build_coder(g, seed=9)
        latent, hyper = random_case(g, 4, 4, seed=33)
        segs, enc_state, _, _ = coder.encode(latent, hyper)
        parallel = coder.decode(segs, hyper, 4, 4)
        serial = serial_decode(coder, segs, hyper, 4, 4)
        assert np.array_equal(parallel, serial)
        assert np.array_equal(parallel, enc_state)


class TestEvenGroupingConfig:
    """The 10-slice even split stays available as a test configuration."""

    def test_even_slices_roundtrip(self):
        g = GroupingScheme((32,) * 10)
        coder = build_coder(g, seed=6)
        latent, hyper = random_case(g, 4, 4, seed=13)
        segs, enc_state, stats, _ = coder.encode(latent, hyper)
        assert len(segs) == 20
        out = coder.decode(segs, hyper, 4, 4)
        assert np.array_equal(out, enc_state)


class TestSerialAutoregressiveOracle:
    """Tiny strictly-causal raster context coder (test-only oracle for the
    serial spatial variant): per-symbol sequential coding round-trips."""

    def test_roundtrip_4x4(self):
        rng = np.random.default_rng(17)
        c = 4
        mask = np.zeros((5, 5), np.float32)
        mask[:2, :] = 1.0
        mask[2, :2] = 1.0   # strictly above/left of center
        a = 0.3 / np.sqrt(c * 25)
        spec = nn.ConvSpec(rng.uniform(-a, a, (2 * c, c, 5, 5)).astype(np.float32),
                           np.zeros(2 * c, np.float32), padding=2, mask=mask)
        latent = rng.normal(0, 2, (c, 4, 4)).astype(np.float32)
        store = CdfStore()

        def params_at(state):
            feats = nn.conv2d(state, spec)
            mean = feats[:c]
            scale = np.clip(nn.softplus(feats[c:]) + np.float32(0.4), 0.11, 256)
            return mean, scale

        from elic.coder import RangeEncoder, encode_with_store
        enc = RangeEncoder()
        state = np.zeros_like(latent)
        for h in range(4):
            for w in range(4):
                mean, scale = params_at(state)
                for ci in range(c):
                    mu = mean[ci, h, w]
                    lvl = sigma_to_level(np.float64(scale[ci, h, w]))
                    q = quantize(latent[ci, h, w], mu)
                    encode_with_store(enc, np.array([q], np.int32),
                                      np.array([lvl], np.int32), store)
                    state[ci, h, w] = dequantize(np.array([q], np.int32),
                                                 np.array([mu]))[0]
        data = enc.flush()

        dec = RangeDecoder(data)
        out = np.zeros_like(latent)
        for h in range(4):
            for w in range(4):
                mean, scale = params_at(out)
                for ci in range(c):
                    mu = mean[ci, h, w]
                    lvl = sigma_to_level(np.float64(scale[ci, h, w]))
                    q = decode_with_store(dec, np.array([lvl], np.int32), store)
                    out[ci, h, w] = dequantize(q, np.array([mu]))[0]
        assert np.array_equal(out, state)
