"""Space-channel context coding: uneven channel chunks, each coded in two
checkerboard phases, conditioned on earlier chunks and the hyper features.

Decode order is frozen as (chunk 1 anchor, chunk 1 nonanchor, chunk 2 anchor,
...): 10 passes for the 5-chunk grouping. Anchors are the (h + w) even
positions. Within a pass, symbols are serialized channel-major in raster
order. Entropy parameters for a pass depend only on the hyper features and
symbols from strictly earlier passes, which is what makes whole-pass parallel
evaluation equal per-location serial evaluation.
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from .coder import (RangeDecoder, RangeEncoder, decode_with_store, dequantize,
                    encode_with_store, quantize)
from .entropy import EntropyParams, clamp_sigma, sigma_to_level
from .errors import CorruptBitstream, InvalidArgument

CHANNEL_CTX_WIDTH = 64
ANCHOR = "anchor"
NONANCHOR = "nonanchor"


@dataclass(frozen=True)
class GroupingScheme:
    """Ordered channel chunk sizes; their sum is the latent channel count."""

    chunk_sizes: tuple

    def __post_init__(self):
        if any(c < 1 for c in self.chunk_sizes):
            raise InvalidArgument("chunk sizes must be positive")

    @property
    def total(self):
        return sum(self.chunk_sizes)

    @property
    def num_groups(self):
        return len(self.chunk_sizes)

    def offset(self, k):
        """First channel of 1-based group k."""
        return sum(self.chunk_sizes[:k - 1])

    def chunk(self, k):
        return self.chunk_sizes[k - 1]


def make_grouping(m):
    """The uneven split: 16, 16, 32, 64 and whatever remains (m - 128)."""
    if m <= 128:
        raise InvalidArgument(f"need more than 128 channels, got {m}")
    return GroupingScheme((16, 16, 32, 64, m - 128))


def anchor_mask(height, width):
    """Boolean (H, W) grid, True where (h + w) is even."""
    h = np.arange(height)[:, None]
    w = np.arange(width)[None, :]
    return ((h + w) % 2) == 0


def checkerboard_kernel_mask(kh, kw):
    """Taps of opposite parity to the kernel center: what a nonanchor output
    position is allowed to see (exactly the anchor positions around it)."""
    center = (kh // 2) + (kw // 2)
    r = np.arange(kh)[:, None] + np.arange(kw)[None, :]
    return ((r + center) % 2 == 1).astype(np.float32)


@dataclass(frozen=True)
class DecodeSchedule:
    """The frozen pass order with per-pass symbol counts."""

    passes: tuple          # ((group_k, phase), ...)
    symbol_counts: tuple   # symbols coded in each pass
    anchor_positions: int
    nonanchor_positions: int


def make_schedule(scheme, height, width):
    n_anchor = int(anchor_mask(height, width).sum())
    n_non = height * width - n_anchor
    passes = []
    counts = []
    for k in range(1, scheme.num_groups + 1):
        c = scheme.chunk(k)
        passes.append((k, ANCHOR))
        counts.append(c * n_anchor)
        passes.append((k, NONANCHOR))
        counts.append(c * n_non)
    return DecodeSchedule(tuple(passes), tuple(counts), n_anchor, n_non)


@dataclass
class PassStats:
    group: int
    phase: str
    symbols: int
    nbytes: int
    coded_bits: float      # -log2 of quantized-CDF probabilities
    estimate_bits: float   # continuous-likelihood estimate


class ScctxCoder:
    """Runs the pass schedule against a weight view and a CDF store.

    ``params`` maps ``spatial.g{k}.*``, ``channel.g{k}.c{0,1}.*`` and
    ``agg.g{k}.c{0,1,2}.*`` names to arrays. A single instance is read-only
    after construction and safe to share across threads; per-call state lives
    on the stack.
    """

    def __init__(self, params, grouping, hyper_channels, store):
        self.params = params
        self.grouping = grouping
        self.hyper_channels = hyper_channels
        self.store = store
        k5 = checkerboard_kernel_mask(5, 5)
        self._spatial = {}
        for k in range(1, grouping.num_groups + 1):
            self._spatial[k] = nn.ConvSpec(
                params[f"spatial.g{k}.weight"], params[f"spatial.g{k}.bias"],
                stride=1, padding=2, mask=k5)

    def _conv(self, name, padding=0):
        return nn.ConvSpec(self.params[name + ".weight"],
                           self.params[name + ".bias"],
                           stride=1, padding=padding)

    def channel_context(self, k, latent_state):
        """Features from the chunks before k; zeros for the first group."""
        c = self.grouping.chunk(k)
        if k == 1:
            return np.zeros((2 * c,) + latent_state.shape[1:], dtype=np.float32)
        prefix = latent_state[:self.grouping.offset(k)]
        h = nn.conv2d(prefix, self._conv(f"channel.g{k}.c0", padding=2))
        h = nn.relu(h)
        return nn.conv2d(h, self._conv(f"channel.g{k}.c1", padding=2))

    def spatial_context(self, k, partial_chunk, phase):
        """Masked 5x5 conv over the partially decoded chunk; anchors see
        nothing, so the anchor phase is all zeros by definition."""
        c = self.grouping.chunk(k)
        if partial_chunk.shape[0] != c:
            raise InvalidArgument(
                f"group {k} expects {c} channels, got {partial_chunk.shape[0]}")
        if phase == ANCHOR:
            return np.zeros((2 * c,) + partial_chunk.shape[1:], dtype=np.float32)
        return nn.conv2d(partial_chunk, self._spatial[k])

    def aggregate(self, k, phi_sp, phi_ch, hyper_out):
        """Fuse [spatial, channel, hyper] features into (mean, scale)."""
        c = self.grouping.chunk(k)
        m2 = 2 * self.grouping.total
        if phi_sp.shape[0] != 2 * c or phi_ch.shape[0] != 2 * c:
            raise InvalidArgument("context feature channel mismatch")
        if hyper_out.shape[0] != m2:
            raise InvalidArgument(
                f"hyper features must have {m2} channels, got {hyper_out.shape[0]}")
        h = nn.concat_channels([phi_sp, phi_ch, hyper_out])
        h = nn.conv2d(h, self._conv(f"agg.g{k}.c0"))
        h = nn.relu(h)
        h = nn.conv2d(h, self._conv(f"agg.g{k}.c1"))
        h = nn.relu(h)
        h = nn.conv2d(h, self._conv(f"agg.g{k}.c2"))
        mean = h[:c]
        scale = clamp_sigma(nn.softplus(h[c:]))
        return mean, scale

    def pass_params(self, k, phase, latent_state, hyper_out, phi_ch=None):
        """Entropy parameters for one pass given the current decoded state."""
        off = self.grouping.offset(k)
        c = self.grouping.chunk(k)
        if phi_ch is None:
            phi_ch = self.channel_context(k, latent_state)
        phi_sp = self.spatial_context(k, latent_state[off:off + c], phase)
        return self.aggregate(k, phi_sp, phi_ch, hyper_out)

    def _phase_arrays(self, mean, scale, mask):
        mu = mean[:, mask].ravel()
        sg = scale[:, mask].ravel()
        return mu, sigma_to_level(sg), sg

    def encode(self, latent, hyper_out):
        """Code the latent; returns (segments, reconstruction, stats,
        per-channel bit estimates).

        The reconstruction is what the decoder will see (q + mean) and is fed
        back as context for later passes on both sides.
        """
        m, height, width = latent.shape
        if m != self.grouping.total:
            raise InvalidArgument(
                f"latent has {m} channels, grouping wants {self.grouping.total}")
        amask = anchor_mask(height, width)
        state = np.zeros_like(latent)
        segments = []
        stats = []
        channel_bits = np.zeros(m, dtype=np.float64)
        for k in range(1, self.grouping.num_groups + 1):
            off = self.grouping.offset(k)
            c = self.grouping.chunk(k)
            phi_ch = self.channel_context(k, state)
            for phase in (ANCHOR, NONANCHOR):
                mask = amask if phase == ANCHOR else ~amask
                mean, scale = self.pass_params(k, phase, state, hyper_out,
                                               phi_ch=phi_ch)
                mu, levels, sg = self._phase_arrays(mean, scale, mask)
                y_sel = latent[off:off + c][:, mask].ravel()
                q = quantize(y_sel, mu)
                enc = RangeEncoder()
                encode_with_store(enc, q, levels, self.store)
                seg = enc.flush() if q.size else b""
                segments.append(seg)
                recon = dequantize(q, mu)
                state[off:off + c][:, mask] = recon.reshape(c, -1)
                sym_bits = _symbol_bits(recon, mu, sg)
                channel_bits[off:off + c] += sym_bits.reshape(c, -1).sum(axis=1)
                stats.append(PassStats(
                    group=k, phase=phase, symbols=int(q.size),
                    nbytes=len(seg),
                    coded_bits=self.store.coded_bits(q, levels),
                    estimate_bits=float(sym_bits.sum())))
        return segments, state, stats, channel_bits

    def decode(self, segments, hyper_out, height, width, num_groups=None):
        """Rebuild the latent from per-pass segments (2 per group).

        ``num_groups`` limits decoding to the first k groups for progressive
        use; the remaining chunks stay zero-filled.
        """
        kmax = num_groups if num_groups is not None else self.grouping.num_groups
        if not 1 <= kmax <= self.grouping.num_groups:
            raise InvalidArgument(f"group count {kmax} out of range")
        if len(segments) < 2 * kmax:
            raise CorruptBitstream(
                f"need {2 * kmax} pass segments, got {len(segments)}")
        amask = anchor_mask(height, width)
        state = np.zeros((self.grouping.total, height, width), dtype=np.float32)
        si = 0
        for k in range(1, kmax + 1):
            off = self.grouping.offset(k)
            c = self.grouping.chunk(k)
            phi_ch = self.channel_context(k, state)
            for phase in (ANCHOR, NONANCHOR):
                mask = amask if phase == ANCHOR else ~amask
                mean, scale = self.pass_params(k, phase, state, hyper_out,
                                               phi_ch=phi_ch)
                mu, levels, _ = self._phase_arrays(mean, scale, mask)
                if levels.size:
                    dec = RangeDecoder(segments[si])
                    q = decode_with_store(dec, levels, self.store)
                else:
                    q = np.zeros(0, dtype=np.int32)
                state[off:off + c][:, mask] = dequantize(q, mu).reshape(c, -1)
                si += 1
        return state

    def pass_means(self, k, hyper_out, height, width):
        """Hyper-only mean prediction for a not-yet-decoded chunk (both
        parities): zero spatial and zero channel context."""
        c = self.grouping.chunk(k)
        zeros_sp = np.zeros((2 * c, height, width), dtype=np.float32)
        zeros_ch = np.zeros((2 * c, height, width), dtype=np.float32)
        mean, _ = self.aggregate(k, zeros_sp, zeros_ch, hyper_out)
        return mean


def _symbol_bits(recon, mu, sigma):
    """Continuous-likelihood -log2 p per coded symbol (rate-floored)."""
    from .entropy import LIKELIHOOD_FLOOR, likelihood
    if recon.size == 0:
        return np.zeros(0, dtype=np.float64)
    params = EntropyParams(mean=mu.astype(np.float64),
                           scale=sigma.astype(np.float64))
    p = np.maximum(likelihood(recon.astype(np.float64), params),
                   LIKELIHOOD_FLOOR)
    return -np.log2(p)
