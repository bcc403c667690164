"""End-to-end pipeline: analysis/synthesis transforms, hyper-latent coding,
the pass-segment container, thumbnail and progressive reconstruction.

Images are float32 (3, H, W) in [0, 1]. Inputs are replicate-padded to
multiples of 64 (four main plus two hyper stride-2 stages); true dims travel
in the container header. The decoder rebuilds the encoder's latent
reconstruction exactly, so everything downstream of the entropy bottleneck is
a deterministic replay.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import bitstream, nn
from .coder import decode_segment, dequantize, encode_segment, quantize
from .config import PIXEL_ALIGN, THUMBNAIL_INPUT_CHANNELS, ModelConfig
from .entropy import CdfStore, EntropyParams, FactorizedPrior, estimate_bits, \
    sigma_to_level
from .errors import InsufficientData, InvalidArgument
from .scctx import ScctxCoder

PSNR_CAP_DB = 99.0


def run_recipe(items, x, params):
    """Apply a config recipe (ordered op list) to a tensor."""
    for item in items:
        kind = item[0]
        if kind in ("conv", "tconv"):
            _, name, _, _, k, stride, pad = item
            spec = nn.ConvSpec(params[name + ".weight"], params[name + ".bias"],
                               stride=stride, padding=pad)
            x = nn.conv2d(x, spec) if kind == "conv" else nn.tconv2d(x, spec)
        elif kind == "rb":
            x = nn.residual_bottleneck(x, params, item[1])
        elif kind == "attn":
            x = nn.attention_block(x, params, item[1])
        elif kind == "relu":
            x = nn.relu(x)
        elif kind == "up2x":
            x = nn.bilinear_upsample2x(x)
        else:
            raise InvalidArgument(f"unknown recipe item {kind!r}")
    return x


def padded_dims(height, width):
    ph = -(-height // PIXEL_ALIGN) * PIXEL_ALIGN
    pw = -(-width // PIXEL_ALIGN) * PIXEL_ALIGN
    return ph, pw


def pad_image(image):
    _, h, w = image.shape
    ph, pw = padded_dims(h, w)
    return nn.replicate_pad(image, 0, ph - h, 0, pw - w)


def psnr(a, b):
    """10*log10(1/MSE) for [0,1] images, capped at 99 dB for exact matches."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidArgument(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse <= 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


@dataclass
class SegmentStats:
    name: str
    nbytes: int
    symbols: int
    coded_bits: float      # -log2 of the quantized-CDF probabilities
    estimate_bits: float   # continuous-likelihood estimate


@dataclass
class EncodeStats:
    width: int
    height: int
    header_bytes: int
    segments: list
    channel_bits: np.ndarray = field(repr=False, default=None)

    @property
    def total_bytes(self):
        return self.header_bytes + sum(s.nbytes + 4 for s in self.segments)

    @property
    def bpp(self):
        return 8.0 * self.total_bytes / (self.width * self.height)


@dataclass
class ChannelStat:
    index: int
    energy: float
    bits: float


@dataclass
class CompactionReport:
    """Per-channel energy e = mean(symbol^2) and estimated bits, sorted by
    energy: the compaction profile of a latent."""

    channels: list

    def to_rows(self):
        return [(c.index, c.energy, c.bits) for c in self.channels]

    def to_text(self):
        lines = ["rank  channel      energy        bits"]
        for rank, c in enumerate(self.channels):
            lines.append(f"{rank:4d}  {c.index:7d}  {c.energy:10.4f}  {c.bits:10.2f}")
        return "\n".join(lines)


class Codec:
    """A loaded model: weights plus the shared CDF cache.

    Read-only after construction; encode/decode calls keep their state on the
    stack so one instance can serve concurrent streams.
    """

    def __init__(self, store):
        store.validate()
        self.weights = store
        self.config = store.config
        self.params = store.arrays
        self.prior = FactorizedPrior(store["prior.mean"], store["prior.scale"])
        self.cdfs = CdfStore()
        self.scctx = ScctxCoder(store.view("scctx."), self.config.grouping,
                                self.config.num_filters, self.cdfs)

    # ---- forward transforms ------------------------------------------------

    def analysis(self, x):
        return run_recipe(self.config.analysis_recipe(), x, self.params)

    def synthesis(self, y):
        return run_recipe(self.config.synthesis_recipe(), y, self.params)

    def hyper_analysis(self, y):
        return run_recipe(self.config.hyper_analysis_recipe(), y, self.params)

    def hyper_synthesis(self, z):
        return run_recipe(self.config.hyper_synthesis_recipe(), z, self.params)

    def thumbnail_synthesis(self, y128):
        return run_recipe(self.config.thumbnail_recipe(), y128, self.params)

    # ---- hyper-latent coding ----------------------------------------------

    def _prior_fields(self, zh, zw):
        mean = np.broadcast_to(
            self.prior.mean[:, None, None], (self.prior.mean.size, zh, zw))
        levels = np.broadcast_to(
            sigma_to_level(self.prior.scale)[:, None, None], mean.shape)
        return np.ascontiguousarray(mean, dtype=np.float32), \
            np.ascontiguousarray(levels, dtype=np.int32)

    def _encode_hyper(self, z):
        mean, levels = self._prior_fields(z.shape[1], z.shape[2])
        q = quantize(z, mean)
        seg = encode_segment(q.ravel(), levels.ravel(), self.cdfs)
        z_hat = dequantize(q, mean)
        scale = np.broadcast_to(self.prior.scale[:, None, None], z.shape)
        est = estimate_bits(z_hat.astype(np.float64),
                            EntropyParams(mean.astype(np.float64),
                                          scale.astype(np.float64)))
        stats = SegmentStats(name="hyper", nbytes=len(seg), symbols=q.size,
                             coded_bits=self.cdfs.coded_bits(q.ravel(),
                                                             levels.ravel()),
                             estimate_bits=est)
        return seg, z_hat, stats

    def _decode_hyper(self, seg, zh, zw):
        mean, levels = self._prior_fields(zh, zw)
        q = decode_segment(seg, levels.ravel(), self.cdfs)
        return dequantize(q.reshape(mean.shape), mean)

    # ---- public pipeline ---------------------------------------------------

    def encode(self, image):
        """Image (3, H, W) in [0, 1] -> (container bytes, EncodeStats)."""
        image = nn.as_tensor(image)
        if image.shape[0] != 3:
            raise InvalidArgument(f"expected 3 channels, got {image.shape[0]}")
        if image.shape[1] < 1 or image.shape[2] < 1:
            raise InvalidArgument("empty image")
        if float(image.min()) < 0.0 or float(image.max()) > 1.0:
            raise InvalidArgument("pixel values must lie in [0, 1]")
        _, h, w = image.shape
        x = pad_image(image)
        y = self.analysis(x)
        z = self.hyper_analysis(y)
        z_seg, z_hat, z_stats = self._encode_hyper(z)
        hyper_out = self.hyper_synthesis(z_hat)
        segments, y_hat, pass_stats, channel_bits = self.scctx.encode(y, hyper_out)
        seg_stats = [z_stats] + [
            SegmentStats(name=f"g{p.group}.{p.phase}", nbytes=p.nbytes,
                         symbols=p.symbols, coded_bits=p.coded_bits,
                         estimate_bits=p.estimate_bits)
            for p in pass_stats
        ]
        data = bitstream.pack(self.config.variant_id, w, h, z_seg, segments)
        stats = EncodeStats(width=w, height=h,
                            header_bytes=bitstream.HEADER_LEN,
                            segments=seg_stats, channel_bits=channel_bits)
        return data, stats

    def _open(self, data):
        bs = data if isinstance(data, bitstream.Bitstream) else bitstream.Bitstream(data)
        if bs.variant_id != self.config.variant_id:
            raise InvalidArgument(
                f"stream variant id {bs.variant_id} does not match model "
                f"{self.config.variant!r}")
        return bs

    def _latent_dims(self, bs):
        ph, pw = padded_dims(bs.height, bs.width)
        return ph // 16, pw // 16, ph // 64, pw // 64

    def _decode_latent(self, bs, num_groups):
        yh, yw, zh, zw = self._latent_dims(bs)
        z_hat = self._decode_hyper(bs.z_segment(), zh, zw)
        hyper_out = self.hyper_synthesis(z_hat)
        segments = bs.pass_segments(2 * num_groups)
        y_hat = self.scctx.decode(segments, hyper_out, yh, yw,
                                  num_groups=num_groups)
        return y_hat, hyper_out

    def decode(self, data):
        """Full reconstruction at the original resolution."""
        bs = self._open(data)
        y_hat, _ = self._decode_latent(bs, self.config.grouping.num_groups)
        x_hat = self.synthesis(y_hat)
        x_hat = nn.crop(x_hat, 0, 0, bs.height, bs.width)
        return np.clip(x_hat, 0.0, 1.0)

    def decode_latent(self, data):
        """The reconstructed coding symbols (for bit-exactness checks)."""
        bs = self._open(data)
        y_hat, _ = self._decode_latent(bs, self.config.grouping.num_groups)
        return y_hat

    def decode_thumbnail(self, data):
        """Half-resolution preview from chunks 1..4 only (first 128 channels);
        never touches the group-5 segments."""
        bs = self._open(data)
        if bs.groups_present < 4:
            raise InsufficientData(
                f"thumbnail needs 4 groups, stream has {bs.groups_present}")
        y_hat, _ = self._decode_latent(bs, 4)
        thumb = self.thumbnail_synthesis(y_hat[:THUMBNAIL_INPUT_CHANNELS])
        th, tw = (bs.height + 1) // 2, (bs.width + 1) // 2
        return np.clip(nn.crop(thumb, 0, 0, th, tw), 0.0, 1.0)

    def decode_progressive(self, data, k, fill="zero"):
        """Reconstruct from the first k chunks; later chunks are zero-filled
        (or hyper-predicted means with fill="mean"). k <= 4 routes through the
        thumbnail synthesizer, k = 5 through the full synthesizer."""
        g = self.config.grouping
        if not 1 <= k <= g.num_groups:
            raise InvalidArgument(f"k must be in 1..{g.num_groups}, got {k}")
        if fill not in ("zero", "mean"):
            raise InvalidArgument(f"unknown fill mode {fill!r}")
        bs = self._open(data)
        if bs.groups_present < k:
            raise InsufficientData(
                f"stream has {bs.groups_present} groups, need {k}")
        y_hat, hyper_out = self._decode_latent(bs, k)
        if fill == "mean":
            for j in range(k + 1, g.num_groups + 1):
                off, c = g.offset(j), g.chunk(j)
                y_hat[off:off + c] = self.scctx.pass_means(
                    j, hyper_out, y_hat.shape[1], y_hat.shape[2])
        if k == g.num_groups:
            x_hat = self.synthesis(y_hat)
            x_hat = nn.crop(x_hat, 0, 0, bs.height, bs.width)
        else:
            thumb = self.thumbnail_synthesis(y_hat[:THUMBNAIL_INPUT_CHANNELS])
            x_hat = nn.crop(thumb, 0, 0, (bs.height + 1) // 2,
                            (bs.width + 1) // 2)
        return np.clip(x_hat, 0.0, 1.0)

    def analyze(self, image):
        """Compaction profile of an image's latent: per-channel energy and
        estimated bits, sorted by energy."""
        _, stats = self.encode(image)
        return self.compaction_report(image, stats)

    def compaction_report(self, image, stats=None):
        image = nn.as_tensor(image)
        if stats is None:
            _, stats = self.encode(image)
        x = pad_image(image)
        y = self.analysis(x)
        z = self.hyper_analysis(y)
        _, z_hat, _ = self._encode_hyper(z)
        hyper_out = self.hyper_synthesis(z_hat)
        _, y_hat, _, channel_bits = self.scctx.encode(y, hyper_out)
        energy = (y_hat.astype(np.float64) ** 2).mean(axis=(1, 2))
        order = np.argsort(-energy, kind="stable")
        channels = [ChannelStat(index=int(i), energy=float(energy[i]),
                                bits=float(channel_bits[i])) for i in order]
        return CompactionReport(channels=channels)


def magnitude_rasters(y_hat):
    """Per-channel |symbol| maps rescaled by the global max magnitude, as
    uint8 grayscale images (the compaction visualization)."""
    mags = np.abs(y_hat.astype(np.float64))
    peak = mags.max()
    if peak <= 0:
        return np.zeros(y_hat.shape, dtype=np.uint8)
    return np.clip(np.rint(mags / peak * 255.0), 0, 255).astype(np.uint8)


# ---- functional wrappers ----------------------------------------------------

def encode_image(image, store):
    return Codec(store).encode(image)


def decode_image(data, store):
    return Codec(store).decode(data)


def decode_thumbnail(data, store):
    return Codec(store).decode_thumbnail(data)


def decode_progressive(data, store, k, fill="zero"):
    return Codec(store).decode_progressive(data, k, fill=fill)


def analyze_compaction(image, store):
    return Codec(store).analyze(image)
