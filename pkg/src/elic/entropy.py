"""Mean-scale Gaussian conditional model and the factorized hyper-latent prior.

Two consumers with different precision needs share this module: rate
estimation evaluates the continuous convolved-Gaussian likelihood in float64,
while the range coder consumes 16-bit quantized CDF tables built over a
centered integer support (the mean is removed from symbols before coding, per
the quantize-residual convention). Scales are snapped to a geometric grid of
1024 levels so tables can be cached; the grid is fine enough that the snap
costs well under 1e-4 bit per symbol.
"""

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import InvalidArgument

SIGMA_MIN = 0.11
SIGMA_MAX = 256.0
CDF_PRECISION = 16
CDF_TOTAL = 1 << CDF_PRECISION
LIKELIHOOD_FLOOR = 2.0 ** -24
MAX_SUPPORT = 255
NUM_SIGMA_LEVELS = 1024

# smallest half-width z with 2*Phi(-z) <= 2^-16
_Z_TAIL = float(-ndtri(2.0 ** -17))
_LOG_SIGMA_MIN = math.log(SIGMA_MIN)
_LOG_SIGMA_RATIO = math.log(SIGMA_MAX) - _LOG_SIGMA_MIN


def clamp_sigma(sigma):
    return np.clip(sigma, SIGMA_MIN, SIGMA_MAX)


@dataclass
class EntropyParams:
    """Per-symbol (mean, scale) fields; scale is clamped on construction."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean)
        self.scale = clamp_sigma(np.asarray(self.scale))
        if self.mean.shape != self.scale.shape:
            raise InvalidArgument(
                f"mean/scale shape mismatch: {self.mean.shape} vs {self.scale.shape}")


@dataclass
class FactorizedPrior:
    """Per-channel Gaussian for the hyper-latent: one (mean, scale) pair per
    channel, reused at every spatial position."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float32).reshape(-1)
        self.scale = clamp_sigma(
            np.asarray(self.scale, dtype=np.float32).reshape(-1))
        if self.mean.shape != self.scale.shape:
            raise InvalidArgument("prior mean/scale length mismatch")


def likelihood(y, params):
    """P(round-to-bin of y) under N(mean, scale^2) * U(-0.5, 0.5), elementwise.

    Evaluated in float64; kept strictly positive (far tails underflow the erf
    difference). The 2^-24 rate floor is applied in :func:`estimate_bits`,
    not here, so bin masses still sum to one. y is expected to hold coding
    symbols (integer offsets plus mean).
    """
    y = np.asarray(y)
    if y.shape != params.mean.shape:
        raise InvalidArgument(
            f"symbols shape {y.shape} does not match params {params.mean.shape}")
    v = y.astype(np.float64) - params.mean.astype(np.float64)
    s = params.scale.astype(np.float64)
    p = ndtr((v + 0.5) / s) - ndtr((v - 0.5) / s)
    return np.maximum(p, 2.0 ** -300)


def estimate_bits(y, params):
    """Total -log2 likelihood of the tensor, with each symbol's probability
    floored at 2^-24: the rate the coder should meet up to CDF quantization
    and termination overhead."""
    p = np.maximum(likelihood(y, params), LIKELIHOOD_FLOOR)
    return float(-np.log2(p).sum())


def choose_support(sigma):
    """Smallest symmetric integer range [-s, s] leaving <= 2^-16 tail mass,
    capped at +-255; symbols outside go through the escape bucket."""
    sigma = float(sigma)
    if not (sigma > 0):
        raise InvalidArgument("sigma must be positive")
    s = int(math.ceil(_Z_TAIL * sigma - 0.5))
    return (-min(max(s, 0), MAX_SUPPORT), min(max(s, 0), MAX_SUPPORT))


@dataclass
class QuantizedCdf:
    """16-bit cumulative table over [s_lo, s_hi] plus a final escape bucket.

    cdf has (s_hi - s_lo + 1) + 2 entries: cdf[0] = 0, cdf[-1] = 2^16,
    strictly increasing (every bucket repaired to frequency >= 1).
    """

    s_lo: int
    s_hi: int
    cdf: np.ndarray
    precision: int = CDF_PRECISION

    @property
    def num_symbols(self):
        return self.s_hi - self.s_lo + 1

    def frequency(self, q):
        """Coded frequency of symbol q (escape bucket if out of support)."""
        idx = q - self.s_lo
        if not 0 <= idx < self.num_symbols:
            idx = self.num_symbols
        return int(self.cdf[idx + 1] - self.cdf[idx])


def _quantize_pmf(masses):
    """Round bucket masses to integers totalling 2^16, every bucket >= 1.

    Deficit/surplus is settled against the currently largest bucket, first
    occurrence on ties, so the table is a pure function of the masses.
    """
    counts = np.maximum(1, np.round(masses * CDF_TOTAL)).astype(np.int64)
    diff = CDF_TOTAL - int(counts.sum())
    if diff > 0:
        counts[int(np.argmax(counts))] += diff
    while diff < 0:
        i = int(np.argmax(counts))
        take = min(int(counts[i]) - 1, -diff)
        if take <= 0:
            raise InvalidArgument("support too wide for 16-bit CDF")
        counts[i] -= take
        diff += take
    return counts


def build_cdf(sigma, support, mean_removed=True):
    """Quantized CDF for a centered Gaussian bin distribution at ``sigma``.

    ``support`` is an inclusive (s_lo, s_hi) integer range; remaining tail
    mass lands in the trailing escape bucket. Only the mean-removed
    convention is supported: symbols are quantized as round(y - mean), so
    tables never depend on the mean.
    """
    if not mean_removed:
        raise InvalidArgument("coder symbols are always mean-removed")
    s_lo, s_hi = int(support[0]), int(support[1])
    if s_hi < s_lo:
        raise InvalidArgument(f"empty support ({s_lo}, {s_hi})")
    sigma = float(clamp_sigma(sigma))
    edges = np.arange(s_lo, s_hi + 2, dtype=np.float64) - 0.5
    upper = ndtr(edges[1:] / sigma)
    lower = ndtr(edges[:-1] / sigma)
    masses = np.empty(s_hi - s_lo + 2, dtype=np.float64)
    masses[:-1] = upper - lower
    masses[-1] = max(0.0, 1.0 - float(masses[:-1].sum()))
    counts = _quantize_pmf(masses)
    cdf = np.zeros(len(counts) + 1, dtype=np.int32)
    np.cumsum(counts, out=cdf[1:])
    return QuantizedCdf(s_lo=s_lo, s_hi=s_hi, cdf=cdf)


def sigma_to_level(sigma):
    """Snap scales to the geometric level grid; returns int32 indices."""
    s = clamp_sigma(np.asarray(sigma, dtype=np.float64))
    t = (np.log(s) - _LOG_SIGMA_MIN) / _LOG_SIGMA_RATIO
    return np.rint(t * (NUM_SIGMA_LEVELS - 1)).astype(np.int32)


def level_sigma(level):
    """Representative scale of a level index."""
    t = float(level) / (NUM_SIGMA_LEVELS - 1)
    return math.exp(_LOG_SIGMA_MIN + t * _LOG_SIGMA_RATIO)


class CdfStore:
    """Lazily built per-level CDF cache, safe for concurrent readers.

    ``gather(levels)`` packs the tables referenced by a level array into the
    flat layout the batch coder kernels consume.
    """

    def __init__(self):
        self._tables = {}
        self._lock = threading.Lock()

    def get(self, level):
        level = int(level)
        table = self._tables.get(level)
        if table is None:
            with self._lock:
                table = self._tables.get(level)
                if table is None:
                    sigma = level_sigma(level)
                    table = build_cdf(sigma, choose_support(sigma))
                    self._tables[level] = table
        return table

    def gather(self, levels):
        """Return (rows, flat_cdf, offsets, s_los, nsyms) for a level array."""
        levels = np.asarray(levels, dtype=np.int32).reshape(-1)
        uniq = np.unique(levels)
        tables = [self.get(l) for l in uniq]
        offsets = np.zeros(len(tables), dtype=np.int64)
        pos = 0
        for i, t in enumerate(tables):
            offsets[i] = pos
            pos += len(t.cdf)
        flat = np.concatenate([t.cdf for t in tables]).astype(np.int32) \
            if tables else np.zeros(0, dtype=np.int32)
        s_los = np.array([t.s_lo for t in tables], dtype=np.int32)
        nsyms = np.array([t.num_symbols for t in tables], dtype=np.int32)
        rows = np.searchsorted(uniq, levels).astype(np.int32)
        return rows, flat, offsets, s_los, nsyms

    def coded_bits(self, symbols, levels):
        """Exact -log2 of the quantized-CDF probabilities the coder sees,
        including the 16 raw bits and marker cost of each escape."""
        symbols = np.asarray(symbols, dtype=np.int64).reshape(-1)
        levels = np.asarray(levels, dtype=np.int32).reshape(-1)
        bits = 0.0
        for level in np.unique(levels):
            t = self.get(level)
            sel = symbols[levels == level]
            idx = sel - t.s_lo
            inside = (idx >= 0) & (idx < t.num_symbols)
            idx = np.where(inside, idx, t.num_symbols)
            freqs = t.cdf[idx + 1] - t.cdf[idx]
            bits += float(-np.log2(freqs / CDF_TOTAL).sum())
            bits += 16.0 * float((~inside).sum())
        return bits
