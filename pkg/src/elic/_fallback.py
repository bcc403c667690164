"""Pure-numpy / pure-Python twins of the compiled kernels.

Bit-identical to ``elic._kernels`` by construction: convolutions replay the
same (in_channel, kernel_row, kernel_col) float32 accumulation sequence, just
vectorized over output positions, and the coder runs the same integer
arithmetic on Python ints. Roughly 10-100x slower; selected automatically when
the extension is missing, or forced with ELIC_BACKEND=python.
"""

import numpy as np

_TOP = 1 << 56
_MASK64 = (1 << 64) - 1


def conv2d_f32(x, w, b, stride, pad, out):
    O, I, KH, KW = w.shape
    _, H, W = x.shape
    _, OH, OW = out.shape
    for ci in range(I):
        for kh in range(KH):
            oh_lo = 0 if kh >= pad else -(-(pad - kh) // stride)
            numer = H - 1 - kh + pad
            if numer < 0:
                continue
            oh_hi = min(numer // stride + 1, OH)
            if oh_hi <= oh_lo:
                continue
            ih_lo = oh_lo * stride + kh - pad
            ih_hi = (oh_hi - 1) * stride + kh - pad + 1
            for kw in range(KW):
                ow_lo = 0 if kw >= pad else -(-(pad - kw) // stride)
                numer = W - 1 - kw + pad
                if numer < 0:
                    continue
                ow_hi = min(numer // stride + 1, OW)
                if ow_hi <= ow_lo:
                    continue
                iw_lo = ow_lo * stride + kw - pad
                iw_hi = (ow_hi - 1) * stride + kw - pad + 1
                patch = x[ci, ih_lo:ih_hi:stride, iw_lo:iw_hi:stride]
                out[:, oh_lo:oh_hi, ow_lo:ow_hi] += (
                    w[:, ci, kh, kw][:, None, None] * patch[None, :, :]
                )
    out += b[:, None, None]


def tconv2d_f32(x, w, b, stride, pad, out):
    O, I, KH, KW = w.shape
    _, IH, IW = x.shape
    _, OH, OW = out.shape
    for ci in range(I):
        for kh in range(KH):
            ih_lo = 0 if kh >= pad else -(-(pad - kh) // stride)
            numer = OH - 1 - kh + pad
            if numer < 0:
                continue
            ih_hi = min(numer // stride + 1, IH)
            if ih_hi <= ih_lo:
                continue
            oh_lo = ih_lo * stride + kh - pad
            oh_hi = (ih_hi - 1) * stride + kh - pad + 1
            for kw in range(KW):
                iw_lo = 0 if kw >= pad else -(-(pad - kw) // stride)
                numer = OW - 1 - kw + pad
                if numer < 0:
                    continue
                iw_hi = min(numer // stride + 1, IW)
                if iw_hi <= iw_lo:
                    continue
                ow_lo = iw_lo * stride + kw - pad
                ow_hi = (iw_hi - 1) * stride + kw - pad + 1
                out[:, oh_lo:oh_hi:stride, ow_lo:ow_hi:stride] += (
                    w[:, ci, kh, kw][:, None, None]
                    * x[ci, ih_lo:ih_hi, iw_lo:iw_hi][None, :, :]
                )
    out += b[:, None, None]


class RangeEncoder:
    """Python-int mirror of the compiled 64-bit range encoder."""

    def __init__(self):
        self.low = 0
        self.rng = _MASK64
        self._out = bytearray()
        self._flushed = False

    def _carry(self):
        i = len(self._out) - 1
        while i >= 0 and self._out[i] == 0xFF:
            self._out[i] = 0
            i -= 1
        if i < 0:
            raise RuntimeError("range coder carry before any output byte")
        self._out[i] += 1

    def encode(self, cum, freq, tot_bits=16):
        if self._flushed:
            raise RuntimeError("encoder already flushed")
        if freq <= 0:
            raise ValueError("zero-frequency symbol")
        r = self.rng >> tot_bits
        nlow = (self.low + r * cum) & _MASK64
        if nlow < self.low:
            self._carry()
        self.low = nlow
        self.rng = r * freq
        while self.rng < _TOP:
            self._out.append((self.low >> 56) & 0xFF)
            self.low = (self.low << 8) & _MASK64
            self.rng <<= 8

    def flush(self):
        if self._flushed:
            return bytes(self._out)
        low, end = self.low, self.low + self.rng
        k = 0
        for kk in range(64, -1, -1):
            v = ((low + (1 << kk) - 1) >> kk) << kk
            if v < end:
                k = kk
                break
        v = ((low + (1 << k) - 1) >> k) << k
        if v >> 64:
            self._carry()
            v &= _MASK64
        for i in range((64 - k + 7) // 8):
            self._out.append((v >> (56 - 8 * i)) & 0xFF)
        self._flushed = True
        return bytes(self._out)

    @property
    def nbytes(self):
        return len(self._out)


class RangeDecoder:
    """Python-int mirror of the compiled decoder; EOF reads yield zeros."""

    def __init__(self, data):
        self._data = bytes(data)
        self._pos = 0
        self.rng = _MASK64
        self.code = 0
        for _ in range(8):
            self.code = (self.code << 8) | self._next_byte()

    def _next_byte(self):
        b = self._data[self._pos] if self._pos < len(self._data) else 0
        self._pos += 1
        return b

    def target(self, tot_bits=16):
        r = self.rng >> tot_bits
        return min(self.code // r, (1 << tot_bits) - 1)

    def advance(self, cum, freq, tot_bits=16):
        r = self.rng >> tot_bits
        self.code = (self.code - r * cum) & _MASK64
        self.rng = r * freq
        while self.rng < _TOP:
            self.code = ((self.code << 8) | self._next_byte()) & _MASK64
            self.rng <<= 8


def encode_symbols(enc, syms, rows, flat_cdf, offsets, s_los, nsyms):
    for i in range(len(syms)):
        r = rows[i]
        off = int(offsets[r])
        lo = int(s_los[r])
        ns = int(nsyms[r])
        q = int(syms[i])
        idx = q - lo
        if 0 <= idx < ns:
            enc.encode(int(flat_cdf[off + idx]),
                       int(flat_cdf[off + idx + 1] - flat_cdf[off + idx]), 16)
        else:
            enc.encode(int(flat_cdf[off + ns]),
                       int(flat_cdf[off + ns + 1] - flat_cdf[off + ns]), 16)
            q = max(-32768, min(32767, q))
            v = q + 32768
            enc.encode(v >> 8, 1, 8)
            enc.encode(v & 0xFF, 1, 8)


def decode_symbols(dec, rows, flat_cdf, offsets, s_los, nsyms, out):
    for i in range(len(rows)):
        r = rows[i]
        off = int(offsets[r])
        lo = int(s_los[r])
        ns = int(nsyms[r])
        target = dec.target(16)
        lo_i, hi_i = 0, ns + 1
        while hi_i - lo_i > 1:
            mid = (lo_i + hi_i) >> 1
            if flat_cdf[off + mid] <= target:
                lo_i = mid
            else:
                hi_i = mid
        dec.advance(int(flat_cdf[off + lo_i]),
                    int(flat_cdf[off + lo_i + 1] - flat_cdf[off + lo_i]), 16)
        if lo_i == ns:
            hi = dec.target(8)
            dec.advance(hi, 1, 8)
            lo_b = dec.target(8)
            dec.advance(lo_b, 1, 8)
            out[i] = ((hi << 8) | lo_b) - 32768
        else:
            out[i] = lo + lo_i
