# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: float32 conv/tconv with a frozen accumulation order,
and the byte-oriented range coder.

Every kernel here has a pure-numpy twin in ``elic._fallback`` that produces
bit-identical results; ``elic._backend`` picks one at import time. The float32
accumulation order per output element is (in_channel, kernel_row, kernel_col),
with the bias added last. Compiled with -ffp-contract=off so a*b+c rounds the
product before the add, exactly like the numpy twin.
"""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport int32_t, int64_t, uint8_t, uint32_t, uint64_t

cdef extern from *:
    """
    #include <stddef.h>
    #include <stdlib.h>
    #include <string.h>

    /* Zero padding is realized by clipping tap ranges; masked kernels keep
       their zeroed weights inside the accumulation so the numpy twin sees the
       same float32 add sequence. restrict lets the compiler vectorize the
       row loops; the stride-2 paths pack even/odd columns so the inner loops
       stay unit-stride. Packing only relocates data, so the per-element
       accumulation order (ci, kh, kw) is untouched. */

    static void elic_conv2d_core(const float* restrict x, const float* restrict w,
                                 float* restrict out,
                                 ptrdiff_t n_out, ptrdiff_t n_in, ptrdiff_t kh_n, ptrdiff_t kw_n,
                                 ptrdiff_t h_n, ptrdiff_t w_n, ptrdiff_t oh_n, ptrdiff_t ow_n,
                                 int stride, int pad)
    {
        ptrdiff_t co, ci, kh, kw, oh, ow, i;
        float* packed = NULL;
        ptrdiff_t we_n = 0, wo_n = 0;
        if (stride == 2) {
            packed = (float*)malloc((size_t)(n_in * h_n * w_n + 1) * sizeof(float));
            if (packed) {
                we_n = (w_n + 1) / 2;
                wo_n = w_n / 2;
                for (ci = 0; ci < n_in; ci++)
                    for (oh = 0; oh < h_n; oh++) {
                        const float* restrict src = x + (ci * h_n + oh) * w_n;
                        float* restrict de = packed + (ci * h_n + oh) * w_n;
                        float* restrict do_ = de + we_n;
                        for (i = 0; i < we_n; i++) de[i] = src[2 * i];
                        for (i = 0; i < wo_n; i++) do_[i] = src[2 * i + 1];
                    }
            }
        }
        for (co = 0; co < n_out; co++)
        for (ci = 0; ci < n_in; ci++)
        for (kh = 0; kh < kh_n; kh++) {
            ptrdiff_t oh_lo = kh >= pad ? 0 : (pad - kh + stride - 1) / stride;
            ptrdiff_t numer = h_n - 1 - kh + pad;
            ptrdiff_t oh_hi;
            if (numer < 0) continue;
            oh_hi = numer / stride + 1;
            if (oh_hi > oh_n) oh_hi = oh_n;
            for (kw = 0; kw < kw_n; kw++) {
                float wv = w[((co * n_in + ci) * kh_n + kh) * kw_n + kw];
                ptrdiff_t ow_lo = kw >= pad ? 0 : (pad - kw + stride - 1) / stride;
                ptrdiff_t ow_hi, kwp = kw - pad;
                numer = w_n - 1 - kw + pad;
                if (numer < 0) continue;
                ow_hi = numer / stride + 1;
                if (ow_hi > ow_n) ow_hi = ow_n;
                if (ow_hi <= ow_lo) continue;
                if (stride == 1) {
                    for (oh = oh_lo; oh < oh_hi; oh++) {
                        const float* restrict xr = x + (ci * h_n + oh + kh - pad) * w_n + kwp;
                        float* restrict orow = out + (co * oh_n + oh) * ow_n;
                        for (ow = ow_lo; ow < ow_hi; ow++)
                            orow[ow] += wv * xr[ow];
                    }
                } else if (stride == 2 && packed) {
                    ptrdiff_t idx0 = (2 * ow_lo + kwp) >> 1;
                    ptrdiff_t par = (2 * ow_lo + kwp) & 1;
                    ptrdiff_t cnt = ow_hi - ow_lo;
                    for (oh = oh_lo; oh < oh_hi; oh++) {
                        const float* restrict xr = packed
                            + (ci * h_n + oh * 2 + kh - pad) * w_n
                            + (par ? we_n : 0) + idx0;
                        float* restrict orow = out + (co * oh_n + oh) * ow_n + ow_lo;
                        for (i = 0; i < cnt; i++)
                            orow[i] += wv * xr[i];
                    }
                } else {
                    for (oh = oh_lo; oh < oh_hi; oh++) {
                        const float* restrict xr = x + (ci * h_n + oh * stride + kh - pad) * w_n + kwp;
                        float* restrict orow = out + (co * oh_n + oh) * ow_n;
                        for (ow = ow_lo; ow < ow_hi; ow++)
                            orow[ow] += wv * xr[ow * stride];
                    }
                }
            }
        }
        if (packed) free(packed);
    }

    /* Gather form of the conv adjoint: out[oh,ow] sums w[ci,kh,kw]*x[ci,ih,iw]
       over taps with oh = ih*stride + kh - pad, keeping the per-element
       accumulation order (ci, kh, kw). The stride-2 path accumulates each
       output channel in packed even/odd column planes and interleaves at the
       end. */
    static void elic_tconv2d_core(const float* restrict x, const float* restrict w,
                                  float* restrict out,
                                  ptrdiff_t n_out, ptrdiff_t n_in, ptrdiff_t kh_n, ptrdiff_t kw_n,
                                  ptrdiff_t h_n, ptrdiff_t w_n, ptrdiff_t oh_n, ptrdiff_t ow_n,
                                  int stride, int pad)
    {
        ptrdiff_t co, ci, kh, kw, ih, iw, i;
        float* scratch = NULL;
        ptrdiff_t we_n = 0, wo_n = 0;
        if (stride == 2)
            scratch = (float*)malloc((size_t)(oh_n * ow_n + 1) * sizeof(float));
        if (scratch) {
            we_n = (ow_n + 1) / 2;
            wo_n = ow_n / 2;
        }
        for (co = 0; co < n_out; co++) {
            if (scratch)
                memset(scratch, 0, (size_t)(oh_n * ow_n) * sizeof(float));
            for (ci = 0; ci < n_in; ci++)
            for (kh = 0; kh < kh_n; kh++) {
                ptrdiff_t ih_lo = kh >= pad ? 0 : (pad - kh + stride - 1) / stride;
                ptrdiff_t numer = oh_n - 1 - kh + pad;
                ptrdiff_t ih_hi;
                if (numer < 0) continue;
                ih_hi = numer / stride + 1;
                if (ih_hi > h_n) ih_hi = h_n;
                for (kw = 0; kw < kw_n; kw++) {
                    float wv = w[((co * n_in + ci) * kh_n + kh) * kw_n + kw];
                    ptrdiff_t iw_lo = kw >= pad ? 0 : (pad - kw + stride - 1) / stride;
                    ptrdiff_t iw_hi, kwp = kw - pad;
                    numer = ow_n - 1 - kw + pad;
                    if (numer < 0) continue;
                    iw_hi = numer / stride + 1;
                    if (iw_hi > w_n) iw_hi = w_n;
                    if (iw_hi <= iw_lo) continue;
                    if (scratch) {
                        ptrdiff_t idx0 = (2 * iw_lo + kwp) >> 1;
                        ptrdiff_t par = (2 * iw_lo + kwp) & 1;
                        ptrdiff_t cnt = iw_hi - iw_lo;
                        for (ih = ih_lo; ih < ih_hi; ih++) {
                            const float* restrict xr = x + (ci * h_n + ih) * w_n + iw_lo;
                            float* restrict orow = scratch
                                + (ih * 2 + kh - pad) * ow_n
                                + (par ? we_n : 0) + idx0;
                            for (i = 0; i < cnt; i++)
                                orow[i] += wv * xr[i];
                        }
                    } else if (stride == 1) {
                        for (ih = ih_lo; ih < ih_hi; ih++) {
                            const float* restrict xr = x + (ci * h_n + ih) * w_n;
                            float* restrict orow = out + (co * oh_n + ih + kh - pad) * ow_n + kwp;
                            for (iw = iw_lo; iw < iw_hi; iw++)
                                orow[iw] += wv * xr[iw];
                        }
                    } else {
                        for (ih = ih_lo; ih < ih_hi; ih++) {
                            const float* restrict xr = x + (ci * h_n + ih) * w_n;
                            float* restrict orow = out + (co * oh_n + ih * stride + kh - pad) * ow_n + kwp;
                            for (iw = iw_lo; iw < iw_hi; iw++)
                                orow[iw * stride] += wv * xr[iw];
                        }
                    }
                }
            }
            if (scratch) {
                for (ih = 0; ih < oh_n; ih++) {
                    const float* restrict se = scratch + ih * ow_n;
                    const float* restrict so = se + we_n;
                    float* restrict orow = out + (co * oh_n + ih) * ow_n;
                    for (i = 0; i < we_n; i++) orow[2 * i] = se[i];
                    for (i = 0; i < wo_n; i++) orow[2 * i + 1] = so[i];
                }
            }
        }
        if (scratch) free(scratch);
    }
    """
    void elic_conv2d_core(const float* x, const float* w, float* out,
                          ptrdiff_t n_out, ptrdiff_t n_in, ptrdiff_t kh_n, ptrdiff_t kw_n,
                          ptrdiff_t h_n, ptrdiff_t w_n, ptrdiff_t oh_n, ptrdiff_t ow_n,
                          int stride, int pad) nogil
    void elic_tconv2d_core(const float* x, const float* w, float* out,
                           ptrdiff_t n_out, ptrdiff_t n_in, ptrdiff_t kh_n, ptrdiff_t kw_n,
                           ptrdiff_t h_n, ptrdiff_t w_n, ptrdiff_t oh_n, ptrdiff_t ow_n,
                           int stride, int pad) nogil

cdef uint64_t TOP = (<uint64_t>1) << 56
cdef uint64_t MASK64 = <uint64_t>0xFFFFFFFFFFFFFFFF


def conv2d_f32(const float[:, :, ::1] x, const float[:, :, :, ::1] w,
               const float[::1] b, int stride, int pad,
               float[:, :, ::1] out):
    """Accumulate a 2-D convolution into ``out`` (must be zero-filled)."""
    cdef Py_ssize_t O = w.shape[0], I = w.shape[1]
    cdef Py_ssize_t KH = w.shape[2], KW = w.shape[3]
    cdef Py_ssize_t OH = out.shape[1], OW = out.shape[2]
    cdef Py_ssize_t co, oh, ow
    cdef float bv
    cdef float* orow
    with nogil:
        elic_conv2d_core(&x[0, 0, 0], &w[0, 0, 0, 0], &out[0, 0, 0],
                         O, I, KH, KW, x.shape[1], x.shape[2], OH, OW,
                         stride, pad)
        for co in range(O):
            bv = b[co]
            for oh in range(OH):
                orow = &out[co, oh, 0]
                for ow in range(OW):
                    orow[ow] += bv


def tconv2d_f32(const float[:, :, ::1] x, const float[:, :, :, ::1] w,
                const float[::1] b, int stride, int pad,
                float[:, :, ::1] out):
    """Accumulate a transposed 2-D convolution into ``out`` (zero-filled)."""
    cdef Py_ssize_t O = w.shape[0], I = w.shape[1]
    cdef Py_ssize_t KH = w.shape[2], KW = w.shape[3]
    cdef Py_ssize_t OH = out.shape[1], OW = out.shape[2]
    cdef Py_ssize_t co, oh, ow
    cdef float bv
    cdef float* orow
    with nogil:
        elic_tconv2d_core(&x[0, 0, 0], &w[0, 0, 0, 0], &out[0, 0, 0],
                          O, I, KH, KW, x.shape[1], x.shape[2], OH, OW,
                          stride, pad)
        for co in range(O):
            bv = b[co]
            for oh in range(OH):
                orow = &out[co, oh, 0]
                for ow in range(OW):
                    orow[ow] += bv


cdef class RangeEncoder:
    """64-bit range coder with byte-wise renormalization and carry rippling.

    Frequencies are given as (cum, freq) under a power-of-two total
    (``tot_bits``); all CDF tables in this codec use tot_bits=16, raw escape
    bytes use tot_bits=8. Single-threaded state machine: one instance per
    bitstream segment.
    """
    cdef uint64_t low
    cdef uint64_t rng
    cdef bytearray _out
    cdef bint _flushed

    def __cinit__(self):
        self.low = 0
        self.rng = MASK64
        self._out = bytearray()
        self._flushed = False

    cdef int _carry(self) except -1:
        cdef Py_ssize_t i = len(self._out) - 1
        while i >= 0 and self._out[i] == 0xFF:
            self._out[i] = 0
            i -= 1
        if i < 0:
            raise RuntimeError("range coder carry before any output byte")
        self._out[i] += 1
        return 0

    cdef int _encode(self, uint32_t cum, uint32_t freq, int tot_bits) except -1:
        cdef uint64_t r = self.rng >> tot_bits
        cdef uint64_t nlow = (self.low + r * <uint64_t>cum) & MASK64
        if nlow < self.low:
            self._carry()
        self.low = nlow
        self.rng = r * <uint64_t>freq
        while self.rng < TOP:
            self._out.append(<uint8_t>(self.low >> 56))
            self.low = (self.low << 8) & MASK64
            self.rng = self.rng << 8
        return 0

    def encode(self, cum, freq, tot_bits=16):
        if self._flushed:
            raise RuntimeError("encoder already flushed")
        if freq <= 0:
            raise ValueError("zero-frequency symbol")
        self._encode(cum, freq, tot_bits)

    def flush(self):
        """Terminate the stream, returning the final bytes (<= 8 added)."""
        if self._flushed:
            return bytes(self._out)
        low = int(self.low)
        end = low + int(self.rng)
        k = 0
        for kk in range(64, -1, -1):
            v = ((low + (1 << kk) - 1) >> kk) << kk
            if v < end:
                k = kk
                break
        v = ((low + (1 << k) - 1) >> k) << k
        if v >> 64:
            self._carry()
            v &= (1 << 64) - 1
        for i in range((64 - k + 7) // 8):
            self._out.append((v >> (56 - 8 * i)) & 0xFF)
        self._flushed = True
        return bytes(self._out)

    @property
    def nbytes(self):
        return len(self._out)


cdef class RangeDecoder:
    """Carry-less decoder twin of :class:`RangeEncoder`.

    Reads past the end of the buffer yield zero bytes, matching the
    encoder's minimal flush.
    """
    cdef uint64_t code
    cdef uint64_t rng
    cdef bytes _data
    cdef const uint8_t* _buf
    cdef Py_ssize_t _pos
    cdef Py_ssize_t _n

    def __init__(self, data):
        cdef Py_ssize_t i
        self._data = bytes(data)
        self._buf = self._data
        self._pos = 0
        self._n = len(self._data)
        self.rng = MASK64
        self.code = 0
        for i in range(8):
            self.code = (self.code << 8) | self._next_byte()

    cdef inline uint64_t _next_byte(self):
        cdef uint64_t v = 0
        if self._pos < self._n:
            v = self._buf[self._pos]
        self._pos += 1
        return v

    cdef uint32_t _target(self, int tot_bits):
        cdef uint64_t r = self.rng >> tot_bits
        cdef uint64_t t = self.code // r
        cdef uint64_t cap = ((<uint64_t>1) << tot_bits) - 1
        return <uint32_t>(t if t < cap else cap)

    cdef void _advance(self, uint32_t cum, uint32_t freq, int tot_bits):
        cdef uint64_t r = self.rng >> tot_bits
        self.code = (self.code - r * <uint64_t>cum) & MASK64
        self.rng = r * <uint64_t>freq
        while self.rng < TOP:
            self.code = ((self.code << 8) | self._next_byte()) & MASK64
            self.rng = self.rng << 8

    def target(self, tot_bits=16):
        return self._target(tot_bits)

    def advance(self, cum, freq, tot_bits=16):
        self._advance(cum, freq, tot_bits)


def encode_symbols(RangeEncoder enc, const int32_t[::1] syms,
                   const int32_t[::1] rows, const int32_t[::1] flat_cdf,
                   const int64_t[::1] offsets, const int32_t[::1] s_los,
                   const int32_t[::1] nsyms):
    """Feed quantized symbols through the coder against per-symbol CDF rows.

    ``rows[i]`` selects a CDF laid out in ``flat_cdf[offsets[r]:]`` with
    ``nsyms[r]+2`` entries (support buckets plus escape). Out-of-support
    symbols are clamped to int16 and sent as escape + 16 raw bits.
    """
    cdef Py_ssize_t i, n = syms.shape[0]
    cdef int32_t r, lo, ns, q, idx
    cdef int64_t off
    cdef uint32_t v
    for i in range(n):
        r = rows[i]
        off = offsets[r]
        lo = s_los[r]
        ns = nsyms[r]
        q = syms[i]
        idx = q - lo
        if 0 <= idx < ns:
            enc._encode(<uint32_t>flat_cdf[off + idx],
                        <uint32_t>(flat_cdf[off + idx + 1] - flat_cdf[off + idx]), 16)
        else:
            enc._encode(<uint32_t>flat_cdf[off + ns],
                        <uint32_t>(flat_cdf[off + ns + 1] - flat_cdf[off + ns]), 16)
            if q < -32768:
                q = -32768
            elif q > 32767:
                q = 32767
            v = <uint32_t>(q + 32768)
            enc._encode(v >> 8, 1, 8)
            enc._encode(v & 0xFF, 1, 8)


def decode_symbols(RangeDecoder dec, const int32_t[::1] rows,
                   const int32_t[::1] flat_cdf, const int64_t[::1] offsets,
                   const int32_t[::1] s_los, const int32_t[::1] nsyms,
                   int32_t[::1] out):
    """Inverse of :func:`encode_symbols`; fills ``out`` with symbol values."""
    cdef Py_ssize_t i, n = rows.shape[0]
    cdef Py_ssize_t lo_i, hi_i, mid
    cdef int32_t r, lo, ns
    cdef int64_t off
    cdef uint32_t target, v
    cdef const int32_t* cdf
    for i in range(n):
        r = rows[i]
        off = offsets[r]
        lo = s_los[r]
        ns = nsyms[r]
        cdf = &flat_cdf[off]
        target = dec._target(16)
        lo_i = 0
        hi_i = ns + 1
        while hi_i - lo_i > 1:
            mid = (lo_i + hi_i) >> 1
            if <uint32_t>cdf[mid] <= target:
                lo_i = mid
            else:
                hi_i = mid
        dec._advance(<uint32_t>cdf[lo_i],
                     <uint32_t>(cdf[lo_i + 1] - cdf[lo_i]), 16)
        if lo_i == ns:
            v = dec._target(8)
            dec._advance(v, 1, 8)
            v = (v << 8) | dec._target(8)
            dec._advance(v & 0xFF, 1, 8)
            out[i] = <int32_t>v - 32768
        else:
            out[i] = lo + <int32_t>lo_i
