"""The .elic container: a 14-byte header followed by 11 length-prefixed
segments (hyper-latent stream, then two pass streams per channel group).

Layout, all integers little-endian:

    magic "ELIC" | version u8 | variant u8 | width u32 | height u32
    (u32 length + bytes) x 11

Width/height are the original pre-padding image dims. The container may stop
cleanly after any segment boundary, which is what makes thumbnail and
progressive decoding work on truncated prefixes: decoding segments 1..2k
(plus the hyper segment) reconstructs chunks 1..k exactly. Segment payloads
are parsed lazily and every access is logged, so tests can prove a decode
mode never touched later groups.
"""

import struct

from .errors import CorruptBitstream, InsufficientData, UnsupportedFormat

MAGIC = b"ELIC"
VERSION = 1
NUM_PASS_SEGMENTS = 10
NUM_SEGMENTS = 1 + NUM_PASS_SEGMENTS
HEADER_LEN = 4 + 1 + 1 + 4 + 4


def pack(variant_id, width, height, z_segment, pass_segments):
    if len(pass_segments) != NUM_PASS_SEGMENTS:
        raise CorruptBitstream(
            f"expected {NUM_PASS_SEGMENTS} pass segments, got {len(pass_segments)}")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<BBII", VERSION, variant_id, width, height)
    for seg in [z_segment, *pass_segments]:
        out += struct.pack("<I", len(seg))
        out += seg
    return bytes(out)


class Bitstream:
    """Parsed container with lazy, access-logged segment payloads."""

    def __init__(self, data):
        data = bytes(data)
        if len(data) < HEADER_LEN:
            raise UnsupportedFormat("stream shorter than header")
        if data[:4] != MAGIC:
            raise UnsupportedFormat("bad magic")
        version, variant_id, width, height = struct.unpack_from("<BBII", data, 4)
        if version != VERSION:
            raise UnsupportedFormat(f"unsupported version {version}")
        self.variant_id = variant_id
        self.width = width
        self.height = height
        self._data = data
        self._spans = []
        self.access_log = []
        pos = HEADER_LEN
        for i in range(NUM_SEGMENTS):
            if pos == len(data):
                self._spans.append(None)   # clean truncation boundary
                continue
            if pos + 4 > len(data):
                raise CorruptBitstream(f"segment {i}: truncated length prefix")
            (length,) = struct.unpack_from("<I", data, pos)
            pos += 4
            if pos + length > len(data):
                raise CorruptBitstream(f"segment {i}: truncated payload")
            self._spans.append((pos, length))
            pos += length
        if pos != len(data):
            raise CorruptBitstream(f"{len(data) - pos} trailing bytes")

    @property
    def segments_present(self):
        return sum(1 for s in self._spans if s is not None)

    @property
    def groups_present(self):
        """Number of complete channel groups in this (possibly truncated)
        container."""
        if self._spans[0] is None:
            return 0
        k = 0
        for g in range(NUM_PASS_SEGMENTS // 2):
            if self._spans[1 + 2 * g] is None or self._spans[2 + 2 * g] is None:
                break
            k += 1
        return k

    def segment_length(self, i):
        span = self._spans[i]
        return None if span is None else span[1]

    def segment(self, i):
        """Payload of segment i (0 = hyper stream, 1.. = pass streams);
        records the access and raises if the stream was truncated before it."""
        span = self._spans[i]
        if span is None:
            raise InsufficientData(f"segment {i} not present in stream")
        self.access_log.append(i)
        pos, length = span
        return self._data[pos:pos + length]

    def z_segment(self):
        return self.segment(0)

    def pass_segment(self, i):
        return self.segment(1 + i)

    def pass_segments(self, count=NUM_PASS_SEGMENTS):
        return [self.pass_segment(i) for i in range(count)]

    def truncated_to_groups(self, k):
        """Byte-exact prefix of the container ending at group k's boundary."""
        if not 0 <= k <= NUM_PASS_SEGMENTS // 2:
            raise InsufficientData(f"group count {k} out of range")
        last = 2 * k              # index of the final included segment
        span = self._spans[last]
        if span is None:
            raise InsufficientData(f"stream already lacks group {k}")
        pos, length = span
        return self._data[:pos + length]
