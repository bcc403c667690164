"""Container framing: header fields, lazy segments, truncation semantics,
byte accounting."""

import struct

import numpy as np
import pytest

from elic import bitstream
from elic.bitstream import Bitstream, pack
from elic.errors import CorruptBitstream, InsufficientData, UnsupportedFormat


def sample_stream():
    segs = [bytes([i]) * (3 + i) for i in range(10)]
    return pack(1, 640, 480, b"zz", segs), segs


class TestPackParse:
    def test_header_fields(self):
        data, _ = sample_stream()
        bs = Bitstream(data)
        assert bs.variant_id == 1
        assert (bs.width, bs.height) == (640, 480)
        assert bs.segments_present == 11
        assert bs.groups_present == 5

    def test_byte_accounting(self):
        data, segs = sample_stream()
        total = bitstream.HEADER_LEN + (4 + 2) + sum(4 + len(s) for s in segs)
        assert len(data) == total
        bs = Bitstream(data)
        assert bs.segment_length(0) == 2
        assert [bs.segment_length(1 + i) for i in range(10)] == \
            [len(s) for s in segs]

    def test_segment_payloads_and_log(self):
        data, segs = sample_stream()
        bs = Bitstream(data)
        assert bs.z_segment() == b"zz"
        assert bs.pass_segment(3) == segs[3]
        assert bs.access_log == [0, 4]

    def test_bad_magic(self):
        with pytest.raises(UnsupportedFormat):
            Bitstream(b"JUNK" + bytes(20))

    def test_bad_version(self):
        data, _ = sample_stream()
        bad = bytearray(data)
        bad[4] = 99
        with pytest.raises(UnsupportedFormat):
            Bitstream(bytes(bad))

    def test_short_header(self):
        with pytest.raises(UnsupportedFormat):
            Bitstream(b"ELIC\x01")

    def test_trailing_garbage(self):
        data, _ = sample_stream()
        with pytest.raises(CorruptBitstream):
            Bitstream(data + b"x")

    def test_truncated_payload(self):
        data, _ = sample_stream()
        with pytest.raises(CorruptBitstream):
            Bitstream(data[:-1])

    def test_truncated_length_prefix(self):
        data, _ = sample_stream()
        # cut inside the final length prefix
        last_seg_len = 3 + 9
        cut = len(data) - last_seg_len - 2
        with pytest.raises(CorruptBitstream):
            Bitstream(data[:cut])


class TestTruncationBoundaries:
    def test_clean_prefixes(self):
        data, segs = sample_stream()
        full = Bitstream(data)
        for k in range(1, 6):
            prefix = full.truncated_to_groups(k)
            bs = Bitstream(prefix)
            assert bs.groups_present == k
            assert bs.segment_length(2 * k) == len(segs[2 * k - 1])
            if k < 5:
                with pytest.raises(InsufficientData):
                    bs.segment(2 * k + 1)

    def test_missing_segment_is_insufficient(self):
        data, _ = sample_stream()
        prefix = Bitstream(data).truncated_to_groups(2)
        bs = Bitstream(prefix)
        with pytest.raises(InsufficientData):
            bs.pass_segments(10)

    def test_wrong_pass_count_rejected_at_pack(self):
        with pytest.raises(CorruptBitstream):
            pack(0, 1, 1, b"", [b""] * 9)
