"""Weight archives: the .elwt binary format, seeded random initialization,
and prefix views handed to the network runners.

Format (little-endian): magic "ELWT", version u8, variant u8, num_filters
u16, latent_channels u16, tensor count u32; per tensor a directory entry
(name_len u16, utf-8 name, dtype u8 = 0 for float32, rank u8, dims u32 each,
payload offset u64); payload length u64 and the raw float32 payload; CRC-32
of everything preceding as the trailing u32.
"""

import struct
import zlib
from collections.abc import Mapping

import numpy as np

from .config import VARIANT_IDS, VARIANT_NAMES, ModelConfig
from .errors import WeightStoreError

MAGIC = b"ELWT"
VERSION = 1
_DTYPE_F32 = 0


class PrefixView(Mapping):
    """Read-only live view of store entries under a name prefix."""

    def __init__(self, arrays, prefix):
        self._arrays = arrays
        self._prefix = prefix

    def __getitem__(self, key):
        return self._arrays[self._prefix + key]

    def __iter__(self):
        p = self._prefix
        return (k[len(p):] for k in self._arrays if k.startswith(p))

    def __len__(self):
        return sum(1 for _ in self)


class WeightStore:
    """Named float32 tensors plus the model header they belong to."""

    def __init__(self, config, arrays):
        self.config = config
        self.arrays = {k: np.ascontiguousarray(v, dtype=np.float32)
                       for k, v in arrays.items()}

    def __getitem__(self, name):
        return self.arrays[name]

    def view(self, prefix):
        return PrefixView(self.arrays, prefix)

    def validate(self):
        """Check the archive carries exactly the tensors the config needs."""
        expected = {name: shape for name, shape, _ in self.config.plan()}
        missing = expected.keys() - self.arrays.keys()
        if missing:
            raise WeightStoreError(f"missing tensors: {sorted(missing)[:5]}...")
        extra = self.arrays.keys() - expected.keys()
        if extra:
            raise WeightStoreError(f"unexpected tensors: {sorted(extra)[:5]}...")
        for name, shape in expected.items():
            if self.arrays[name].shape != shape:
                raise WeightStoreError(
                    f"{name}: shape {self.arrays[name].shape}, want {shape}")
        return self

    @classmethod
    def seeded(cls, config, seed):
        """Deterministic random weights: uniform(-a, a) with a = fan_in^-0.5
        for network tensors; the hyper-latent prior gets means in (-1, 1) and
        scales in (0.5, 2). PCG64 keyed by ``seed`` in plan order.
        """
        rng = np.random.Generator(np.random.PCG64(seed))
        arrays = {}
        for name, shape, fan_in in config.plan():
            if name == "prior.mean":
                arrays[name] = rng.uniform(-1.0, 1.0, shape)
            elif name == "prior.scale":
                arrays[name] = rng.uniform(0.5, 2.0, shape)
            else:
                a = float(fan_in) ** -0.5
                arrays[name] = rng.uniform(-a, a, shape)
        return cls(config, arrays)

    # ---- serialization ----------------------------------------------------

    def to_bytes(self):
        names = sorted(self.arrays)
        head = bytearray()
        head += MAGIC
        head += struct.pack("<BBHHI", VERSION, self.config.variant_id,
                            self.config.num_filters,
                            self.config.latent_channels, len(names))
        payload = bytearray()
        directory = bytearray()
        for name in names:
            arr = self.arrays[name]
            enc = name.encode()
            directory += struct.pack("<H", len(enc)) + enc
            directory += struct.pack("<BB", _DTYPE_F32, arr.ndim)
            directory += struct.pack(f"<{arr.ndim}I", *arr.shape)
            directory += struct.pack("<Q", len(payload))
            payload += arr.astype("<f4").tobytes()
        body = bytes(head) + bytes(directory) + struct.pack("<Q", len(payload)) \
            + bytes(payload)
        return body + struct.pack("<I", zlib.crc32(body))

    def save(self, path):
        data = self.to_bytes()
        with open(path, "wb") as f:
            f.write(data)
        return len(data)

    @classmethod
    def from_bytes(cls, data, validate=True):
        if len(data) < 18:
            raise WeightStoreError("weight archive too short")
        if data[:4] != MAGIC:
            raise WeightStoreError("bad weight archive magic")
        body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
        if zlib.crc32(body) != crc:
            raise WeightStoreError("weight archive checksum mismatch")
        version, variant_id, n, m, count = struct.unpack_from("<BBHHI", data, 4)
        if version != VERSION:
            raise WeightStoreError(f"unsupported weight archive version {version}")
        if variant_id not in VARIANT_NAMES:
            raise WeightStoreError(f"unknown variant id {variant_id}")
        config = ModelConfig(variant=VARIANT_NAMES[variant_id],
                             num_filters=n, latent_channels=m)
        pos = 14
        entries = []
        try:
            for _ in range(count):
                (name_len,) = struct.unpack_from("<H", data, pos)
                pos += 2
                name = data[pos:pos + name_len].decode()
                pos += name_len
                dtype, rank = struct.unpack_from("<BB", data, pos)
                pos += 2
                if dtype != _DTYPE_F32:
                    raise WeightStoreError(f"{name}: unsupported dtype {dtype}")
                shape = struct.unpack_from(f"<{rank}I", data, pos)
                pos += 4 * rank
                (offset,) = struct.unpack_from("<Q", data, pos)
                pos += 8
                entries.append((name, shape, offset))
            (payload_len,) = struct.unpack_from("<Q", data, pos)
            pos += 8
            payload = data[pos:pos + payload_len]
            if len(payload) != payload_len:
                raise WeightStoreError("truncated weight payload")
        except struct.error as e:
            raise WeightStoreError(f"malformed weight directory: {e}") from None
        arrays = {}
        for name, shape, offset in entries:
            nbytes = 4 * int(np.prod(shape, dtype=np.int64)) if shape else 4
            raw = payload[offset:offset + nbytes]
            if len(raw) != nbytes:
                raise WeightStoreError(f"{name}: payload out of range")
            arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        store = cls(config, arrays)
        return store.validate() if validate else store

    @classmethod
    def load(cls, path, validate=True):
        with open(path, "rb") as f:
            return cls.from_bytes(f.read(), validate=validate)
