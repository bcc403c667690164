"""ELIC image codec: space-channel contextual adaptive entropy coding with
deterministic CPU inference, a progressive container, and fast thumbnail
decoding."""

from ._backend import backend_name
from .codec import (Codec, CompactionReport, EncodeStats, analyze_compaction,
                    decode_image, decode_progressive, decode_thumbnail,
                    encode_image, psnr)
from .config import ModelConfig
from .entropy import EntropyParams, FactorizedPrior
from .errors import (CodecError, CorruptBitstream, CorruptInput,
                     InsufficientData, InvalidArgument, UnsupportedFormat,
                     WeightStoreError)
from .scctx import GroupingScheme, make_grouping, make_schedule
from .weights import WeightStore

__version__ = "0.1.0"

__all__ = [
    "Codec", "CompactionReport", "EncodeStats", "ModelConfig", "WeightStore",
    "EntropyParams", "FactorizedPrior", "GroupingScheme",
    "encode_image", "decode_image", "decode_thumbnail", "decode_progressive",
    "analyze_compaction", "psnr", "make_grouping", "make_schedule",
    "backend_name", "CodecError", "CorruptBitstream", "CorruptInput",
    "InsufficientData", "InvalidArgument", "UnsupportedFormat",
    "WeightStoreError", "__version__",
]
