"""Exception hierarchy shared across the codec."""


class CodecError(Exception):
    """Base class for all codec failures."""


class InvalidArgument(CodecError):
    """Shape/value preconditions violated by the caller."""


class UnsupportedFormat(CodecError):
    """Unknown magic, version, or variant in a container."""


class CorruptInput(CodecError):
    """An input file that cannot be read or parsed."""


class CorruptBitstream(CorruptInput):
    """Container framing or coder state inconsistent with the stream."""


class InsufficientData(CodecError):
    """Stream truncated before the segments a decode mode requires."""


class WeightStoreError(CodecError):
    """Weight archive missing, malformed, or mismatching the model config."""
