"""Kernel backend selection: compiled extension if available, numpy fallback
otherwise. Set ELIC_BACKEND=python or ELIC_BACKEND=compiled to force a choice
(the latter raises if the extension was not built)."""

import os

from . import _fallback

_choice = os.environ.get("ELIC_BACKEND", "auto")

if _choice == "python":
    _impl = _fallback
elif _choice == "compiled":
    from . import _kernels as _impl
elif _choice == "auto":
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _fallback
else:
    raise RuntimeError(f"unknown ELIC_BACKEND={_choice!r}")

conv2d_f32 = _impl.conv2d_f32
tconv2d_f32 = _impl.tconv2d_f32
RangeEncoder = _impl.RangeEncoder
RangeDecoder = _impl.RangeDecoder
encode_symbols = _impl.encode_symbols
decode_symbols = _impl.decode_symbols


def backend_name():
    return "python" if _impl is _fallback else "compiled"
