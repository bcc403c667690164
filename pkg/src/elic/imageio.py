"""8-bit image file I/O: PNG/PPM (and whatever else Pillow reads) to and from
the codec's float32 (3, H, W) [0, 1] tensors."""

import numpy as np
from PIL import Image

from .errors import CorruptInput, InvalidArgument


def load_image(path):
    try:
        with Image.open(path) as im:
            rgb = im.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float32)
    except (OSError, SyntaxError) as e:
        raise CorruptInput(f"cannot read image {path}: {e}") from None
    return np.ascontiguousarray(arr.transpose(2, 0, 1)) / np.float32(255.0)


def save_image(path, tensor):
    t = np.asarray(tensor, dtype=np.float32)
    if t.ndim != 3 or t.shape[0] != 3:
        raise InvalidArgument(f"expected (3, H, W) tensor, got {t.shape}")
    u8 = np.clip(np.rint(t * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(u8.transpose(1, 2, 0), mode="RGB").save(path)


def save_gray(path, u8_plane):
    arr = np.asarray(u8_plane, dtype=np.uint8)
    Image.fromarray(arr, mode="L").save(path)
