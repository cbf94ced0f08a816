"""Binary PGM (P5) / PPM (P6) reading and writing, 8-bit samples only."""

import numpy as np

from .errors import MalformedHeaderError, TruncatedDataError, UnsupportedFormatError

_WHITESPACE = b" \t\n\r\x0b\x0c"
LUMA = (0.299, 0.587, 0.114)


def _header_token(data, pos):
    """Next header token starting at ``pos``; skips whitespace and ``#`` comments."""
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch in _WHITESPACE and ch:
            pos += 1
        elif ch == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    if pos >= n:
        raise MalformedHeaderError("unexpected end of header", pos)
    start = pos
    while pos < n and data[pos:pos + 1] not in _WHITESPACE and data[pos:pos + 1] != b"#":
        pos += 1
    return data[start:pos], start, pos


def _header_int(data, pos, what):
    token, start, end = _header_token(data, pos)
    if not token.isdigit():
        raise MalformedHeaderError(f"{what} is not a decimal integer: {token[:16]!r}", start)
    value = int(token)
    if value < 1:
        raise MalformedHeaderError(f"{what} must be positive, got {value}", start)
    return value, end


def parse_netpbm(data):
    """Decode P5/P6 bytes into a ``(C, H, W)`` float64 array scaled to [0, 1]."""
    data = bytes(data)
    magic = data[:2]
    if len(data) < 2:
        raise MalformedHeaderError("file too short for a magic number", 0)
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormatError(f"unsupported format {magic!r}; only binary P5/P6 are read", 0)
    channels = 1 if magic == b"P5" else 3
    if len(data) == 2 or data[2:3] not in _WHITESPACE:
        raise MalformedHeaderError("magic number must be followed by whitespace", 2)
    width, pos = _header_int(data, 2, "width")
    height, pos = _header_int(data, pos, "height")
    maxval, pos = _header_int(data, pos, "maxval")
    if maxval > 255:
        raise UnsupportedFormatError(f"maxval {maxval} needs 16-bit samples, which are not supported", pos)
    if pos >= len(data) or data[pos:pos + 1] not in _WHITESPACE:
        raise MalformedHeaderError("maxval must be followed by a single whitespace byte", pos)
    pos += 1
    need = width * height * channels
    have = len(data) - pos
    if have < need:
        raise TruncatedDataError(f"pixel data truncated: need {need} bytes, found {have}", pos + have)
    pixels = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    if np.any(pixels > maxval):
        bad = int(np.argmax(pixels > maxval))
        raise MalformedHeaderError(f"sample {pixels[bad]} exceeds maxval {maxval}", pos + bad)
    img = pixels.astype(np.float64).reshape(height, width, channels).transpose(2, 0, 1) / maxval
    return np.ascontiguousarray(img)


def read_netpbm(path):
    with open(path, "rb") as fh:
        return parse_netpbm(fh.read())


def to_grayscale(image):
    """Luma-weighted grayscale of a 3-channel image; 1-channel input is returned as is."""
    if image.shape[0] == 1:
        return image
    return np.tensordot(np.asarray(LUMA), image, axes=1)[None]


def encode_netpbm(image):
    """Encode a ``(1|3, H, W)`` image in [0, 1] as P5/P6 with maxval 255."""
    image = np.asarray(image, dtype=np.float64)
    c, h, w = image.shape
    if c not in (1, 3):
        raise ValueError(f"cannot encode {c}-channel image")
    samples = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    magic = b"P5" if c == 1 else b"P6"
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + samples.tobytes()


def write_netpbm(path, image):
    with open(path, "wb") as fh:
        fh.write(encode_netpbm(image))
