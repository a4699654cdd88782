"""Readers and writers for the on-disk formats.

EVT1  text events: header ``EVT1 <w> <h> <t_begin> <t_end> <count>`` then
      ``<t> <x> <y> <p>`` per line.
IMF1  binary image: ``IMF1``, uint32 LE width, height, float32 LE row-major.
PGM   P5 (binary) or P2 (ASCII) greyscale, scaled to [0, 1] by maxval.
FLO1  binary flow: ``FLO1``, uint32 LE width, height, interleaved (u, v)
      float32 LE row-major.
DEF1  text DEF parameters: header ``DEF1 <w> <h> <k> <stride> <sigma> <L>``
      then H*W centers and (2k+1) coefficient planes, all row-major.

All writers go through a temporary file renamed on success, and text
formats always use ``.`` as decimal separator.
"""

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .def_filter import DefParams
from .events import EventStream


class FormatError(ValueError):
    """Malformed or truncated input file."""


def _atomic_write(path, data: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt_float(v):
    return repr(float(v))


# -- events -----------------------------------------------------------------

def write_events(path, stream: EventStream):
    lines = [f"EVT1 {stream.width} {stream.height} {_fmt_float(stream.t_begin)} "
             f"{_fmt_float(stream.t_end)} {len(stream)}"]
    lines += [f"{_fmt_float(t)} {x} {y} {p}"
              for t, x, y, p in zip(stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), stream.p.tolist())]
    _atomic_write(path, ("\n".join(lines) + "\n").encode("ascii"))


def read_events(path) -> EventStream:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file")
    head = lines[0].split()
    if len(head) != 6 or head[0] != "EVT1":
        raise FormatError(f"{path}:1: malformed EVT1 header")
    try:
        width, height = int(head[1]), int(head[2])
        t_begin, t_end = float(head[3]), float(head[4])
        count = int(head[5])
    except ValueError as exc:
        raise FormatError(f"{path}:1: malformed EVT1 header ({exc})") from None
    if width <= 0 or height <= 0 or count < 0 or not t_end >= t_begin:
        raise FormatError(f"{path}:1: invalid EVT1 header values")
    body = [(n, ln) for n, ln in enumerate(lines[1:], start=2) if ln.strip()]
    if len(body) != count:
        raise FormatError(f"{path}: header declares {count} events but body has {len(body)}")

    t = np.empty(count)
    x = np.empty(count, dtype=np.int64)
    y = np.empty(count, dtype=np.int64)
    p = np.empty(count, dtype=np.int64)
    prev = -np.inf
    for i, (n, ln) in enumerate(body):
        parts = ln.split()
        if len(parts) != 4:
            raise FormatError(f"{path}:{n}: expected '<t> <x> <y> <p>'")
        try:
            ti, xi, yi, pi = float(parts[0]), int(parts[1]), int(parts[2]), int(parts[3])
        except ValueError:
            raise FormatError(f"{path}:{n}: unparsable event '{ln}'") from None
        if not (0 <= xi < width and 0 <= yi < height):
            raise FormatError(f"{path}:{n}: coordinate ({xi}, {yi}) outside {width}x{height}")
        if pi not in (-1, 1):
            raise FormatError(f"{path}:{n}: polarity must be -1 or 1, got {pi}")
        if not (t_begin <= ti <= t_end):
            raise FormatError(f"{path}:{n}: timestamp {ti} outside [{t_begin}, {t_end}]")
        if ti < prev:
            raise FormatError(f"{path}:{n}: timestamps not sorted")
        prev = ti
        t[i], x[i], y[i], p[i] = ti, xi, yi, pi
    return EventStream(t, x, y, p, width, height, t_begin, t_end)


# -- images -----------------------------------------------------------------

def _read_header(data, magic, path):
    if data[:4] != magic:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {magic!r}")
    if len(data) < 12:
        raise FormatError(f"{path}: truncated header")
    width, height = struct.unpack("<II", data[4:12])
    return width, height


def write_imf(path, img):
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {img.shape}")
    H, W = img.shape
    payload = np.ascontiguousarray(img, dtype="<f4").tobytes()
    _atomic_write(path, b"IMF1" + struct.pack("<II", W, H) + payload)


def read_imf(path):
    data = Path(path).read_bytes()
    W, H = _read_header(data, b"IMF1", path)
    expected = 12 + 4 * W * H
    if len(data) != expected:
        raise FormatError(f"{path}: payload is {len(data) - 12} bytes, expected {expected - 12}")
    return np.frombuffer(data, dtype="<f4", offset=12).reshape(H, W).astype(np.float32)


def _pgm_tokens(data, path):
    # header tokens of a PGM, skipping comments; returns tokens and body offset
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FormatError(f"{path}: truncated PGM header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path):
    """Read a P5 or P2 PGM as float64 in [0, 1]."""
    data = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(data, path)
    magic = tokens[0]
    try:
        W, H, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise FormatError(f"{path}: malformed PGM header") from None
    if not 0 < maxval < 65536:
        raise FormatError(f"{path}: invalid maxval {maxval}")
    if magic == b"P5":
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        n = W * H * np.dtype(dtype).itemsize
        if len(data) - offset < n:
            raise FormatError(f"{path}: truncated PGM payload")
        vals = np.frombuffer(data, dtype=dtype, count=W * H, offset=offset)
    elif magic == b"P2":
        vals = np.array(data[offset:].split(), dtype=np.int64)
        if len(vals) != W * H:
            raise FormatError(f"{path}: expected {W * H} samples, found {len(vals)}")
    else:
        raise FormatError(f"{path}: unsupported PGM magic {magic!r}")
    return vals.reshape(H, W).astype(np.float64) / maxval


def write_pgm(path, img):
    """Write an 8-bit P5 PGM, clamping to [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    H, W = img.shape
    q = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    _atomic_write(path, f"P5\n{W} {H}\n255\n".encode("ascii") + q.tobytes())


def read_image(path):
    """Read an IMF1 or PGM image as a float64 array."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"IMF1":
        return read_imf(path).astype(np.float64)
    if magic[:2] in (b"P5", b"P2"):
        return read_pgm(path)
    raise FormatError(f"{path}: unrecognized image format")


def write_image(path, img):
    """Write IMF1, or PGM when the path ends in ``.pgm``."""
    if str(path).lower().endswith(".pgm"):
        write_pgm(path, img)
    else:
        write_imf(path, img)


# -- flows ------------------------------------------------------------------

def write_flow(path, flow):
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise ValueError(f"flow must have shape (2, H, W), got {flow.shape}")
    _, H, W = flow.shape
    payload = np.ascontiguousarray(np.moveaxis(flow, 0, -1), dtype="<f4").tobytes()
    _atomic_write(path, b"FLO1" + struct.pack("<II", W, H) + payload)


def read_flow(path):
    """Read a FLO1 file as a (2, H, W) float32 array."""
    data = Path(path).read_bytes()
    W, H = _read_header(data, b"FLO1", path)
    expected = 12 + 8 * W * H
    if len(data) != expected:
        raise FormatError(f"{path}: payload is {len(data) - 12} bytes, expected {expected - 12}")
    uv = np.frombuffer(data, dtype="<f4", offset=12).reshape(H, W, 2)
    return np.ascontiguousarray(np.moveaxis(uv, -1, 0)).astype(np.float32)


# -- DEF parameters -----------------------------------------------------------

def write_def(path, params: DefParams):
    H, W = params.shape
    head = (f"DEF1 {W} {H} {params.k} {_fmt_float(params.stride)} "
            f"{_fmt_float(params.sigma)} {_fmt_float(params.window)}")
    rows = [" ".join(_fmt_float(v) for v in row) for row in params.c]
    for plane in params.alpha:
        rows += [" ".join(_fmt_float(v) for v in row) for row in plane]
    _atomic_write(path, ("\n".join([head] + rows) + "\n").encode("ascii"))


def read_def(path) -> DefParams:
    tokens = Path(path).read_text(encoding="ascii").split()
    if len(tokens) < 7 or tokens[0] != "DEF1":
        raise FormatError(f"{path}: malformed DEF1 header")
    try:
        W, H, k = int(tokens[1]), int(tokens[2]), int(tokens[3])
        stride, sigma, window = float(tokens[4]), float(tokens[5]), float(tokens[6])
        values = np.array(tokens[7:], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed DEF1 content ({exc})") from None
    n = H * W
    if len(values) != n * (2 * k + 2):
        raise FormatError(f"{path}: expected {n * (2 * k + 2)} values, found {len(values)}")
    c = values[:n].reshape(H, W)
    alpha = values[n:].reshape(2 * k + 1, H, W)
    try:
        return DefParams(c, alpha, k=k, stride=stride, sigma=sigma, window=window)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
