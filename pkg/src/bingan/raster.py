"""Minimal portable graymap/pixmap (P5/P6) reading and writing."""

from __future__ import annotations

import numpy as np

from .errors import FormatError


def write_pnm(path, image):
    """uint8 image: H,W (-> P5) or H,W,3 (-> P6)."""
    img = np.asarray(image, dtype=np.uint8)
    if img.ndim == 2:
        header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n"
    elif img.ndim == 3 and img.shape[2] == 3:
        header = f"P6\n{img.shape[1]} {img.shape[0]}\n255\n"
    else:
        raise FormatError(f"cannot write PNM for shape {img.shape}")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(img.tobytes())
    return path


def read_pnm(path):
    """Returns uint8 array: H,W for P5, H,W,3 for P6."""
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PNM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported, got {maxval}")
    if magic == b"P5":
        n = w * h
        shape = (h, w)
    elif magic == b"P6":
        n = w * h * 3
        shape = (h, w, 3)
    else:
        raise FormatError(f"{path}: unsupported PNM magic {magic!r}")
    body = data[pos : pos + n]
    if len(body) != n:
        raise FormatError(f"{path}: truncated PNM body ({len(body)}/{n} bytes)")
    return np.frombuffer(body, dtype=np.uint8).reshape(shape)


def tile_grid(images, pad=1):
    """Tile N,C,H,W uint8 images into one H',W'[,3] grid raster."""
    imgs = np.asarray(images, dtype=np.uint8)
    n, c, h, w = imgs.shape
    cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    grid = np.zeros((rows * (h + pad) + pad, cols * (w + pad) + pad, c), dtype=np.uint8)
    for i in range(n):
        r, col = divmod(i, cols)
        y = pad + r * (h + pad)
        x = pad + col * (w + pad)
        grid[y : y + h, x : x + w] = imgs[i].transpose(1, 2, 0)
    return grid[:, :, 0] if c == 1 else grid
