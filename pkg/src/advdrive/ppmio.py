"""Binary PPM (P6, 8-bit) read/write for frames and patch textures."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def write_ppm(path: str | Path, img: np.ndarray) -> None:
    """img: (H, W, 3) floats in [0, 1]; quantized to 8 bits."""
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3), got {img.shape}")
    h, w = img.shape[:2]
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    """Returns (H, W, 3) float64 in [0, 1]."""
    with open(path, "rb") as f:
        raw = f.read()
    # header: magic, width, height, maxval, separated by whitespace/comments
    fields: list[bytes] = []
    i = 0
    while len(fields) < 4:
        while i < len(raw) and raw[i : i + 1].isspace():
            i += 1
        if i < len(raw) and raw[i : i + 1] == b"#":
            while i < len(raw) and raw[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(raw) and not raw[j : j + 1].isspace():
            j += 1
        if j == i:
            raise ValueError("truncated PPM header")
        fields.append(raw[i:j])
        i = j
    if fields[0] != b"P6":
        raise ValueError(f"not a P6 PPM: magic {fields[0]!r}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    i += 1  # single whitespace after maxval
    body = raw[i : i + w * h * 3]
    if len(body) != w * h * 3:
        raise ValueError("truncated PPM body")
    arr = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
    return arr.astype(np.float64) / 255.0
