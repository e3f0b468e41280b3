"""Deterministic raster helpers: thick polylines, discs, digit glyphs, PNG i/o.

Everything draws directly into numpy uint8 arrays with integer arithmetic so
repeated renders are bit-identical; no font files or AA are involved.
"""

import io

import numpy as np
from PIL import Image

# 5x7 digit bitmaps, drawn at integer scale
_DIGITS = {
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    "3": ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    "5": ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}


def draw_polyline(img: np.ndarray, points: np.ndarray, color, width: int = 3) -> None:
    """Stamp a fixed-width polyline by sampling each segment at half-pixel steps."""
    h, w = img.shape[:2]
    pts = np.asarray(points, dtype=float)
    if len(pts) == 0:
        return
    half = width // 2
    offs = [(dy, dx) for dy in range(-half, half + 1) for dx in range(-half, half + 1)]
    samples = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(int(np.ceil(np.linalg.norm(b - a) / 0.5)), 1)
        ts = np.arange(1, n + 1) / n
        samples.append(a[None, :] + ts[:, None] * (b - a)[None, :])
    allpts = np.vstack([s.reshape(-1, 2) for s in samples])
    us = np.rint(allpts[:, 0]).astype(int)
    vs = np.rint(allpts[:, 1]).astype(int)
    for dy, dx in offs:
        uu = us + dx
        vv = vs + dy
        ok = (uu >= 0) & (uu < w) & (vv >= 0) & (vv < h)
        img[vv[ok], uu[ok]] = color


def draw_disc(img: np.ndarray, center, radius: int, color) -> None:
    h, w = img.shape[:2]
    cu = int(round(center[0]))
    cv = int(round(center[1]))
    v0, v1 = max(cv - radius, 0), min(cv + radius + 1, h)
    u0, u1 = max(cu - radius, 0), min(cu + radius + 1, w)
    if v0 >= v1 or u0 >= u1:
        return
    vs, us = np.mgrid[v0:v1, u0:u1]
    mask = (vs - cv) ** 2 + (us - cu) ** 2 <= radius * radius
    img[v0:v1, u0:u1][mask] = color


def glyph_size(text: str, scale: int = 2) -> tuple[int, int]:
    width = len(text) * 5 * scale + (len(text) - 1) * scale
    return width, 7 * scale


def draw_number(img: np.ndarray, center, number: int, color, scale: int = 2) -> None:
    """Stamp the decimal digits of ``number`` centered on ``center``."""
    text = str(number)
    gw, gh = glyph_size(text, scale)
    left = int(round(center[0])) - gw // 2
    top = int(round(center[1])) - gh // 2
    h, w = img.shape[:2]
    x = left
    for ch in text:
        rows = _DIGITS[ch]
        for r, rowbits in enumerate(rows):
            for c, bit in enumerate(rowbits):
                if bit != "1":
                    continue
                v0 = top + r * scale
                u0 = x + c * scale
                for dv in range(scale):
                    for du in range(scale):
                        v, u = v0 + dv, u0 + du
                        if 0 <= v < h and 0 <= u < w:
                            img[v, u] = color
        x += 6 * scale


def png_bytes(img: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    return buf.getvalue()


def save_png(img: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(png_bytes(img))


def load_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"))
