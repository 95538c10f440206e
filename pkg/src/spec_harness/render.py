"""Deterministic raster plots of flux vs wavelength.

Fixed 960x480 canvas, white background, single polyline, linear axes, the
optional label drawn as a title. Everything here is integer pixel math over
a numpy buffer plus a minimal PNG writer (IHDR/IDAT/IEND only, filter 0),
so identical inputs produce identical bytes on any platform. No timestamps,
no ancillary chunks, no system fonts.
"""

from __future__ import annotations

import struct
import zlib
from typing import Optional

import numpy as np

from ._font import GLYPH_H, GLYPH_W, glyph, text_width
from .errors import EmptySlice, EmptyRange
from .spectrum import Spectrum, WavelengthRange, slice_spectrum

WIDTH = 960
HEIGHT = 480

MARGIN_LEFT = 84
MARGIN_RIGHT = 24
MARGIN_TOP = 46
MARGIN_BOTTOM = 58

WHITE = (255, 255, 255)
BLACK = (0, 0, 0)
LINE_COLOR = (54, 100, 168)

TICK_LEN = 5
TEXT_SCALE = 2
ZLIB_LEVEL = 6


def encode_png(pixels: np.ndarray) -> bytes:
    """Encode an (H, W, 3) uint8 array as a minimal, reproducible PNG."""
    h, w, _ = pixels.shape
    raw = b"".join(b"\x00" + pixels[y].tobytes() for y in range(h))
    idat = zlib.compress(raw, ZLIB_LEVEL)

    def chunk(tag: bytes, data: bytes) -> bytes:
        return (
            struct.pack(">I", len(data))
            + tag
            + data
            + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)
        )

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", idat) + chunk(b"IEND", b"")


def decode_png_size(png: bytes) -> tuple[int, int]:
    """(width, height) from the IHDR chunk."""
    if png[:8] != b"\x89PNG\r\n\x1a\n" or png[12:16] != b"IHDR":
        raise ValueError("not a PNG")
    w, h = struct.unpack(">II", png[16:24])
    return w, h


def _draw_text(img: np.ndarray, x: int, y: int, s: str, scale: int = 1, color=BLACK) -> None:
    cx = x
    for ch in s:
        g = glyph(ch)
        mask = np.kron(g, np.ones((scale, scale), dtype=bool))
        _blit(img, cx, y, mask, color)
        cx += (GLYPH_W + 1) * scale


def _draw_text_vertical(img: np.ndarray, x: int, y: int, s: str, scale: int = 1, color=BLACK) -> None:
    # rotated 90 degrees counter-clockwise, reading bottom-to-top
    cy = y
    for ch in s:
        g = np.rot90(glyph(ch), 1)
        mask = np.kron(g, np.ones((scale, scale), dtype=bool))
        cy -= (GLYPH_W + 1) * scale
        _blit(img, x, cy, mask, color)


def _blit(img: np.ndarray, x: int, y: int, mask: np.ndarray, color) -> None:
    h, w = mask.shape
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, img.shape[1]), min(y + h, img.shape[0])
    if x0 >= x1 or y0 >= y1:
        return
    sub = mask[y0 - y : y1 - y, x0 - x : x1 - x]
    region = img[y0:y1, x0:x1]
    region[sub] = color


def _draw_hline(img: np.ndarray, x0: int, x1: int, y: int, color) -> None:
    if 0 <= y < img.shape[0]:
        img[y, max(x0, 0) : min(x1 + 1, img.shape[1])] = color


def _draw_vline(img: np.ndarray, x: int, y0: int, y1: int, color) -> None:
    if 0 <= x < img.shape[1]:
        img[max(y0, 0) : min(y1 + 1, img.shape[0]), x] = color


def _draw_segment(img: np.ndarray, x0: int, y0: int, x1: int, y1: int, color) -> None:
    """Bresenham line, endpoints inclusive."""
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        if 0 <= x < img.shape[1] and 0 <= y < img.shape[0]:
            img[y, x] = color
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


def nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    """Round tick positions inside [lo, hi] at a 1/2/2.5/5 step."""
    if not lo < hi:
        return [lo]
    span = hi - lo
    raw = span / max(target, 1)
    mag = 10.0 ** np.floor(np.log10(raw))
    step = 10 * mag
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = np.ceil(lo / step) * step
    ticks = []
    t = first
    k = 0
    while t <= hi + step * 1e-9:
        ticks.append(float(t))
        k += 1
        t = first + k * step
    return ticks


def _fmt(v: float) -> str:
    if v == int(v) and abs(v) < 1e7:
        return str(int(v))
    return f"{v:.6g}"


def render_view(
    spec: Spectrum,
    rng: Optional[WavelengthRange] = None,
    label: Optional[str] = None,
) -> tuple[bytes, int, WavelengthRange]:
    """Render the samples of `spec` inside `rng` (full extent when None).

    Returns (png_bytes, sample_count, range_rendered). Raises EmptyRange when
    no samples fall inside the requested range.
    """
    if rng is None:
        rng = spec.full_range
        visible = spec
    else:
        try:
            visible = slice_spectrum(spec, rng)
        except EmptySlice as exc:
            raise EmptyRange(str(exc)) from exc

    wl = visible.wavelength
    fl = visible.flux
    n = len(wl)

    img = np.empty((HEIGHT, WIDTH, 3), dtype=np.uint8)
    img[:] = WHITE

    px0, px1 = MARGIN_LEFT, WIDTH - 1 - MARGIN_RIGHT
    py0, py1 = MARGIN_TOP, HEIGHT - 1 - MARGIN_BOTTOM

    xlo, xhi = rng.lambda_min, rng.lambda_max
    ylo, yhi = float(np.min(fl)), float(np.max(fl))
    if ylo == yhi:
        pad = max(abs(ylo) * 0.1, 1.0)
    else:
        pad = (yhi - ylo) * 0.05
    ylo -= pad
    yhi += pad

    def to_px(w: float) -> int:
        return px0 + int((w - xlo) / (xhi - xlo) * (px1 - px0) + 0.5)

    def to_py(f: float) -> int:
        return py1 - int((f - ylo) / (yhi - ylo) * (py1 - py0) + 0.5)

    # plot frame
    _draw_hline(img, px0, px1, py0, BLACK)
    _draw_hline(img, px0, px1, py1, BLACK)
    _draw_vline(img, px0, py0, py1, BLACK)
    _draw_vline(img, px1, py0, py1, BLACK)

    for t in nice_ticks(xlo, xhi):
        x = to_px(t)
        _draw_vline(img, x, py1 + 1, py1 + TICK_LEN, BLACK)
        s = _fmt(t)
        _draw_text(img, x - text_width(s, TEXT_SCALE) // 2, py1 + TICK_LEN + 4, s, TEXT_SCALE)

    for t in nice_ticks(ylo, yhi, target=5):
        y = to_py(t)
        _draw_hline(img, px0 - TICK_LEN, px0 - 1, y, BLACK)
        s = _fmt(t)
        _draw_text(
            img,
            px0 - TICK_LEN - 4 - text_width(s, TEXT_SCALE),
            y - (GLYPH_H * TEXT_SCALE) // 2,
            s,
            TEXT_SCALE,
        )

    caption = "Wavelength (Angstrom)"
    _draw_text(
        img,
        (px0 + px1 - text_width(caption, TEXT_SCALE)) // 2,
        HEIGHT - GLYPH_H * TEXT_SCALE - 6,
        caption,
        TEXT_SCALE,
    )
    _draw_text_vertical(
        img,
        6,
        (py0 + py1 + text_width("Flux", TEXT_SCALE)) // 2,
        "Flux",
        TEXT_SCALE,
    )

    if label:
        _draw_text(
            img,
            (WIDTH - text_width(label, TEXT_SCALE)) // 2,
            (MARGIN_TOP - GLYPH_H * TEXT_SCALE) // 2,
            label,
            TEXT_SCALE,
        )

    if n == 1:
        x, y = to_px(float(wl[0])), to_py(float(fl[0]))
        img[max(y - 1, 0) : y + 2, max(x - 1, 0) : x + 2] = LINE_COLOR
    else:
        xs = [to_px(float(w)) for w in wl]
        ys = [to_py(float(f)) for f in fl]
        for i in range(n - 1):
            _draw_segment(img, xs[i], ys[i], xs[i + 1], ys[i + 1], LINE_COLOR)

    return encode_png(img), n, WavelengthRange(xlo, xhi)
