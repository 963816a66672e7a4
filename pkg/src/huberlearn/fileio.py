"""Image files, landscape CSV, JSON reports, flat config files and fixtures."""

from __future__ import annotations

import json
import math
import struct
import zlib
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .grid import as_image

_PNG_SIG = b"\x89PNG\r\n\x1a\n"


class ImageFormatError(ValueError):
    """Malformed or unsupported image file."""


# -- PGM ------------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int, start: int):
    """Read ``count`` whitespace-separated ASCII tokens, skipping comments."""
    tokens, pos, n = [], start, len(data)
    while len(tokens) < count:
        while pos < n and (data[pos : pos + 1].isspace() or data[pos : pos + 1] == b"#"):
            if data[pos : pos + 1] == b"#":
                while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise ImageFormatError(f"unexpected end of PGM data at byte offset {pos}")
        begin = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        tok = data[begin:pos]
        if not tok.isdigit():
            raise ImageFormatError(f"invalid PGM token {tok[:16]!r} at byte offset {begin}")
        tokens.append((int(tok), begin))
    return tokens, pos


def _load_pgm(data: bytes) -> np.ndarray:
    magic = data[:2]
    header, pos = _pgm_tokens(data, 3, 2)
    (w, ow), (h, oh), (maxval, om) = header
    if w == 0 or h == 0:
        raise ImageFormatError(f"PGM has zero size at byte offset {ow if w == 0 else oh}")
    if not 0 < maxval < 65536:
        raise ImageFormatError(f"PGM maxval {maxval} out of range at byte offset {om}")
    if magic == b"P2":
        vals, _ = _pgm_tokens(data, w * h, pos)
        arr = np.array([v for v, _ in vals], dtype=np.float64)
        for v, off in vals:
            if v > maxval:
                raise ImageFormatError(f"PGM sample {v} exceeds maxval at byte offset {off}")
    else:
        pos += 1  # single whitespace after maxval
        width = 1 if maxval < 256 else 2
        need = w * h * width
        if len(data) - pos < need:
            raise ImageFormatError(
                f"PGM raster truncated: expected {need} bytes from byte offset {pos}, got {len(data) - pos}"
            )
        dt = np.dtype(np.uint8) if width == 1 else np.dtype(">u2")
        arr = np.frombuffer(data, dtype=dt, count=w * h, offset=pos).astype(np.float64)
        if arr.max(initial=0) > maxval:
            bad = int(np.argmax(arr > maxval))
            raise ImageFormatError(f"PGM sample exceeds maxval at byte offset {pos + bad * width}")
    return (arr / maxval).reshape(h, w)


# -- PNG ------------------------------------------------------------------

def _check_png(data: bytes):
    """Walk the chunk list, verifying lengths and CRCs; return IHDR fields."""
    pos = len(_PNG_SIG)
    ihdr = None
    seen_end = False
    while pos < len(data):
        if pos + 8 > len(data):
            raise ImageFormatError(f"truncated PNG chunk header at byte offset {pos}")
        length, ctype = struct.unpack(">I4s", data[pos : pos + 8])
        name = ctype.decode("latin-1")
        end = pos + 12 + length
        if end > len(data):
            raise ImageFormatError(f"PNG chunk {name} at byte offset {pos} runs past end of file")
        body = data[pos + 8 : pos + 8 + length]
        (crc,) = struct.unpack(">I", data[pos + 8 + length : end])
        if zlib.crc32(ctype + body) & 0xFFFFFFFF != crc:
            raise ImageFormatError(f"PNG chunk {name} at byte offset {pos} has a bad CRC")
        if ihdr is None:
            if name != "IHDR" or length != 13:
                raise ImageFormatError(f"PNG must start with IHDR, found chunk {name} at byte offset {pos}")
            ihdr = struct.unpack(">IIBBBBB", body)
        if name == "IEND":
            seen_end = True
            break
        pos = end
    if ihdr is None or not seen_end:
        raise ImageFormatError("PNG is missing its IHDR or IEND chunk")
    return ihdr


def _load_png(data: bytes, path) -> np.ndarray:
    w, h, depth, color, *_ = _check_png(data)
    if color != 0:
        raise ImageFormatError(
            f"{path}: PNG colour type {color} is not grayscale; convert to 8- or 16-bit grayscale first"
        )
    if depth not in (8, 16):
        raise ImageFormatError(f"{path}: unsupported PNG bit depth {depth} (need 8 or 16)")
    with PILImage.open(path) as im:
        arr = np.asarray(im, dtype=np.float64)
    if arr.shape != (h, w):
        raise ImageFormatError(f"{path}: decoded shape {arr.shape} disagrees with IHDR {(h, w)}")
    return arr / (255.0 if depth == 8 else 65535.0)


def load_image(path) -> np.ndarray:
    """Load a grayscale PGM (P2/P5) or 8/16-bit PNG scaled to ``[0, 1]``."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image not found: {path}")
    data = path.read_bytes()
    if data[:2] in (b"P2", b"P5"):
        return _load_pgm(data)
    if data[:8] == _PNG_SIG:
        return _load_png(data, path)
    raise ImageFormatError(f"{path}: unrecognized image format at byte offset 0")


def save_image(img, path) -> None:
    """Clamp to ``[0, 1]`` and write a 16-bit grayscale PNG."""
    img = as_image(img, "img")
    q = np.round(np.clip(img, 0.0, 1.0) * 65535.0).astype(np.uint16)
    try:
        PILImage.fromarray(q).save(path, format="PNG")
    except OSError as exc:
        raise OSError(f"cannot write image {path}: {exc}") from exc


# -- CSV / JSON -----------------------------------------------------------

def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def landscape_csv_text(ls) -> str:
    names = ["alpha1"] + (["alpha2"] if ls.grid.ndim == 2 else [])
    lines = [",".join(names + ["cost", "psnr", "iterations", "rel_gap", "converged"])]
    for point, cost, ps, it, gap, ok in ls.rows():
        fields = [_fmt(a) for a in point] + [_fmt(cost), _fmt(ps), str(it), _fmt(gap), "true" if ok else "false"]
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def save_landscape_csv(ls, path) -> None:
    _write_text(path, landscape_csv_text(ls))


def _to_plain(obj):
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    if isinstance(obj, dict):
        return {str(k): _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def report_json_text(report) -> str:
    return json.dumps(_to_plain(report), sort_keys=True, indent=2) + "\n"


def save_report_json(report, path) -> None:
    """Write a report (object with ``to_dict`` or a plain dict) as sorted JSON."""
    _write_text(path, report_json_text(report))


# -- config ---------------------------------------------------------------

def load_config(path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


# -- fixture --------------------------------------------------------------

def make_fixture(n: int = 64, sigma: float = 0.1, seed: int = 0):
    """Piecewise-constant ground truth and its Gaussian-noised observation.

    Noise is drawn from ``numpy.random.default_rng(seed)`` (PCG64).  Returns
    ``(f, f0)``.
    """
    if n < 4:
        raise ValueError("fixture size must be at least 4")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    yy, xx = np.mgrid[0:n, 0:n] / n
    f0 = np.full((n, n), 0.2)
    f0[(xx > 0.15) & (xx < 0.55) & (yy > 0.2) & (yy < 0.7)] = 0.8
    f0[(xx - 0.7) ** 2 + (yy - 0.35) ** 2 < 0.15**2] = 0.5
    f0[(yy > 0.78) & (xx > 0.3) & (xx < 0.9)] = 1.0
    rng = np.random.default_rng(seed)
    f = f0 + sigma * rng.standard_normal((n, n))
    return f, f0
