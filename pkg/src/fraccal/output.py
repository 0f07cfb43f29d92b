"""Deterministic CSV, JSON and SVG emission with atomic writes."""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path
from typing import Mapping, Sequence

__all__ = ["atomic_write", "format_number", "write_csv", "write_json", "svg_line_chart"]


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        os.fchmod(fd, 0o644)  # mkstemp creates 0600
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_number(v) -> str:
    """Round-trip-exact text for a real (17 significant digits) or an integer."""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def write_csv(path, columns: Mapping[str, Sequence]) -> None:
    names = list(columns)
    n = {len(columns[k]) for k in names}
    if len(n) > 1:
        raise ValueError(f"columns have different lengths: {sorted(n)}")
    rows = [",".join(names)]
    for i in range(n.pop() if n else 0):
        rows.append(",".join(format_number(_scalar(columns[k][i])) for k in names))
    atomic_write(path, "\n".join(rows) + "\n")


def _scalar(v):
    if hasattr(v, "item"):
        return v.item()
    return v


def write_json(path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def svg_line_chart(x, y, *, title: str, xlabel: str, ylabel: str,
                   logy: bool = False, width: int = 640, height: int = 400) -> str:
    """Minimal line chart: frame, tick labels, one polyline with markers."""
    pts = [(float(a), float(b)) for a, b in zip(x, y)]
    if logy:
        pts = [(a, math.log10(b)) for a, b in pts if b > 0]
    pts = [(a, b) for a, b in pts if math.isfinite(a) and math.isfinite(b)]
    ml, mr, mt, mb = 80, 20, 40, 60
    pw, ph = width - ml - mr, height - mt - mb
    if pts:
        xs, ys = zip(*pts)
        x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def px(a):
        return ml + (a - x0) / (x1 - x0) * pw

    def py(b):
        return mt + ph - (b - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="16">{_esc(title)}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<text x="{px(t):.2f}" y="{mt + ph + 18}" text-anchor="middle" '
                   f'font-size="11">{t:.4g}</text>')
    for t in _ticks(y0, y1):
        lab = f"1e{t:.3g}" if logy else f"{t:.4g}"
        out.append(f'<text x="{ml - 6}" y="{py(t) + 4:.2f}" text-anchor="end" '
                   f'font-size="11">{lab}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 16}" text-anchor="middle" '
               f'font-size="13">{_esc(xlabel)}</text>')
    out.append(f'<text x="18" y="{mt + ph / 2:.1f}" text-anchor="middle" font-size="13" '
               f'transform="rotate(-90 18 {mt + ph / 2:.1f})">{_esc(ylabel)}</text>')
    if pts:
        poly = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in pts)
        out.append(f'<polyline points="{poly}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>')
        for a, b in pts:
            out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2.5" fill="#1f77b4"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
