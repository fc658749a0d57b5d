"""Deterministic CSV / JSON writers and minimal SVG rendering.

Floats are written with 17 significant digits so a value read back is the
value written; column and row order come from the caller, never from dict
iteration over computed keys.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if not math.isfinite(v) else f"{v:.17g}"
    if isinstance(value, (list, tuple)):
        return ";".join(str(v) for v in value)
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(c)) for c in columns])
    return path


def read_csv(path: Path) -> List[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------

WIDTH, HEIGHT, MARGIN = 640, 440, 70
PALETTE = ("#1f4e9c", "#2e8b57", "#c0392b", "#8e44ad", "#d35400", "#16a085", "#7f8c8d")


def _scale(values: np.ndarray, log: bool) -> Tuple[np.ndarray, float, float]:
    v = np.log10(values) if log else values
    finite = v[np.isfinite(v)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if hi == lo:
        hi = lo + 1.0
    return v, lo, hi


def _axes(xlabel: str, ylabel: str, title: str, xr, yr, logx: bool, logy: bool) -> List[str]:
    x0, y0 = MARGIN, HEIGHT - MARGIN
    parts = [f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
             f'<line x1="{x0}" y1="{y0}" x2="{WIDTH - 20}" y2="{y0}" stroke="black"/>',
             f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="20" stroke="black"/>',
             f'<text x="{WIDTH / 2}" y="{HEIGHT - 20}" text-anchor="middle" font-size="14">{escape(xlabel)}</text>',
             f'<text x="18" y="{HEIGHT / 2}" text-anchor="middle" font-size="14" '
             f'transform="rotate(-90 18 {HEIGHT / 2})">{escape(ylabel)}</text>',
             f'<text x="{WIDTH / 2}" y="16" text-anchor="middle" font-size="14">{escape(title)}</text>']
    for frac in (0.0, 0.5, 1.0):
        xv = xr[0] + frac * (xr[1] - xr[0])
        yv = yr[0] + frac * (yr[1] - yr[0])
        xt = f"1e{xv:.1f}" if logx else f"{xv:.3g}"
        yt = f"1e{yv:.1f}" if logy else f"{yv:.3g}"
        px = x0 + frac * (WIDTH - 20 - x0)
        py = y0 - frac * (y0 - 20)
        parts.append(f'<text x="{px:.1f}" y="{y0 + 16}" text-anchor="middle" font-size="11">{xt}</text>')
        parts.append(f'<text x="{x0 - 6}" y="{py + 4:.1f}" text-anchor="end" font-size="11">{yt}</text>')
    return parts


def line_plot(path: Path, series: Dict[str, Tuple[Sequence[float], Sequence[float]]],
              xlabel: str, ylabel: str, title: str = "", logx: bool = False,
              logy: bool = False, markers: bool = False) -> Path:
    """Polylines (or markers) for each labelled ``(x, y)`` series."""
    xs = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ys = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    _, xlo, xhi = _scale(xs, logx)
    _, ylo, yhi = _scale(ys, logy)
    x0, y0 = MARGIN, HEIGHT - MARGIN
    sx = (WIDTH - 20 - x0) / (xhi - xlo)
    sy = (y0 - 20) / (yhi - ylo)
    parts = _axes(xlabel, ylabel, title, (xlo, xhi), (ylo, yhi), logx, logy)
    for k, (label, (x, y)) in enumerate(series.items()):
        colour = PALETTE[k % len(PALETTE)]
        xv, _, _ = _scale(np.asarray(x, float), logx)
        yv, _, _ = _scale(np.asarray(y, float), logy)
        pts = [(x0 + (a - xlo) * sx, y0 - (b - ylo) * sy)
               for a, b in zip(xv, yv) if np.isfinite(a) and np.isfinite(b)]
        if markers:
            parts += [f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3" fill="{colour}"/>' for px, py in pts]
        elif pts:
            coords = " ".join(f"{px:.2f},{py:.2f}" for px, py in pts)
            parts.append(f'<polyline points="{coords}" fill="none" stroke="{colour}" stroke-width="2"/>')
        parts.append(f'<text x="{WIDTH - 30}" y="{40 + 16 * k}" text-anchor="end" '
                     f'font-size="12" fill="{colour}">{escape(label)}</text>')
    return _write_svg(path, parts)


def heatmap(path: Path, values: np.ndarray, xvals: Sequence[float], yvals: Sequence[float],
            xlabel: str, ylabel: str, title: str = "", logx: bool = True,
            logy: bool = True) -> Path:
    """Rectangles coloured by value; ``values[i, j]`` sits at ``(xvals[j], yvals[i])``."""
    values = np.asarray(values, float)
    finite = values[np.isfinite(values)]
    vlo, vhi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    span = (vhi - vlo) or 1.0
    ny, nx = values.shape
    x0, y0 = MARGIN, HEIGHT - MARGIN
    cw = (WIDTH - 20 - x0) / nx
    ch = (y0 - 20) / ny
    xv, xlo, xhi = _scale(np.asarray(xvals, float), logx)
    yv, ylo, yhi = _scale(np.asarray(yvals, float), logy)
    parts = _axes(xlabel, ylabel, f"{title} [{vlo:.3g}, {vhi:.3g}]", (xlo, xhi), (ylo, yhi), logx, logy)
    for i in range(ny):
        for j in range(nx):
            v = values[i, j]
            if np.isfinite(v):
                t = (v - vlo) / span
                fill = f"rgb({int(255 * t)},{int(80 + 100 * (1 - abs(2 * t - 1)))},{int(255 * (1 - t))})"
            else:
                fill = "#dddddd"
            parts.append(f'<rect x="{x0 + j * cw:.2f}" y="{y0 - (i + 1) * ch:.2f}" '
                         f'width="{cw:.2f}" height="{ch:.2f}" fill="{fill}"/>')
    return _write_svg(path, parts)


def _write_svg(path: Path, parts: List[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = "\n".join(parts)
    path.write_text(f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}">\n'
                    f"{body}\n</svg>\n", encoding="utf-8")
    return path
