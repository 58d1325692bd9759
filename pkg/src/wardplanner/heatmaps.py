"""Heatmap files: CSV and standalone SVG with the value printed in each cell."""
from __future__ import annotations

import csv
import io
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

# sequential 9-step palette, light to dark
PALETTE = ("#f7fbff", "#deebf7", "#c6dbef", "#9ecae1", "#6baed6",
           "#4292c6", "#2171b5", "#08519c", "#08306b")
CELL = 56
MARGIN_LEFT = 110
MARGIN_TOP = 70


def color_step(value: float, vmin: float, vmax: float) -> int:
    """Palette index for ``value`` on a linear scale over ``[vmin, vmax]``."""
    if vmax <= vmin:
        return 0
    t = (value - vmin) / (vmax - vmin)
    return int(min(len(PALETTE) - 1, max(0, np.floor(t * len(PALETTE)))))


def _cell_text(v: float) -> str:
    return str(int(round(v))) if float(v).is_integer() else f"{v:.2f}"


def heatmap_csv(matrix, row_labels, col_labels, meta: dict | None = None) -> str:
    m = np.asarray(matrix, dtype=float)
    buf = io.StringIO()
    for key, val in sorted((meta or {}).items()):
        buf.write(f"# {key}: {val}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["specialty"] + list(col_labels))
    for label, row in zip(row_labels, m):
        w.writerow([label] + [_cell_text(v) for v in row])
    return buf.getvalue()


def heatmap_svg(matrix, row_labels, col_labels, title: str = "",
                meta: dict | None = None) -> str:
    m = np.asarray(matrix, dtype=float)
    if m.shape != (len(row_labels), len(col_labels)):
        raise ValueError(f"matrix shape {m.shape} does not match labels")
    vmin = float(m.min()) if m.size else 0.0
    vmax = float(m.max()) if m.size else 0.0
    width = MARGIN_LEFT + CELL * m.shape[1] + 20
    height = MARGIN_TOP + CELL * m.shape[0] + 40
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="12">']
    if meta:
        text = "; ".join(f"{k}={v}" for k, v in sorted(meta.items()))
        out.append(f"<desc>{escape(text)}</desc>")
    if title:
        out.append(f'<text x="{MARGIN_LEFT}" y="20" font-size="14">{escape(title)}</text>')
    out.append(f'<text x="{MARGIN_LEFT + CELL * m.shape[1] / 2}" y="{MARGIN_TOP - 28}" '
               f'text-anchor="middle" font-weight="bold">hospital</text>')
    for j, label in enumerate(col_labels):
        x = MARGIN_LEFT + CELL * j + CELL / 2
        out.append(f'<text x="{x}" y="{MARGIN_TOP - 8}" text-anchor="middle">{escape(str(label))}</text>')
    out.append(f'<text x="12" y="{MARGIN_TOP + CELL * m.shape[0] / 2}" font-weight="bold" '
               f'transform="rotate(-90 12 {MARGIN_TOP + CELL * m.shape[0] / 2})" '
               f'text-anchor="middle">specialty</text>')
    for i, label in enumerate(row_labels):
        y = MARGIN_TOP + CELL * i + CELL / 2 + 4
        out.append(f'<text x="{MARGIN_LEFT - 8}" y="{y}" text-anchor="end">{escape(str(label))}</text>')
        for j in range(m.shape[1]):
            step = color_step(m[i, j], vmin, vmax)
            x0, y0 = MARGIN_LEFT + CELL * j, MARGIN_TOP + CELL * i
            ink = "#ffffff" if step >= 5 else "#000000"
            out.append(f'<rect x="{x0}" y="{y0}" width="{CELL}" height="{CELL}" '
                       f'fill="{PALETTE[step]}" stroke="#ffffff"/>')
            out.append(f'<text x="{x0 + CELL / 2}" y="{y0 + CELL / 2 + 4}" text-anchor="middle" '
                       f'fill="{ink}">{_cell_text(m[i, j])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_heatmap(matrix, row_labels, col_labels, stem, title: str = "",
                  meta: dict | None = None) -> tuple[Path, Path]:
    """Write ``stem.csv`` and ``stem.svg``; returns both paths."""
    stem = Path(stem)
    csv_path, svg_path = stem.with_suffix(".csv"), stem.with_suffix(".svg")
    csv_path.write_text(heatmap_csv(matrix, row_labels, col_labels, meta))
    svg_path.write_text(heatmap_svg(matrix, row_labels, col_labels, title, meta))
    return csv_path, svg_path
