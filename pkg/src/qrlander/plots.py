"""Hand-written SVG line charts for episode rewards and update losses.

One file holds two panels side by side.  Each series contributes one
``<polyline>`` per panel (its moving average); raw values are drawn as a
faint ``<path>`` underneath.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import FormatError
from .harness import WINDOW, moving_average, read_episodes, read_updates

WIDTH, HEIGHT = 960, 540
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")
PANEL_W, PANEL_H = 400, 380
PANELS = (("reward", 70, "episode", "total reward"), ("loss", 550, "update", "loss (log10)"))
TOP = 70


@dataclass
class Series:
    label: str
    episodes: np.ndarray
    rewards: np.ndarray
    updates: np.ndarray
    losses: np.ndarray


def series_label(path: Path) -> str:
    """File stem, or the run directory name for a run's ``episodes.csv``."""
    return path.parent.name if path.stem == "episodes" and path.parent.name else path.stem


def load_series(path) -> Series:
    """Read an episodes CSV (or a run directory) plus its sibling ``updates.csv``."""
    path = Path(path)
    if path.is_dir():
        path = path / "episodes.csv"
    ep = read_episodes(path)
    if not ep["episode"]:
        raise FormatError(f"{path}: empty series")
    upd_path = path.with_name("updates.csv") if path.name == "episodes.csv" else path.with_name(path.stem + "_updates.csv")
    upd = read_updates(upd_path) if upd_path.exists() else {"update_index": [], "loss": []}
    return Series(
        series_label(path),
        np.asarray(ep["episode"], float),
        np.asarray(ep["total_reward"], float),
        np.asarray(upd["update_index"], float),
        np.asarray(upd["loss"], float),
    )


def _ticks(lo: float, hi: float, n: int = 5) -> List[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _bounds(arrays: Sequence[np.ndarray]) -> tuple:
    vals = [a for a in arrays if a.size]
    if not vals:
        return 0.0, 1.0
    lo = min(float(a.min()) for a in vals)
    hi = max(float(a.max()) for a in vals)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def _panel(name, x0, xlabel, ylabel, xs, ys, labels) -> List[str]:
    """One panel: axes, ticks, faint raw paths and one moving-average polyline per series."""
    xlo, xhi = _bounds(xs)
    ylo, yhi = _bounds(ys)
    sx = lambda v: x0 + (v - xlo) / (xhi - xlo) * PANEL_W
    sy = lambda v: TOP + PANEL_H - (v - ylo) / (yhi - ylo) * PANEL_H
    out = [f'<g class="chart" id="{name}">',
           f'<rect x="{x0}" y="{TOP}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>']
    for t in _ticks(xlo, xhi):
        out.append(f'<text x="{sx(t):.1f}" y="{TOP + PANEL_H + 16}" text-anchor="middle">{_fmt(t)}</text>')
    for t in _ticks(ylo, yhi):
        y = sy(t)
        out.append(f'<line x1="{x0}" y1="{y:.1f}" x2="{x0 + PANEL_W}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{x0 - 6}" y="{y + 4:.1f}" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{x0 + PANEL_W / 2}" y="{TOP + PANEL_H + 36}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="{x0 + PANEL_W / 2}" y="{TOP - 10}" text-anchor="middle" font-weight="bold">'
               f'{ylabel}, {WINDOW}-point moving average</text>')
    for i, (x, y, label) in enumerate(zip(xs, ys, labels)):
        color = PALETTE[i % len(PALETTE)]
        if x.size:
            raw = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
            out.append(f'<path d="M{raw.replace(" ", " L")}" fill="none" stroke="{color}" '
                       f'stroke-opacity="0.2" stroke-width="0.8"/>')
        ma = moving_average(y)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, ma))
        out.append(f'<polyline data-series="{escape(label, {chr(34): "&quot;"})}" points="{pts}" '
                   f'fill="none" stroke="{color}" stroke-width="1.8"/>')
    out.append("</g>")
    return out


def render_svg(series: Sequence[Series]) -> str:
    if not series:
        raise FormatError("no series to plot")
    labels = [s.label for s in series]
    losses = []
    for s in series:
        losses.append(np.log10(np.maximum(s.losses, 1e-300)) if s.losses.size else s.losses)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    data = {"reward": ([s.episodes for s in series], [s.rewards for s in series]),
            "loss": ([s.updates for s in series], losses)}
    for name, x0, xlabel, ylabel in PANELS:
        xs, ys = data[name]
        parts += _panel(name, x0, xlabel, ylabel, xs, ys, labels)
    parts.append('<g class="legend">')
    for i, label in enumerate(labels):
        x = 70 + 150 * (i % 6)
        y = HEIGHT - 30 + 14 * (i // 6) - 14 * ((len(labels) - 1) // 6)
        color = PALETTE[i % len(PALETTE)]
        parts.append(f'<g class="legend-entry"><rect x="{x}" y="{y - 9}" width="12" height="10" fill="{color}"/>'
                     f'<text x="{x + 16}" y="{y}">{escape(label)}</text></g>')
    parts += ["</g>", "</svg>"]
    return "\n".join(parts) + "\n"


def emit_plots(inputs: Sequence, out_path) -> Path:
    """Render all inputs into one SVG; nothing is written if any input is bad."""
    if not inputs:
        raise FormatError("no metrics files given")
    series = [load_series(p) for p in inputs]
    svg = render_svg(series)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(svg, encoding="utf-8", newline="\n")
    return out_path
