"""Dependency-free SVG figures: time-space diagram and last-headway bar chart."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from metrodyn.dynamics import DepartureTrace

WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 20, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _f(v: float) -> str:
    return f"{v:.3f}"


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f"<title>{title}</title>",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]


def _axes(x_label: str, y_label: str, x_ticks, y_ticks) -> list[str]:
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T
    out = [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
    ]
    for px, text in x_ticks:
        out.append(f'<line x1="{_f(px)}" y1="{y0}" x2="{_f(px)}" y2="{y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{_f(px)}" y="{y0 + 18}" font-size="11" text-anchor="middle">{text}</text>')
    for py, text in y_ticks:
        out.append(f'<line x1="{x0 - 5}" y1="{_f(py)}" x2="{x0}" y2="{_f(py)}" stroke="black"/>')
        out.append(f'<text x="{x0 - 8}" y="{_f(py + 4)}" font-size="11" text-anchor="end">{text}</text>')
    out.append(
        f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 10}" font-size="12" text-anchor="middle">{x_label}</text>'
    )
    out.append(
        f'<text x="16" y="{(y0 + y1) / 2:.1f}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">{y_label}</text>'
    )
    return out


def _nice_ticks(lo: float, hi: float, count: int = 6) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = np.ceil(lo / step) * step
    return [float(v) for v in np.arange(start, hi + 1e-9 * step, step)]


def train_paths(trace: DepartureTrace, b: Sequence[int]) -> list[list[tuple[int, int]]]:
    """Follow each initial train through the departure matrix.

    The k-th departure from segment j is made by the train that made departure
    ``k - b[j]`` from segment ``j - 1``, so a train leaving ``j`` at count ``k``
    leaves ``j + 1`` at count ``k + b[j + 1]``.
    """
    n = len(b)
    paths = []
    for start in (j for j in range(n) if b[j]):
        j, k = start, 1
        path = []
        while k <= trace.K:
            path.append((k, j))
            j = (j + 1) % n
            k += b[j]
        paths.append(path)
    return paths


def time_space_svg(trace: DepartureTrace, b: Sequence[int], title: str = "train trajectories") -> str:
    """Time (minutes, upward) against position along the loop; one path per train."""
    n = trace.n
    t_min = float(np.nanmin(trace.d)) / 60.0
    t_max = float(np.nanmax(trace.d)) / 60.0
    span = max(t_max - t_min, 1e-9)
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T

    def px(pos: float) -> float:
        return x0 + (x1 - x0) * pos / n

    def py(minutes: float) -> float:
        return y0 - (y0 - y1) * (minutes - t_min) / span

    out = _header(title)
    out += _axes(
        "position along the loop [segment]",
        "time [min]",
        [(px(p), str(p)) for p in range(n + 1)],
        [(py(v), f"{v:g}") for v in _nice_ticks(t_min, t_max)],
    )
    for i, path in enumerate(train_paths(trace, b)):
        parts = []
        prev_y = None
        for k, j in path:
            # departures sit at the downstream end of their segment
            x, y = px(j + 1), py(trace.d[k, j] / 60.0)
            if prev_y is None:
                parts.append(f"M{_f(x)},{_f(y)}")
            elif j == 0:
                parts.append(f"M{_f(px(0))},{_f(prev_y)} L{_f(x)},{_f(y)}")
            else:
                parts.append(f"L{_f(x)},{_f(y)}")
            prev_y = y
        color = COLORS[i % len(COLORS)]
        out.append(f'<path d="{" ".join(parts)}" fill="none" stroke="{color}" stroke-width="1.2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def headway_bars_svg(last_headways: Sequence[float], title: str = "last headways") -> str:
    """Bar chart of the last observed headway per segment, in minutes."""
    values = np.asarray(last_headways, dtype=float) / 60.0
    n = len(values)
    top = float(values.max()) * 1.1 if n and values.max() > 0 else 1.0
    x0, x1 = MARGIN_L, WIDTH - MARGIN_R
    y0, y1 = HEIGHT - MARGIN_B, MARGIN_T
    slot = (x1 - x0) / max(n, 1)

    def py(v: float) -> float:
        return y0 - (y0 - y1) * v / top

    out = _header(title)
    out += _axes(
        "segment",
        "headway [min]",
        [(x0 + slot * (j + 0.5), str(j)) for j in range(n)],
        [(py(v), f"{v:g}") for v in _nice_ticks(0.0, top)],
    )
    for j, v in enumerate(values):
        left = x0 + slot * j + slot * 0.15
        out.append(
            f'<rect x="{_f(left)}" y="{_f(py(v))}" width="{_f(slot * 0.7)}" '
            f'height="{_f(y0 - py(v))}" fill="{COLORS[0]}"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
