"""Deterministic text emitters: top-down SVG, reward-curve SVG, OBJ scene."""

import numpy as np

from .errors import EmptyInput, ParseError
from .train import METRICS_HEADER
from .world import World

CANVAS_WIDTH = 1000.0
MARGIN = 30.0
CURVE_WIDTH = 900.0
CURVE_HEIGHT = 540.0
DEFAULT_SNAPSHOT_FRACTIONS = tuple(i / 8.0 for i in range(9))


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def snapshot_indices(times, fractions):
    """Record index nearest each fraction of total episode time (first on ties)."""
    times = np.asarray(times, dtype=np.float64)
    total = times[-1]
    return [int(np.argmin(np.abs(times - f * total))) for f in fractions]


def render_topdown(world: World, trajectory, snapshot_fractions=None) -> str:
    """Orthographic top-down SVG: bounds frame, building rects, goal circle,
    flight polyline, and diamond markers at the requested time fractions."""
    if not trajectory:
        raise EmptyInput("trajectory has no records")
    if snapshot_fractions is None:
        snapshot_fractions = DEFAULT_SNAPSHOT_FRACTIONS

    lo = world.bounds.min_corner
    hi = world.bounds.max_corner
    scale = (CANVAS_WIDTH - 2 * MARGIN) / (hi[0] - lo[0])
    height = (hi[1] - lo[1]) * scale + 2 * MARGIN

    def px(x):
        return MARGIN + (x - lo[0]) * scale

    def py(y):
        return MARGIN + (hi[1] - y) * scale  # flip y so north is up

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(CANVAS_WIDTH)}" '
           f'height="{_fmt(height)}" viewBox="0 0 {_fmt(CANVAS_WIDTH)} {_fmt(height)}">']
    out.append(f'<path class="bounds" d="M {_fmt(px(lo[0]))} {_fmt(py(lo[1]))} '
               f'L {_fmt(px(hi[0]))} {_fmt(py(lo[1]))} L {_fmt(px(hi[0]))} {_fmt(py(hi[1]))} '
               f'L {_fmt(px(lo[0]))} {_fmt(py(hi[1]))} Z" fill="none" stroke="#333"/>')
    for b in world.buildings:
        bl = b.min_corner
        tr = b.max_corner
        out.append(f'<rect class="building" x="{_fmt(px(bl[0]))}" y="{_fmt(py(tr[1]))}" '
                   f'width="{_fmt((tr[0] - bl[0]) * scale)}" '
                   f'height="{_fmt((tr[1] - bl[1]) * scale)}" '
                   f'fill="#b0b0b0" stroke="#555"/>')
    out.append(f'<circle class="goal" cx="{_fmt(px(world.goal_center[0]))}" '
               f'cy="{_fmt(py(world.goal_center[1]))}" '
               f'r="{_fmt(world.goal_radius * scale)}" '
               f'fill="none" stroke="#1a7f37" stroke-width="2"/>')
    points = " ".join(f"{_fmt(px(r.position[0]))},{_fmt(py(r.position[1]))}"
                      for r in trajectory)
    out.append(f'<polyline class="flightpath" points="{points}" '
               f'fill="none" stroke="#c0392b" stroke-width="1.5"/>')
    times = [r.t for r in trajectory]
    for f, idx in zip(snapshot_fractions, snapshot_indices(times, snapshot_fractions)):
        r = trajectory[idx]
        cx, cy = px(r.position[0]), py(r.position[1])
        s = 5.0
        pts = (f"{_fmt(cx)},{_fmt(cy - s)} {_fmt(cx + s)},{_fmt(cy)} "
               f"{_fmt(cx)},{_fmt(cy + s)} {_fmt(cx - s)},{_fmt(cy)}")
        out.append(f'<polygon class="snapshot" points="{pts}" fill="#2c3e50"/>')
        out.append(f'<text class="snapshot-label" x="{_fmt(cx + 7)}" y="{_fmt(cy - 7)}" '
                   f'font-size="11">t={f:g}T</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def read_metrics(path):
    """Parse a metrics CSV into a list of per-row dicts (floats)."""
    names = METRICS_HEADER.split(",")
    rows = []
    with open(path) as f:
        header = f.readline().rstrip("\n")
        if header != METRICS_HEADER:
            raise ParseError(f"bad metrics header: {header!r}", line=1)
        for lineno, line in enumerate(f, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(names):
                raise ParseError(f"expected {len(names)} fields, got {len(parts)}",
                                 line=lineno)
            try:
                rows.append({k: float(v) for k, v in zip(names, parts)})
            except ValueError as e:
                raise ParseError(str(e), line=lineno)
    return rows


def trailing_mean(values, window: int):
    """Trailing moving average: out[i] = mean(values[max(0, i-window+1) .. i])."""
    if window < 1:
        raise ValueError("window must be >= 1")
    values = list(values)
    out = []
    for i in range(len(values)):
        chunk = values[max(0, i - window + 1):i + 1]
        out.append(sum(chunk) / len(chunk))
    return out


def render_reward_curve(metrics_path, window: int = 10) -> str:
    """Reward-vs-steps SVG with the raw series and a trailing moving average."""
    rows = read_metrics(metrics_path)
    if not rows:
        raise EmptyInput("metrics file has no rows")
    xs = [r["env_steps"] for r in rows]
    ys = [r["mean_ep_reward"] for r in rows]
    smooth = trailing_mean(ys, window)

    x_lo, x_hi = min(xs), max(xs)
    y_lo = min(min(ys), min(smooth))
    y_hi = max(max(ys), max(smooth))
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    plot_w = CURVE_WIDTH - 2 * MARGIN - 40.0
    plot_h = CURVE_HEIGHT - 2 * MARGIN - 30.0
    x0, y0 = MARGIN + 50.0, MARGIN  # plot origin (top-left)

    def px(x):
        return x0 + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return y0 + (y_hi - y) / (y_hi - y_lo) * plot_h

    def poly(series, cls, color, width):
        pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(xs, series))
        return (f'<polyline class="{cls}" points="{pts}" fill="none" '
                f'stroke="{color}" stroke-width="{width}"/>')

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(CURVE_WIDTH)}" '
           f'height="{_fmt(CURVE_HEIGHT)}" viewBox="0 0 {_fmt(CURVE_WIDTH)} '
           f'{_fmt(CURVE_HEIGHT)}">']
    out.append(f'<line class="axis" x1="{_fmt(x0)}" y1="{_fmt(y0 + plot_h)}" '
               f'x2="{_fmt(x0 + plot_w)}" y2="{_fmt(y0 + plot_h)}" stroke="#333"/>')
    out.append(f'<line class="axis" x1="{_fmt(x0)}" y1="{_fmt(y0)}" '
               f'x2="{_fmt(x0)}" y2="{_fmt(y0 + plot_h)}" stroke="#333"/>')
    out.append(poly(ys, "raw", "#9bbcdd", "1"))
    out.append(poly(smooth, "smoothed", "#1f4e79", "2"))
    out.append(f'<text class="x-label" x="{_fmt(x0 + plot_w / 2)}" '
               f'y="{_fmt(y0 + plot_h + 35)}" font-size="13" '
               f'text-anchor="middle">environment steps</text>')
    out.append(f'<text class="y-label" x="14" y="{_fmt(y0 + plot_h / 2)}" '
               f'font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 14 {_fmt(y0 + plot_h / 2)})">'
               f'mean episode reward</text>')
    for x, anchor in ((x_lo, "start"), (x_hi, "end")):
        out.append(f'<text class="x-tick" x="{_fmt(px(x))}" '
                   f'y="{_fmt(y0 + plot_h + 16)}" font-size="11" '
                   f'text-anchor="{anchor}">{x:g}</text>')
    for y in (y_lo, y_hi):
        out.append(f'<text class="y-tick" x="{_fmt(x0 - 6)}" y="{_fmt(py(y) + 4)}" '
                   f'font-size="11" text-anchor="end">{y:.3g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# One cuboid = 8 corners (sign bits over x, y, z) and 12 triangles.
_CORNERS = ((-1, -1, -1), (1, -1, -1), (1, 1, -1), (-1, 1, -1),
            (-1, -1, 1), (1, -1, 1), (1, 1, 1), (-1, 1, 1))
_TRIANGLES = ((1, 3, 2), (1, 4, 3), (5, 6, 7), (5, 7, 8),
              (1, 2, 6), (1, 6, 5), (2, 3, 7), (2, 7, 6),
              (3, 4, 8), (3, 8, 7), (4, 1, 5), (4, 5, 8))


def build_scene_obj(world: World, trajectory) -> str:
    """Wavefront OBJ: ground quad, one cuboid per building, flight polyline."""
    out = ["# uamsim scene export"]

    def vert(p):
        out.append(f"v {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}")

    lo = world.bounds.min_corner
    hi = world.bounds.max_corner
    out.append("o ground")
    for x, y in ((lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1])):
        vert((x, y, 0.0))
    out.append("f 1 2 3 4")
    base = 4
    for i, b in enumerate(world.buildings):
        out.append(f"o building_{i:03d}")
        for sx, sy, sz in _CORNERS:
            vert(b.center + b.half_extents * np.array([sx, sy, sz], dtype=np.float64))
        for a, c, d in _TRIANGLES:
            out.append(f"f {base + a} {base + c} {base + d}")
        base += 8
    if trajectory:
        out.append("o flightpath")
        for r in trajectory:
            vert(r.position)
        if len(trajectory) > 1:
            idx = " ".join(str(base + i + 1) for i in range(len(trajectory)))
            out.append(f"l {idx}")
    return "\n".join(out) + "\n"


def export_scene(world: World, trajectory, path) -> str:
    text = build_scene_obj(world, trajectory)
    with open(path, "w") as f:
        f.write(text)
    return text
