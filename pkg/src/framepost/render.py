"""Deterministic SVG rendering of plot documents.

Output depends only on the document: element order, attribute order and
number formatting are fixed, so identical documents give identical bytes.
Data elements carry ``class="data"`` and are clipped to the plot area;
presentation changes such as axis limits move them but never add or remove
any.
"""
from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .colormap import colormap_eval, to_hex
from .errors import DomainError
from .plotdoc import BasePlot, restore

FONT = "sans-serif"
SERIES_COLORS = (
    "#3b4cc0", "#b40426", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#1f77b4", "#d62728", "#006400", "#ffbf00", "#4b0082", "#a0522d",
)
WATERFALL_QUANTILES = (0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0)


def fmt(x) -> str:
    """Shortest round-trip decimal of ``x`` rounded to 6 significant digits."""
    x = float(x)
    if x == 0 or not math.isfinite(x):
        return "0" if x == 0 else str(x)
    s = repr(float(f"{x:.6g}"))
    return s[:-2] if s.endswith(".0") else s


def nice_ticks(lo: float, hi: float, target_count: int) -> list[float]:
    """Tick values at multiples of 1, 2 or 5 times a power of ten covering ``[lo, hi]``.

    Steps within two decades of ``(hi - lo) / target_count`` are tried; the
    grid whose tick count is closest to the target wins, then the one that
    overshoots the range least, then the coarser one. Some spans have no
    such grid within two ticks of the target (0..201 at 9 ticks gets 6, 12
    or 22), in which case the closest count is still returned.
    """
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise DomainError(f"tick range needs lo < hi, got ({lo}, {hi})")
    if target_count < 2:
        raise DomainError(f"target_count must be >= 2, got {target_count}")
    k0 = math.floor(math.log10((hi - lo) / target_count))
    best = None
    for k in range(k0 - 1, k0 + 3):
        for m in (1, 2, 5):
            first, last = _grid(lo, hi, m, k)
            extent = _tick_value(last, m, k) - _tick_value(first, m, k)
            key = (abs(last - first + 1 - target_count), extent, -m * 10.0 ** k)
            if best is None or key < best[0]:
                best = (key, m, k, first, last)
    _, m, k, first, last = best
    return [_tick_value(i, m, k) for i in range(first, last + 1)]


def _grid(lo, hi, m, k):
    """Indices of the outermost grid ticks at or beyond ``lo`` and ``hi``."""
    step = m * 10.0 ** k
    first = math.floor(lo / step)
    last = math.ceil(hi / step)
    while _tick_value(first, m, k) > lo:
        first -= 1
    while _tick_value(first + 1, m, k) <= lo:
        first += 1
    while _tick_value(last, m, k) < hi:
        last += 1
    while _tick_value(last - 1, m, k) >= hi:
        last -= 1
    return first, last


def _tick_value(i, m, k):
    # integer arithmetic, one correctly rounded conversion
    v = i * m * 10 ** k if k >= 0 else (i * m) / 10 ** (-k)
    return float(v) + 0.0


def quantiles(values, qs) -> list[float]:
    """Linear-interpolation quantiles: fractional order-statistic index ``q * (n - 1)``."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = v.size
    if n == 0:
        raise DomainError("quantiles of an empty sequence")
    out = []
    for q in qs:
        q = float(q)
        if not 0.0 <= q <= 1.0:
            raise DomainError(f"quantile {q} outside [0, 1]")
        pos = q * (n - 1)
        i = min(int(math.floor(pos)), n - 1)
        frac = pos - i
        if frac == 0.0 or i == n - 1:
            out.append(float(v[i]))
        else:
            out.append(float(v[i] + frac * (v[i + 1] - v[i])))
    for j in range(1, len(out)):
        if out[j] < out[j - 1]:
            out[j] = out[j - 1]
    return out


def data_range(values, limits=None, pad=0.0) -> tuple[float, float]:
    """Scale range: presentation limits if set, else the data extent.

    A flat extent becomes a unit span centred on the value; otherwise the
    extent is widened by ``pad`` times its width on each side.
    """
    if limits is not None:
        return limits
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return -0.5, 0.5
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return lo - 0.5, hi + 0.5
    margin = pad * (hi - lo)
    return lo - margin, hi + margin


class Svg:
    def __init__(self, width, height):
        self.width, self.height = width, height
        self.parts: list[str] = []
        self._clip = 0

    def el(self, tag, attrs, text=None):
        a = "".join(f" {k}={quoteattr(str(v))}" for k, v in attrs)
        if text is None:
            self.parts.append(f"<{tag}{a}/>")
        else:
            self.parts.append(f"<{tag}{a}>{escape(text)}</{tag}>")

    def open(self, tag, attrs=()):
        a = "".join(f" {k}={quoteattr(str(v))}" for k, v in attrs)
        self.parts.append(f"<{tag}{a}>")

    def close(self, tag):
        self.parts.append(f"</{tag}>")

    def text(self, x, y, s, size=12, anchor="middle", cls="label", rotate=False):
        attrs = [("class", cls), ("x", fmt(x)), ("y", fmt(y)), ("font-size", size),
                 ("text-anchor", anchor)]
        if rotate:
            attrs.append(("transform", f"rotate(-90 {fmt(x)} {fmt(y)})"))
        self.el("text", attrs, s)

    def clip_rect(self, x, y, w, h) -> str:
        self._clip += 1
        cid = f"clip{self._clip}"
        self.open("clipPath", [("id", cid)])
        self.el("rect", [("x", fmt(x)), ("y", fmt(y)), ("width", fmt(w)), ("height", fmt(h))])
        self.close("clipPath")
        return cid

    def tobytes(self) -> bytes:
        head = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}" font-family="{FONT}">'
        )
        bg = f'<rect class="background" x="0" y="0" width="{self.width}" height="{self.height}" fill="#ffffff"/>'
        return (head + "\n" + bg + "\n" + "\n".join(self.parts) + "\n</svg>\n").encode("utf-8")


class Axes:
    def __init__(self, x, y, w, h, xr, yr):
        if w <= 0 or h <= 0:
            raise ValueError("plot area must be positive after margins")
        self.x, self.y, self.w, self.h = x, y, w, h
        self.xlo, self.xhi = xr
        self.ylo, self.yhi = yr

    def tx(self, v):
        return self.x + (v - self.xlo) / (self.xhi - self.xlo) * self.w

    def ty(self, v):
        return self.y + self.h - (v - self.ylo) / (self.yhi - self.ylo) * self.h

    def points(self, xs, ys) -> str:
        return " ".join(f"{fmt(self.tx(a))},{fmt(self.ty(b))}" for a, b in zip(xs, ys))


def _ticks_in(lo, hi, n):
    span = hi - lo
    return [t for t in nice_ticks(lo, hi, n) if lo - 1e-9 * span <= t <= hi + 1e-9 * span]


def _index_ticks(lo, hi):
    # index axes only label whole cells
    return [t for t in _ticks_in(lo, hi, 6) if t == int(t)]


def draw_axes(svg: Svg, ax: Axes, xlabel: str, ylabel: str, grid: bool,
              x_index=False, y_index=False):
    xticks = _index_ticks(ax.xlo, ax.xhi) if x_index else _ticks_in(ax.xlo, ax.xhi, 6)
    yticks = _index_ticks(ax.ylo, ax.yhi) if y_index else _ticks_in(ax.ylo, ax.yhi, 6)
    svg.open("g", [("class", "axes")])
    svg.el("rect", [("x", fmt(ax.x)), ("y", fmt(ax.y)), ("width", fmt(ax.w)), ("height", fmt(ax.h)),
                    ("fill", "#ffffff"), ("stroke", "#000000"), ("stroke-width", "1")])
    for t in xticks:
        px = fmt(ax.tx(t))
        if grid:
            svg.el("line", [("class", "grid"), ("x1", px), ("y1", fmt(ax.y)), ("x2", px),
                            ("y2", fmt(ax.y + ax.h)), ("stroke", "#d0d0d0"), ("stroke-width", "0.5")])
        svg.el("line", [("x1", px), ("y1", fmt(ax.y + ax.h)), ("x2", px), ("y2", fmt(ax.y + ax.h + 5)),
                        ("stroke", "#000000")])
        svg.text(ax.tx(t), ax.y + ax.h + 18, fmt(t), size=11, cls="tick")
    for t in yticks:
        py = fmt(ax.ty(t))
        if grid:
            svg.el("line", [("class", "grid"), ("x1", fmt(ax.x)), ("y1", py), ("x2", fmt(ax.x + ax.w)),
                            ("y2", py), ("stroke", "#d0d0d0"), ("stroke-width", "0.5")])
        svg.el("line", [("x1", fmt(ax.x - 5)), ("y1", py), ("x2", fmt(ax.x)), ("y2", py),
                        ("stroke", "#000000")])
        svg.text(ax.x - 8, ax.ty(t) + 4, fmt(t), size=11, anchor="end", cls="tick")
    svg.text(ax.x + ax.w / 2, ax.y + ax.h + 40, xlabel, size=13)
    svg.text(ax.x - 60, ax.y + ax.h / 2, ylabel, size=13, rotate=True)
    svg.close("g")


def _quantity(arr, label):
    name = label or arr.name
    return f"{name} ({arr.units})" if arr.units else name


def _title(svg, plot, default):
    title = plot.presentation.title or default
    svg.text(svg.width / 2, 32, title, size=18, cls="title")


def _render_layer(plot, width, height):
    pres = plot.presentation
    data = plot.args["data"]
    nx, ny = data.shape[0], data.shape[1]
    grid2 = data.array[:, :, 0, 0]
    svg = Svg(width, height)
    _title(svg, plot, f"{data.name}: plan view")
    xr = pres.limits("x") or (-0.5, nx - 0.5)
    yr = pres.limits("y") or (-0.5, ny - 0.5)
    side = min(width - 90 - 150, height - 60 - 70)
    ax = Axes(90, 60, side, side, xr, yr)
    draw_axes(svg, ax, "x index", "y index", pres.grid_lines, x_index=True, y_index=True)
    lo, hi = data_range(data.values, pres.limits("c"))

    cid = svg.clip_rect(ax.x, ax.y, ax.w, ax.h)
    size = 0.9 * pres.marker_size * min(ax.w / (ax.xhi - ax.xlo), ax.h / (ax.yhi - ax.ylo))
    svg.open("g", [("class", "data"), ("clip-path", f"url(#{cid})")])
    for iy in range(ny):
        for ix in range(nx):
            v = float(grid2[ix, iy])
            t = min(1.0, max(0.0, (v - lo) / (hi - lo)))
            svg.el("rect", [
                ("class", "marker"),
                ("x", fmt(ax.tx(ix) - size / 2)), ("y", fmt(ax.ty(iy) - size / 2)),
                ("width", fmt(size)), ("height", fmt(size)),
                ("fill", to_hex(colormap_eval(pres.colormap_id, t))),
            ])
    svg.close("g")

    # colour bar
    bx, bw = ax.x + ax.w + 30, 24
    steps = 64
    svg.open("g", [("class", "colorbar")])
    for i in range(steps):
        t = (i + 0.5) / steps
        y0 = ax.y + ax.h * (1 - (i + 1) / steps)
        svg.el("rect", [("x", fmt(bx)), ("y", fmt(y0)), ("width", bw), ("height", fmt(ax.h / steps + 0.01)),
                        ("fill", to_hex(colormap_eval(pres.colormap_id, t)))])
    svg.el("rect", [("x", fmt(bx)), ("y", fmt(ax.y)), ("width", bw), ("height", fmt(ax.h)),
                    ("fill", "none"), ("stroke", "#000000")])
    for tick in colorbar_ticks(lo, hi):
        py = ax.y + ax.h * (1 - (tick - lo) / (hi - lo))
        svg.el("line", [("x1", fmt(bx + bw)), ("y1", fmt(py)), ("x2", fmt(bx + bw + 5)), ("y2", fmt(py)),
                        ("stroke", "#000000")])
        svg.text(bx + bw + 8, py + 4, fmt(tick), size=11, anchor="start", cls="cbtick")
    svg.text(bx + bw / 2, ax.y - 10, _quantity(data, plot.args["label"]), size=12)
    svg.close("g")
    return svg


def colorbar_ticks(lo, hi) -> list[float]:
    return _ticks_in(lo, hi, 5)


def _render_channel(plot, width, height):
    pres = plot.presentation
    dx, dy = plot.args["dx"], plot.args["dy"]
    nz = dx.shape[2]
    k = plot.selected_frame()
    xs = dx.array[0, 0, :, k]
    ys = dy.array[0, 0, :, k]
    z = np.arange(nz)
    svg = Svg(width, height)
    _title(svg, plot, f"channel distortion, frame {k} (t = {fmt(k * plot.args['dt'])} s)")

    both = np.concatenate([xs, ys, [0.0]])
    xr = data_range(both, pres.limits("x"), pad=0.05)
    yr = pres.limits("y") or (-0.5, nz - 0.5)
    gap = 80
    panel_w = (width - 90 - 40 - gap) / 2
    for i, (vals, name) in enumerate(((xs, "x"), (ys, "y"))):
        ax = Axes(90 + i * (panel_w + gap), 60, panel_w, height - 60 - 70, xr, yr)
        draw_axes(svg, ax, f"{name} displacement ({dx.units})", "z layer", pres.grid_lines,
                  y_index=True)
        svg.text(ax.x + ax.w / 2, ax.y - 8, f"{name.upper()}-Z projection", size=13, cls="panel")
        cid = svg.clip_rect(ax.x, ax.y, ax.w, ax.h)
        svg.open("g", [("class", "data"), ("clip-path", f"url(#{cid})")])
        svg.el("polyline", [("points", ax.points(vals, z)), ("fill", "none"),
                            ("stroke", SERIES_COLORS[i]), ("stroke-width", fmt(pres.line_width))])
        r = 3 * pres.marker_size
        for a, b in zip(vals, z):
            svg.el("circle", [("cx", fmt(ax.tx(a))), ("cy", fmt(ax.ty(b))), ("r", fmt(r)),
                              ("fill", SERIES_COLORS[i])])
        svg.close("g")
    return svg


def _time_axis(n, dt, t0):
    return t0 + dt * np.arange(n)


def _render_time(plot, width, height):
    pres = plot.presentation
    series = plot.args["series"]
    sx, sy, sz, nt = series.shape
    t = _time_axis(nt, plot.args["dt"], plot.args["t0"])
    arr = series.array
    svg = Svg(width, height)
    _title(svg, plot, f"{series.name} time history")
    xr = data_range(t, pres.limits("x"))
    yr = data_range(series.values, pres.limits("y"), pad=0.05)
    ax = Axes(90, 60, width - 90 - 40, height - 60 - 70, xr, yr)
    draw_axes(svg, ax, "time (s)", _quantity(series, plot.args["label"]), pres.grid_lines)
    cid = svg.clip_rect(ax.x, ax.y, ax.w, ax.h)
    svg.open("g", [("class", "data"), ("clip-path", f"url(#{cid})")])
    i = 0
    cells = []
    for iz in range(sz):
        for iy in range(sy):
            for ix in range(sx):
                cells.append((ix, iy, iz))
                color = SERIES_COLORS[i % len(SERIES_COLORS)]
                if nt == 1:
                    # a one-point polyline has no length; mark the sample instead
                    svg.el("circle", [("class", "series"), ("cx", fmt(ax.tx(t[0]))),
                                      ("cy", fmt(ax.ty(arr[ix, iy, iz, 0]))),
                                      ("r", fmt(3 * pres.marker_size)), ("fill", color)])
                else:
                    svg.el("polyline", [("class", "series"), ("points", ax.points(t, arr[ix, iy, iz, :])),
                                        ("fill", "none"), ("stroke", color),
                                        ("stroke-width", fmt(pres.line_width))])
                i += 1
    svg.close("g")
    if len(cells) > 1:
        svg.open("g", [("class", "legend")])
        for j, (ix, iy, iz) in enumerate(cells):
            y = ax.y + 16 + 16 * j
            color = SERIES_COLORS[j % len(SERIES_COLORS)]
            svg.el("line", [("x1", fmt(ax.x + ax.w - 120)), ("y1", fmt(y - 4)), ("x2", fmt(ax.x + ax.w - 100)),
                            ("y2", fmt(y - 4)), ("stroke", color), ("stroke-width", "2")])
            svg.text(ax.x + ax.w - 95, y, f"({ix}, {iy}, {iz})", size=11, anchor="start", cls="legend")
        svg.close("g")
    return svg


def waterfall_bands(data) -> np.ndarray:
    """Quantiles of the pooled spatial values per time step, shape (7, T)."""
    arr = data.array
    nt = data.shape[3]
    return np.array(
        [quantiles(arr[:, :, :, k], WATERFALL_QUANTILES) for k in range(nt)]
    ).T


def _render_waterfall(plot, width, height):
    pres = plot.presentation
    data = plot.args["data"]
    nt = data.shape[3]
    dt = plot.args["dt"]
    centres = _time_axis(nt, dt, 0.0)
    # each time step covers [t - dt/2, t + dt/2]
    t = np.repeat(centres, 2) + np.tile([-dt / 2, dt / 2], nt)
    bands = np.repeat(waterfall_bands(data), 2, axis=1)
    svg = Svg(width, height)
    _title(svg, plot, f"{data.name} distribution")
    xr = data_range(t, pres.limits("x"))
    yr = data_range(bands, pres.limits("y"), pad=0.05)
    ax = Axes(90, 60, width - 90 - 40, height - 60 - 70, xr, yr)
    draw_axes(svg, ax, "time (s)", _quantity(data, plot.args["label"]), pres.grid_lines)
    cid = svg.clip_rect(ax.x, ax.y, ax.w, ax.h)
    svg.open("g", [("class", "data"), ("clip-path", f"url(#{cid})")])
    shades = (0.2, 0.35, 0.5)
    for level, (lo_i, hi_i) in enumerate(((0, 6), (1, 5), (2, 4))):
        upper = ax.points(t, bands[hi_i])
        lower = ax.points(t[::-1], bands[lo_i][::-1])
        color = to_hex(colormap_eval(pres.colormap_id, 0.1 + 0.1 * level))
        svg.el("polygon", [("class", f"band{level}"), ("points", f"{upper} {lower}"),
                           ("fill", color), ("fill-opacity", fmt(shades[level])), ("stroke", "none")])
    svg.el("polyline", [("class", "median"), ("points", ax.points(t, bands[3])), ("fill", "none"),
                        ("stroke", "#000000"), ("stroke-width", fmt(pres.line_width))])
    svg.close("g")
    return svg


_RENDERERS = {
    "layer": (_render_layer, (800, 800)),
    "channel": (_render_channel, (800, 600)),
    "time": (_render_time, (800, 600)),
    "waterfall": (_render_waterfall, (800, 600)),
}


def render(doc, out_path=None, *, width: int | None = None, height: int | None = None) -> bytes:
    """Render a plot (or a stored document path) to SVG bytes, optionally writing ``out_path``."""
    plot = doc if isinstance(doc, BasePlot) else restore(doc)
    fn, (w0, h0) = _RENDERERS[plot.plot_type]
    svg = fn(plot, width or w0, height or h0)
    data = svg.tobytes()
    if out_path is not None:
        Path(out_path).write_bytes(data)
    return data
