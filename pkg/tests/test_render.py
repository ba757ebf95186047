import math
from fractions import Fraction
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from framepost.colormap import colormap_eval, to_hex
from framepost.errors import DomainError
from framepost.model import make_result
from framepost.plotdoc import LayerPlot, TimePlot, WaterfallPlot, restore
from framepost.render import fmt, nice_ticks, quantiles, render

HERE = Path(__file__).parent
FIXTURES = sorted((HERE / "fixtures" / "v1").glob("*.plotdoc"))
NS = "{http://www.w3.org/2000/svg}"
pytestmark = pytest.mark.filterwarnings("ignore::framepost.plotdoc.RestoreWarning")
TRACE = {"engine_version": "0", "calc_id": "t", "source_hash": "", "inputs": [],
         "created_utc": "2024-01-01T00:00:00Z"}


def tree(svg: bytes):
    return ET.fromstring(svg)


def data_groups(root):
    return [g for g in root.iter(NS + "g") if g.get("class") == "data"]


def plot_area(root):
    r = next(root.iter(NS + "clipPath")).find(NS + "rect")
    return tuple(float(r.get(k)) for k in ("x", "y", "width", "height"))


# ---------------------------------------------------------------- formatting

@pytest.mark.parametrize("x,s", [
    (0.0, "0"), (-0.0, "0"), (1.0, "1"), (2.5, "2.5"), (0.1 + 0.2, "0.3"),
    (123456789.0, "123457000"), (1e-7, "1e-07"), (-1234.5678, "-1234.57"), (1 / 3, "0.333333"),
])
def test_fmt(x, s):
    assert fmt(x) == s


# ---------------------------------------------------------------- nice ticks

def ticks_oracle(lo, hi, target):
    """Brute force over {1,2,5}x10^k grids with exact rational tick positions.

    Candidate steps lie within two decades of span/target. Ranked by distance
    of the tick count from the target, then overshoot past [lo, hi], then
    coarser step.
    """
    k0 = math.floor(math.log10((hi - lo) / target))
    best = None
    for k in range(k0 - 1, k0 + 3):
        for m in (1, 2, 5):
            step = Fraction(m) * Fraction(10) ** k
            ticks = lambda i: float(i * step) + 0.0  # noqa: E731
            i = math.floor(Fraction(lo) / step)
            while ticks(i) > lo:
                i -= 1
            while ticks(i + 1) <= lo:
                i += 1
            j = i
            while ticks(j) < hi:
                j += 1
            values = [ticks(n) for n in range(i, j + 1)]
            key = (abs(len(values) - target), values[-1] - values[0], -step)
            if best is None or key < best[0]:
                best = (key, values)
    return best[1]


@pytest.mark.parametrize("args,expected", [
    ((0, 10, 6), [0, 2, 4, 6, 8, 10]),
    ((-1, 1, 5), [-1, -0.5, 0, 0.5, 1]),
])
def test_nice_tick_examples(args, expected):
    assert nice_ticks(*args) == expected == pytest.approx(ticks_oracle(*args))


def test_nice_ticks_domain():
    with pytest.raises(DomainError):
        nice_ticks(3, 3, 5)
    with pytest.raises(DomainError):
        nice_ticks(0, 1, 1)


@settings(max_examples=400, deadline=None)
@given(st.floats(-1e6, 1e6), st.floats(1e-6, 1e6), st.integers(2, 12))
def test_nice_ticks_against_oracle(lo, width, target):
    hi = lo + width
    assume(hi > lo)
    got = nice_ticks(lo, hi, target)
    assert got == ticks_oracle(lo, hi, target)
    assert got[0] <= lo and got[-1] >= hi
    assert got == sorted(set(got))


def _reachable_counts(lo, hi, target):
    k0 = math.floor(math.log10((hi - lo) / target))
    counts = set()
    for k in range(k0 - 1, k0 + 3):
        for m in (1, 2, 5):
            step = Fraction(m) * Fraction(10) ** k
            counts.add(math.ceil(Fraction(hi) / step) - math.floor(Fraction(lo) / step) + 1)
    return counts


@settings(max_examples=300, deadline=None)
@given(st.integers(-10**6, 10**6), st.integers(1, 10**6), st.integers(2, 12))
def test_nice_tick_count_near_target_when_reachable(lo, width, target):
    got = nice_ticks(lo, lo + width, target)
    if any(abs(c - target) <= 2 for c in _reachable_counts(lo, lo + width, target)):
        assert target - 2 <= len(got) <= target + 2


def test_nice_tick_count_bound_can_be_unreachable():
    # span 201: steps 10, 20, 50 give 22, 12, 6 ticks; nothing within 2 of 9
    assert all(abs(c - 9) > 2 for c in _reachable_counts(0, 201, 9))
    assert len(nice_ticks(0, 201, 9)) in (6, 12)


# ---------------------------------------------------------------- quantiles

def quantile_oracle(values, q):
    v = sorted(values)
    pos = q * (len(v) - 1)
    i = int(pos)
    if i + 1 >= len(v):
        return v[-1]
    return v[i] + (pos - i) * (v[i + 1] - v[i])


def test_quantile_examples():
    assert quantiles([1, 2, 3, 4], [0.5]) == [2.5]
    vals = [5.0, -1.0, 3.0]
    assert quantiles(vals, [0.0, 1.0]) == [-1.0, 5.0]
    with pytest.raises(DomainError):
        quantiles([], [0.5])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e9, 1e9), min_size=1, max_size=40),
       st.lists(st.floats(0, 1), min_size=1, max_size=7))
def test_quantiles_against_oracle(values, qs):
    qs = sorted(qs)
    got = quantiles(values, qs)
    scale = max(1.0, max(abs(v) for v in values))
    for q, g in zip(qs, got):
        assert abs(g - quantile_oracle(values, q)) <= 1e-12 * scale
        assert abs(g - float(np.quantile(values, q, method="linear"))) <= 1e-12 * scale
    assert all(a <= b for a, b in zip(got, got[1:]))


# ---------------------------------------------------------------- plot types

def test_layer_markers_and_corner_colours():
    data = make_result("d", "m", (2, 2, 1, 1), [0, 1, 1, 0])
    root = tree(render(LayerPlot(data, traceability=TRACE)))
    (g,) = data_groups(root)
    rects = g.findall(NS + "rect")
    assert len(rects) == 4
    lo, hi = to_hex(colormap_eval("coolwarm-diverging", 0)), to_hex(colormap_eval("coolwarm-diverging", 1))
    # drawn row by row: (0,0), (1,0), (0,1), (1,1)
    assert [r.get("fill") for r in rects] == [lo, hi, hi, lo]


def test_layer_degenerate_range_uses_midpoint():
    data = make_result("d", "m", (2, 1, 1, 1), [4.0, 4.0])
    root = tree(render(LayerPlot(data, traceability=TRACE)))
    mid = to_hex(colormap_eval("coolwarm-diverging", 0.5))
    assert {r.get("fill") for r in data_groups(root)[0]} == {mid}


def test_colorbar_labels_are_clipped_ticks():
    data = make_result("d", "m", (3, 1, 1, 1), [0.13, 0.4, 0.87])
    root = tree(render(LayerPlot(data, traceability=TRACE)))
    labels = [t.text for t in root.iter(NS + "text") if t.get("class") == "cbtick"]
    assert labels == [fmt(t) for t in nice_ticks(0.13, 0.87, 5) if 0.13 <= t <= 0.87]
    assert labels == ["0.2", "0.4", "0.6", "0.8"]


def test_time_x_coordinates_are_affine():
    plot = TimePlot(make_result("v", "m/s", (1, 1, 1, 3), [0, 1, 0]), dt=0.5, traceability=TRACE)
    root = tree(render(plot))
    x0, _, w, _ = plot_area(root)
    line = data_groups(root)[0].find(NS + "polyline")
    xs = [float(p.split(",")[0]) for p in line.get("points").split()]
    # time axis spans [0, 1.0] exactly, no padding
    assert xs == pytest.approx([x0 + w * t / 1.0 for t in (0.0, 0.5, 1.0)], abs=1e-3)


def test_waterfall_constant_collapses_to_a_line():
    data = make_result("d", "m", (2, 2, 1, 4), [3.0] * 16)
    root = tree(render(WaterfallPlot(data, traceability=TRACE)))
    ys = set()
    for el in data_groups(root)[0]:
        ys |= {p.split(",")[1] for p in el.get("points").split()}
    assert len(ys) == 1


def test_waterfall_bands_nest():
    rng = np.random.default_rng(0)
    data = make_result("d", "m", (3, 3, 2, 5), rng.normal(size=90))
    from framepost.render import waterfall_bands

    b = waterfall_bands(data)
    assert b.shape == (7, 5) and np.all(np.diff(b, axis=0) >= 0)
    arr = data.array
    for k in range(5):
        assert b[0, k] == arr[..., k].min() and b[6, k] == arr[..., k].max()


def test_single_sample_time_series_is_drawn():
    plot = TimePlot(make_result("v", "m/s", (1, 1, 1, 1), [2.0]), traceability=TRACE)
    assert len(data_groups(tree(render(plot)))[0].findall(NS + "circle")) == 1


def test_title_labels_grid_by_default():
    plot = TimePlot(make_result("v", "m/s", (1, 1, 1, 3), [0, 1, 0]), traceability=TRACE)
    root = tree(render(plot))
    classes = [t.get("class") for t in root.iter(NS + "text")]
    assert "title" in classes and classes.count("label") == 2
    assert any(line.get("class") == "grid" for line in root.iter(NS + "line"))
    plot.set_presentation(grid_lines=False)
    assert not any(line.get("class") == "grid" for line in tree(render(plot)).iter(NS + "line"))


# ---------------------------------------------------------------- corpus

@pytest.mark.parametrize("path", FIXTURES, ids=lambda p: p.stem)
def test_golden(path):
    svg = render(restore(path))
    assert svg == (HERE / "golden" / f"{path.stem}.svg").read_bytes()
    assert render(path) == svg


@pytest.mark.parametrize("path", FIXTURES, ids=lambda p: p.stem)
def test_axis_limit_edits_keep_element_count(path):
    plot = restore(path)
    before = [len(g) for g in data_groups(tree(render(plot)))]
    plot.set_presentation(axis_limits={"x": (-3.0, 7.0), "y": (0.5, 0.75), "c": (-1.0, 1.0)})
    after = [len(g) for g in data_groups(tree(render(plot)))]
    assert before == after and sum(before) > 0


def test_data_is_clipped():
    root = tree(render(restore(FIXTURES[0])))
    ids = {c.get("id") for c in root.iter(NS + "clipPath")}
    for g in data_groups(root):
        assert g.get("clip-path")[5:-1] in ids


def test_writes_file(tmp_path):
    out = tmp_path / "x.svg"
    data = render(FIXTURES[0], out)
    assert out.read_bytes() == data
