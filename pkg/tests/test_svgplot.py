import xml.etree.ElementTree as ET

import pytest

from onthemove.svgplot import Series, line_chart, nice_ticks

NS = "{http://www.w3.org/2000/svg}"


@pytest.mark.parametrize("lo, hi", [(0, 10), (0, 1), (3.2, 17.9), (0, 0.37), (5, 5)])
def test_ticks_cover_range(lo, hi):
    t = nice_ticks(lo, hi)
    assert t[0] <= lo and t[-1] >= hi
    steps = {round(b - a, 9) for a, b in zip(t, t[1:])}
    assert len(steps) == 1
    assert 2 <= len(t) <= 12


def test_chart_is_well_formed():
    svg = line_chart(
        [Series("a & b", [(0, 1), (1, 2), (2, 4)]), Series("<c>", [(0, 3)])], "title", "x", "y", x_range=(0, 10)
    )
    root = ET.fromstring(svg)
    assert root.tag == NS + "svg"
    assert len(root.findall(f"{NS}polyline")) == 1  # a single point draws only a marker
    assert len(root.findall(f"{NS}circle")) == 4
    labels = [t.text for t in root.iter(f"{NS}text")]
    assert "a & b" in labels and "<c>" in labels


def test_points_inside_plot_area():
    svg = line_chart([Series("s", [(0, 5), (10, 20)])], "t", "x", "y")
    root = ET.fromstring(svg)
    frame = [r for r in root.findall(f"{NS}rect") if r.get("fill") == "none"][0]
    x0, y0 = float(frame.get("x")), float(frame.get("y"))
    x1, y1 = x0 + float(frame.get("width")), y0 + float(frame.get("height"))
    for c in root.findall(f"{NS}circle"):
        cx, cy = float(c.get("cx")), float(c.get("cy"))
        assert x0 - 1e-6 <= cx <= x1 + 1e-6 and y0 - 1e-6 <= cy <= y1 + 1e-6


def test_empty_chart():
    root = ET.fromstring(line_chart([], "empty", "x", "y"))
    assert not root.findall(f"{NS}polyline") and not root.findall(f"{NS}circle")
