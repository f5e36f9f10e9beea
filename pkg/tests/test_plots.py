import xml.etree.ElementTree as ET

import numpy as np

from shadowseg.evalx import histogram
from shadowseg.plots import histogram_svg

NS = "{http://www.w3.org/2000/svg}"


def parse(text):
    return ET.fromstring(text)


def of_class(root, cls):
    return [e for e in root.iter() if e.get("class") == cls]


def test_bars_per_nonempty_bin_and_gt_line():
    a = histogram([3.2, 3.7, 5.1], 1.0)  # bins 3, 5
    b = histogram([4.0, 4.5, 6.9, 6.1], 1.0)  # bins 4, 6
    gt = histogram([3.0, 4.0, 5.0, 6.0, 7.0], 1.0)  # bins 3..7
    root = parse(histogram_svg("t", "r", [("learned", a), ("baseline", b)], gt))
    assert root.tag == NS + "svg"
    bars = of_class(root, "bar")
    assert sorted(e.get("data-series") for e in bars) == ["baseline"] * 2 + ["learned"] * 2
    (line,) = of_class(root, "gt")
    assert line.tag == NS + "polyline"
    assert len(line.get("points").split()) == 5
    labels = [e.text for e in of_class(root, "legend") if e.tag == NS + "text"]
    assert labels == ["learned", "baseline", "ground truth"]


def test_bar_heights_proportional_to_density():
    h = histogram([1.5, 2.5, 2.6, 2.7], 1.0)
    root = parse(histogram_svg("t", "r", [("m", h)]))
    heights = [float(e.get("height")) for e in of_class(root, "bar")]
    assert np.isclose(heights[1] / heights[0], 3.0)
    assert not of_class(root, "gt")


def test_empty_series_still_valid_svg():
    root = parse(histogram_svg("empty & <odd>", "r", [("m", histogram([], 1.0))], histogram([], 1.0)))
    assert not of_class(root, "bar")
    assert of_class(root, "title")[0].text == "empty & <odd>"


def test_deterministic():
    h = histogram(np.linspace(0, 9, 40), 0.5)
    assert histogram_svg("t", "x", [("m", h)], h) == histogram_svg("t", "x", [("m", h)], h)
