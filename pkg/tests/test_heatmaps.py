import xml.etree.ElementTree as ET

import pytest

from wardplanner.heatmaps import PALETTE, color_step, heatmap_csv, heatmap_svg, write_heatmap

SVG = "{http://www.w3.org/2000/svg}"


def test_color_steps():
    assert len(PALETTE) == 9
    assert color_step(0, 0, 10) == 0
    assert color_step(10, 0, 10) == 8
    assert color_step(5, 0, 10) == 4
    assert color_step(3, 3, 3) == 0
    steps = [color_step(v, 0, 100) for v in range(101)]
    assert steps == sorted(steps)


def test_csv_layout():
    text = heatmap_csv([[0, 17], [20, 0.5]], ["COTE", "T&O"], ["H1", "H2"], {"seed": 3})
    lines = text.splitlines()
    assert lines[0] == "# seed: 3"
    assert lines[1] == "specialty,H1,H2"
    assert lines[2:] == ["COTE,0,17", "T&O,20,0.50"]


def test_svg_cells_and_labels():
    svg = heatmap_svg([[0, 17], [20, 0]], ["COTE", "T&O"], ["H1", "H2"], "EV beds",
                      {"config_hash": "abc"})
    root = ET.fromstring(svg)
    rects = root.findall(f"{SVG}rect")
    texts = [t.text for t in root.findall(f"{SVG}text")]
    assert len(rects) == 4
    assert {"hospital", "specialty", "COTE", "T&O", "H1", "H2", "17", "20"} <= set(texts)
    assert "config_hash=abc" in root.find(f"{SVG}desc").text
    fills = [r.get("fill") for r in rects]
    assert fills[0] == PALETTE[0] and fills[2] == PALETTE[-1]


def test_svg_shape_check():
    with pytest.raises(ValueError):
        heatmap_svg([[1, 2]], ["A", "B"], ["H1", "H2"])


def test_write_heatmap(tmp_path):
    c, s = write_heatmap([[1]], ["A"], ["H"], tmp_path / "hm")
    assert c.read_text().startswith("specialty,H")
    assert s.read_text().startswith("<svg")
