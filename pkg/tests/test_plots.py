import re
import xml.etree.ElementTree as ET

import pytest

from qrlander.errors import FormatError
from qrlander.plots import emit_plots

SVG = "{http://www.w3.org/2000/svg}"
HEADER = "episode,total_reward,epsilon,steps,outcome\n"


def write_series(path, n, loss_rows=5):
    path.write_text(HEADER + "".join(f"{i},{i * 1.5 - 3},{0.99 ** i},{10 + i},crashed\n" for i in range(n)))
    upd = path.with_name(path.stem + "_updates.csv")
    upd.write_text("update_index,loss\n" + "".join(f"{i},{10.0 / (i + 1)}\n" for i in range(loss_rows)))
    return path


def charts(svg_path):
    root = ET.parse(svg_path).getroot()
    return {g.get("id"): g for g in root.iter(SVG + "g") if g.get("class") == "chart"}, root


def test_single_series(tmp_path):
    out = emit_plots([write_series(tmp_path / "run.csv", 10)], tmp_path / "out.svg")
    panels, root = charts(out)
    assert root.get("viewBox") == "0 0 960 540"
    assert set(panels) == {"reward", "loss"}
    for g in panels.values():
        assert len(g.findall(SVG + "polyline")) == 1


def test_three_series_legend(tmp_path):
    files = [write_series(tmp_path / f"{name}.csv", 20) for name in ("qrl", "dqn", "ac")]
    out = emit_plots(files, tmp_path / "cmp.svg")
    panels, root = charts(out)
    legend = [t.text for t in root.iter(SVG + "text") if t.text in ("qrl", "dqn", "ac")]
    assert legend == ["qrl", "dqn", "ac"]
    for g in panels.values():
        assert len(g.findall(SVG + "polyline")) == 3


def test_run_directory_label(tmp_path):
    d = tmp_path / "seed_7"
    d.mkdir()
    (d / "episodes.csv").write_text(HEADER + "0,1.0,1.0,5,crashed\n")
    (d / "updates.csv").write_text("update_index,loss\n")
    out = emit_plots([d], tmp_path / "x.svg")
    assert ">seed_7<" in out.read_text()


def test_empty_series_writes_nothing(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text(HEADER)
    with pytest.raises(FormatError):
        emit_plots([p], tmp_path / "no.svg")
    assert not (tmp_path / "no.svg").exists()


def test_no_inputs(tmp_path):
    with pytest.raises(FormatError):
        emit_plots([], tmp_path / "no.svg")


def test_malformed_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text(HEADER + "0,1.0,1.0,5,crashed\n1,2.0,1.0\n")
    with pytest.raises(FormatError, match=r"bad\.csv:3:"):
        emit_plots([p], tmp_path / "no.svg")
    assert not (tmp_path / "no.svg").exists()


def test_deterministic(tmp_path):
    f = write_series(tmp_path / "run.csv", 150)
    a = emit_plots([f], tmp_path / "a.svg").read_bytes()
    b = emit_plots([f], tmp_path / "b.svg").read_bytes()
    assert a == b
    assert len(re.findall(r"<polyline", a.decode())) == 2
