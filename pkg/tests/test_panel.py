import json

import numpy as np
import pytest

from hdmosum.exceptions import DataValidationError, ParseError
from hdmosum.panel import (
    Panel,
    SpatialLayout,
    load_panel_csv,
    save_layout_json,
    save_panel_csv,
    validate,
)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_default_layout(tmp_path):
    path = write(tmp_path, "a.csv", "x,y\n1,2\n3,4\n5,6\n")
    panel, layout = load_panel_csv(path)
    assert (panel.n, panel.p) == (3, 2)
    assert panel.series_ids == ("x", "y")
    np.testing.assert_array_equal(layout.locations, [[1], [2]])


@pytest.mark.parametrize("cell", ["NaN", "inf", "-Inf"])
def test_non_finite_rejected(tmp_path, cell):
    path = write(tmp_path, "a.csv", f"x,y\n1,2\n{cell},4\n")
    with pytest.raises(DataValidationError, match="non-finite"):
        load_panel_csv(path)


def test_two_dimensional_layout(tmp_path):
    path = write(tmp_path, "a.csv", "a,b\n1,2\n3,4\n")
    lay = write(tmp_path, "l.json", json.dumps({"a": [0, 0], "b": [0, 1]}))
    panel, layout = load_panel_csv(path, lay)
    assert layout.dim == 2
    np.testing.assert_array_equal(layout.locations, [[0, 0], [0, 1]])
    save_layout_json(tmp_path / "l2.json", panel, layout)
    _, again = load_panel_csv(path, tmp_path / "l2.json")
    np.testing.assert_array_equal(again.locations, layout.locations)


def test_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    panel = Panel(rng.standard_normal((7, 3)) * 1e5)
    save_panel_csv(tmp_path / "p.csv", panel)
    back, _ = load_panel_csv(tmp_path / "p.csv")
    np.testing.assert_array_equal(back.values, panel.values)
    assert back.series_ids == panel.series_ids


def test_malformed_inputs(tmp_path):
    with pytest.raises(ParseError):
        load_panel_csv(write(tmp_path, "e.csv", ""))
    with pytest.raises(ParseError):
        load_panel_csv(write(tmp_path, "r.csv", "x,y\n1,2\n3\n"))
    with pytest.raises(ParseError):
        load_panel_csv(write(tmp_path, "t.csv", "x,y\n1,abc\n3,4\n"))
    with pytest.raises(DataValidationError, match="duplicated"):
        load_panel_csv(write(tmp_path, "d.csv", "x,x\n1,2\n3,4\n"))


def test_time_column(tmp_path):
    path = write(tmp_path, "a.csv", "date,x\n2020,1\n2021,2\n")
    panel, _ = load_panel_csv(path, time_column="date")
    assert panel.p == 1
    assert panel.time_index == ("2020", "2021")


def test_validate():
    validate(Panel(np.zeros((3, 2))), SpatialLayout.linear(2))
    with pytest.raises(DataValidationError, match="distinct"):
        validate(Panel(np.zeros((3, 2))), SpatialLayout(np.array([[1], [1]])))
    with pytest.raises(DataValidationError):
        validate(Panel(np.zeros((3, 0))))


def test_values_read_only():
    panel = Panel(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        panel.values[0, 0] = 1.0
