import json

import numpy as np
import pytest

from semg.errors import ContractViolation
from semg.gridio import (
    MetricsWriter,
    append_metrics,
    export_map_csv,
    export_measurements_csv,
    export_pgm,
    write_json_atomic,
)
from semg.mission import MeasurementSet
from semg.rf_env import EnvConfig, SnrMap


def read(path):
    with open(path, "rb") as fh:
        return fh.read().decode("utf-8")


class TestPgm:
    def test_hand_quantization(self, tmp_path):
        """{-20, 20, 60, -20} -> {0, 128, 255, 0}: 20 dB lands exactly on
        127.5 and the format rounds half up."""
        cfg = EnvConfig(width_cells=2, height_cells=2)
        m = SnrMap(2, 2, 10.0, np.array([[-20.0, 20.0], [60.0, -20.0]]))
        p = tmp_path / "m.pgm"
        export_pgm(m, cfg, p)
        assert read(p) == "P2\n2 2\n255\n0 128\n255 0\n"

    def test_extremes(self, tmp_path):
        cfg = EnvConfig(width_cells=3, height_cells=1)
        m = SnrMap(3, 1, 10.0, np.array([[-20.0, -20.0, -20.0]]))
        p = tmp_path / "lo.pgm"
        export_pgm(m, cfg, p)
        assert read(p).splitlines()[-1] == "0 0 0"
        m = SnrMap(3, 1, 10.0, np.array([[60.0, 60.0, 60.0]]))
        export_pgm(m, cfg, p)
        assert read(p).splitlines()[-1] == "255 255 255"

    def test_header(self, tmp_path):
        cfg = EnvConfig(width_cells=5, height_cells=3)
        m = SnrMap(5, 3, 10.0, np.zeros((3, 5)))
        p = tmp_path / "h.pgm"
        export_pgm(m, cfg, p)
        lines = read(p).splitlines()
        assert lines[0] == "P2"
        assert lines[1] == "5 3"
        assert lines[2] == "255"
        assert len(lines) == 6

    def test_lf_only(self, tmp_path):
        cfg = EnvConfig(width_cells=2, height_cells=2)
        m = SnrMap(2, 2, 10.0, np.zeros((2, 2)))
        p = tmp_path / "m.pgm"
        export_pgm(m, cfg, p)
        raw = p.read_bytes()
        assert b"\r" not in raw
        assert raw.endswith(b"\n")


class TestMapCsv:
    def test_layout_and_precision(self, tmp_path):
        m = SnrMap(2, 2, 10.0, np.array([[1.5, -2.0], [0.1234567, 3.0]]))
        p = tmp_path / "m.csv"
        export_map_csv(m, p)
        assert read(p) == "1.500000,-2.000000\n0.123457,3.000000\n"


class TestMeasurementsCsv:
    def test_rows_in_visit_order(self, tmp_path):
        mask = np.zeros((2, 2), dtype=bool)
        values = np.full((2, 2), np.nan)
        mask[1, 0] = mask[0, 1] = True
        values[1, 0] = 12.5
        values[0, 1] = -3.0
        meas = MeasurementSet(mask, values, np.array([[0, 1], [1, 0]]))
        p = tmp_path / "meas.csv"
        export_measurements_csv(meas, p)
        assert read(p) == (
            "cell_x,cell_y,order_index,value_db\n"
            "0,1,0,12.500000\n"
            "1,0,1,-3.000000\n"
        )


class TestMetrics:
    def test_header_once_then_rows(self, tmp_path):
        p = tmp_path / "m.csv"
        w = MetricsWriter(p, ["step", "loss"])
        for i in range(10):
            w.append([i, 0.5])
        lines = read(p).splitlines()
        assert len(lines) == 11
        assert lines[0] == "step,loss"
        assert lines[1] == "0,0.500000"

    def test_float_formatting(self, tmp_path):
        p = tmp_path / "m.csv"
        append_metrics(p, ["a", "b", "c"], [1.5, True, "x,y"])
        assert read(p).splitlines()[1] == '1.500000,true,"x,y"'

    def test_arity_mismatch(self, tmp_path):
        w = MetricsWriter(tmp_path / "m.csv", ["a", "b"])
        with pytest.raises(ContractViolation):
            w.append([1, 2, 3])

    def test_reopen_appends_without_header(self, tmp_path):
        p = tmp_path / "m.csv"
        MetricsWriter(p, ["a"]).append([1])
        MetricsWriter(p, ["a"]).append([2])
        assert read(p).splitlines() == ["a", "1", "2"]


class TestJsonAtomic:
    def test_content_and_no_leftover_temp(self, tmp_path):
        p = tmp_path / "doc.json"
        write_json_atomic({"b": 2, "a": [1, 2]}, p)
        assert json.loads(read(p)) == {"a": [1, 2], "b": 2}
        assert sorted(f.name for f in tmp_path.iterdir()) == ["doc.json"]
