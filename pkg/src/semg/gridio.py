"""File exporters with byte-stable formatting.

All text artifacts use LF line endings and locale-independent number
formatting so re-runs diff clean: maps as plain "P2" PGM heatmaps or
headerless CSV grids, metrics as RFC-4180-style CSV with 6-decimal fixed
floats, and JSON documents written atomically.
"""

import json
import os
import tempfile

import numpy as np

from .errors import ContractViolation
from .rf_env import SnrMap

__all__ = [
    "export_pgm",
    "export_map_csv",
    "export_measurements_csv",
    "MetricsWriter",
    "append_metrics",
    "write_json_atomic",
]


def export_pgm(snr_map: SnrMap, config, path):
    """Plain PGM ("P2"), maxval 255, linear quantization of snr_clamp with
    round-half-up, one raster row per line."""
    lo, hi = config.snr_clamp
    scaled = 255.0 * (snr_map.values - lo) / (hi - lo)
    # np.round would round half to even; the format pins half-up.
    pix = np.floor(scaled + 0.5).astype(np.int64)
    pix = np.clip(pix, 0, 255)
    lines = ["P2", f"{snr_map.width} {snr_map.height}", "255"]
    for row in pix:
        lines.append(" ".join(str(int(v)) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def export_map_csv(snr_map: SnrMap, path):
    """Headerless row-major grid, 6 decimal places, one grid row per line."""
    with open(path, "w", newline="\n") as fh:
        for row in snr_map.values:
            fh.write(",".join(f"{v:.6f}" for v in row) + "\n")


def export_measurements_csv(measurements, path):
    """Visit-ordered rows (cell_x, cell_y, order_index, value_db)."""
    with open(path, "w", newline="\n") as fh:
        fh.write("cell_x,cell_y,order_index,value_db\n")
        for idx, (cx, cy) in enumerate(measurements.order):
            v = measurements.values[cy, cx]
            fh.write(f"{cx},{cy},{idx},{v:.6f}\n")


def _format_field(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6f}"
    text = str(value)
    if any(ch in text for ch in ",\"\n"):
        text = '"' + text.replace('"', '""') + '"'
    return text


class MetricsWriter:
    """Append-only CSV; header fixed at first append, arity checked after."""

    def __init__(self, path, header):
        self.path = path
        self.header = list(header)
        self._started = os.path.exists(path) and os.path.getsize(path) > 0

    def append(self, row):
        if len(row) != len(self.header):
            raise ContractViolation(
                f"row has {len(row)} fields, header has {len(self.header)}"
            )
        with open(self.path, "a", newline="\n") as fh:
            if not self._started:
                fh.write(",".join(self.header) + "\n")
                self._started = True
            fh.write(",".join(_format_field(v) for v in row) + "\n")


def append_metrics(path, header, row):
    MetricsWriter(path, header).append(row)


def write_json_atomic(obj, path):
    """Write JSON via a temp file + rename so readers never see a partial
    document."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
