"""Run directories: CSV tables, Wigner grids, binary state dumps and metadata.

Every file carries the config hash.  CSVs start with a ``# config_hash=...``
comment line followed by a header row; numbers are written with a fixed
format so identical runs give identical bytes.  Wall-clock data lives only in
``run_info.json`` so that ``meta.json`` stays reproducible.
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError
from .hilbert import Mode, ModeLayout, MixedState, PureState

STATE_MAGIC = b"CATRESST"
TABLE_FMT = ".12g"
WIGNER_FMT = ".9g"


def fmt(v, spec: str = TABLE_FMT) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        out = format(v, spec)
        return "0" if out == "-0" else out
    return str(v)


def csv_text(config_hash: str, header, rows, spec: str = TABLE_FMT) -> str:
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        if len(r) != len(header):
            raise ValueError(f"row of length {len(r)} under a header of length {len(header)}")
        w.writerow([fmt(v, spec) for v in r])
    return buf.getvalue()


def wigner_csv_text(config_hash: str, x_axis, p_axis, values) -> str:
    """First row: x-axis values; first column: p-axis values; body W[p, x]."""
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p\\x"] + [fmt(x, WIGNER_FMT) for x in x_axis])
    for p, row in zip(p_axis, values):
        w.writerow([fmt(p, WIGNER_FMT)] + [fmt(v, WIGNER_FMT) for v in row])
    return buf.getvalue()


def read_csv(path) -> tuple[str, list[str], list[list[str]]]:
    """(config hash, header, rows as strings) of a table written by this module."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# config_hash="):
        raise ConfigurationError(f"{path} has no config hash line")
    rows = list(csv.reader(lines[1:]))
    return lines[0].split("=", 1)[1], rows[0], rows[1:]


def read_table(path) -> dict[str, np.ndarray]:
    """Numeric columns of a table keyed by header name."""
    _, header, rows = read_csv(path)
    cols = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in rows]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = np.array(vals)
    return cols


def read_wigner(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(x_axis, p_axis, W[p, x]) from a Wigner CSV."""
    _, header, rows = read_csv(path)
    x = np.array([float(v) for v in header[1:]])
    p = np.array([float(r[0]) for r in rows])
    w = np.array([[float(v) for v in r[1:]] for r in rows])
    return x, p, w


def dump_state(path, state, config_hash: str) -> None:
    """Binary dump: magic, u32 header length, JSON header, raw little-endian complex128."""
    if isinstance(state, PureState):
        kind, data = "pure", state.amplitudes
    elif isinstance(state, MixedState):
        kind, data = "mixed", state.rho
    else:
        raise TypeError(f"cannot dump {type(state).__name__}")
    header = {
        "config_hash": config_hash,
        "kind": kind,
        "modes": [[m.label, m.dim, m.role] for m in state.layout.modes],
        "shape": list(data.shape),
        "dtype": "<c16",
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(STATE_MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        fh.write(np.ascontiguousarray(data, dtype="<c16").tobytes())


def load_state(path):
    """Inverse of ``dump_state``; returns (state, header dict)."""
    raw = Path(path).read_bytes()
    if raw[: len(STATE_MAGIC)] != STATE_MAGIC:
        raise ConfigurationError(f"{path} is not a catres state dump")
    off = len(STATE_MAGIC)
    (hlen,) = struct.unpack("<I", raw[off : off + 4])
    header = json.loads(raw[off + 4 : off + 4 + hlen])
    data = np.frombuffer(raw[off + 4 + hlen :], dtype="<c16").reshape(header["shape"]).astype(complex)
    layout = ModeLayout(tuple(Mode(lab, dim, role) for lab, dim, role in header["modes"]))
    if header["kind"] == "pure":
        return PureState(layout, data, normalize=False), header
    return MixedState(layout, data, check=False), header


@dataclass
class RunArtifact:
    """Everything one command produced, written under ``out_dir`` by ``write``."""

    experiment: str
    config_hash: str
    config_tree: dict
    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    wigners: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]] = field(default_factory=dict)
    states: dict[str, object] = field(default_factory=dict)
    tolerances: dict[str, float] = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    summary: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    tolerance_failures: list[str] = field(default_factory=list)
    wall_time: float = 0.0
    extra_files: list[str] = field(default_factory=list)

    def add_table(self, name: str, header: list[str], rows: list[list]) -> None:
        self.tables[name] = (list(header), [list(r) for r in rows])

    def meta(self) -> dict:
        from . import kernels

        return {
            "config_hash": self.config_hash,
            "experiment": self.experiment,
            "code_version": __version__,
            "kernel_backend": kernels.BACKEND,
            "config": self.config_tree,
            "tolerances_achieved": {k: float(v) for k, v in sorted(self.tolerances.items())},
            "checks": dict(sorted(self.checks.items())),
            "summary": {k: _jsonable(v) for k, v in self.summary.items()},
            "notes": list(self.notes),
            "tolerance_failures": list(self.tolerance_failures),
            "files": sorted(
                list(self.tables) + [f"{k}.csv" for k in self.wigners] + [f"{k}.bin" for k in self.states]
                + self.extra_files
            ),
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, (header, rows) in self.tables.items():
            (out / name).write_text(csv_text(self.config_hash, header, rows))
        for name, (x, p, w) in self.wigners.items():
            (out / f"{name}.csv").write_text(wigner_csv_text(self.config_hash, x, p, w))
        for name, st in self.states.items():
            dump_state(out / f"{name}.bin", st, self.config_hash)
        (out / "meta.json").write_text(json.dumps(self.meta(), indent=2, sort_keys=True) + "\n")
        return out

    def write_run_info(self, out_dir, started: str, threads: int) -> None:
        info = {"config_hash": self.config_hash, "started": started, "wall_time_s": self.wall_time, "threads": threads}
        (Path(out_dir) / "run_info.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v
