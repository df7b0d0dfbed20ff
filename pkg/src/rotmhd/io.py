"""Result persistence: CSV time series, binary field snapshots, run manifests.

Snapshot layout::

    b"RMHD1\\n"                 magic
    uint32 little-endian       header length in bytes
    header                     UTF-8 JSON: n, length, time, fields, dtype, kind
    payload                    little-endian float64, one n*n row-major block per field
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .dynamics import CSV_COLUMNS, DiagnosticsRecord, LimitState, PrimitiveState
from .errors import IoError
from .grid import GridSpec, ScalarField, VectorField

__all__ = ["write_timeseries", "write_snapshot", "read_snapshot", "FieldSnapshot", "RunManifest",
           "atomic_write_text", "SNAPSHOT_MAGIC"]

SNAPSHOT_MAGIC = b"RMHD1\n"
_PRIMITIVE_FIELDS = ("rho", "u_x", "u_y", "b_x", "b_y")
_LIMIT_FIELDS = ("r", "u_x", "u_y", "b_x", "b_y")


def _fmt(x: float) -> str:
    return "%.17g" % x


def write_timeseries(records: Iterable[DiagnosticsRecord], path) -> int:
    """Write diagnostics as CSV with the fixed column order of ``CSV_COLUMNS``.

    Returns the number of data rows. An empty stream produces a header-only file.
    """
    path = Path(path)
    count = 0
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for rec in records:
                w.writerow([_fmt(v) for v in rec.row()])
                count += 1
    except OSError as exc:
        raise IoError(f"cannot write time series {path}: {exc}") from exc
    return count


@dataclass
class FieldSnapshot:
    grid: GridSpec
    time: float
    kind: str
    fields: dict[str, np.ndarray]

    def to_state(self):
        f = self.fields
        u = VectorField.from_arrays(self.grid, f["u_x"], f["u_y"])
        b = VectorField.from_arrays(self.grid, f["b_x"], f["b_y"])
        if self.kind == "primitive":
            return PrimitiveState(self.time, ScalarField(self.grid, f["rho"]), u, b)
        return LimitState(self.time, ScalarField(self.grid, f["r"]), u, b)


def write_snapshot(path, state) -> None:
    """Write a state as a bit-exact binary snapshot."""
    if isinstance(state, PrimitiveState):
        kind, names, arrays = "primitive", _PRIMITIVE_FIELDS, (state.rho.values,)
    elif isinstance(state, LimitState):
        kind, names, arrays = "limit", _LIMIT_FIELDS, (state.r.values,)
    else:
        raise TypeError("expected a PrimitiveState or LimitState")
    arrays = arrays + (state.u.x.values, state.u.y.values, state.b.x.values, state.b.y.values)
    grid = state.grid
    header = json.dumps({"n": grid.n, "length": grid.length, "time": float(state.time).hex(),
                         "fields": list(names), "dtype": "<f8", "kind": kind}, sort_keys=True).encode()
    payload = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    data = SNAPSHOT_MAGIC + struct.pack("<I", len(header)) + header + payload
    _atomic_write(Path(path), data)


def read_snapshot(path) -> FieldSnapshot:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read snapshot {path}: {exc}") from exc
    if not data.startswith(SNAPSHOT_MAGIC):
        raise IoError(f"{path} is not a snapshot (bad magic)")
    off = len(SNAPSHOT_MAGIC)
    try:
        (hlen,) = struct.unpack_from("<I", data, off)
        header = json.loads(data[off + 4: off + 4 + hlen])
        n = int(header["n"])
        names = header["fields"]
        body = data[off + 4 + hlen:]
        expected = len(names) * n * n * 8
        if len(body) != expected:
            raise ValueError(f"payload has {len(body)} bytes, expected {expected}")
        flat = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(len(names), n, n)
        grid = GridSpec(n, float(header["length"]))
        time = float.fromhex(header["time"])
    except (struct.error, KeyError, ValueError) as exc:
        raise IoError(f"corrupt snapshot {path}: {exc}") from exc
    return FieldSnapshot(grid, time, header["kind"], {k: flat[i].copy() for i, k in enumerate(names)})


def _atomic_write(path: Path, data: bytes) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def atomic_write_text(path, text: str) -> None:
    _atomic_write(Path(path), text.encode("utf-8"))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Summary of one invocation, written atomically once the work is done."""

    config_hash: str
    version: str
    runs: list[dict] = field(default_factory=list)
    files: list[dict] = field(default_factory=list)
    wall_clock: float = 0.0

    def inventory(self, root) -> None:
        """Record every file below ``root`` (except the manifest) with size and sha256."""
        root = Path(root)
        self.files = [
            {"path": p.relative_to(root).as_posix(), "bytes": p.stat().st_size, "sha256": _sha256(p)}
            for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != "manifest.json" and not p.name.startswith(".")
        ]

    def write(self, root) -> Path:
        path = Path(root) / "manifest.json"
        body = {"config_hash": self.config_hash, "version": self.version, "runs": self.runs,
                "files": self.files, "wall_clock": self.wall_clock}
        atomic_write_text(path, json.dumps(body, indent=1, sort_keys=True, default=_plain) + "\n")
        return path


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj).__name__)
