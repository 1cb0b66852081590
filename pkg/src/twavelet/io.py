"""Reading and writing window datasets.

Two on-disk layouts are supported:

* CSV: header row, one row per time step, one column per channel and an
  optional final ``label`` column. Consecutive blocks of ``length`` rows form
  one window. ``length`` and ``sample_rate_hz`` come from a sidecar
  ``<name>.json`` or from the caller.
* Binary: raw little-endian float32, ``count * channels * length`` values in
  window-major, channel-major order, with a sidecar JSON descriptor
  ``{"channels", "length", "sample_rate_hz", "count"}`` (optionally
  ``"labels"``).

A dataset directory holds ``train``/``val``/``test`` splits in either layout.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np

from .errors import InvalidInput
from .signal import WindowSet, ingest_window

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
BINARY_SUFFIXES = (".f32", ".bin")


def sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def _read_sidecar(path: Path) -> dict:
    side = sidecar_path(path)
    if side.exists():
        with open(side) as fh:
            return json.load(fh)
    return {}


def read_csv(path: str | Path, length: int | None = None, sample_rate_hz: float | None = None) -> WindowSet:
    path = Path(path)
    meta = _read_sidecar(path)
    length = length or meta.get("length")
    sample_rate_hz = sample_rate_hz or meta.get("sample_rate_hz")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise InvalidInput(f"{path}: no windows parsed")
    header = [h.strip() for h in rows[0]]
    has_label = header[-1].lower() == "label"
    n_ch = len(header) - int(has_label)
    if n_ch < 1:
        raise InvalidInput(f"{path}: no channel columns")
    try:
        table = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=np.float64)
    except ValueError as exc:
        raise InvalidInput(f"{path}: {exc}") from None
    if table.ndim != 2 or table.shape[1] != len(header):
        raise InvalidInput(f"{path}: ragged rows")
    if length is None:
        length = table.shape[0]
    if sample_rate_hz is None:
        raise InvalidInput(f"{path}: sample rate unknown (no sidecar and none given)")
    count = table.shape[0] // length
    if count == 0:
        raise InvalidInput(f"{path}: no windows parsed")
    if table.shape[0] % length:
        log.warning("%s: dropping %d trailing rows", path, table.shape[0] % length)
    windows, labels = [], []
    for i in range(count):
        block = table[i * length : (i + 1) * length]
        if has_label:
            lab = block[:, -1]
            if np.any(lab != lab[0]):
                raise InvalidInput(f"{path}: label changes inside window {i}")
            labels.append(int(lab[0]))
        else:
            labels.append(-1)
        windows.append(ingest_window(block[:, :n_ch].T, sample_rate_hz).data)
    return WindowSet(np.stack(windows), np.array(labels), float(sample_rate_hz), {"source": str(path)})


def write_csv(path: str | Path, ws: WindowSet) -> None:
    path = Path(path)
    c = ws.channels
    header = [f"ch{i}" for i in range(c)] + (["label"] if ws.labeled else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for x, y in zip(ws.data, ws.labels):
            for t in range(ws.length):
                row = [repr(float(v)) for v in x[:, t]]
                if ws.labeled:
                    row.append(str(int(y)))
                w.writerow(row)
    with open(sidecar_path(path), "w") as fh:
        json.dump({"channels": c, "length": ws.length, "sample_rate_hz": ws.sample_rate_hz, "count": len(ws)}, fh, indent=2)


def read_binary(path: str | Path) -> WindowSet:
    path = Path(path)
    meta = _read_sidecar(path)
    try:
        c, n, fs, count = (meta[k] for k in ("channels", "length", "sample_rate_hz", "count"))
    except KeyError as exc:
        raise InvalidInput(f"{path}: sidecar descriptor missing {exc}") from None
    raw = np.fromfile(path, dtype="<f4")
    if raw.size == 0 or count == 0:
        raise InvalidInput(f"{path}: no windows parsed")
    if raw.size != c * n * count:
        raise InvalidInput(f"{path}: expected {c * n * count} floats, found {raw.size}")
    blocks = raw.astype(np.float64).reshape(count, c, n)
    data = np.stack([ingest_window(b, fs).data for b in blocks])
    labels = np.asarray(meta.get("labels", [-1] * count), dtype=np.int64)
    return WindowSet(data, labels, float(fs), {"source": str(path)})


def write_binary(path: str | Path, ws: WindowSet) -> None:
    path = Path(path)
    ws.data.astype("<f4").tofile(path)
    meta = {"channels": ws.channels, "length": ws.length, "sample_rate_hz": ws.sample_rate_hz, "count": len(ws)}
    if ws.labeled:
        meta["labels"] = [int(v) for v in ws.labels]
    with open(sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=2)


def read_windows(path: str | Path, length: int | None = None, sample_rate_hz: float | None = None) -> WindowSet:
    path = Path(path)
    if not path.exists():
        raise InvalidInput(f"{path}: no such file")
    if path.stat().st_size == 0:
        raise InvalidInput(f"{path}: no windows parsed")
    if path.suffix.lower() in BINARY_SUFFIXES:
        return read_binary(path)
    return read_csv(path, length, sample_rate_hz)


def find_split(directory: str | Path, split: str) -> Path | None:
    directory = Path(directory)
    for suffix in (".csv",) + BINARY_SUFFIXES:
        p = directory / f"{split}{suffix}"
        if p.exists():
            return p
    return None


def load_split(path: str | Path, split: str, **kw) -> WindowSet:
    """Load ``split`` from a dataset directory, or the whole file if ``path`` is a file."""
    path = Path(path)
    if path.is_dir():
        p = find_split(path, split)
        if p is None:
            raise InvalidInput(f"{path}: no {split} split found")
        return read_windows(p, **kw)
    return read_windows(path, **kw)


def write_dataset(directory: str | Path, splits: dict[str, WindowSet], fmt: str = "csv") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, ws in splits.items():
        if fmt == "csv":
            p = directory / f"{name}.csv"
            write_csv(p, ws)
        elif fmt == "f32":
            p = directory / f"{name}.f32"
            write_binary(p, ws)
        else:
            raise InvalidInput(f"unknown format {fmt!r}")
        out.append(p)
    return out
