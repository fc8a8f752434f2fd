"""Raw mask files with JSON sidecars, rater manifests and JSON/CSV reports.

A mask stored at ``P`` has its little-endian payload in ``P`` and a header
in ``P + ".json"``::

    {"dims": [...], "order": "row-major", "dtype": "u8" | "f64", "kind": "binary" | "soft"}

A manifest lists rater mask paths relative to the manifest's directory.
All writes go through a temporary file and an atomic rename.
"""
from __future__ import annotations

import csv
import io as _stdio
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GridMismatchError, MaskFormatError
from .grid import BinaryMask, Grid, RaterStack, SoftMask

SCHEMA_VERSION = 1
_DTYPES = {"u8": np.dtype("<u1"), "f64": np.dtype("<f8")}


def atomic_write(path, data: bytes | str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_mask(path, mask: BinaryMask | SoftMask):
    soft = isinstance(mask, SoftMask)
    dtype = "f64" if soft else "u8"
    header = {"dims": list(mask.grid.dims), "order": "row-major", "dtype": dtype,
              "kind": "soft" if soft else "binary"}
    payload = np.ascontiguousarray(mask.flat, dtype=_DTYPES[dtype]).tobytes()
    atomic_write(path, payload)
    atomic_write(str(path) + ".json", json.dumps(header, indent=2) + "\n")


def read_mask(path, neighborhood=None) -> BinaryMask | SoftMask:
    path = Path(path)
    try:
        header = json.loads(Path(str(path) + ".json").read_text())
        raw = path.read_bytes()
    except json.JSONDecodeError as exc:
        raise MaskFormatError(f"{path}.json: {exc}") from exc
    for key in ("dims", "order", "dtype", "kind"):
        if key not in header:
            raise MaskFormatError(f"{path}.json: missing {key!r}")
    if header["order"] != "row-major":
        raise MaskFormatError(f"{path}: unsupported order {header['order']!r}")
    if header["dtype"] not in _DTYPES or header["kind"] not in ("binary", "soft"):
        raise MaskFormatError(f"{path}: unsupported dtype/kind {header['dtype']}/{header['kind']}")
    dims = tuple(int(d) for d in header["dims"])
    dtype = _DTYPES[header["dtype"]]
    n = int(np.prod(dims))
    if len(raw) != n * dtype.itemsize:
        raise MaskFormatError(f"{path}: payload has {len(raw)} bytes, expected {n * dtype.itemsize}")
    values = np.frombuffer(raw, dtype=dtype)
    grid = Grid(dims, neighborhood)
    if header["kind"] == "binary":
        if not np.isin(values, (0, 1)).all():
            raise MaskFormatError(f"{path}: binary payload holds values other than 0/1")
        return BinaryMask(grid, values.astype(bool))
    try:
        return SoftMask(grid, values.astype(np.float64))
    except ValueError as exc:
        raise MaskFormatError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class Manifest:
    name: str
    dims: tuple[int, ...]
    neighborhood: str | None
    raters: tuple[str, ...]

    def to_json(self) -> str:
        return json.dumps({"name": self.name, "dims": list(self.dims),
                           "neighborhood": self.neighborhood, "raters": list(self.raters)},
                          indent=2) + "\n"


def load_manifest(path) -> tuple[Manifest, RaterStack]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MaskFormatError(f"{path}: {exc}") from exc
    try:
        man = Manifest(str(doc.get("name", path.stem)), tuple(int(d) for d in doc["dims"]),
                       doc.get("neighborhood"), tuple(doc["raters"]))
    except (KeyError, TypeError) as exc:
        raise MaskFormatError(f"{path}: malformed manifest ({exc})") from exc
    if not man.raters:
        raise MaskFormatError(f"{path}: manifest lists no raters")
    grid = Grid(man.dims, man.neighborhood)
    masks = []
    for rel in man.raters:
        m = read_mask(path.parent / rel, grid.neighborhood)
        if not isinstance(m, BinaryMask):
            raise MaskFormatError(f"{rel}: rater masks must be binary")
        if m.grid != grid:
            raise GridMismatchError(f"{rel}: dims {m.grid.dims} differ from manifest {man.dims}")
        masks.append(m)
    return man, RaterStack(grid, tuple(masks))


def save_stack(directory, stack: RaterStack, name: str) -> Path:
    """Write every rater mask and a manifest into ``directory``; returns the manifest path."""
    directory = Path(directory)
    raters = []
    for k, m in enumerate(stack.masks):
        rel = f"rater{k}.raw"
        write_mask(directory / rel, m)
        raters.append(rel)
    man = Manifest(name, stack.grid.dims, stack.grid.neighborhood.value, tuple(raters))
    out = directory / "manifest.json"
    atomic_write(out, man.to_json())
    return out


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def report_json(report: dict) -> str:
    doc = {"schema_version": SCHEMA_VERSION}
    doc.update(report)
    return json.dumps(_clean(doc), indent=2) + "\n"


def write_report(path, report: dict):
    atomic_write(path, report_json(report))


def rows_csv(rows: list[dict]) -> str:
    """Flatten report rows to CSV; the header is the union of keys in first-seen order."""
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    buf = _stdio.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _clean(v) for k, v in r.items()})
    return buf.getvalue()


def export_png(mask: BinaryMask | SoftMask, path, slice_index: int = 0, outline=None):
    """Debug rendering of one 2D slice: greyscale values with an optional mask outline."""
    from PIL import Image
    from scipy import ndimage

    vals = mask.values.astype(np.float64)
    if vals.ndim == 3:
        vals = vals[slice_index]
    elif vals.ndim == 1:
        vals = vals[None, :]
    img = (vals * 200).astype(np.uint8)
    if outline is not None:
        o = outline.values
        o = o[slice_index] if o.ndim == 3 else (o[None, :] if o.ndim == 1 else o)
        img[o & ~ndimage.binary_erosion(o)] = 255
    buf = _stdio.BytesIO()
    Image.fromarray(img, mode="L").save(buf, format="PNG")
    atomic_write(path, buf.getvalue())
