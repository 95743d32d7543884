"""Readers and writers for clouds, sidecars, results and evaluation tables.

Formats
-------
cloud CSV
    header ``x0,...,x{D-1}`` plus ``label`` when ground truth is known; one
    point per row, floats written with 17 significant digits so they
    round-trip exactly.
sidecar JSON
    next to the cloud, same stem with ``.json``: n, ambient, seed, preset,
    weights and the manifold specs.
result JSON
    the stratification result (see ``schemas/result.schema.json``).
evaluation CSV
    header ``n,seed,layer,dim,hausdorff,clustering,tangent,delta,resolution,wall_ms``.
"""
from __future__ import annotations

import csv
import json
import math
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .core import StratificationResult, result_from_dict, result_to_dict
from .samplers import ManifoldSpec, PointCloud

EVAL_HEADER = ("n", "seed", "layer", "dim", "hausdorff", "clustering", "tangent", "delta", "resolution",
               "wall_ms")


class DataError(ValueError):
    """Malformed or missing input data (exit code 3 on the command line)."""


class UsageError(ValueError):
    """Invalid configuration or arguments (exit code 2 on the command line)."""


def load_schema(name: str) -> dict:
    text = resources.files("slabeling").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(data: dict, name: str):
    try:
        jsonschema.validate(data, load_schema(name))
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise DataError(f"{name} document invalid at {path}: {e.message}") from None


def _dump(data: dict, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def _read_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataError(f"missing file: {path}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from None


# --- clouds ----------------------------------------------------------------------


def cloud_stem(preset: str, n: int, seed: int) -> str:
    return f"{preset}_n{n}_s{seed}"


def sidecar_path(cloud_path) -> Path:
    return Path(cloud_path).with_suffix(".json")


def write_cloud(pc: PointCloud, path, preset: str | None = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    D = pc.ambient
    header = [f"x{j}" for j in range(D)]
    with_labels = pc.true_labels is not None
    if with_labels:
        header.append("label")
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(pc.points):
            cells = [f"{v:.17g}" for v in row]
            if with_labels:
                cells.append(str(int(pc.true_labels[i])))
            w.writerow(cells)
    side = {
        "n": pc.n,
        "ambient": D,
        "seed": pc.seed,
        "preset": preset,
        "weights": None if pc.weights is None else [float(w) for w in pc.weights],
        "specs": None if pc.specs is None else [s.to_dict() for s in pc.specs],
        "has_labels": with_labels,
    }
    validate(side, "sidecar")
    _dump(side, sidecar_path(path))


def read_cloud(path, require_sidecar: bool = False) -> PointCloud:
    """Parse a cloud CSV (and its sidecar when present). Parse errors name the
    file and line."""
    path = Path(path)
    try:
        f = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"missing file: {path}") from None
    with f:
        rows = csv.reader(f)
        try:
            header = next(rows)
        except StopIteration:
            raise UsageError(f"{path}: empty cloud file") from None
        D = sum(1 for h in header if h != "label")
        if header[:D] != [f"x{j}" for j in range(D)] or header[D:] not in ([], ["label"]):
            raise DataError(f"{path}:1: bad header {','.join(header)!r}")
        has_label = len(header) == D + 1
        pts, labels = [], []
        for row in rows:
            line = rows.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            try:
                pts.append([float(v) for v in row[:D]])
                if has_label:
                    labels.append(int(row[D]))
            except ValueError as e:
                raise DataError(f"{path}:{line}: {e}") from None
    if not pts:
        raise UsageError(f"{path}: cloud has no points")
    x = np.asarray(pts, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataError(f"{path}: non-finite coordinates")
    side_file = sidecar_path(path)
    specs = weights = seed = None
    if side_file.exists():
        side = _read_json(side_file)
        validate(side, "sidecar")
        if side["n"] != len(x) or side["ambient"] != D:
            raise DataError(f"{side_file}: sidecar shape ({side['n']}, {side['ambient']}) "
                            f"does not match cloud ({len(x)}, {D})")
        specs = None if side["specs"] is None else [ManifoldSpec.from_dict(s) for s in side["specs"]]
        weights, seed = side["weights"], side["seed"]
    elif require_sidecar:
        raise DataError(f"missing sidecar: expected {side_file}")
    return PointCloud(x, np.asarray(labels) if has_label else None, None, specs, seed, weights)


# --- results ---------------------------------------------------------------------


def write_result(res: StratificationResult, path, source: str | None = None):
    data = result_to_dict(res)
    data["source"] = source
    validate(data, "result")
    _dump(data, Path(path))


def read_result(path) -> tuple[StratificationResult, dict]:
    data = _read_json(Path(path))
    validate(data, "result")
    return result_from_dict(data), data


# --- evaluation tables -----------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return "inf" if math.isinf(v) else f"{v:.10g}"
    return str(v)


def append_eval_rows(path, rows: list):
    """Append rows (dicts keyed by :data:`EVAL_HEADER`), writing the header
    when the file is new; rows replacing an existing (n, seed, layer) key
    overwrite it so reruns leave the table unchanged."""
    path = Path(path)
    existing = read_eval_rows(path) if path.exists() else []
    keys = {(r["n"], r["seed"], r["layer"]) for r in rows}
    kept = [r for r in existing if (r["n"], r["seed"], r["layer"]) not in keys]
    merged = sorted(kept + rows, key=lambda r: (r["n"], r["seed"], r["layer"]))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(EVAL_HEADER)
        for r in merged:
            w.writerow([_fmt(r[k]) for k in EVAL_HEADER])


def read_eval_rows(path) -> list:
    path = Path(path)
    try:
        f = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"missing file: {path}") from None
    out = []
    with f:
        rows = csv.reader(f)
        header = next(rows, None)
        if header is None or tuple(header) != EVAL_HEADER:
            raise DataError(f"{path}:1: expected header {','.join(EVAL_HEADER)}")
        for row in rows:
            if not row:
                continue
            if len(row) != len(EVAL_HEADER):
                raise DataError(f"{path}:{rows.line_num}: expected {len(EVAL_HEADER)} fields")
            try:
                rec = dict(zip(EVAL_HEADER, row))
                for k in ("n", "seed", "layer", "dim"):
                    rec[k] = int(rec[k])
                for k in ("hausdorff", "clustering", "tangent", "delta", "resolution", "wall_ms"):
                    rec[k] = float(rec[k])
            except ValueError as e:
                raise DataError(f"{path}:{rows.line_num}: {e}") from None
            out.append(rec)
    return out
