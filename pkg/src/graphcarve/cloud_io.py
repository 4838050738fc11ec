"""Point-cloud file formats: CSV with x1..xd,weight header and JSON."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .cloud import WeightedCloud
from .errors import InputError

SCHEMA = "graphcarve/1"


def estimate_delta_res(coords: np.ndarray) -> float:
    """Smallest nearest-neighbor distance, a usable default resolution."""
    if len(coords) < 2:
        raise InputError("cannot estimate a resolution from fewer than two points")
    best = np.inf
    for start in range(0, len(coords), 512):
        block = coords[start:start + 512]
        diff = block[:, None, :] - coords[None, :, :]
        dist_sq = np.einsum("ijk,ijk->ij", diff, diff)
        rows = np.arange(len(block))
        dist_sq[rows, start + rows] = np.inf
        best = min(best, float(dist_sq.min()))
    return float(np.sqrt(best))


def save_cloud_csv(cloud: WeightedCloud, path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(cloud.d)] + ["weight"])
        for row, w in zip(cloud.coords, cloud.weights):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(w))])


def load_cloud_csv(path, n: int, delta_res: float | None = None) -> WeightedCloud:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "weight" or not header[0].startswith("x"):
            raise InputError(f"{path}: expected header x1,...,xd,weight")
        d = len(header) - 1
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise InputError(f"{path}: no data rows")
    data = np.asarray(rows)
    if data.shape[1] != d + 1:
        raise InputError(f"{path}: row width does not match header")
    coords, weights = data[:, :d], data[:, d]
    if delta_res is None:
        delta_res = estimate_delta_res(coords)
    return WeightedCloud(coords, weights, n=n, delta_res=delta_res)


def save_cloud_json(cloud: WeightedCloud, path) -> None:
    payload = {
        "schema": SCHEMA,
        "d": cloud.d,
        "n": cloud.n,
        "delta_res": cloud.delta_res,
        "points": [{"x": list(map(float, x)), "w": float(w)}
                   for x, w in zip(cloud.coords, cloud.weights)],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_cloud_json(path) -> WeightedCloud:
    data = json.loads(Path(path).read_text())
    for key in ("d", "n", "delta_res", "points"):
        if key not in data:
            raise InputError(f"{path}: missing field {key!r}")
    coords = np.asarray([p["x"] for p in data["points"]], dtype=float)
    weights = np.asarray([p["w"] for p in data["points"]], dtype=float)
    if coords.ndim != 2 or coords.shape[1] != data["d"]:
        raise InputError(f"{path}: point dimensions do not match d")
    return WeightedCloud(coords, weights, n=int(data["n"]),
                         delta_res=float(data["delta_res"]))


def load_cloud(path, n: int | None = None, delta_res: float | None = None) -> WeightedCloud:
    """Dispatch on extension: .json is self-contained, .csv needs n."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"cloud file not found: {path}")
    if path.suffix.lower() == ".json":
        return load_cloud_json(path)
    if path.suffix.lower() == ".csv":
        if n is None:
            raise InputError("loading CSV requires the intrinsic dimension n")
        return load_cloud_csv(path, n=n, delta_res=delta_res)
    raise InputError(f"unrecognized cloud file extension: {path.suffix!r}")
