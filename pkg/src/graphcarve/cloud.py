"""Weighted point clouds with a uniform-cell spatial index.

A WeightedCloud discretizes an n-dimensional measure in R^d as point masses
at resolution ``delta_res``.  Density statements only make sense for radii
at or above the resolution; the dyadic ScaleRange helpers encode that floor.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class ScaleRange:
    """Dyadic scales 2^-j for j_min <= j <= j_max (larger j = finer scale)."""

    j_min: int
    j_max: int

    def __post_init__(self):
        if self.j_min > self.j_max:
            raise InputError(f"empty scale range: j_min={self.j_min} > j_max={self.j_max}")

    @property
    def js(self) -> np.ndarray:
        return np.arange(self.j_min, self.j_max + 1)

    @property
    def radii(self) -> np.ndarray:
        return 2.0 ** (-self.js.astype(float))

    def annulus(self, j: int) -> tuple[float, float]:
        """(outer, inner) radii of the closed shell at scale j."""
        return 2.0 ** (-j), 2.0 ** (-j - 1)

    def __len__(self):
        return self.j_max - self.j_min + 1

    @classmethod
    def default_for(cls, cloud: "WeightedCloud") -> "ScaleRange":
        """Coarsest shell covering the cloud extent, finest one octave above resolution.

        The top shell's outer radius is at least the extent, so no point pair
        escapes the range from above; pairs closer than half the finest
        radius stay below the audit floor.
        """
        extent = cloud.extent()
        if extent <= 0:
            extent = cloud.delta_res
        j_min = math.floor(-math.log2(extent))
        j_max = math.floor(-math.log2(cloud.delta_res)) - 1
        if j_max < j_min:
            j_max = j_min
        return cls(j_min, j_max)


class GridIndex:
    """Uniform-cell index over points in R^d (cell side = resolution).

    Ball queries enumerate only the cells meeting the query box and fall back
    to a full vectorized scan when that box covers more cells than points.
    """

    def __init__(self, coords: np.ndarray, cell: float):
        if cell <= 0:
            raise InputError("grid cell side must be positive")
        self.coords = coords
        self.cell = float(cell)
        self._cells: dict[tuple, np.ndarray] = {}
        if len(coords):
            keys = np.floor(coords / self.cell).astype(np.int64)
            order = np.lexsort(keys.T[::-1])
            sorted_keys = keys[order]
            boundaries = np.nonzero(np.any(np.diff(sorted_keys, axis=0) != 0, axis=1))[0] + 1
            starts = np.concatenate([[0], boundaries, [len(order)]])
            for a, b in zip(starts[:-1], starts[1:]):
                self._cells[tuple(sorted_keys[a])] = np.sort(order[a:b])

    def cell_of(self, point: np.ndarray) -> tuple:
        return tuple(np.floor(np.asarray(point, dtype=float) / self.cell).astype(np.int64))

    def ball(self, center: np.ndarray, radius: float, strict: bool = False) -> np.ndarray:
        """Sorted indices of points with |x - center| <= radius (< if strict)."""
        n_pts = len(self.coords)
        if n_pts == 0 or radius < 0:
            return np.empty(0, dtype=np.intp)
        center = np.asarray(center, dtype=float)
        lo = np.floor((center - radius) / self.cell).astype(np.int64)
        hi = np.floor((center + radius) / self.cell).astype(np.int64)
        n_cells = float(np.prod((hi - lo + 1).astype(float)))
        if n_cells > n_pts:
            cand = np.arange(n_pts)
        else:
            chunks = []
            for key in itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi))):
                hit = self._cells.get(key)
                if hit is not None:
                    chunks.append(hit)
            if not chunks:
                return np.empty(0, dtype=np.intp)
            cand = np.sort(np.concatenate(chunks))
        delta = self.coords[cand] - center
        dist_sq = np.einsum("ij,ij->i", delta, delta)
        r_sq = radius * radius
        keep = dist_sq < r_sq if strict else dist_sq <= r_sq
        return cand[keep]


class WeightedCloud:
    """Finite weighted point set in R^d discretizing an n-dimensional measure."""

    def __init__(self, coords: np.ndarray, weights: np.ndarray, n: int, delta_res: float):
        coords = np.ascontiguousarray(np.asarray(coords, dtype=float))
        weights = np.ascontiguousarray(np.asarray(weights, dtype=float))
        if coords.ndim != 2:
            raise InputError("coords must be an (N, d) array")
        d = coords.shape[1]
        # n == d is allowed: a full-dimensional measure still supports the
        # density diagnostics, though projection-based operations then have
        # no proper subspace to project to.
        if not 1 <= n <= d:
            raise InputError(f"intrinsic dimension must satisfy 1 <= n <= d, got n={n}, d={d}")
        if weights.shape != (coords.shape[0],):
            raise InputError("weights must be a length-N vector")
        if not np.all(np.isfinite(coords)):
            raise InputError("coordinates must be finite")
        if not np.all(np.isfinite(weights)) or (len(weights) and weights.min() <= 0):
            raise InputError("weights must be positive and finite")
        if delta_res <= 0:
            raise InputError("delta_res must be positive")
        coords.setflags(write=False)
        weights.setflags(write=False)
        self.coords = coords
        self.weights = weights
        self.n = int(n)
        self.delta_res = float(delta_res)
        self.grid = GridIndex(coords, delta_res)
        self._extent: float | None = None
        self._check_separation()

    def _check_separation(self):
        """Duplicate guard: pairwise distances must be >= delta_res / 100."""
        guard = self.delta_res / 100.0
        for key, idx in self.grid._cells.items():
            neighborhood = [idx]
            for offset in itertools.product((-1, 0, 1), repeat=self.d):
                if offset <= (0,) * self.d:
                    continue  # forward half only; each pair checked once
                other = self.grid._cells.get(tuple(k + o for k, o in zip(key, offset)))
                if other is not None:
                    neighborhood.append(other)
            cand = np.concatenate(neighborhood)
            if len(cand) < 2:
                continue
            pts = self.coords[cand]
            local = pts[:len(idx)]
            diff = local[:, None, :] - pts[None, :, :]
            dist_sq = np.einsum("ijk,ijk->ij", diff, diff)
            dist_sq[np.arange(len(idx)), np.arange(len(idx))] = np.inf
            if dist_sq.min() < guard * guard:
                a, b = np.unravel_index(int(np.argmin(dist_sq)), dist_sq.shape)
                raise InputError(
                    f"points {cand[a]} and {cand[b]} are closer than delta_res/100 = {guard:g}"
                )

    @property
    def d(self) -> int:
        return self.coords.shape[1]

    def __len__(self):
        return self.coords.shape[0]

    def mass(self, indices=None) -> float:
        if indices is None:
            return float(self.weights.sum())
        return float(self.weights[np.asarray(indices, dtype=np.intp)].sum())

    def extent(self) -> float:
        """Bounding-box diagonal; an upper bound for the diameter."""
        if self._extent is None:
            if len(self) == 0:
                self._extent = 0.0
            else:
                span = self.coords.max(axis=0) - self.coords.min(axis=0)
                self._extent = float(np.linalg.norm(span))
        return self._extent

    def all_indices(self) -> np.ndarray:
        return np.arange(len(self), dtype=np.intp)

    def subcloud(self, indices) -> "WeightedCloud":
        idx = np.asarray(indices, dtype=np.intp)
        return WeightedCloud(self.coords[idx], self.weights[idx], self.n, self.delta_res)
