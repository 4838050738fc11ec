"""Lipschitz graph certification, extension, and containment reporting.

A set whose two-sided cone visits vanish at aperture theta projects
bi-Lipschitzly onto the horizontal coordinates: every pair satisfies
|horizontal difference| >= theta * |difference|.  ``certify_graph`` verifies
the pairwise bound and records the exact slope constant; the coordinatewise
midpoint extension then produces a globally Lipschitz map agreeing with the
samples, at the cost of inflating the constant by sqrt(d - n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cloud import WeightedCloud
from .errors import AlgorithmInvariantViolation, InputError, NotAGraphError

_CHUNK = 256


@dataclass(frozen=True)
class GraphModel:
    """Finite graph samples over the horizontal coordinates plus a slope budget."""

    n: int
    sample_base: np.ndarray     # (N, n) horizontal coordinates
    sample_values: np.ndarray   # (N, d - n) vertical coordinates
    lipschitz: float            # exact pairwise slope maximum
    theta: float

    @property
    def d(self) -> int:
        return self.n + self.sample_values.shape[1]

    @property
    def inflated_lipschitz(self) -> float:
        """Lipschitz bound of the coordinatewise midpoint extension."""
        codim = self.sample_values.shape[1]
        return math.sqrt(codim) * self.lipschitz

    def _site_table(self) -> dict:
        return {row.tobytes(): i for i, row in enumerate(self.sample_base)}


def certify_graph(cloud: WeightedCloud, subset=None, theta: float = 0.1) -> GraphModel:
    """Verify the pairwise projection bound and build the sample graph.

    Raises NotAGraphError with a witnessing pair when some pair has
    |horizontal difference| < theta * |difference|.
    """
    if not 0.0 < theta < 1.0:
        raise InputError("theta must lie in (0, 1)")
    idx = cloud.all_indices() if subset is None else np.sort(np.asarray(subset, dtype=np.intp))
    n = cloud.n
    pts = cloud.coords[idx]
    lip = 0.0
    for start in range(0, len(pts), _CHUNK):
        block = pts[start:start + _CHUNK]
        diff = block[:, None, :] - pts[None, :, :]
        dist_sq = np.einsum("ijk,ijk->ij", diff, diff)
        horiz = diff[:, :, :n]
        horiz_sq = np.einsum("ijk,ijk->ij", horiz, horiz)
        bad = horiz_sq < theta * theta * dist_sq
        if bad.any():
            a, b = np.unravel_index(int(np.argmax(bad)), bad.shape)
            i, j = int(idx[start + a]), int(idx[b])
            ratio = math.sqrt(horiz_sq[a, b] / dist_sq[a, b]) if dist_sq[a, b] else 0.0
            raise NotAGraphError(
                f"pair ({i}, {j}) has horizontal share {ratio:.4f} < theta = {theta}",
                witness=(i, j))
        vert_sq = np.maximum(dist_sq - horiz_sq, 0.0)
        pos = horiz_sq > 0.0
        if pos.any():
            lip = max(lip, float(np.sqrt(np.max(vert_sq[pos] / horiz_sq[pos]))))
    bound = math.sqrt(max(1.0 - theta * theta, 0.0)) / theta
    if lip > bound + 1e-9:
        raise AlgorithmInvariantViolation(
            f"slope {lip:.6f} exceeds the aperture bound {bound:.6f}")
    return GraphModel(n=n, sample_base=pts[:, :n].copy(),
                      sample_values=pts[:, n:].copy(), lipschitz=lip, theta=theta)


def extend_mcshane(model: GraphModel, queries: np.ndarray) -> np.ndarray:
    """Coordinatewise midpoint extension of the sample map.

    For each output coordinate the value is the average of the two extremal
    Lipschitz extensions, so the result interpolates the samples exactly and
    is L-Lipschitz per coordinate.  Accepts a single query (n,) or a batch
    (Q, n); exact sample sites reproduce their stored values bit for bit.
    """
    if len(model.sample_base) == 0:
        raise InputError("cannot extend an empty sample map")
    q = np.asarray(queries, dtype=float)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    if q.shape[1] != model.n:
        raise InputError(f"queries must have {model.n} coordinates")
    lip = model.lipschitz
    base = model.sample_base
    vals = model.sample_values
    out = np.empty((len(q), vals.shape[1]))
    for start in range(0, len(q), _CHUNK):
        block = q[start:start + _CHUNK]
        diff = block[:, None, :] - base[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        upper = (vals[None, :, :] + lip * dist[:, :, None]).min(axis=1)
        lower = (vals[None, :, :] - lip * dist[:, :, None]).max(axis=1)
        out[start:start + len(block)] = 0.5 * (upper + lower)
    sites = model._site_table()
    for row, point in enumerate(q):
        hit = sites.get(point.tobytes())
        if hit is not None:
            out[row] = vals[hit]
    return out[0] if single else out


@dataclass(frozen=True)
class ContainmentReport:
    contained_mass: float
    total_mass: float
    fraction: float
    tolerance: float


def containment_report(cloud: WeightedCloud, model: GraphModel,
                       tol: float | None = None, subset=None) -> ContainmentReport:
    """Mass of points within vertical distance tol of the extended graph."""
    if tol is None:
        tol = 2.0 * cloud.delta_res
    idx = cloud.all_indices() if subset is None else np.asarray(subset, dtype=np.intp)
    total = cloud.mass(idx)
    if len(idx) == 0:
        return ContainmentReport(0.0, 0.0, 0.0, tol)
    pts = cloud.coords[idx]
    predicted = extend_mcshane(model, pts[:, :model.n])
    gap = np.linalg.norm(pts[:, model.n:] - predicted, axis=1)
    contained = gap <= tol
    mass = float(cloud.weights[idx[contained]].sum())
    return ContainmentReport(contained_mass=mass, total_mass=total,
                             fraction=mass / total if total > 0 else 0.0,
                             tolerance=tol)
