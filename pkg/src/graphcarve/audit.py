"""Cone-visitation counters over dyadic annuli.

For each vertex x of a subset, counts the scales j at which the closed cone
shell of aperture theta (two-sided around the vertical axis) or alpha
(one-sided along a direction w) meets some other subset point.  The grid mode
prunes candidates through the spatial index; the oracle mode scans all pairs.
Both modes perform identical floating-point comparisons, so their outputs
match exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import ScaleRange, WeightedCloud
from .errors import InputError


@dataclass(frozen=True)
class VisitationReport:
    """Per-vertex visit counts with the witnessing scales and points."""

    subset: np.ndarray
    counts: np.ndarray           # visited-scale count per subset vertex
    scales: list                 # per vertex: np array of visited j values
    witnesses: list              # per vertex: one witnessing point index per j
    mode: str                    # "two_sided_codim" | "one_sided_dir"
    aperture: float
    direction: np.ndarray | None
    scale_range: ScaleRange

    @property
    def max_count(self) -> int:
        return int(self.counts.max()) if len(self.counts) else 0

    def histogram(self, weights: np.ndarray | None = None) -> dict[int, float]:
        """count value -> mass (or cardinality) of vertices with that count."""
        out: dict[int, float] = {}
        for i, c in enumerate(self.counts):
            w = 1.0 if weights is None else float(weights[self.subset[i]])
            out[int(c)] = out.get(int(c), 0.0) + w
        return dict(sorted(out.items()))


def _aperture_mask(delta: np.ndarray, dist_sq: np.ndarray, aperture: float,
                   n: int, direction: np.ndarray | None) -> np.ndarray:
    """Closed aperture (and half-space) test on displacement vectors."""
    if direction is None:
        horiz = delta[:, :n]
        horiz_sq = np.einsum("ij,ij->i", horiz, horiz)
        return horiz_sq <= aperture * aperture * dist_sq
    along = delta @ direction
    perp_sq = np.maximum(dist_sq - along * along, 0.0)
    return (perp_sq <= aperture * aperture * dist_sq) & (along >= 0.0)


def visitation_counts(cloud: WeightedCloud, subset, aperture: float,
                      scale_range: ScaleRange | None = None,
                      direction=None, oracle: bool = False) -> VisitationReport:
    """Count dyadic cone-shell visits for every vertex of the subset.

    A vertex never witnesses itself.  Shells are closed on both radii and the
    aperture, matching the closed-cone convention of the property checks.
    """
    if not 0.0 < aperture < 1.0:
        raise InputError("aperture must lie in (0, 1)")
    if scale_range is None:
        scale_range = ScaleRange.default_for(cloud)
    if 2.0 ** (-scale_range.j_max) < cloud.delta_res:
        raise InputError("finest scale is below the cloud resolution")
    subset = np.sort(np.asarray(subset, dtype=np.intp))
    w = None
    if direction is not None:
        w = np.asarray(direction, dtype=float)
        if w.shape != (cloud.d,):
            raise InputError("direction must be a d-vector")
        nrm = np.linalg.norm(w)
        if abs(nrm - 1.0) > 1e-9:
            raise InputError("direction must be a unit vector")
    js = scale_range.js
    outer = 2.0 ** (-js.astype(float))
    inner = outer / 2.0
    r_max = outer.max() if len(js) else 0.0
    in_subset = np.zeros(len(cloud), dtype=bool)
    in_subset[subset] = True
    counts = np.zeros(len(subset), dtype=np.int64)
    visited_scales = []
    witnesses = []
    for row, v in enumerate(subset):
        x = cloud.coords[v]
        if oracle:
            cand = subset[subset != v]
        else:
            nbrs = cloud.grid.ball(x, r_max)
            cand = nbrs[in_subset[nbrs] & (nbrs != v)]
        if len(cand) == 0:
            visited_scales.append(np.empty(0, dtype=np.int64))
            witnesses.append(np.empty(0, dtype=np.intp))
            continue
        delta = cloud.coords[cand] - x
        dist_sq = np.einsum("ij,ij->i", delta, delta)
        ok = _aperture_mask(delta, dist_sq, aperture, cloud.n, w)
        cand = cand[ok]
        dist = np.sqrt(dist_sq[ok])
        hit_js = []
        hit_wit = []
        for j, ro, ri in zip(js, outer, inner):
            shell = (dist >= ri) & (dist <= ro)
            if shell.any():
                hit_js.append(j)
                hit_wit.append(int(cand[shell].min()))
        counts[row] = len(hit_js)
        visited_scales.append(np.array(hit_js, dtype=np.int64))
        witnesses.append(np.array(hit_wit, dtype=np.intp))
    mode = "two_sided_codim" if w is None else "one_sided_dir"
    return VisitationReport(subset=subset, counts=counts, scales=visited_scales,
                            witnesses=witnesses, mode=mode, aperture=aperture,
                            direction=w, scale_range=scale_range)


def bad_set(cloud: WeightedCloud, subset, aperture: float, threshold: int,
            scale_range: ScaleRange | None = None, direction=None,
            flavor: str = "at_least", oracle: bool = False) -> np.ndarray:
    """Vertices whose visit count reaches (or exactly equals) the threshold."""
    if threshold < 0:
        raise InputError("threshold must be >= 0")
    if flavor not in ("at_least", "exactly"):
        raise InputError(f"unknown flavor {flavor!r}")
    report = visitation_counts(cloud, subset, aperture, scale_range, direction, oracle)
    if flavor == "at_least":
        keep = report.counts >= threshold
    else:
        keep = report.counts == threshold
    return report.subset[keep]
