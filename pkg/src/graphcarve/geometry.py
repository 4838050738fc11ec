"""Subspaces, orthogonal projections, and cone membership predicates.

Conventions used throughout the package: the ambient space is R^d split as
R^n x R^(d-n).  The first n coordinates are "horizontal" (the base of a
candidate graph), the last d-n are "vertical".  The standard double cone of
aperture a at vertex x has the vertical coordinate subspace as its axis, so
membership of y is the test |horizontal part of (x - y)| <= a * |x - y|.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFrameError, InputError

FRAME_TOL = 1e-10


def _orthonormalize(vectors: np.ndarray) -> np.ndarray:
    """Pivoted modified Gram-Schmidt with re-orthogonalization.

    Picks the largest remaining column at each step, which keeps the output
    frame stable under small perturbations of the input ordering.
    """
    work = np.array(vectors, dtype=float)
    if work.ndim != 2:
        raise InputError("expected a d x k array of column vectors")
    d, k = work.shape
    scale = float(np.max(np.linalg.norm(work, axis=0), initial=0.0))
    if scale == 0.0:
        raise DegenerateFrameError("all spanning vectors are zero")
    frame = np.empty((d, k))
    remaining = list(range(k))
    for out in range(k):
        norms = np.linalg.norm(work[:, remaining], axis=0)
        pick = int(np.argmax(norms))
        if norms[pick] < 1e-10 * scale:
            raise DegenerateFrameError(
                f"spanning vectors are rank deficient (rank {out} < {k})"
            )
        col = remaining.pop(pick)
        u = work[:, col] / np.linalg.norm(work[:, col])
        for _ in range(2):  # second pass keeps orthogonality near 1e-16
            if out:
                u = u - frame[:, :out] @ (frame[:, :out].T @ u)
            nrm = np.linalg.norm(u)
            if nrm < 1e-12:
                raise DegenerateFrameError("vector collapsed during re-orthogonalization")
            u = u / nrm
        frame[:, out] = u
        for j in remaining:
            work[:, j] -= u * (u @ work[:, j])
    return frame


class Subspace:
    """A k-dimensional linear subspace of R^d stored as an orthonormal frame.

    The frame is canonicalized on construction (pivoted Gram-Schmidt), so two
    Subspace objects built from different spanning sets of the same space have
    numerically identical projection matrices.
    """

    __slots__ = ("frame",)

    def __init__(self, vectors: np.ndarray):
        frame = _orthonormalize(np.asarray(vectors, dtype=float))
        d, k = frame.shape
        if not 1 <= k < d:
            raise InputError(f"subspace dimension must satisfy 1 <= k < d, got k={k}, d={d}")
        gram = frame.T @ frame
        if np.max(np.abs(gram - np.eye(k))) > FRAME_TOL:
            raise DegenerateFrameError("orthonormalization did not converge")
        frame.setflags(write=False)
        self.frame = frame

    @property
    def d(self) -> int:
        return self.frame.shape[0]

    @property
    def k(self) -> int:
        return self.frame.shape[1]

    @classmethod
    def spanning(cls, *vectors) -> "Subspace":
        return cls(np.column_stack([np.asarray(v, dtype=float) for v in vectors]))

    @classmethod
    def coordinate(cls, d: int, dims) -> "Subspace":
        """Span of the standard basis vectors e_i for i in ``dims``."""
        dims = list(dims)
        frame = np.zeros((d, len(dims)))
        for col, i in enumerate(dims):
            frame[i, col] = 1.0
        return cls(frame)

    @classmethod
    def horizontal(cls, d: int, n: int) -> "Subspace":
        """The first-n-coordinates subspace R^n of R^n x R^(d-n)."""
        return cls.coordinate(d, range(n))

    @classmethod
    def vertical_axis(cls, d: int, n: int) -> "Subspace":
        """The last-(d-n)-coordinates subspace, axis of the standard cone."""
        return cls.coordinate(d, range(n, d))

    def projector(self) -> np.ndarray:
        return self.frame @ self.frame.T

    def coords(self, x: np.ndarray) -> np.ndarray:
        """Frame coordinates of the projection of x (shape (..., k))."""
        return np.asarray(x, dtype=float) @ self.frame

    def __repr__(self):
        return f"Subspace(d={self.d}, k={self.k})"


def project(subspace: Subspace, x: np.ndarray) -> np.ndarray:
    """Orthogonal projection of x onto the subspace.

    Accepts a single point of shape (d,) or a batch of shape (m, d).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != subspace.d:
        raise InputError(
            f"point dimension {x.shape[-1]} does not match subspace ambient dimension {subspace.d}"
        )
    return (x @ subspace.frame) @ subspace.frame.T


def grassmann_distance(v: Subspace, w: Subspace) -> float:
    """Operator-norm distance between the projection matrices of v and w."""
    if (v.d, v.k) != (w.d, w.k):
        raise InputError(
            f"subspaces live on different Grassmannians: ({v.d},{v.k}) vs ({w.d},{w.k})"
        )
    diff = v.projector() - w.projector()
    return float(np.linalg.svd(diff, compute_uv=False)[0])


@dataclass(frozen=True)
class ConeSpec:
    """A (possibly truncated) cone in R^d.

    ``axis`` is either a Subspace (two-sided cone around that subspace) or a
    unit vector (one-sided cone: the half-space test (y - x) . w >= 0 applies
    in addition to the aperture test).  ``radii`` = (outer, inner) restricts
    membership to the closed annulus inner <= |y - x| <= outer.  With
    ``interior`` set, every comparison is strict.
    """

    vertex: np.ndarray
    axis: object  # Subspace | np.ndarray
    aperture: float
    radii: tuple[float, float] | None = None
    interior: bool = False
    one_sided: bool = field(init=False, default=False)

    def __post_init__(self):
        vertex = np.asarray(self.vertex, dtype=float)
        object.__setattr__(self, "vertex", vertex)
        if not 0.0 < self.aperture < 1.0:
            raise InputError(f"aperture must lie in (0, 1), got {self.aperture}")
        if isinstance(self.axis, Subspace):
            if self.axis.d != vertex.shape[0]:
                raise InputError("axis subspace dimension does not match vertex")
            object.__setattr__(self, "one_sided", False)
        else:
            w = np.asarray(self.axis, dtype=float)
            if w.shape != vertex.shape:
                raise InputError("direction vector dimension does not match vertex")
            if abs(np.linalg.norm(w) - 1.0) > 1e-12:
                raise InputError("one-sided cone direction must be a unit vector")
            object.__setattr__(self, "axis", w)
            object.__setattr__(self, "one_sided", True)
        if self.radii is not None:
            outer, inner = self.radii
            if not 0.0 < inner < outer:
                raise InputError(f"radii must satisfy 0 < inner < outer, got {self.radii}")

    @classmethod
    def two_sided(cls, vertex, axis: Subspace, aperture, radii=None, interior=False):
        return cls(vertex, axis, aperture, radii, interior)

    @classmethod
    def one_sided_cone(cls, vertex, direction, aperture, radii=None, interior=False):
        return cls(vertex, np.asarray(direction, dtype=float), aperture, radii, interior)

    @classmethod
    def vertical(cls, vertex, n: int, aperture, radii=None, interior=False):
        """Standard two-sided cone around the last d-n coordinate directions."""
        vertex = np.asarray(vertex, dtype=float)
        axis = Subspace.vertical_axis(vertex.shape[0], n)
        return cls(vertex, axis, aperture, radii, interior)


def cone_mask(cone: ConeSpec, points: np.ndarray) -> np.ndarray:
    """Vectorized membership test; ``points`` has shape (m, d)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != cone.vertex.shape[0]:
        raise InputError("query point dimension does not match cone vertex")
    delta = pts - cone.vertex
    dist_sq = np.einsum("ij,ij->i", delta, delta)
    if cone.one_sided:
        along = delta @ cone.axis
        perp_sq = np.maximum(dist_sq - along * along, 0.0)
        if cone.interior:
            ok = (perp_sq < cone.aperture**2 * dist_sq) & (along > 0.0)
        else:
            ok = (perp_sq <= cone.aperture**2 * dist_sq) & (along >= 0.0)
    else:
        inside = delta @ cone.axis.frame
        axial_sq = np.einsum("ij,ij->i", inside, inside)
        perp_sq = np.maximum(dist_sq - axial_sq, 0.0)
        if cone.interior:
            ok = perp_sq < cone.aperture**2 * dist_sq
        else:
            ok = perp_sq <= cone.aperture**2 * dist_sq
    if cone.radii is not None:
        outer, inner = cone.radii
        dist = np.sqrt(dist_sq)
        if cone.interior:
            ok &= (dist > inner) & (dist < outer)
        else:
            ok &= (dist >= inner) & (dist <= outer)
    return ok


def cone_contains(cone: ConeSpec, point: np.ndarray) -> bool:
    """Membership of a single point in the cone."""
    return bool(cone_mask(cone, np.asarray(point, dtype=float)[None, :])[0])
