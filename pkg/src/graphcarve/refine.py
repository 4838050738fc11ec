"""Iterative cone-deletion refinement.

``refine_once`` takes a finite set F whose one-sided visit counts along a
direction w are at most M (aperture alpha) and carves out K in F whose counts
at aperture alpha/2 are at most M - 1, never wasting much more mass than it
keeps.  ``refine_schedule`` drives it over every direction of a cone cover,
down to zero visits per direction, and certifies the resulting two-sided
property directly.

The construction mirrors a transparent bookkeeping scheme: at every stage a
"saved" ball around the lowest bad point is banked, the open cone shadows of
its neighborhood are deleted, and two stopping rules bound how long this can
go on.  All set-disjointness claims are re-checked on the finite data at each
iteration; a failure that survives radius shrinking is a bug trap, not a
recoverable condition.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .audit import VisitationReport, visitation_counts
from .cloud import ScaleRange, WeightedCloud
from .cover import DirectionCover
from .errors import (
    AlgorithmInvariantViolation,
    InputError,
    RefinementCollapsedError,
    ResolutionExhaustedError,
)
from .measure import ball_masses, prune_low_density


@dataclass
class RefineConfig:
    """Tunables of the deletion loop; defaults follow the desk-scale setup."""

    c_factor: float = 1.0 / 64.0       # saved-ball radius = c_factor * alpha * scale
    epsilon: float | None = None       # badness density threshold; None = data-driven
    scale_choice: str = "largest"      # largest | smallest | random
    seed: int = 0
    max_c_retries: int = 40
    min_mass_fraction: float = 0.0
    scale_range: ScaleRange | None = None
    alpha_max: float = 0.1
    oracle: bool = False

    def __post_init__(self):
        if self.scale_choice not in ("largest", "smallest", "random"):
            raise InputError(f"unknown scale_choice {self.scale_choice!r}")
        if self.c_factor <= 0:
            raise InputError("c_factor must be positive")


@dataclass(frozen=True)
class IterationRecord:
    k: int
    x_index: int
    x_coord: tuple
    j_k: int
    r_k: float
    c_used: float
    mass_saved: float
    mass_deleted: float
    mass_remaining: float
    bad_points: int

    def as_dict(self) -> dict:
        return {
            "k": self.k, "x_index": self.x_index, "x": list(self.x_coord),
            "j_k": self.j_k, "r_k": self.r_k, "c": self.c_used,
            "mass_S": self.mass_saved, "mass_D": self.mass_deleted,
            "mass_F": self.mass_remaining, "bad_points": self.bad_points,
        }


@dataclass
class RefinementState:
    """Ledger of one refine_once run."""

    direction: np.ndarray
    alpha: float
    big_m: int
    epsilon: float
    initial: np.ndarray
    current: np.ndarray
    saved: list = field(default_factory=list)       # list of cloud-index arrays
    deleted: list = field(default_factory=list)
    balls: list = field(default_factory=list)       # (center index, 100 * r_k)
    records: list = field(default_factory=list)
    status: str = "running"

    def ledger_json(self) -> str:
        payload = {
            "schema": "graphcarve/1",
            "direction": self.direction.tolist(),
            "alpha": self.alpha,
            "M": self.big_m,
            "epsilon": self.epsilon,
            "status": self.status,
            "iterations": [r.as_dict() for r in self.records],
        }
        return json.dumps(payload, sort_keys=True)


@dataclass(frozen=True)
class RefinementOutcome:
    kept: np.ndarray
    status: str                     # stopped_1 | stopped_2
    mass_retained: float
    certificate: VisitationReport
    state: RefinementState
    saved_ratio: float              # measured min mass(S)/max(mass(D), delta^n)
    iterations: int


class _ConeCache:
    """Per-vertex one-sided cone-shell candidates, filtered by an alive mask.

    Built once per refine_once at the counting aperture; as the set only
    shrinks, recounting reduces to masking the cached candidate lists.
    """

    def __init__(self, cloud: WeightedCloud, subset: np.ndarray, w: np.ndarray,
                 aperture: float, scale_range: ScaleRange):
        self.subset = subset
        self.scale_range = scale_range
        js = scale_range.js
        self.outer = 2.0 ** (-js.astype(float))
        self.inner = self.outer / 2.0
        self.js = js
        r_max = float(self.outer.max())
        pos_of = np.full(len(cloud), -1, dtype=np.intp)
        pos_of[subset] = np.arange(len(subset))
        self.pos_of = pos_of
        in_subset = pos_of >= 0
        self.cand: list[np.ndarray] = []
        self.dist: list[np.ndarray] = []
        ap_sq = aperture * aperture
        for v in subset:
            x = cloud.coords[v]
            nbrs = cloud.grid.ball(x, r_max)
            nbrs = nbrs[in_subset[nbrs] & (nbrs != v)]
            delta = cloud.coords[nbrs] - x
            dist_sq = np.einsum("ij,ij->i", delta, delta)
            along = delta @ w
            perp_sq = np.maximum(dist_sq - along * along, 0.0)
            keep = (perp_sq <= ap_sq * dist_sq) & (along >= 0.0)
            nbrs = nbrs[keep]
            dist = np.sqrt(dist_sq[keep])
            order = np.argsort(nbrs)  # witness ties resolve to the lowest index
            self.cand.append(nbrs[order])
            self.dist.append(dist[order])

    def scales_of(self, pos: int, alive: np.ndarray) -> np.ndarray:
        """Visited j values of the vertex at subset position ``pos``."""
        cand = self.cand[pos]
        ok = alive[self.pos_of[cand]]
        dist = self.dist[pos][ok]
        if not len(dist):
            return np.empty(0, dtype=np.int64)
        hits = [j for j, ro, ri in zip(self.js, self.outer, self.inner)
                if ((dist >= ri) & (dist <= ro)).any()]
        return np.array(hits, dtype=np.int64)

    def witness(self, pos: int, j: int, alive: np.ndarray) -> int:
        cand = self.cand[pos]
        ok = alive[self.pos_of[cand]]
        cand = cand[ok]
        dist = self.dist[pos][ok]
        col = int(np.nonzero(self.js == j)[0][0])
        shell = (dist >= self.inner[col]) & (dist <= self.outer[col])
        return int(cand[shell].min())

    def all_counts(self, alive: np.ndarray) -> np.ndarray:
        """Visited-scale counts per position; dead positions report zero."""
        counts = np.zeros(len(self.subset), dtype=np.int64)
        for pos in np.nonzero(alive)[0]:
            counts[pos] = len(self.scales_of(int(pos), alive))
        return counts


def _auto_epsilon(cloud: WeightedCloud, subset: np.ndarray,
                  scale_range: ScaleRange) -> float:
    """Data-driven badness density anchored at the quarter-mass quantile.

    Probes the loneliest density ratio of every point, finds the threshold
    whose light set carries a quarter of the mass, measures the pruning
    constant there, and converts it back to a density per the light-mass
    budget.  Clipped to a factor 4 around the quantile so degenerate probes
    cannot run away.
    """
    radii = scale_range.radii
    radii = radii[radii <= 1.0 + 1e-12]
    if not len(radii):
        radii = scale_range.radii[-1:]
    table = ball_masses(cloud, radii, subset, subset)
    ratios = (table / radii[None, :] ** cloud.n).min(axis=1)
    weights = cloud.weights[subset]
    mass = float(weights.sum())
    order = np.argsort(ratios)
    cum = np.cumsum(weights[order])
    k = int(np.searchsorted(cum, mass / 4.0, side="right"))
    sorted_ratios = ratios[order]
    if k == 0:
        eps_star = float(sorted_ratios[0]) / 2.0
    elif k >= len(sorted_ratios):
        eps_star = float(sorted_ratios[-1])
    else:
        eps_star = 0.5 * (float(sorted_ratios[k - 1]) + float(sorted_ratios[k]))
    eps_star = max(eps_star, 1e-12)
    probe = prune_low_density(cloud.subcloud(subset), eps_star, scale_range)
    k_prune = probe.removed_mass / eps_star
    if k_prune <= 0:
        return eps_star
    eps = mass / (4.0 * k_prune)
    return float(np.clip(eps, eps_star / 4.0, eps_star * 4.0))


def _open_shadow(cloud: WeightedCloud, centers: np.ndarray, w: np.ndarray,
                 alpha: float, j_k: int, alive_mask: np.ndarray) -> np.ndarray:
    """Alive points inside the open one-sided cone shells of any center.

    Shells are the three dyadic annuli around scale j_k, each with strict
    radii, strict aperture, and strict half-space: a point exactly on any
    boundary is not deleted.
    """
    ap_sq = alpha * alpha
    shells = [(2.0 ** (-j_k + l), 2.0 ** (-j_k - 1 + l)) for l in (-1, 0, 1)]
    r_outer = max(o for o, _ in shells)
    hit = np.zeros(len(cloud), dtype=bool)
    for c in centers:
        x = cloud.coords[c]
        nbrs = cloud.grid.ball(x, r_outer, strict=True)
        nbrs = nbrs[alive_mask[nbrs]]
        if not len(nbrs):
            continue
        delta = cloud.coords[nbrs] - x
        dist_sq = np.einsum("ij,ij->i", delta, delta)
        along = delta @ w
        perp_sq = np.maximum(dist_sq - along * along, 0.0)
        cone = (perp_sq < ap_sq * dist_sq) & (along > 0.0)
        dist = np.sqrt(dist_sq)
        in_shell = np.zeros(len(nbrs), dtype=bool)
        for outer, inner in shells:
            in_shell |= (dist > inner) & (dist < outer)
        hit[nbrs[cone & in_shell]] = True
    return np.nonzero(hit)[0]


def _closed_shadow_contains(cloud: WeightedCloud, centers: np.ndarray,
                            w: np.ndarray, alpha: float, j_k: int,
                            z: np.ndarray) -> bool:
    """True when z lies in the closed cone-shell union of every center."""
    delta = z - cloud.coords[centers]
    dist_sq = np.einsum("ij,ij->i", delta, delta)
    along = delta @ w
    perp_sq = np.maximum(dist_sq - along * along, 0.0)
    cone = (perp_sq <= alpha * alpha * dist_sq) & (along >= 0.0)
    dist = np.sqrt(dist_sq)
    in_shell = np.zeros(len(centers), dtype=bool)
    for l in (-1, 0, 1):
        outer, inner = 2.0 ** (-j_k + l), 2.0 ** (-j_k - 1 + l)
        in_shell |= (dist >= inner) & (dist <= outer)
    return bool((cone & in_shell).all())


def refine_once(cloud: WeightedCloud, subset, direction, alpha: float,
                big_m: int, cfg: RefineConfig | None = None) -> RefinementOutcome:
    """One refinement pass: (alpha, M) visit bound in, (alpha/2, M-1) out.

    Alternates between banking a saved ball around the bad point with the
    smallest coordinate along the direction and deleting the open cone
    shadows of its enlarged neighborhood, until either half the mass is
    accounted for or no dense bad points remain.
    """
    cfg = cfg or RefineConfig()
    subset = np.sort(np.asarray(subset, dtype=np.intp))
    if len(subset) == 0:
        raise InputError("refine_once needs a nonempty point set")
    if big_m < 1:
        raise InputError("M must be >= 1")
    if not 0.0 < alpha <= cfg.alpha_max:
        raise InputError(f"aperture {alpha} outside (0, {cfg.alpha_max}]")
    w = np.asarray(direction, dtype=float)
    if w.shape != (cloud.d,) or abs(np.linalg.norm(w) - 1.0) > 1e-9:
        raise InputError("direction must be a unit d-vector")
    scale_range = cfg.scale_range or ScaleRange.default_for(cloud)

    entry_report = visitation_counts(cloud, subset, alpha, scale_range,
                                     direction=w, oracle=cfg.oracle)
    if entry_report.max_count > big_m:
        raise InputError(
            f"input set has a vertex with {entry_report.max_count} visited scales "
            f"at aperture {alpha}; the hypothesis allows at most {big_m}"
        )

    epsilon = cfg.epsilon if cfg.epsilon is not None else _auto_epsilon(
        cloud, subset, scale_range)
    rng = np.random.default_rng(cfg.seed)
    cache = _ConeCache(cloud, subset, w, alpha / 2.0, scale_range)
    delta_n = cloud.delta_res ** cloud.n
    bad_radii = np.unique(np.concatenate([
        scale_range.radii[scale_range.radii <= 1.0 + 1e-12], [1.0]]))

    mass_total = cloud.mass(subset)
    alive = np.ones(len(subset), dtype=bool)       # positions into subset
    saved_cloud_mask = np.zeros(len(cloud), dtype=bool)
    state = RefinementState(direction=w, alpha=alpha, big_m=big_m,
                            epsilon=epsilon, initial=subset, current=subset)
    sum_saved = 0.0
    sum_deleted = 0.0
    saved_ratio = math.inf
    last_w_coord = -math.inf

    def alive_indices():
        return subset[alive]

    k = 0
    while True:
        if k > len(subset):
            raise AlgorithmInvariantViolation(
                "refinement failed to terminate within the saved-set bound")
        if sum_saved >= mass_total / 2.0 or sum_deleted >= mass_total / 2.0:
            state.status = "stopped_1"
            kept = (np.sort(np.concatenate(state.saved)) if state.saved
                    else np.empty(0, dtype=np.intp))
            break

        counts = cache.all_counts(alive)
        if counts[alive].max(initial=0) > big_m:
            raise AlgorithmInvariantViolation(
                "visit counts exceeded M on a surviving point")
        exactly_m = alive & (counts == big_m)
        f_km = subset[exactly_m]

        bad = np.empty(0, dtype=np.intp)
        if len(f_km):
            table = ball_masses(cloud, bad_radii, f_km, f_km)
            dense = (table >= epsilon * bad_radii[None, :] ** cloud.n).all(axis=1)
            bad = f_km[dense]

        if len(bad) == 0:
            state.status = "stopped_2"
            keep_mask = alive.copy()
            keep_mask[exactly_m] = False
            kept = subset[keep_mask]
            break

        w_coords = cloud.coords[bad] @ w
        keys = [cloud.coords[bad][:, col] for col in range(cloud.d - 1, -1, -1)]
        pick = np.lexsort(keys + [w_coords])[0]
        x_k = int(bad[pick])
        x_pos = int(cache.pos_of[x_k])
        x_coord = cloud.coords[x_k]
        x_w = float(x_coord @ w)
        if x_w < last_w_coord - 1e-12:
            raise AlgorithmInvariantViolation(
                "bad-point coordinates along the direction decreased")
        if saved_cloud_mask[x_k]:
            raise AlgorithmInvariantViolation(
                "a previously saved point re-qualified as bad")

        scales = cache.scales_of(x_pos, alive)
        if len(scales) != big_m:
            raise AlgorithmInvariantViolation(
                f"bad point has {len(scales)} visited scales, expected exactly {big_m}")
        if cfg.scale_choice == "largest":
            candidate_js = np.sort(scales)
        elif cfg.scale_choice == "smallest":
            candidate_js = np.sort(scales)[::-1]
        else:
            candidate_js = rng.permutation(scales)

        committed = False
        for j_k in candidate_js:
            z_k = cloud.coords[cache.witness(x_pos, int(j_k), alive)]
            c_try = cfg.c_factor * alpha
            # Shrinking always succeeds eventually: once the enlarged ball
            # holds only the bad point itself, the witness inclusion is
            # automatic.  The retry budget bounds the loop regardless.
            for _ in range(cfg.max_c_retries):
                r_k = c_try * 2.0 ** (-float(j_k))
                ball = cloud.grid.ball(x_coord, r_k)
                s_k = ball[np.isin(ball, f_km)]
                if saved_cloud_mask[s_k].any():
                    # An old saved point re-entered the exactly-M set and sits
                    # inside the ball; shrink until the ball excludes it.
                    c_try /= 2.0
                    continue
                big_ball = cloud.grid.ball(x_coord, 100.0 * r_k)
                alive_cloud = np.zeros(len(cloud), dtype=bool)
                alive_cloud[alive_indices()] = True
                b_k = big_ball[alive_cloud[big_ball]]
                if not _closed_shadow_contains(cloud, b_k, w, alpha, int(j_k), z_k):
                    c_try /= 2.0
                    continue
                d_k = _open_shadow(cloud, b_k, w, alpha, int(j_k), alive_cloud)
                if saved_cloud_mask[d_k].any() or np.isin(d_k, s_k).any():
                    c_try /= 2.0
                    continue
                # Deleting the shadow must knock every neighbor of the saved
                # ball below M visited scales; otherwise this scale/radius
                # pair is unusable.
                alive_after = alive.copy()
                alive_after[cache.pos_of[d_k]] = False
                over = False
                for b in b_k:
                    if len(cache.scales_of(int(cache.pos_of[b]), alive_after)) > big_m - 1:
                        over = True
                        break
                if over:
                    c_try /= 2.0
                    continue
                committed = True
                break
            if committed:
                break
        if not committed:
            raise ResolutionExhaustedError(
                f"no saved-ball radius passed the shadow checks within "
                f"{cfg.max_c_retries} shrink steps at any of the {big_m} "
                f"scales of the bad point {x_k}")

        state.saved.append(np.sort(s_k))
        state.deleted.append(np.sort(d_k))
        state.balls.append((x_k, 100.0 * r_k))
        saved_cloud_mask[s_k] = True
        alive[cache.pos_of[d_k]] = False
        if saved_cloud_mask[subset[~alive]].any():
            raise AlgorithmInvariantViolation("a saved point was deleted")
        mass_s = cloud.mass(s_k)
        mass_d = cloud.mass(d_k)
        sum_saved += mass_s
        sum_deleted += mass_d
        saved_ratio = min(saved_ratio, mass_s / max(mass_d, delta_n))
        last_w_coord = max(last_w_coord, x_w)
        state.records.append(IterationRecord(
            k=k, x_index=x_k, x_coord=tuple(x_coord), j_k=int(j_k), r_k=r_k,
            c_used=c_try, mass_saved=mass_s, mass_deleted=mass_d,
            mass_remaining=cloud.mass(alive_indices()), bad_points=len(bad)))
        k += 1

    state.current = subset[alive]
    certificate = visitation_counts(cloud, kept, alpha / 2.0, scale_range,
                                    direction=w, oracle=True)
    if certificate.max_count > big_m - 1:
        raise AlgorithmInvariantViolation(
            f"output certificate failed: {certificate.max_count} visited scales "
            f"remain at aperture {alpha / 2.0}")
    if saved_ratio is math.inf:
        saved_ratio = 0.0
    return RefinementOutcome(kept=np.sort(kept), status=state.status,
                             mass_retained=cloud.mass(kept),
                             certificate=certificate, state=state,
                             saved_ratio=saved_ratio, iterations=k)


@dataclass(frozen=True)
class DirectionRun:
    direction: np.ndarray
    initial_count: int
    applications: int
    final_aperture: float
    reached_target_aperture: bool
    outcomes: list


@dataclass(frozen=True)
class ScheduleResult:
    e3: np.ndarray
    runs: list
    final_certificate: VisitationReport
    theta_certified: float

    def ledger(self) -> dict:
        return {
            "schema": "graphcarve/1",
            "theta_certified": self.theta_certified,
            "directions": [
                {
                    "direction": run.direction.tolist(),
                    "initial_count": run.initial_count,
                    "applications": run.applications,
                    "final_aperture": run.final_aperture,
                    "reached_target_aperture": run.reached_target_aperture,
                    "iterations": [o.state.ledger_json() for o in run.outcomes],
                }
                for run in self.runs
            ],
        }


def refine_schedule(cloud: WeightedCloud, e2, theta: float, m0: int,
                    cover: DirectionCover, cfg: RefineConfig | None = None) -> ScheduleResult:
    """Refine along every cover direction until each has zero visits.

    The cover must be built with aperture theta / b_used and shrink factor
    2^-m0: then each direction needs at most m0 passes (the aperture halves
    per pass), and the surviving set's two-sided visits at aperture
    theta / b_used vanish, which is verified directly in oracle mode.
    """
    cfg = cfg or RefineConfig()
    e2 = np.sort(np.asarray(e2, dtype=np.intp))
    if m0 < 0:
        raise InputError("m0 must be >= 0")
    if abs(cover.s - 2.0 ** (-m0)) > 1e-12:
        raise InputError(f"cover shrink factor {cover.s} does not match 2^-{m0}")
    if abs(cover.alpha * cover.b_used - theta) > 1e-9 * max(theta, 1.0):
        raise InputError("cover aperture does not satisfy alpha * b_used = theta")
    scale_range = cfg.scale_range or ScaleRange.default_for(cloud)
    mass_e2 = cloud.mass(e2)
    floor_mass = cfg.min_mass_fraction * mass_e2

    current = e2
    runs = []
    if m0 > 0:
        for row in range(cover.m):
            w = cover.directions[row]
            aperture = cover.alpha
            outcomes = []
            initial = None
            applications = 0
            verified_aperture = aperture
            while True:
                report = visitation_counts(cloud, current, aperture, scale_range,
                                           direction=w, oracle=cfg.oracle)
                m_cur = report.max_count
                if initial is None:
                    initial = m_cur
                if m_cur == 0:
                    verified_aperture = aperture
                    break
                if applications > initial + 2:
                    raise AlgorithmInvariantViolation(
                        "per-direction refinement failed to drain the visit counts")
                outcome = refine_once(cloud, current, w, aperture, m_cur, cfg)
                outcomes.append(outcome)
                current = outcome.kept
                applications += 1
                aperture /= 2.0
                if cloud.mass(current) < floor_mass:
                    raise RefinementCollapsedError(
                        f"mass fell below the configured floor while refining "
                        f"direction {row}",
                        ledger=[o.state.ledger_json() for o in outcomes])
            runs.append(DirectionRun(
                direction=w, initial_count=int(initial), applications=applications,
                final_aperture=verified_aperture,
                reached_target_aperture=bool(
                    verified_aperture >= cover.alpha * cover.s - 1e-15),
                outcomes=outcomes))

    certificate = visitation_counts(cloud, current, cover.alpha, scale_range,
                                    direction=None, oracle=True)
    if certificate.max_count > 0:
        raise AlgorithmInvariantViolation(
            "final two-sided certificate failed after the direction schedule")
    return ScheduleResult(e3=current, runs=runs, final_certificate=certificate,
                          theta_certified=cover.alpha)
