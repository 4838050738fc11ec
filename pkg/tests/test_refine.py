import math

import numpy as np
import pytest

from graphcarve import (
    InputError,
    RefinementCollapsedError,
    ResolutionExhaustedError,
    ScaleRange,
    Subspace,
    WeightedCloud,
    build_cover_for_theta,
    lipschitz_graph,
    refine_once,
    refine_schedule,
    visitation_counts,
)
from graphcarve.refine import RefineConfig, _ConeCache

UP = np.array([0.0, 1.0])


def flat_base_with_stack(n_base=400, spacing=0.005, stack=((0.0, 0.611),)):
    tt = np.arange(n_base) * spacing
    base = np.column_stack([tt, np.zeros_like(tt)])
    coords = np.vstack([base, np.asarray(stack, dtype=float)])
    return WeightedCloud(coords, np.ones(len(coords)), n=1, delta_res=spacing)


def verify_state_invariants(cloud, outcome, subset):
    """Re-check the ledger invariants independently of the implementation."""
    state = outcome.state
    saved = [set(map(int, s)) for s in state.saved]
    deleted = [set(map(int, d)) for d in state.deleted]
    # saved sets pairwise disjoint, and disjoint from every deleted set
    for i in range(len(saved)):
        for j in range(i + 1, len(saved)):
            assert not (saved[i] & saved[j])
        for dset in deleted:
            assert not (saved[i] & dset)
    # union of saved sets survives into the final remaining set
    remaining = set(map(int, state.current))
    for s in saved:
        assert s <= remaining
    # deleted sets pairwise disjoint (each was removed from the live set)
    for i in range(len(deleted)):
        for j in range(i + 1, len(deleted)):
            assert not (deleted[i] & deleted[j])
    # direction coordinates of the chosen bad points never decrease
    heights = [rec.x_coord[-1] for rec in state.records]
    assert all(a <= b + 1e-12 for a, b in zip(heights, heights[1:]))
    # saved mass dominates deleted mass at the recorded ratio
    delta_n = cloud.delta_res**cloud.n
    for rec in state.records:
        assert rec.mass_saved >= outcome.saved_ratio * max(rec.mass_deleted,
                                                           delta_n) - 1e-9


class TestRefineOnce:
    def test_vacuous_refinement_stops_immediately(self):
        cloud = lipschitz_graph(150, 0.2, seed=0)
        out = refine_once(cloud, cloud.all_indices(), UP, 0.1, 1)
        assert out.status == "stopped_2"
        assert out.iterations == 0
        assert np.array_equal(out.kept, cloud.all_indices())
        assert out.mass_retained == pytest.approx(cloud.mass())

    def test_crafted_stack_instance(self):
        # 400 unit-weight base points plus one stacked outlier: the shadowed
        # base points are sparse enough that the no-bad-points rule fires and
        # the output drops the shadow, keeping >= 75% with zero visits left.
        cloud = flat_base_with_stack()
        out = refine_once(cloud, cloud.all_indices(), UP, 0.1, 1)
        assert out.certificate.max_count == 0
        assert out.mass_retained >= 0.75 * cloud.mass()
        verify_state_invariants(cloud, out, cloud.all_indices())

    def test_deletion_path_removes_shadow(self):
        # A taller stack with a forced badness density exercises the
        # saved-ball / deleted-shadow loop; the stack is the shadow.
        cloud = flat_base_with_stack(stack=((1.0, 1.77),))
        out = refine_once(cloud, cloud.all_indices(), UP, 0.1, 1,
                          RefineConfig(epsilon=1.0))
        assert out.iterations >= 1
        deleted = np.concatenate(out.state.deleted)
        assert 400 in deleted  # the stack point index
        assert out.certificate.max_count == 0
        verify_state_invariants(cloud, out, cloud.all_indices())

    def test_tight_cluster_triggers_first_stop(self):
        # Half the mass sits in one tiny ball, so saving it satisfies the
        # mass-accounting stop at the first or second iteration.
        cl_t = np.arange(5) * 2e-4
        cluster = np.column_stack([cl_t, np.zeros_like(cl_t)])
        stack = np.array([[4e-4, 1.43]])
        tt = 0.2 + np.arange(400) * 0.005
        base = np.column_stack([tt, np.zeros_like(tt)])
        coords = np.vstack([cluster, stack, base])
        weights = np.concatenate([np.full(5, 100.0), [1.0], np.ones(400)])
        cloud = WeightedCloud(coords, weights, n=1, delta_res=0.005)
        out = refine_once(cloud, cloud.all_indices(), UP, 0.1, 1,
                          RefineConfig(epsilon=10.0))
        assert out.status == "stopped_1"
        assert out.iterations <= 2
        assert out.mass_retained >= cloud.mass() / 2 - 1e-9
        verify_state_invariants(cloud, out, cloud.all_indices())

    def test_iteration_bound(self):
        cloud = flat_base_with_stack(stack=((1.0, 1.77),))
        out = refine_once(cloud, cloud.all_indices(), UP, 0.1, 1,
                          RefineConfig(epsilon=1.0))
        if out.iterations and out.saved_ratio > 0:
            bound = math.ceil(2 * cloud.mass()
                              / (out.saved_ratio * cloud.delta_res**cloud.n))
            assert out.iterations <= bound

    def test_hypothesis_violation_rejected(self):
        cloud = flat_base_with_stack()
        with pytest.raises(InputError):
            # stack gives count 1 at this aperture, but M=1 demands the input
            # already satisfies it for aperture alpha: claim M too small by
            # passing a cloud whose counts exceed it
            coords = np.vstack([cloud.coords, [[0.0, 0.29], [0.0, 0.15]]])
            tall = WeightedCloud(coords, np.ones(len(coords)), n=1,
                                 delta_res=cloud.delta_res)
            refine_once(tall, tall.all_indices(), UP, 0.1, 1)

    def test_parameter_validation(self):
        cloud = flat_base_with_stack(n_base=20)
        with pytest.raises(InputError):
            refine_once(cloud, cloud.all_indices(), UP, 0.1, 0)
        with pytest.raises(InputError):
            refine_once(cloud, cloud.all_indices(), UP, 0.4, 1)
        with pytest.raises(InputError):
            refine_once(cloud, np.empty(0, dtype=int), UP, 0.1, 1)

    def test_resolution_exhausted_when_retries_cannot_shed_neighbor(self):
        # A companion point never sees the witness in its widened cone; with
        # the shrink budget too small to push it out of the enlarged ball,
        # no saved-ball radius can be committed.
        coords = np.array([[0.0, 0.0], [0.08, 0.0], [0.0, 0.7]])
        cloud = WeightedCloud(coords, np.ones(3), n=1, delta_res=0.01)
        with pytest.raises(ResolutionExhaustedError):
            refine_once(cloud, cloud.all_indices(), UP, 0.1, 1,
                        RefineConfig(epsilon=1e-9, max_c_retries=1))

    def test_tiny_scale_visit_still_commits(self):
        # The first candidate radius starts far below the resolution; the
        # loop must shrink the enlarged ball down to the bad point and
        # commit rather than give up.
        coords = np.array([[0.0, 0.0], [0.009, 0.0], [0.0, 0.022]])
        cloud = WeightedCloud(coords, np.ones(3), n=1, delta_res=0.01)
        out = refine_once(cloud, cloud.all_indices(), UP, 0.1, 1,
                          RefineConfig(epsilon=1e-9))
        assert out.certificate.max_count == 0
        verify_state_invariants(cloud, out, cloud.all_indices())

    def test_cone_cache_matches_visitation(self, rng):
        cloud = flat_base_with_stack(n_base=120, stack=((0.3, 0.41), (0.31, 0.8)))
        sr = ScaleRange.default_for(cloud)
        cache = _ConeCache(cloud, cloud.all_indices(), UP, 0.05, sr)
        alive = np.ones(len(cloud), dtype=bool)
        counts = cache.all_counts(alive)
        report = visitation_counts(cloud, cloud.all_indices(), 0.05, sr,
                                   direction=UP)
        assert np.array_equal(counts, report.counts)
        # masking a point out matches recounting on the reduced subset
        alive[-1] = False
        masked = cache.all_counts(alive)
        reduced = visitation_counts(cloud, cloud.all_indices()[:-1], 0.05, sr,
                                    direction=UP)
        assert np.array_equal(masked[:-1], reduced.counts)


class TestRefineSchedule:
    def _cover(self, theta, m0, seed=0):
        return build_cover_for_theta(Subspace.vertical_axis(2, 1), theta,
                                     s=2.0 ** (-m0), check_samples=8_000,
                                     net_samples=60_000, seed=seed)

    def test_low_slope_graph_is_untouched(self):
        # 1/theta above the slope: every pair stays far from the cone, all
        # directions see zero visits, the set passes through unchanged.
        cloud = lipschitz_graph(250, 0.2, seed=2)
        theta = 0.5
        report = visitation_counts(cloud, cloud.all_indices(), theta)
        assert report.max_count == 0
        cover = self._cover(theta, 0)
        result = refine_schedule(cloud, cloud.all_indices(), theta, 0, cover)
        assert np.array_equal(result.e3, cloud.all_indices())
        assert result.final_certificate.max_count == 0

    def test_m0_zero_is_noop(self):
        cloud = lipschitz_graph(100, 0.1, seed=3)
        cover = self._cover(0.3, 0)
        result = refine_schedule(cloud, cloud.all_indices(), 0.3, 0, cover)
        assert np.array_equal(result.e3, cloud.all_indices())
        assert result.runs == []

    def test_embedded_stack_end_to_end(self):
        rng = np.random.default_rng(8)
        tt = np.unique(np.sort(rng.uniform(0, 1, 350).round(4) * 0.99 + 0.005))
        base = np.column_stack([tt, 0.05 * np.sin(3 * tt)])
        site = base[len(base) // 2]
        stack = np.array([[site[0], site[1] + 0.53], [site[0], site[1] + 0.29]])
        coords = np.vstack([base, stack])
        cloud = WeightedCloud(coords, np.full(len(coords), 1.0 / len(coords)),
                              n=1, delta_res=0.004)
        theta = 0.04
        m0 = visitation_counts(cloud, cloud.all_indices(), theta).max_count
        assert m0 >= 1
        cover = self._cover(theta, m0)
        result = refine_schedule(cloud, cloud.all_indices(), theta, m0, cover,
                                 RefineConfig(epsilon=0.5))
        assert cloud.mass(result.e3) >= 0.5 * cloud.mass()
        assert result.final_certificate.max_count == 0
        assert result.theta_certified == pytest.approx(cover.alpha)
        assert any(run.applications for run in result.runs)
        for run in result.runs:
            assert run.reached_target_aperture

    def test_cover_mismatch_rejected(self):
        cloud = lipschitz_graph(60, 0.1, seed=4)
        cover = self._cover(0.3, 1)
        with pytest.raises(InputError):
            refine_schedule(cloud, cloud.all_indices(), 0.3, 2, cover)

    def test_mass_floor_collapse(self):
        cloud = flat_base_with_stack(stack=((1.0, 1.77),))
        theta = 0.25
        m0 = visitation_counts(cloud, cloud.all_indices(), theta).max_count
        assert m0 >= 1
        cover = self._cover(theta, m0)
        cfg = RefineConfig(epsilon=1.0, min_mass_fraction=1.01)
        with pytest.raises(RefinementCollapsedError):
            refine_schedule(cloud, cloud.all_indices(), theta, m0, cover, cfg)

    def test_ledger_serializes(self):
        cloud = flat_base_with_stack(stack=((1.0, 1.77),))
        out = refine_once(cloud, cloud.all_indices(), UP, 0.1, 1,
                          RefineConfig(epsilon=1.0))
        text = out.state.ledger_json()
        assert '"schema": "graphcarve/1"' in text
        assert '"iterations"' in text
