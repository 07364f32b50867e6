import numpy as np
import pytest
from hypothesis import given, strategies as st
from conftest import random_psd

from spatialdct.allocation import (
    AllocationState, UserPopulation, allocation_error_metric, equal_partitions,
    exhaustive_allocate, greedy_allocate_be, greedy_allocate_dls, group_delta,
    group_separation, ls_total, pairwise_separation, random_allocation, theorem1_check,
    user_error,
)
from spatialdct.errors import InvalidParameterError
from spatialdct.estimators import Kind, be_mse_closed


def _projector(M, idx):
    p = np.zeros((M, M), dtype=complex)
    p[idx, idx] = 1
    return p


def _subspace_population(blocks, M=8, stations=1, serving=None):
    """Users whose covariance is the projector on coordinates ``blocks[u]`` at every station."""
    covs = np.array([[_projector(M, b)] * stations for b in blocks])
    serving = np.zeros(len(blocks), dtype=int) if serving is None else np.asarray(serving)
    return UserPopulation(covs, serving)


def _random_population(rng, U, C=2, M=4, rank=2):
    covs = np.array([[random_psd(rng, M, rank) for _ in range(C)] for _ in range(U)])
    return UserPopulation(covs, np.arange(U) % C)


def _delta_total(pop):
    return lambda part: sum(group_delta(pop, g) for g in part)


def _be_total(pop, roles, sigma2=1.0, tau=1.0):
    return lambda part: allocation_error_metric(pop, part, roles, sigma2, tau)


# ---------------------------------------------------------------- separation metrics

def test_pairwise_identical_rank_one_is_one():
    u = np.array([1, 1j, 0]) / np.sqrt(2)
    p = np.outer(u, u.conj())
    assert pairwise_separation(p, p) == pytest.approx(1)


def test_pairwise_orthogonal_rank_one_is_zero():
    assert pairwise_separation(_projector(3, [0]), _projector(3, [1])) == 0


def test_pairwise_identity_is_one_over_M():
    assert pairwise_separation(np.eye(5), np.eye(5)) == pytest.approx(0.2)


def test_pairwise_rejects_zero_trace():
    with pytest.raises(InvalidParameterError):
        pairwise_separation(np.zeros((2, 2)), np.eye(2))


@given(seed=st.integers(0, 10_000), M=st.integers(1, 8), r1=st.integers(1, 8), r2=st.integers(1, 8))
def test_separation_in_unit_interval(seed, M, r1, r2):
    rng = np.random.default_rng(seed)
    d = pairwise_separation(random_psd(rng, M, min(r1, M)), random_psd(rng, M, min(r2, M)))
    assert -1e-12 <= d <= 1 + 1e-12


def test_group_separation_examples():
    a, b = _projector(4, [0]), _projector(4, [1])
    assert group_separation([a], 0) == 0
    assert group_separation([a, b], 0) == 0
    assert group_separation([a, a], 1) == pytest.approx(1)


# ---------------------------------------------------------------- error metric

def test_metric_all_be_is_sum_of_closed_forms():
    rng = np.random.default_rng(1)
    pop = _random_population(rng, 4)
    groups = [[0, 1], [2, 3]]
    expected = sum(be_mse_closed(pop.own(u), pop.towards(g, pop.serving[u]), 0.5, 2.0).value
                   for g in groups for u in g)
    assert allocation_error_metric(pop, groups, {}, 0.5, 2.0, zeta_reg=123.0) == pytest.approx(expected)


def test_metric_empty_groups():
    pop = _subspace_population([[0]])
    assert allocation_error_metric(pop, [], {}, 1.0, 1.0) == 0


def test_metric_prefers_orthogonal_partner():
    pop = _subspace_population([[0, 1], [0, 1], [4, 5]])
    same = allocation_error_metric(pop, [[0, 1]], {}, 0.1, 1.0)
    orth = allocation_error_metric(pop, [[0, 2]], {}, 0.1, 1.0)
    assert orth < same


def test_modified_role_close_to_be_for_tiny_regulariser():
    rng = np.random.default_rng(2)
    pop = _random_population(rng, 2, C=1, rank=4)
    be = user_error(pop, 0, [0, 1], Kind.BE, 1.0, 1.0)
    mbe = user_error(pop, 0, [0, 1], Kind.MBE, 1.0, 1.0, 1e-12)
    assert mbe == pytest.approx(be, rel=1e-6)
    assert user_error(pop, 0, [0, 1], Kind.MBE, 1.0, 1.0, 10.0) > mbe


# ---------------------------------------------------------------- greedy procedures

ORTHOGONAL_PAIRS = [[0, 1], [4, 5], [0, 1], [4, 5]]  # users 0/2 and 1/3 collide


def test_a5_orthogonal_pairs_matches_exhaustive():
    pop = _subspace_population(ORTHOGONAL_PAIRS)
    state = greedy_allocate_be(pop, 2, 0.1, 1.0)
    state.check(4)
    assert sorted(map(sorted, state.groups)) == [[0, 1], [2, 3]]
    best, _ = exhaustive_allocate(pop, 2, _be_total(pop, state.estimator_choice, 0.1))
    assert state.metric == pytest.approx(best, rel=1e-12)


def test_a6_orthogonal_pairs_matches_exhaustive():
    pop = _subspace_population(ORTHOGONAL_PAIRS)
    state = greedy_allocate_dls(pop, 2)
    assert sorted(map(sorted, state.groups)) == [[0, 1], [2, 3]]
    best, _ = exhaustive_allocate(pop, 2, _delta_total(pop))
    assert state.metric == best == 0


@pytest.mark.parametrize("perm", [(0, 1, 2, 3, 4, 5), (3, 1, 5, 0, 2, 4), (5, 4, 3, 2, 1, 0)])
def test_six_user_structured_instances_match_exhaustive(perm):
    # three disjoint subspaces, two users each: optimum puts no two twins together
    blocks = [[0, 1], [2, 3], [4, 5]] * 2
    pop = _subspace_population([blocks[p] for p in perm], M=6)
    a6 = greedy_allocate_dls(pop, 2)
    assert a6.metric == pytest.approx(exhaustive_allocate(pop, 2, _delta_total(pop))[0])
    a5 = greedy_allocate_be(pop, 2, 0.1, 1.0)
    best, _ = exhaustive_allocate(pop, 2, _be_total(pop, a5.estimator_choice, 0.1))
    assert a5.metric == pytest.approx(best, rel=1e-12)


def test_mutually_orthogonal_users_reach_no_interference_sum():
    blocks = [[0], [1], [2], [3]]
    pop = _subspace_population(blocks, M=4)
    state = greedy_allocate_be(pop, 4, 0.5, 1.0)
    assert len(state.groups) == 1
    alone = sum(be_mse_closed(pop.own(u), [pop.own(u)], 0.5, 1.0).value for u in range(4))
    assert state.metric == pytest.approx(alone)


def test_identical_users_every_partition_equal():
    pop = _subspace_population([[0, 1]] * 6, M=4)
    values = {round(_delta_total(pop)(p), 12) for p in equal_partitions(range(6), 2)}
    assert len(values) == 1
    assert greedy_allocate_dls(pop, 2).metric == pytest.approx(values.pop())


def test_reuse_one_gives_singletons():
    rng = np.random.default_rng(3)
    pop = _random_population(rng, 5)
    state = greedy_allocate_be(pop, 1, 1.0, 1.0)
    assert state.groups == [[0], [1], [2], [3], [4]]
    alone = sum(be_mse_closed(pop.own(u), [pop.own(u)], 1.0, 1.0).value for u in range(5))
    assert state.metric == pytest.approx(alone)


def test_one_per_cell_rule():
    rng = np.random.default_rng(4)
    pop = _random_population(rng, 6, C=2)
    for state in (greedy_allocate_be(pop, 2, 1.0, 1.0, one_per_cell=True),
                  greedy_allocate_dls(pop, 2, one_per_cell=True)):
        state.check(6)
        for g in state.groups:
            assert len({pop.cells[u] for u in g}) == len(g)


def test_random_seed_rule_is_reproducible():
    rng = np.random.default_rng(5)
    pop = _random_population(rng, 6)
    a = greedy_allocate_dls(pop, 2, rng=np.random.default_rng(9))
    b = greedy_allocate_dls(pop, 2, rng=np.random.default_rng(9))
    assert a.groups == b.groups
    a.check(6)


def test_reuse_factor_validation():
    pop = _subspace_population([[0]])
    with pytest.raises(InvalidParameterError):
        greedy_allocate_dls(pop, 0)


@given(seed=st.integers(0, 10_000))
def test_a5_roles_are_no_worse_than_alternative(seed):
    rng = np.random.default_rng(seed)
    pop = _random_population(rng, 4, C=2, M=4, rank=2)
    state = greedy_allocate_be(pop, 2, 1.0, 1.0)
    roles = state.estimator_choice
    for g in state.groups:
        # replay insertions in order: each chosen role was no worse than the other one
        for j, u in enumerate(g):
            prefix = g[: j + 1]
            base = {m: roles[m] for m in g[:j]}
            chosen = allocation_error_metric(pop, [prefix], {**base, u: roles[u]}, 1.0, 1.0,
                                             state.zeta_reg)
            other = Kind.BE if roles[u] == Kind.MBE else Kind.MBE
            alt = allocation_error_metric(pop, [prefix], {**base, u: other}, 1.0, 1.0,
                                          state.zeta_reg)
            assert chosen <= alt * (1 + 1e-9) + 1e-12


def test_population_validation():
    with pytest.raises(InvalidParameterError):
        UserPopulation(np.zeros((2, 3, 3)), [0, 0])
    with pytest.raises(InvalidParameterError):
        UserPopulation(np.zeros((2, 1, 3, 3)), [0, 1])


def test_state_check_catches_overlap():
    state = AllocationState(groups=[[0, 1], [1]], reuse_factor=2)
    with pytest.raises(AssertionError):
        state.check(2)


# ---------------------------------------------------------------- partitions and LS invariance

@pytest.mark.parametrize("n,k,count", [(4, 2, 3), (6, 2, 15), (6, 3, 10), (5, 2, 15), (3, 1, 1)])
def test_partition_counts(n, k, count):
    parts = list(equal_partitions(range(n), k))
    assert len(parts) == count
    for p in parts:
        assert sorted(u for g in p for u in g) == list(range(n))


def test_random_allocation_shapes():
    rng = np.random.default_rng(6)
    pop = _random_population(rng, 8, C=2)
    part = random_allocation(pop, 2, np.random.default_rng(1), one_per_cell=True)
    assert sorted(u for g in part for u in g) == list(range(8))
    assert all(len({pop.cells[u] for u in g}) == 2 for g in part)
    with pytest.raises(InvalidParameterError):
        random_allocation(_subspace_population([[0]] * 2), 2, np.random.default_rng(0),
                          one_per_cell=True)


def test_theorem1_four_users_three_pairings():
    rng = np.random.default_rng(7)
    pop = _random_population(rng, 4)
    assert theorem1_check(pop, list(equal_partitions(range(4), 2)))


def test_theorem1_single_partition():
    pop = _random_population(np.random.default_rng(8), 2)
    assert theorem1_check(pop, [[[0, 1]]])


@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 10))
def test_theorem1_random_six_users(seed, scale):
    rng = np.random.default_rng(seed)
    # each user keeps its trace towards every station; subspaces are arbitrary
    traces = rng.uniform(0.5, 3, 6) * scale
    covs = np.array([[random_psd(rng, 4, 2, scale=t) for _ in range(2)] for t in traces])
    pop = UserPopulation(covs, np.arange(6) % 2)
    parts = list(equal_partitions(range(6), 2))
    assert len(parts) == 15
    assert theorem1_check(pop, parts, sigma2=0.3, tau=2.0)


def test_theorem1_needs_station_independent_traces():
    covs = np.array([[np.eye(2), 5 * np.eye(2)], [np.eye(2), np.eye(2)],
                     [np.eye(2), np.eye(2)], [np.eye(2), np.eye(2)]], dtype=complex)
    pop = UserPopulation(covs, [0, 1, 0, 1])
    totals = {round(ls_total(pop, p), 9) for p in equal_partitions(range(4), 2)}
    assert len(totals) > 1


def test_greedy_is_a_heuristic():
    # seeding user 0 with its best partner strands the last two twins together
    pop = _subspace_population([[0, 1], [0, 1], [2, 3], [2, 3], [4, 5], [4, 5]], M=6)
    state = greedy_allocate_dls(pop, 2)
    best, part = exhaustive_allocate(pop, 2, _delta_total(pop))
    assert state.groups == [[0, 2], [1, 3], [4, 5]]
    assert state.metric == pytest.approx(1.0)
    assert best == 0
