"""Greedy training-sequence allocation.

A population is a set of users, each served by one base station and seen by
every base station through its own covariance. ``covariances[u][c]`` is user
``u`` as seen by base station ``c``; ``serving[u]`` is the station that
estimates user ``u``. Users sharing a sequence contaminate each other's
estimates at their serving stations.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._linalg import positive_subspace
from .errors import InvalidParameterError
from .estimators import Kind, be_mse_closed, ls_mse_closed
from .model import as_matrix


@dataclass(frozen=True, eq=False)
class UserPopulation:
    covariances: np.ndarray  # (users, stations, M, M)
    serving: np.ndarray  # (users,)
    cells: np.ndarray | None = None  # cell id per user, for the one-per-cell rule

    def __post_init__(self):
        cov = np.asarray(self.covariances, dtype=complex)
        if cov.ndim != 4 or cov.shape[2] != cov.shape[3]:
            raise InvalidParameterError("covariances must have shape (users, stations, M, M)")
        serving = np.asarray(self.serving, dtype=int)
        if serving.shape != (cov.shape[0],) or np.any((serving < 0) | (serving >= cov.shape[1])):
            raise InvalidParameterError("serving must name one station per user")
        cells = serving if self.cells is None else np.asarray(self.cells, dtype=int)
        object.__setattr__(self, "covariances", cov)
        object.__setattr__(self, "serving", serving)
        object.__setattr__(self, "cells", cells)

    @property
    def size(self) -> int:
        return self.covariances.shape[0]

    @property
    def antenna_count(self) -> int:
        return self.covariances.shape[2]

    def own(self, u: int) -> np.ndarray:
        return self.covariances[u, self.serving[u]]

    def towards(self, users, station: int):
        return [self.covariances[m, station] for m in users]

    def mean_trace(self) -> float:
        return float(np.mean([np.trace(self.own(u)).real for u in range(self.size)]))


@dataclass
class AllocationState:
    groups: list = field(default_factory=list)  # sequence index -> ordered user list
    estimator_choice: dict = field(default_factory=dict)  # user -> Kind.BE | Kind.MBE
    unassigned: list = field(default_factory=list)
    reuse_factor: int = 1
    zeta_reg: float = 0.0
    metric: float = 0.0

    def group_of(self, u: int) -> int:
        for i, g in enumerate(self.groups):
            if u in g:
                return i
        raise KeyError(u)

    def check(self, n_users: int):
        seen = [u for g in self.groups for u in g]
        assert len(seen) == len(set(seen)), "groups overlap"
        assert all(len(g) <= self.reuse_factor for g in self.groups)
        assert sorted(seen + list(self.unassigned)) == list(range(n_users))


# ---------------------------------------------------------------- separation metrics

def pairwise_separation(R_l, R_m) -> float:
    """``tr(R_l R_m) / (tr R_l tr R_m)``, in [0, 1] for PSD inputs."""
    a, b = as_matrix(R_l), as_matrix(R_m)
    ta, tb = np.trace(a).real, np.trace(b).real
    if ta <= 0 or tb <= 0:
        raise InvalidParameterError("separation needs covariances with positive trace")
    return float(np.trace(a @ b).real / (ta * tb))


def group_separation(covariances: Sequence, target: int) -> float:
    """Separation between ``covariances[target]`` and the sum of the others (0 if none)."""
    others = [as_matrix(r) for i, r in enumerate(covariances) if i != target]
    if not others:
        return 0.0
    return pairwise_separation(covariances[target], sum(others))


def group_delta(pop: UserPopulation, group: Sequence[int]) -> float:
    """Sum over the group of each member's separation from the rest at its serving station."""
    total = 0.0
    for i, u in enumerate(group):
        covs = pop.towards(group, pop.serving[u])
        total += group_separation(covs, i)
    return total


# ---------------------------------------------------------------- error metric

def _modified_term(R, total, noise, zeta):
    """``tr(R - R^3 (R^{1/2} total R^{1/2} + noise R + zeta I)^{-1})``.

    On the positive eigenspace ``(w, V)`` of ``R`` this is
    ``tr(R) - tr(W (V^H total V + noise I + zeta W^{-1})^{-1} W)``, which stays
    well conditioned for tiny ``zeta``.
    """
    w, v = positive_subspace(R)
    if w.size == 0:
        return 0.0
    inner = v.conj().T @ total @ v + np.diag(noise + zeta / w)
    t = np.trace(w[:, None] * np.linalg.solve(inner, np.diag(w))).real
    return float(np.trace(R).real - t)


def user_error(pop: UserPopulation, u: int, group: Sequence[int], role: Kind,
               sigma2: float, tau: float, zeta_reg: float = 0.0) -> float:
    """MSE of user ``u`` at its serving station when it shares a sequence with ``group``."""
    c = pop.serving[u]
    R = as_matrix(pop.own(u))
    covs = pop.towards(group, c)
    if role == Kind.MBE:
        return _modified_term(R, sum(as_matrix(r) for r in covs), sigma2 / tau, zeta_reg)
    return be_mse_closed(R, covs, sigma2, tau).value


def allocation_error_metric(pop: UserPopulation, groups: Sequence[Sequence[int]],
                            roles: dict, sigma2: float, tau: float,
                            zeta_reg: float = 0.0) -> float:
    """Summed per-user MSE; each user's role (BE or MBE) picks its error form.

    Users missing from ``roles`` count as BE.
    """
    total = 0.0
    for g in groups:
        for u in g:
            total += user_error(pop, u, g, roles.get(u, Kind.BE), sigma2, tau, zeta_reg)
    return total


# ---------------------------------------------------------------- greedy procedures

def _eligible(pop: UserPopulation, group, u, one_per_cell: bool) -> bool:
    return not one_per_cell or all(pop.cells[m] != pop.cells[u] for m in group)


def _pick_seed(unassigned, rng):
    if rng is None:
        return min(unassigned)
    return unassigned[int(rng.integers(len(unassigned)))]


def _greedy(pop, reuse_factor, score: Callable, choose_role: Callable,
            rng=None, one_per_cell=False, zeta_reg=0.0):
    if reuse_factor < 1:
        raise InvalidParameterError("reuse factor must be >= 1")
    state = AllocationState(unassigned=list(range(pop.size)), reuse_factor=reuse_factor,
                            zeta_reg=zeta_reg)
    while state.unassigned:
        seed = _pick_seed(state.unassigned, rng)
        state.unassigned.remove(seed)
        group = [seed]
        state.estimator_choice[seed] = choose_role(group, seed, state.estimator_choice)
        while len(group) < reuse_factor:
            best = None
            for u in state.unassigned:
                if not _eligible(pop, group, u, one_per_cell):
                    continue
                for value, role in score(group, u, state.estimator_choice):
                    if best is None or value < best[0]:
                        best = (value, u, role)
            if best is None:
                break
            _, u, role = best
            state.unassigned.remove(u)
            group.append(u)
            state.estimator_choice[u] = role
        state.groups.append(group)
    return state


def _strictly_less(a: float, b: float, rtol: float = 1e-9) -> bool:
    # differences at round-off level count as ties
    return a < b - rtol * max(abs(a), abs(b))


def greedy_allocate_be(pop: UserPopulation, reuse_factor: int, sigma2: float, tau: float,
                       zeta_reg: float | None = None, rng: np.random.Generator | None = None,
                       one_per_cell: bool = False) -> AllocationState:
    """Fill one sequence at a time with the (user, BE/MBE role) pair that keeps the
    group's summed error smallest.

    The seed is the lowest unassigned id unless ``rng`` is given. A user takes
    the MBE role only when that is strictly better than BE
    (beyond round-off).
    """
    if zeta_reg is None:
        zeta_reg = 1e-9 * pop.mean_trace()

    def metric(group, roles):
        return allocation_error_metric(pop, [group], roles, sigma2, tau, zeta_reg)

    def role_values(group, u, roles):
        trial = group + [u]
        be = metric(trial, {**roles, u: Kind.BE})
        mbe = metric(trial, {**roles, u: Kind.MBE})
        return be, mbe

    def score(group, u, roles):
        be, mbe = role_values(group, u, roles)
        if _strictly_less(mbe, be):
            return [(mbe, Kind.MBE)]
        return [(be, Kind.BE)]

    def choose_role(group, u, roles):
        be, mbe = role_values([m for m in group if m != u], u, roles)
        return Kind.MBE if _strictly_less(mbe, be) else Kind.BE

    state = _greedy(pop, reuse_factor, score, choose_role, rng, one_per_cell, zeta_reg)
    state.metric = allocation_error_metric(pop, state.groups, state.estimator_choice,
                                           sigma2, tau, zeta_reg)
    return state


def greedy_allocate_dls(pop: UserPopulation, reuse_factor: int,
                        rng: np.random.Generator | None = None,
                        one_per_cell: bool = False) -> AllocationState:
    """Fill one sequence at a time with the user that keeps the group's summed separation smallest."""

    def score(group, u, roles):
        return [(group_delta(pop, group + [u]), Kind.LS)]

    state = _greedy(pop, reuse_factor, score, lambda g, u, r: Kind.LS, rng, one_per_cell)
    state.estimator_choice = {}
    state.metric = sum(group_delta(pop, g) for g in state.groups)
    return state


# ---------------------------------------------------------------- partitions and oracles

def _full_partitions(items: list, size: int):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for mates in itertools.combinations(rest, size - 1):
        remaining = [x for x in rest if x not in mates]
        for tail in _full_partitions(remaining, size):
            yield [[first, *mates]] + tail


def equal_partitions(items: Sequence[int], size: int):
    """Every partition of ``items`` into groups of ``size``, plus one short group
    holding the remainder when ``size`` does not divide the count."""
    items = list(items)
    short = len(items) % size
    if not short:
        yield from _full_partitions(items, size)
        return
    for tail in itertools.combinations(items, short):
        rest = [x for x in items if x not in tail]
        for part in _full_partitions(rest, size):
            yield part + [list(tail)]


def exhaustive_allocate(pop: UserPopulation, reuse_factor: int, metric: Callable,
                        one_per_cell: bool = False):
    """``(best value, best partition)`` of ``metric(groups)`` over all equal-size partitions."""
    best = None
    for part in equal_partitions(range(pop.size), reuse_factor):
        if one_per_cell and any(len({pop.cells[u] for u in g}) < len(g) for g in part):
            continue
        value = metric(part)
        if best is None or value < best[0] - 1e-12:
            best = (value, part)
    return best


def random_allocation(pop: UserPopulation, reuse_factor: int, rng: np.random.Generator,
                      one_per_cell: bool = False, max_tries: int = 1000):
    """Uniformly shuffled partition into groups of ``reuse_factor`` (redrawn until valid)."""
    for _ in range(max_tries):
        order = rng.permutation(pop.size).tolist()
        part = [order[i:i + reuse_factor] for i in range(0, pop.size, reuse_factor)]
        if not one_per_cell or all(len({pop.cells[u] for u in g}) == len(g) for g in part):
            return part
    raise InvalidParameterError("no valid random partition found under the one-per-cell rule")


def ls_total(pop: UserPopulation, groups, sigma2: float = 0.0, tau: float = 1.0) -> float:
    total = 0.0
    for g in groups:
        for u in g:
            others = pop.towards([m for m in g if m != u], pop.serving[u])
            total += ls_mse_closed(others, sigma2, tau, M=pop.antenna_count)
    return total


def theorem1_check(pop: UserPopulation, partitions, sigma2: float = 0.0, tau: float = 1.0,
                   atol: float = 1e-12) -> bool:
    """True iff the LS closed-form total is the same for every partition.

    Holds whenever each user's covariance trace is the same towards every
    station, whatever the subspaces.
    """
    totals = [ls_total(pop, p, sigma2, tau) for p in partitions]
    if not totals:
        return True
    ref = totals[0]
    return all(abs(t - ref) <= atol * max(1.0, abs(ref)) for t in totals)
