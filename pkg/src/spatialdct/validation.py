"""Self-checks against analytic and Monte Carlo oracles, run by ``spatialdct validate``."""
from __future__ import annotations

import numpy as np

from .allocation import (
    UserPopulation, equal_partitions, exhaustive_allocate, greedy_allocate_dls, group_delta,
    theorem1_check,
)
from .dct import (
    dct_basis, forward, mask_projector, residual_scn, scn, steering_dct, tridiagonal_generator,
)
from .dct import CompressionMask
from .estimators import be_gain, be_mse_closed, ls_mse_closed, mbe_mse_closed, modified_gain
from .model import UlaGeometry, draw_channel, exponential_correlation, ula_response
from .sim import monte_carlo_mse

CHECKS = []


def check(fn):
    CHECKS.append(fn)
    return fn


def _random_psd(rng, M, rank=None):
    rank = M if rank is None else rank
    a = rng.standard_normal((M, rank)) + 1j * rng.standard_normal((M, rank))
    r = a @ a.conj().T
    return r * M / np.trace(r).real


@check
def dct_orthonormal():
    err = max(np.linalg.norm(dct_basis(M).matrix @ dct_basis(M).matrix.T - np.eye(M))
              for M in (1, 2, 7, 64, 256))
    return err < 1e-10, f"max ||UU^T - I|| = {err:.1e}"


@check
def parseval():
    rng = np.random.default_rng(1)
    m = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    err = abs(np.linalg.norm(forward(dct_basis(50), m)) - np.linalg.norm(m))
    return err < 1e-12, f"norm gap {err:.1e}"


@check
def tridiagonal_eigenvectors():
    u = dct_basis(16).matrix
    d = u @ tridiagonal_generator(16, 0.9) @ u.T
    off = np.abs(d - np.diag(np.diag(d))).max()
    return off < 1e-10, f"max off-diagonal {off:.1e}"


@check
def scn_growth_exponential():
    vals = [scn(exponential_correlation(M, 0.9)) for M in (4, 8, 16, 32, 64, 128, 256)]
    ok = all(b >= a for a, b in zip(vals, vals[1:])) and abs(vals[-1] / 361 - 1) <= 0.15
    return ok, f"SCN(256) = {vals[-1]:.1f}"


@check
def scn_after_dct():
    vals = [residual_scn(dct_basis(M), exponential_correlation(M, 0.9)) for M in (64, 128, 256)]
    ok = all(1 <= v <= 4 for v in vals) and vals[0] > vals[-1]
    return ok, "residual SCN " + ", ".join(f"{v:.3f}" for v in vals)


@check
def steering_closed_form():
    rng = np.random.default_rng(2)
    geom = UlaGeometry(24)
    basis = dct_basis(24)
    err = 0.0
    for _ in range(100):
        theta = rng.uniform(-np.pi / 2, np.pi / 2)
        k = int(rng.integers(24))
        num = forward(basis, ula_response(geom, theta))[k]
        err = max(err, abs(num - steering_dct(geom, geom.spatial_frequency(theta), k)))
    return err < 1e-8, f"max error {err:.1e}"


@check
def channel_covariance():
    r = np.asarray(exponential_correlation(8, 0.7 + 0.2j))
    h = draw_channel(r, np.random.default_rng(3), size=100_000)
    emp = h.T @ h.conj() / h.shape[0]
    err = np.linalg.norm(emp - r) / np.linalg.norm(r)
    return err < 0.02, f"relative Frobenius {err:.4f}"


@check
def theorem1_invariance():
    rng = np.random.default_rng(4)
    covs = np.array([[_random_psd(rng, 4) * (u + 1) for _ in range(2)] for u in range(6)])
    pop = UserPopulation(covs, np.array([0, 0, 0, 1, 1, 1]))
    parts = list(equal_partitions(range(6), 2))
    return theorem1_check(pop, parts) and len(parts) == 15, f"{len(parts)} pairings"


def _mc_check(gain, rt, others, closed, trials=20_000, seed=5):
    mean, se = monte_carlo_mse(gain, rt, others, 1.0, trials, seed)
    z = abs(mean - closed) / se
    return z <= 3, f"closed {closed:.4f}, MC {mean:.4f} +- {se:.4f} ({z:.2f} SE)"


@check
def be_closed_vs_monte_carlo():
    rng = np.random.default_rng(6)
    rs = [_random_psd(rng, 8, 3) for _ in range(3)]
    return _mc_check(be_gain(rs[0], rs, 1.0), rs[0], rs[1:],
                     be_mse_closed(rs[0], rs, 1.0, 1.0).value)


@check
def ls_closed_vs_monte_carlo():
    rng = np.random.default_rng(7)
    rs = [_random_psd(rng, 8, 3) for _ in range(3)]
    return _mc_check(np.eye(8), rs[0], rs[1:], ls_mse_closed(rs[1:], 1.0, 1.0))


@check
def mbe_closed_vs_monte_carlo():
    rng = np.random.default_rng(8)
    rs = [_random_psd(rng, 8, 3) for _ in range(3)]
    return _mc_check(modified_gain(rs[0], rs, 1.0, 1), rs[0], rs[1:],
                     mbe_mse_closed(rs[0], rs, 1.0, 1.0, 1))


@check
def be_bounds_sandwich():
    rng = np.random.default_rng(9)
    r = _random_psd(rng, 6)
    rep = be_mse_closed(r, [r, r, r], 0.5, 1.0)
    ok = rep.bound_ni <= rep.value + 1e-12 and abs(rep.value - rep.bound_mi) < 1e-9
    return ok, f"NI {rep.bound_ni:.4f} <= {rep.value:.4f} = MI {rep.bound_mi:.4f}"


@check
def full_mask_is_identity():
    p = mask_projector(dct_basis(12), CompressionMask.full(12))
    err = np.abs(p - np.eye(12)).max()
    return err < 1e-12, f"max deviation {err:.1e}"


@check
def greedy_matches_exhaustive():
    M = 8
    u = np.eye(M)
    # users 0/2 and 1/3 share subspaces; orthogonal pairing is optimal
    blocks = [u[:, :2], u[:, 4:6], u[:, :2], u[:, 4:6]]
    covs = np.array([[b @ b.T] for b in blocks], dtype=complex)
    pop = UserPopulation(covs, np.zeros(4, dtype=int))
    state = greedy_allocate_dls(pop, 2)
    best, _ = exhaustive_allocate(pop, 2, lambda part: sum(group_delta(pop, g) for g in part))
    return abs(state.metric - best) < 1e-12, f"greedy {state.metric:.3f}, optimum {best:.3f}"


def run_checks(force_fail: str | None = None):
    """``[(name, passed, detail)]`` for every check; ``force_fail`` flips one to failing."""
    names = [fn.__name__ for fn in CHECKS]
    results = []
    for fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        if fn.__name__ == force_fail:
            ok, detail = False, "forced failure"
        results.append((fn.__name__, bool(ok), detail))
    if force_fail is not None and force_fail not in names:
        results.append((force_fail, False, "forced failure (no such check)"))
    return results
