"""Monte Carlo engine: scenarios, trials, sweeps and allocation studies.

Scenario convention: ``K`` users share one training sequence and user ``l`` is
served by base station ``l``. ``theta_start[c][l]`` (degrees) is the lower edge
of user ``l``'s angular spread as seen by station ``c``. Each station estimates
its own user; the normalized error sums over stations.

Random numbers come from ``stream(role, seed, block, station, user)`` with fixed
blocks of ``BLOCK`` trials, so every result is independent of how blocks are
spread over workers.
"""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._linalg import eigh_desc, hermitian_part
from .allocation import (
    UserPopulation, allocation_error_metric, greedy_allocate_be, greedy_allocate_dls,
    group_delta, random_allocation,
)
from .dct import DctBasis, dct_basis, eta_grid
from .errors import ConfigurationError, InvalidParameterError
from .estimators import (
    Kind, adaptive_select, be_gain, dbe_gain, dls_gain, expected_gamma, mdbe_gain,
    mdls_gain, modified_gain, ratio_to_db, target_mask,
)
from .model import (
    AngularSpreadParams, CovarianceMatrix, TrainingSequence, UlaGeometry, covariance_sqrt,
    exponential_correlation, practical_correlation, standard_complex_normal,
)

BLOCK = 256
# nonzero and always first: numpy seeds [a, b] and [a, b, 0] give the same stream
FADING, NOISE, PERTURB, GAMMA, PLACEMENT, ALLOC_FADING, ALLOC_NOISE = range(1, 8)


def stream(role: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(role, *key)``; each role uses one fixed key length."""
    return np.random.default_rng([role, *key])

ALL_KINDS = tuple(Kind)
AXES = ("M", "eta", "K", "overlap", "uncertainty", "power_index")


@dataclass(frozen=True)
class ScenarioConfig:
    M: int = 8
    K: int = 2
    theta_start: tuple = ((10.0, 25.0), (20.0, 35.0))  # degrees, [station][user]
    C: int | None = None  # stations; defaults to K
    tau: int = 1
    P_dB: float = 0.0
    sigma2: float = 1.0
    beta: float = 1.0
    span: float = 20.0  # degrees
    overlap: float = 5.0  # degrees; only moves users when layout == "overlap"
    layout: str = "table"  # "table" | "overlap"
    correlation: str = "uniform"  # "uniform" | "gaussian" | "exponential"
    rho: float = 0.9
    spacing: float = 0.5
    eta: float | None = None  # None -> grid search per estimator
    trials: int = 1000
    seed: int = 0
    cov_error: float = 0.0
    power_index: int = 1
    gamma_mode: str = "unit"  # "unit" | "expected"
    estimators: tuple = tuple(k.value for k in ALL_KINDS)

    def __post_init__(self):
        _check(self)

    @property
    def stations(self) -> int:
        return self.K if self.C is None else self.C

    @property
    def power(self) -> float:
        return 10 ** (self.P_dB / 10)

    @property
    def kinds(self) -> tuple:
        return tuple(Kind(k) for k in self.estimators)

    def replace(self, **kw) -> "ScenarioConfig":
        return dataclasses.replace(self, **kw)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown field(s) {sorted(unknown)}", "scenario")
        kw = dict(data)
        if "theta_start" in kw:
            kw["theta_start"] = tuple(tuple(float(x) for x in row) for row in kw["theta_start"])
        if "estimators" in kw:
            kw["estimators"] = tuple(kw["estimators"])
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigurationError(str(exc), "scenario") from exc

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["theta_start"] = [list(r) for r in self.theta_start]
        d["estimators"] = list(self.estimators)
        return d


def _check(cfg: ScenarioConfig):
    def bad(path, msg):
        raise ConfigurationError(msg, f"scenario.{path}")

    if cfg.M < 1:
        bad("M", "must be >= 1")
    if cfg.K < 1:
        bad("K", "must be >= 1")
    if cfg.trials < 1:
        bad("trials", "must be >= 1")
    if cfg.tau < 1:
        bad("tau", "must be >= 1")
    if cfg.sigma2 < 0:
        bad("sigma2", "must be >= 0")
    if cfg.beta <= 0:
        bad("beta", "must be > 0")
    if cfg.span < 0:
        bad("span", "must be >= 0")
    if cfg.cov_error < 0:
        bad("cov_error", "must be >= 0")
    if cfg.stations < cfg.K:
        bad("C", "needs at least one station per user sharing the sequence")
    if cfg.layout not in ("table", "overlap"):
        bad("layout", f"unknown layout {cfg.layout!r}")
    if cfg.correlation not in ("uniform", "gaussian", "exponential"):
        bad("correlation", f"unknown correlation {cfg.correlation!r}")
    if cfg.gamma_mode not in ("unit", "expected"):
        bad("gamma_mode", f"unknown gamma mode {cfg.gamma_mode!r}")
    if cfg.eta is not None and not 0 < cfg.eta <= 1:
        bad("eta", "must lie in (0, 1]")
    for i, k in enumerate(cfg.estimators):
        try:
            Kind(k)
        except ValueError:
            bad(f"estimators[{i}]", f"unknown estimator {k!r}")
    table = cfg.theta_start
    if len(table) < cfg.K or any(len(row) < cfg.K for row in table[:cfg.K]):
        bad("theta_start", f"needs at least a {cfg.K}x{cfg.K} table")
    if cfg.correlation != "exponential":
        for c in range(cfg.K):
            for l in range(cfg.K):
                if not 0 <= table[c][l] < 90:
                    bad(f"theta_start[{c}][{l}]", "angles must lie in [0, 90) degrees")


# ---------------------------------------------------------------- scenario resolution

@dataclass(frozen=True, eq=False)
class Scenario:
    config: ScenarioConfig
    covariances: np.ndarray  # true, (station, user, M, M), link gain applied
    design: np.ndarray  # what the estimators are given (perturbed copy)
    angles: np.ndarray  # degrees, (station, user)
    sequence: TrainingSequence
    basis: DctBasis

    @property
    def noise(self) -> float:
        """Post-correlation noise variance."""
        return self.config.sigma2 / self.sequence.energy

    @property
    def K(self) -> int:
        return self.config.K


def user_angles(cfg: ScenarioConfig) -> np.ndarray:
    """Spread start angles actually used, ``(station, user)`` in degrees."""
    K = cfg.K
    table = np.array([row[:K] for row in cfg.theta_start[:K]], dtype=float)
    if cfg.layout == "table":
        return table
    step = cfg.span - cfg.overlap
    out = np.empty((K, K))
    for c in range(K):
        target = table[c][c]
        out[c, c] = target
        others = [l for l in range(K) if l != c]
        for j, l in enumerate(others, start=1):
            up = target + j * step
            # interferers stack upward while the whole spread stays below 90 degrees
            out[c, l] = up if up + cfg.span <= 90 or target - j * step < 0 else target - j * step
            if not 0 <= out[c, l] < 90:
                raise ConfigurationError("overlap layout pushes a spread outside [0, 90)",
                                         f"scenario.theta_start[{c}][{l}]")
    return out


def base_covariance(cfg: ScenarioConfig, theta_deg: float) -> np.ndarray:
    if cfg.correlation == "exponential":
        return np.asarray(exponential_correlation(cfg.M, cfg.rho))
    geom = UlaGeometry(cfg.M, cfg.spacing)
    spread = AngularSpreadParams(np.deg2rad(theta_deg), np.deg2rad(cfg.span), cfg.correlation,
                                 np.deg2rad(cfg.overlap))
    return np.asarray(practical_correlation(geom, spread))


def perturb_covariance(R, epsilon: float, rng: np.random.Generator) -> CovarianceMatrix:
    """``R + epsilon ||R||_F E / ||E||_F`` with Hermitian Gaussian ``E``, projected onto the PSD cone."""
    a = np.asarray(R, dtype=complex)
    if epsilon == 0:
        return CovarianceMatrix(a, check=False)
    e = hermitian_part(standard_complex_normal(rng, a.shape))
    b = a + epsilon * np.linalg.norm(a) * e / np.linalg.norm(e)
    w, v = eigh_desc(b)
    return CovarianceMatrix(hermitian_part((v * np.clip(w, 0, None)) @ v.conj().T), check=False)


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    K = cfg.K
    angles = user_angles(cfg)
    covs = np.empty((K, K, cfg.M, cfg.M), dtype=complex)
    design = np.empty_like(covs)
    for c in range(K):
        for l in range(K):
            alpha = 1.0 if l == c else 1.0 / cfg.beta
            r = alpha * base_covariance(cfg, angles[c, l])
            covs[c, l] = r
            rng = stream(PERTURB, cfg.seed, l, c)
            design[c, l] = np.asarray(perturb_covariance(r, cfg.cov_error, rng))
    seq = TrainingSequence.orthogonal_set(1, cfg.tau, cfg.power)[0]
    return Scenario(cfg, covs, design, angles, seq, dct_basis(cfg.M))


# ---------------------------------------------------------------- random draws

@dataclass(frozen=True, eq=False)
class Draws:
    yhat: np.ndarray  # (trials, station, M) matched-filter outputs
    h: np.ndarray  # (trials, station, M) each station's own channel


def _draw_block(args):
    roots, symbols, energy, sigma2, seed, block, n = args
    K, _, M, _ = roots.shape
    yhat = np.zeros((n, K, M), dtype=complex)
    own = np.empty((n, K, M), dtype=complex)
    for c in range(K):
        for l in range(K):
            g = standard_complex_normal(stream(FADING, seed, block, c, l), (n, M))
            h = g @ roots[c, l].T
            yhat[:, c] += h
            if l == c:
                own[:, c] = h
        if sigma2 > 0:
            noise = standard_complex_normal(stream(NOISE, seed, block, c),
                                            (n, symbols.size, M))
            yhat[:, c] += np.sqrt(sigma2) * np.einsum("j,njm->nm", symbols.conj(), noise) / energy
    return yhat, own


def draw_trials(scen: Scenario, trials: int, seed: int, workers: int = 1) -> Draws:
    """Matched-filter outputs for ``trials`` independent fading and noise draws."""
    K = scen.K
    roots = np.array([[covariance_sqrt(scen.covariances[c, l]) for l in range(K)]
                      for c in range(K)])
    s = scen.sequence
    jobs = [(roots, s.symbols, s.energy, scen.config.sigma2, seed, b,
             min(BLOCK, trials - b * BLOCK)) for b in range(math.ceil(trials / BLOCK))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_draw_block, jobs))
    else:
        parts = [_draw_block(j) for j in jobs]
    return Draws(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))


# ---------------------------------------------------------------- filters and scoring

def _gamma(scen: Scenario, c: int) -> float:
    cfg = scen.config
    if cfg.gamma_mode == "unit":
        return 1.0
    rng = stream(GAMMA, cfg.seed, c)
    return expected_gamma(scen.design[c, c], list(scen.design[c]), cfg.sigma2,
                          scen.sequence.energy, rng, cfg.power_index)


def station_gain(scen: Scenario, kind: Kind, c: int, eta: float = 1.0):
    """``(gain, chosen kind)`` used by station ``c``; adaptive kinds report their pick."""
    cfg = scen.config
    rt, r_all, n, i = scen.design[c, c], list(scen.design[c]), scen.noise, cfg.power_index
    basis = scen.basis
    if kind == Kind.LS:
        return np.eye(cfg.M, dtype=complex), kind
    if kind == Kind.BE:
        return be_gain(rt, r_all, n), kind
    if kind == Kind.MBE:
        return modified_gain(rt, r_all, n, i, _gamma(scen, c)), kind
    if kind == Kind.DLS:
        return dls_gain(basis, target_mask(rt, basis, eta)), kind
    if kind == Kind.DBE:
        return dbe_gain(rt, r_all, n, basis, target_mask(rt, basis, eta)), kind
    if kind == Kind.MDBE:
        return mdbe_gain(rt, r_all, n, basis, target_mask(rt, basis, eta, i), i), kind
    if kind == Kind.MDLS:
        return mdls_gain(rt, basis, target_mask(rt, basis, eta, i), i, noise=n), kind
    if kind == Kind.ABE_MBE:
        pick = adaptive_select(rt, r_all, cfg.sigma2, scen.sequence.energy,
                               (Kind.BE, Kind.MBE), i, _gamma(scen, c))
        return station_gain(scen, pick, c, eta)[0], pick
    if kind == Kind.ADBE_MDBE:
        pick = adaptive_select(rt, r_all, cfg.sigma2, scen.sequence.energy,
                               (Kind.DBE, Kind.MDBE), i, basis=basis, eta=eta)
        return station_gain(scen, pick, c, eta)[0], pick
    raise InvalidParameterError(f"unknown estimator kind {kind!r}")


def trial_errors(draws: Draws, gains: Sequence[np.ndarray]) -> np.ndarray:
    """Per-trial squared error summed over stations."""
    err = np.zeros(draws.h.shape[0])
    for c, f in enumerate(gains):
        est = draws.yhat[:, c] @ np.asarray(f).T
        err += np.sum(np.abs(est - draws.h[:, c]) ** 2, axis=1)
    return err


def trial_ratios(draws: Draws, gains: Sequence[np.ndarray]) -> np.ndarray:
    """Per-trial ``sum_c ||F_c yhat_c - h_c||^2 / sum_c ||h_c||^2``."""
    den = np.sum(np.abs(draws.h) ** 2, axis=(1, 2))
    return trial_errors(draws, gains) / np.where(den > 0, den, np.inf)


def search_eta(evaluate, grid: Sequence[float]) -> tuple[float, float]:
    """``(eta, score)`` minimising ``evaluate(eta)`` over ``grid``; ties keep the smaller eta."""
    grid = list(grid)
    if not grid:
        raise InvalidParameterError("eta grid must not be empty")
    best = None
    for eta in sorted(grid):
        score = evaluate(eta)
        if best is None or score < best[1]:
            best = (eta, score)
    return best


@dataclass
class KindResult:
    kind: Kind
    ratios: np.ndarray
    eta: float | None
    choices: tuple = ()

    @property
    def mean(self) -> float:
        return float(np.mean(self.ratios))

    @property
    def se(self) -> float:
        n = self.ratios.size
        return float(np.std(self.ratios, ddof=1) / np.sqrt(n)) if n > 1 else 0.0

    @property
    def db(self) -> float:
        return ratio_to_db(self.mean)

    @property
    def se_db(self) -> float:
        m = self.mean
        return float(10 / np.log(10) * self.se / m) if m > 0 else 0.0


def evaluate_kind(scen: Scenario, draws: Draws, kind: Kind, eta: float | None = None) -> KindResult:
    K = scen.K
    if not kind.uses_mask:
        built = [station_gain(scen, kind, c) for c in range(K)]
        return KindResult(kind, trial_ratios(draws, [g for g, _ in built]), None,
                          tuple(p for _, p in built))
    cache = {}

    def score(eta):
        built = [station_gain(scen, kind, c, eta) for c in range(K)]
        r = trial_ratios(draws, [g for g, _ in built])
        cache[eta] = (r, tuple(p for _, p in built))
        return float(np.mean(r))

    grid = [eta] if eta is not None else eta_grid(scen.config.M)
    best, _ = search_eta(score, grid)
    ratios, picks = cache[best]
    return KindResult(kind, ratios, best, picks)


def run_trials(cfg: ScenarioConfig, workers: int = 1) -> dict:
    """Per-kind results for one scenario, all kinds sharing the same draws."""
    scen = build_scenario(cfg)
    draws = draw_trials(scen, cfg.trials, cfg.seed, workers)
    return {k: evaluate_kind(scen, draws, k, cfg.eta) for k in cfg.kinds}


# ---------------------------------------------------------------- sweeps

@dataclass
class SweepResult:
    axis: str
    values: list
    kinds: tuple
    mean_db: dict  # kind -> list
    se_db: dict
    mean: dict  # linear
    se: dict
    eta: dict  # kind -> list (None for unmasked)
    trials: int

    def rows(self):
        for i, v in enumerate(self.values):
            yield v, {k: (self.mean_db[k][i], self.se_db[k][i], self.eta[k][i]) for k in self.kinds}


def _apply_axis(cfg: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    if axis == "M":
        return cfg.replace(M=int(value))
    if axis == "eta":
        return cfg.replace(eta=float(value))
    if axis == "K":
        return cfg.replace(K=int(value), C=None if cfg.C is None else max(cfg.C, int(value)))
    if axis == "overlap":
        return cfg.replace(overlap=float(value), layout="overlap")
    if axis == "uncertainty":
        return cfg.replace(cov_error=float(value))
    if axis == "power_index":
        return cfg.replace(power_index=int(value))
    raise ConfigurationError(f"unknown axis {axis!r}; expected one of {AXES}", "sweep.axis")


def sweep(cfg: ScenarioConfig, axis: str, values: Sequence, workers: int = 1) -> SweepResult:
    values = list(values)
    if not values:
        raise ConfigurationError("sweep needs at least one value", "sweep.values")
    kinds = cfg.kinds
    out = {name: {k: [] for k in kinds} for name in ("mean_db", "se_db", "mean", "se", "eta")}
    for v in values:
        res = run_trials(_apply_axis(cfg, axis, v), workers)
        for k in kinds:
            r = res[k]
            out["mean_db"][k].append(r.db)
            out["se_db"][k].append(r.se_db)
            out["mean"][k].append(r.mean)
            out["se"][k].append(r.se)
            out["eta"][k].append(r.eta)
    return SweepResult(axis, values, kinds, trials=cfg.trials, **out)


# ---------------------------------------------------------------- generic Monte Carlo

def monte_carlo_mse(gain, R_target, R_interferers, noise: float, trials: int, seed: int):
    """``(mean, standard error)`` of ``||F yhat - h||^2`` with ``yhat = h + sum of interferers + n``."""
    rng = stream(FADING, seed, 0)
    root = covariance_sqrt(R_target)
    M = root.shape[0]
    h = standard_complex_normal(rng, (trials, M)) @ root.T
    y = h.copy()
    for j, r in enumerate(R_interferers):
        g = standard_complex_normal(stream(FADING, seed, j + 1), (trials, M))
        y += g @ covariance_sqrt(r).T
    if noise > 0:
        y += np.sqrt(noise) * standard_complex_normal(stream(NOISE, seed),
                                                      (trials, M))
    err = np.sum(np.abs(y @ np.asarray(gain).T - h) ** 2, axis=1)
    return float(err.mean()), float(err.std(ddof=1) / np.sqrt(trials))


# ---------------------------------------------------------------- adaptive selection frequency

def adaptive_frequency(cfg: ScenarioConfig, draws: int, seed: int = 0) -> float:
    """Fraction of random placements where ABE-MBE picks the modified estimator.

    Each placement puts every station's target spread at a uniform start angle
    and its interferers at the configured overlap (``layout="overlap"``).
    """
    rng = stream(PLACEMENT, seed)
    K = cfg.K
    hi = max(90 - cfg.span - K * (cfg.span - cfg.overlap), 1.0)
    picks = 0
    total = 0
    for _ in range(draws):
        table = np.zeros((K, K))
        table[np.diag_indices(K)] = rng.uniform(0, hi, K)
        scen = build_scenario(cfg.replace(theta_start=tuple(map(tuple, table)), layout="overlap"))
        for c in range(K):
            _, pick = station_gain(scen, Kind.ABE_MBE, c)
            picks += pick == Kind.MBE
            total += 1
    return picks / total


# ---------------------------------------------------------------- allocation studies

@dataclass(frozen=True)
class AllocationConfig:
    """Users with explicit spreads towards every station.

    ``user_theta_start[u][c]`` is in degrees; ``serving[u]`` names the station
    (and cell) of user ``u``.
    """

    M: int = 20
    user_theta_start: tuple = ()
    serving: tuple = ()
    reuse_factor: int = 2
    one_per_cell: bool = True
    span: float = 20.0
    correlation: str = "uniform"
    spacing: float = 0.5
    tau: int = 1
    P_dB: float = 0.0
    sigma2: float = 1.0
    trials: int = 300
    random_allocations: int = 100
    seed: int = 0
    power_index: int = 1
    estimators: tuple = ("LS", "BE", "ABE-MBE", "DBE", "ADBE-MDBE", "DLS", "MDLS")

    def __post_init__(self):
        if len(self.user_theta_start) != len(self.serving) or not self.serving:
            raise ConfigurationError("one serving station per user is required",
                                     "allocation.serving")
        stations = len(self.user_theta_start[0])
        for u, row in enumerate(self.user_theta_start):
            if len(row) != stations:
                raise ConfigurationError("every user needs an angle per station",
                                         f"allocation.user_theta_start[{u}]")
            for c, a in enumerate(row):
                if not 0 <= a < 90:
                    raise ConfigurationError("angles must lie in [0, 90) degrees",
                                             f"allocation.user_theta_start[{u}][{c}]")
        if any(not 0 <= s < stations for s in self.serving):
            raise ConfigurationError("serving station out of range", "allocation.serving")
        if self.reuse_factor < 1:
            raise ConfigurationError("must be >= 1", "allocation.reuse_factor")
        for i, k in enumerate(self.estimators):
            try:
                Kind(k)
            except ValueError:
                raise ConfigurationError(f"unknown estimator {k!r}",
                                         f"allocation.estimators[{i}]") from None

    @classmethod
    def from_dict(cls, data: dict) -> "AllocationConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown field(s) {sorted(unknown)}", "allocation")
        kw = dict(data)
        kw["user_theta_start"] = tuple(tuple(float(x) for x in r)
                                       for r in kw.get("user_theta_start", ()))
        kw["serving"] = tuple(int(s) for s in kw.get("serving", ()))
        if "estimators" in kw:
            kw["estimators"] = tuple(kw["estimators"])
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigurationError(str(exc), "allocation") from exc

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["user_theta_start"] = [list(r) for r in self.user_theta_start]
        d["serving"] = list(self.serving)
        d["estimators"] = list(self.estimators)
        return d

    @property
    def noise(self) -> float:
        return self.sigma2 / (10 ** (self.P_dB / 10))

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(M=self.M, K=1, theta_start=((0.0,),), span=self.span,
                              correlation=self.correlation, spacing=self.spacing, tau=self.tau,
                              P_dB=self.P_dB, sigma2=self.sigma2, power_index=self.power_index,
                              seed=self.seed)


BE_FAMILY = (Kind.BE, Kind.MBE, Kind.ABE_MBE, Kind.DBE, Kind.MDBE, Kind.ADBE_MDBE)


def build_population(cfg: AllocationConfig) -> UserPopulation:
    sc = cfg.scenario_config()
    covs = np.array([[base_covariance(sc, a) for a in row] for row in cfg.user_theta_start])
    return UserPopulation(covs, np.array(cfg.serving))


def _user_scenario(cfg: AllocationConfig, pop: UserPopulation, group, u) -> Scenario:
    """Single-station view used to build user ``u``'s filter inside ``group``."""
    c = pop.serving[u]
    order = [u] + [m for m in group if m != u]
    covs = np.array([pop.covariances[m, c] for m in order])[None]
    sc = cfg.scenario_config().replace(K=1)
    seq = TrainingSequence.orthogonal_set(1, cfg.tau, 10 ** (cfg.P_dB / 10))[0]
    return Scenario(sc, covs, covs, np.zeros((1, len(order))), seq, dct_basis(cfg.M))


def population_channels(cfg: AllocationConfig, pop: UserPopulation, seed: int) -> np.ndarray:
    """Fading draws ``(trials, user, station, M)`` keyed by (user, station), shared by all partitions."""
    U, C, M = pop.size, pop.covariances.shape[1], pop.antenna_count
    h = np.empty((cfg.trials, U, C, M), dtype=complex)
    for u in range(U):
        for c in range(C):
            g = standard_complex_normal(stream(ALLOC_FADING, seed, c, u),
                                        (cfg.trials, M))
            h[:, u, c] = g @ covariance_sqrt(pop.covariances[u, c]).T
    return h


def allocation_nmse(cfg: AllocationConfig, pop: UserPopulation, groups, kind: Kind,
                    seed: int, roles: dict | None = None,
                    channels: np.ndarray | None = None) -> tuple[float, float | None]:
    """``(mean NMSE ratio, eta)`` of ``kind`` under a partition, eta grid-searched.

    With ``roles`` (an A5 outcome) the BE/MBE role of every user is fixed by
    the allocation instead of by the kind.
    """
    U, M = pop.size, pop.antenna_count
    T = cfg.trials
    h = population_channels(cfg, pop, seed) if channels is None else channels
    yhat = np.empty((T, U, M), dtype=complex)
    own = np.empty((T, U, M), dtype=complex)
    for g in groups:
        for u in g:
            c = pop.serving[u]
            # users of one group served by the same station see the same noise
            n = standard_complex_normal(stream(ALLOC_NOISE, seed, c, min(g)),
                                        (T, M))
            yhat[:, u] = sum(h[:, m, c] for m in g) + np.sqrt(cfg.noise) * n
            own[:, u] = h[:, u, c]
    scens = {u: _user_scenario(cfg, pop, g, u) for g in groups for u in g}
    den = np.sum(np.abs(own) ** 2, axis=(1, 2))

    def user_kind(u):
        if roles is None or kind not in BE_FAMILY:
            return kind
        masked = kind in (Kind.DBE, Kind.MDBE, Kind.ADBE_MDBE)
        if roles.get(u) == Kind.MBE:
            return Kind.MDBE if masked else Kind.MBE
        return Kind.DBE if masked else Kind.BE

    def score(eta):
        err = np.zeros(T)
        for u, sc in scens.items():
            f, _ = station_gain(sc, user_kind(u), 0, eta)
            err += np.sum(np.abs(yhat[:, u] @ f.T - own[:, u]) ** 2, axis=1)
        return float(np.mean(err / den))

    if not kind.uses_mask:
        return score(1.0), None
    eta, value = search_eta(score, eta_grid(M))
    return value, eta


@dataclass
class AllocationStudy:
    greedy_be: object  # AllocationState
    greedy_dls: object
    greedy: dict  # kind -> mean NMSE ratio under its greedy partition
    random: dict  # kind -> list of ratios over random partitions
    group_metrics: dict = field(default_factory=dict)  # "A5" / "A6" -> per-group metric

    def random_mean(self, kind) -> float:
        return float(np.mean(self.random[kind]))


def allocation_study(cfg: AllocationConfig) -> AllocationStudy:
    """Greedy partitions (A5 for the Bayesian family, A6 otherwise) against random ones."""
    pop = build_population(cfg)
    state_be = greedy_allocate_be(pop, cfg.reuse_factor, cfg.sigma2, 10 ** (cfg.P_dB / 10),
                                  one_per_cell=cfg.one_per_cell)
    state_dls = greedy_allocate_dls(pop, cfg.reuse_factor, one_per_cell=cfg.one_per_cell)
    kinds = [Kind(k) for k in cfg.estimators]
    h = population_channels(cfg, pop, cfg.seed)
    greedy, rand = {}, {k: [] for k in kinds}
    for k in kinds:
        if k in BE_FAMILY:
            roles = state_be.estimator_choice if k in (Kind.ABE_MBE, Kind.ADBE_MDBE) else None
            greedy[k] = allocation_nmse(cfg, pop, state_be.groups, k, cfg.seed, roles, h)[0]
        else:
            greedy[k] = allocation_nmse(cfg, pop, state_dls.groups, k, cfg.seed, channels=h)[0]
    rng = stream(PLACEMENT, cfg.seed)
    parts = [random_allocation(pop, cfg.reuse_factor, rng, cfg.one_per_cell)
             for _ in range(cfg.random_allocations)]
    for part in parts:
        for k in kinds:
            rand[k].append(allocation_nmse(cfg, pop, part, k, cfg.seed, channels=h)[0])
    metrics = {
        "A5": [allocation_error_metric(pop, [g], state_be.estimator_choice, cfg.sigma2,
                                       10 ** (cfg.P_dB / 10), state_be.zeta_reg)
               for g in state_be.groups],
        "A6": [group_delta(pop, g) for g in state_dls.groups],
    }
    return AllocationStudy(state_be, state_dls, greedy, rand, metrics)


# ---------------------------------------------------------------- single-station studies

def station_covariances(M: int, theta_start: Sequence[float], span: float = 20.0,
                        correlation: str = "uniform", spacing: float = 0.5) -> list:
    """Covariances seen by one station; the first angle is the target."""
    cfg = ScenarioConfig(M=M, K=1, theta_start=((0.0,),), span=span, correlation=correlation,
                         spacing=spacing)
    return [base_covariance(cfg, a) for a in theta_start]


def modified_profiles(covs: Sequence, power_index: int = 1) -> dict:
    """DCT energy profiles of target and summed contamination, before and after
    weighting the observation by ``R_t^{i/2}``. Each profile sums to one."""
    from ._linalg import psd_power
    from .dct import energy_profile

    basis = dct_basis(np.asarray(covs[0]).shape[0])
    rt = np.asarray(covs[0])
    cont = sum(np.asarray(r) for r in covs[1:])
    half = psd_power(rt, power_index / 2)
    out = {
        "target_before": energy_profile(rt, basis),
        "cont_before": energy_profile(cont, basis),
        "target_after": energy_profile(half @ rt @ half, basis),
        "cont_after": energy_profile(half @ cont @ half, basis),
    }
    return {k: v / v.sum() for k, v in out.items()}


def power_index_curve(covs: Sequence, indices: Sequence[int], noise: float = 1.0) -> list:
    """Closed-form normalized MSE (linear) of the modified filter for each power index."""
    from .estimators import mbe_mse_closed

    rt = covs[0]
    tr = float(np.trace(np.asarray(rt)).real)
    return [mbe_mse_closed(rt, list(covs), noise, 1.0, i) / tr for i in indices]
