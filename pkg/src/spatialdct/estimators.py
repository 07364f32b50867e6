"""Least-squares, Bayesian and DCT-compressed channel estimators.

Every estimator here is linear in the matched-filter output
``yhat = S^H y / (s^H s)``, so each one is represented by an ``M x M`` gain
``F`` with ``h_est = F @ yhat``. The post-correlation noise variance is
``sigma2 / tau`` where ``tau`` is the training energy ``s^H s`` (equal to the
sequence length for unit-modulus symbols).

``R_all`` arguments always list the covariances (towards the estimating base
station) of every user sharing the training sequence, the target included.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._linalg import EIG_FLOOR, eigh_desc, numerical_rank, pinv_psd, psd_power
from .dct import CompressionMask, DctBasis, energy_profile, mask_projector, select_mask
from .errors import DimensionError, InvalidParameterError, UndefinedMetricError
from .model import ReceivedSignal, TrainingSequence, as_matrix, correlate

NMSE_FLOOR_DB = -300.0


class Kind(str, enum.Enum):
    LS = "LS"
    BE = "BE"
    DBE = "DBE"
    MBE = "MBE"
    DLS = "DLS"
    MDBE = "MDBE"
    MDLS = "MDLS"
    ABE_MBE = "ABE-MBE"
    ADBE_MDBE = "ADBE-MDBE"

    def __str__(self):
        return self.value

    @property
    def uses_mask(self) -> bool:
        return self in (Kind.DBE, Kind.DLS, Kind.MDBE, Kind.MDLS, Kind.ADBE_MDBE)


MODIFIED_DEFAULT_POWER = 1


@dataclass(frozen=True, eq=False)
class EstimatorFilter:
    """Linear estimator acting on the matched-filter output."""

    gain: np.ndarray
    kind: Kind
    power_index: int = 0
    gamma: float = 1.0
    mask: CompressionMask | None = None

    def apply(self, yhat) -> np.ndarray:
        return self.gain @ np.asarray(yhat)

    def received_matrix(self, sequence: TrainingSequence) -> np.ndarray:
        """The ``M x M*tau`` matrix acting directly on the received vector."""
        M = self.gain.shape[0]
        return self.gain @ sequence.matrix(M).conj().T / sequence.energy

    def estimate(self, sequence: TrainingSequence, received: ReceivedSignal) -> np.ndarray:
        return self.apply(correlate(sequence, received))


@dataclass(frozen=True)
class MseReport:
    value: float
    kind: Kind
    bound_ni: float
    bound_mi: float


def _noise(sigma2, tau):
    return float(sigma2) / float(tau)


def _total(R_all):
    mats = [as_matrix(r) for r in R_all]
    if not mats:
        raise DimensionError("R_all must contain at least the target covariance")
    M = mats[0].shape[0]
    if any(m.shape != (M, M) for m in mats):
        raise DimensionError("all covariances must be M x M")
    return sum(mats[1:], mats[0].copy())


def _tr(a) -> float:
    return float(np.trace(a).real)


# ---------------------------------------------------------------- least squares

def ls_estimate(sequence: TrainingSequence, received: ReceivedSignal) -> np.ndarray:
    return correlate(sequence, received)


def ls_mse_closed(R_interferers: Sequence, sigma2: float = 0.0, tau: float = 1.0,
                  M: int | None = None, include_noise: bool = True) -> float:
    """``tr(sum of interferer covariances)`` plus, optionally, the noise floor ``M sigma2 / tau``.

    ``M`` is only needed when there are no interferers to infer it from.
    """
    mats = [as_matrix(r) for r in R_interferers]
    interference = sum(_tr(m) for m in mats)
    if not include_noise:
        return interference
    if M is None:
        if not mats:
            raise DimensionError("M is required when there are no interferers")
        M = mats[0].shape[0]
    return interference + M * _noise(sigma2, tau)


# ---------------------------------------------------------------- Bayesian

def be_gain(R_target, R_all, noise: float) -> np.ndarray:
    r = as_matrix(R_target)
    c = _total(R_all) + noise * np.eye(r.shape[0])
    return r @ pinv_psd(c)


def be_filter(R_target, R_all, sigma2: float, tau: float) -> EstimatorFilter:
    return EstimatorFilter(be_gain(R_target, R_all, _noise(sigma2, tau)), Kind.BE)


def be_mse_closed(R_target, R_all, sigma2: float, tau: float) -> MseReport:
    """Closed-form MSE with the no-interference and maximum-interference values.

    Both reference values are exact MSEs of the same estimator: alone on the
    pilot (``bound_ni``) and sharing it with ``len(R_all) - 1`` users of
    identical statistics (``bound_mi``).
    """
    r = as_matrix(R_target)
    n = _noise(sigma2, tau)
    eye = np.eye(r.shape[0])
    value = _tr(r - r @ r @ pinv_psd(_total(R_all) + n * eye))
    w, v = eigh_desc(r)
    w = np.clip(w, 0, None)
    C = len(R_all)
    with np.errstate(invalid="ignore", divide="ignore"):
        mi = np.where(w > 0, w * ((C - 1) * w + n) / (C * w + n), 0.0)
        ni = np.where(w > 0, w * n / (w + n), 0.0)
    return MseReport(value, Kind.BE, float(ni.sum()), float(mi.sum()))


# ---------------------------------------------------------------- modified Bayesian

def _modified_reduction(R_target, power_index):
    """Positive eigenspace of ``R^i`` (all of C^M for ``i = 0``)."""
    r = as_matrix(R_target)
    w, v = eigh_desc(r)
    w = np.clip(w, 0, None)
    if power_index == 0:
        return w, v
    rank = numerical_rank(w ** power_index, EIG_FLOOR) if w[0] > 0 else 0
    return w[:rank], v[:, :rank]


def modified_gain(R_target, R_all, noise: float, power_index: int = MODIFIED_DEFAULT_POWER,
                  gamma: float = 1.0) -> np.ndarray:
    """``gamma R^{1+i/2} (R^{i/2} (sum R) R^{i/2} + noise R^i)^+ R^{i/2}``.

    Evaluated on the positive eigenspace ``W`` of ``R^i``, where it reduces to
    ``gamma W D (W^H (sum R) W + noise I)^{-1} W^H``.
    """
    w, v = _modified_reduction(R_target, power_index)
    if w.size == 0:
        M = as_matrix(R_target).shape[0]
        return np.zeros((M, M), dtype=complex)
    a = v.conj().T @ _total(R_all) @ v
    inner = pinv_psd(a + noise * np.eye(w.size))
    return gamma * (v * w) @ inner @ v.conj().T


def mbe_filter(R_target, R_all, sigma2: float, tau: float,
               power_index: int = MODIFIED_DEFAULT_POWER, gamma: float = 1.0) -> EstimatorFilter:
    g = modified_gain(R_target, R_all, _noise(sigma2, tau), power_index, gamma)
    return EstimatorFilter(g, Kind.MBE, power_index, gamma)


def power_gamma(R_target, yhat, power_index: int = MODIFIED_DEFAULT_POWER) -> float:
    """Scale keeping ``||gamma R^{i/2} yhat|| = ||yhat||`` for one observation."""
    z = psd_power(R_target, power_index / 2) @ np.asarray(yhat)
    nz = np.linalg.norm(z)
    return float(np.linalg.norm(yhat) / nz) if nz > 0 else 1.0


def expected_gamma(R_target, R_all, sigma2: float, tau: float, rng: np.random.Generator,
                   power_index: int = MODIFIED_DEFAULT_POWER, draws: int = 1000) -> float:
    """Monte Carlo mean of :func:`power_gamma` over the pilot-sharing population."""
    from .model import covariance_sqrt, standard_complex_normal

    n = _noise(sigma2, tau)
    c = _total(R_all) + n * np.eye(as_matrix(R_target).shape[0])
    root = covariance_sqrt(c)
    yhat = standard_complex_normal(rng, (draws, root.shape[0])) @ root.T
    z = yhat @ psd_power(R_target, power_index / 2).T
    nz = np.linalg.norm(z, axis=1)
    ratio = np.linalg.norm(yhat, axis=1) / np.where(nz > 0, nz, 1.0)
    return float(np.mean(ratio))


def mbe_mse_closed(R_target, R_all, sigma2: float, tau: float,
                   power_index: int = MODIFIED_DEFAULT_POWER, gamma: float = 1.0) -> float:
    """MSE of the modified Bayesian filter.

    ``tr(R) - (2 gamma - gamma**2) tr(R^{i+2} (R^{i/2} (sum R) R^{i/2} + noise R^i)^+)``;
    at ``gamma = 1`` the factor is 1.
    """
    n = _noise(sigma2, tau)
    w, v = _modified_reduction(R_target, power_index)
    r = as_matrix(R_target)
    if w.size == 0:
        return _tr(r)
    a = v.conj().T @ _total(R_all) @ v
    t = _tr((w[:, None] * pinv_psd(a + n * np.eye(w.size))) * w[None, :])
    return _tr(r) - (2 * gamma - gamma**2) * t


# ---------------------------------------------------------------- DCT variants

def target_mask(R_target, basis: DctBasis, eta: float,
                power_index: int = 0) -> CompressionMask:
    """Mask from the DCT profile of ``R^{1+i}``, the target covariance in the filtered domain."""
    r = as_matrix(R_target)
    if power_index:
        r = psd_power(r, 1 + power_index)
    return select_mask(energy_profile(r, basis), eta)


def dls_gain(basis: DctBasis, mask: CompressionMask) -> np.ndarray:
    if mask.q.size != basis.size:
        raise DimensionError("mask length must equal M")
    return mask_projector(basis, mask).astype(complex)


def dls_estimate(sequence: TrainingSequence, received: ReceivedSignal,
                 basis: DctBasis, mask: CompressionMask) -> np.ndarray:
    return dls_gain(basis, mask) @ correlate(sequence, received)


def dbe_gain(R_target, R_all, noise: float, basis: DctBasis,
             mask: CompressionMask) -> np.ndarray:
    """Bayesian gain built from masked covariances, applied to the masked observation."""
    pi = dls_gain(basis, mask)
    r_hat = pi @ as_matrix(R_target) @ pi
    s_hat = pi @ _total(R_all) @ pi
    g = r_hat @ pinv_psd(s_hat + noise * np.eye(basis.size))
    return g @ pi


def dbe_estimate(sequence, received, R_target, R_all, sigma2, tau, basis, mask):
    return dbe_gain(R_target, R_all, _noise(sigma2, tau), basis, mask) @ correlate(sequence, received)


def mdbe_gain(R_target, R_all, noise: float, basis: DctBasis, mask: CompressionMask,
              power_index: int = MODIFIED_DEFAULT_POWER) -> np.ndarray:
    """Modified Bayesian gain on the masked ``R^{i/2}``-weighted observation.

    ``z = R^{i/2} yhat`` is masked to ``Pi z``; with ``Q_m = R^{i/2} R_m R^{i/2}``
    the filter is ``Pi R^{1+i/2} Pi (sum Pi Q_m Pi + noise Pi R^i Pi)^+`` and its
    output is already the channel estimate.
    """
    r = as_matrix(R_target)
    pi = dls_gain(basis, mask)
    half = psd_power(r, power_index / 2) if power_index else np.eye(basis.size)
    q_sum = half @ _total(R_all) @ half
    noise_cov = psd_power(r, power_index) if power_index else np.eye(basis.size)
    cross = pi @ psd_power(r, 1 + power_index / 2) @ pi
    inner = pi @ (q_sum + noise * noise_cov) @ pi
    return cross @ pinv_psd(inner) @ pi @ half


def mdbe_estimate(sequence, received, R_target, R_all, sigma2, tau, basis, mask,
                  power_index: int = MODIFIED_DEFAULT_POWER):
    g = mdbe_gain(R_target, R_all, _noise(sigma2, tau), basis, mask, power_index)
    return g @ correlate(sequence, received)


def regularized_inverse_root(R_target, p: float, noise: float = 0.0) -> np.ndarray:
    """``R^p (R^{2p} + noise^{2p} I)^{-1}``, a damped ``R^{-p}``.

    With ``noise = 0`` this is the pseudo-inverse power. Directions much
    stronger than the noise are inverted exactly; weaker ones are attenuated
    instead of amplified.
    """
    r = as_matrix(R_target)
    if noise <= 0:
        return psd_power(r, -p)
    w, v = eigh_desc(r)
    w = np.clip(w, 0, None)
    return (v * (w**p / (w ** (2 * p) + noise ** (2 * p)))) @ v.conj().T


def mdls_gain(R_target, basis: DctBasis, mask: CompressionMask,
              power_index: int = MODIFIED_DEFAULT_POWER, noise: float = 0.0) -> np.ndarray:
    """``R^{-i/2} Pi R^{i/2}``: weight, mask, then undo the weighting.

    With ``noise > 0`` the undo step uses :func:`regularized_inverse_root`, so
    weak eigen-directions do not amplify the noise that leaks through the mask.
    """
    pi = dls_gain(basis, mask)
    if power_index == 0:
        return pi
    return (regularized_inverse_root(R_target, power_index / 2, noise) @ pi
            @ psd_power(R_target, power_index / 2))


def mdls_estimate(sequence, received, R_target, basis, mask,
                  power_index: int = MODIFIED_DEFAULT_POWER, noise: float = 0.0):
    return mdls_gain(R_target, basis, mask, power_index, noise) @ correlate(sequence, received)


# ---------------------------------------------------------------- generic MSE and adaptation

def linear_mse(gain, R_target, R_all, noise: float) -> float:
    """Exact MSE of ``h_est = gain @ yhat`` when ``yhat = sum_l h_l + n``."""
    f = np.asarray(gain)
    r = as_matrix(R_target)
    eye = np.eye(r.shape[0])
    others = _total(R_all) - r + noise * eye
    e = f - eye
    return _tr(e @ r @ e.conj().T) + _tr(f @ others @ f.conj().T)


def adaptive_select(R_target, R_all, sigma2: float, tau: float,
                    pair=(Kind.BE, Kind.MBE), power_index: int = MODIFIED_DEFAULT_POWER,
                    gamma: float = 1.0, basis: DctBasis | None = None,
                    eta: float | None = None) -> Kind:
    """Pick whichever of ``pair`` has the smaller MSE; ties keep the unmodified kind.

    BE/MBE use their closed forms. DBE/MDBE have no closed form in print, but
    both are linear so :func:`linear_mse` gives their exact MSE.
    """
    base, modified = pair
    n = _noise(sigma2, tau)
    if (base, modified) == (Kind.BE, Kind.MBE):
        e_base = be_mse_closed(R_target, R_all, sigma2, tau).value
        e_mod = mbe_mse_closed(R_target, R_all, sigma2, tau, power_index, gamma)
    elif (base, modified) == (Kind.DBE, Kind.MDBE):
        if basis is None or eta is None:
            raise InvalidParameterError("DBE/MDBE adaptation needs a basis and eta")
        m0 = target_mask(R_target, basis, eta)
        m1 = target_mask(R_target, basis, eta, power_index)
        e_base = linear_mse(dbe_gain(R_target, R_all, n, basis, m0), R_target, R_all, n)
        e_mod = linear_mse(mdbe_gain(R_target, R_all, n, basis, m1, power_index),
                           R_target, R_all, n)
    else:
        raise InvalidParameterError(f"unsupported adaptive pair {pair}")
    # round-off differences count as ties
    return modified if e_mod < e_base - 1e-9 * max(abs(e_base), abs(e_mod)) else base


def normalized_mse(estimates, truths) -> float:
    """``10 log10(sum ||h_est - h||^2 / sum ||h||^2)``, floored at -300 dB."""
    est = [np.asarray(e) for e in estimates]
    tru = [np.asarray(t) for t in truths]
    if len(est) != len(tru) or any(e.shape != t.shape for e, t in zip(est, tru)):
        raise DimensionError("estimates and truths must match one to one")
    den = sum(float(np.vdot(t, t).real) for t in tru)
    if den <= 0:
        raise UndefinedMetricError("truth vectors carry no energy")
    num = sum(float(np.vdot(e - t, e - t).real) for e, t in zip(est, tru))
    return ratio_to_db(num / den)


def ratio_to_db(ratio: float) -> float:
    if ratio <= 0:
        return NMSE_FLOOR_DB
    return max(10 * np.log10(ratio), NMSE_FLOOR_DB)
