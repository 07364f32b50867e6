"""Spatial covariance synthesis, correlated Rayleigh draws and the uplink
training signal for a base station with a uniform linear array.

Angles are in radians throughout; the ULA phase convention is
``a[n] = exp(-1j * n * omega)`` with ``omega = 2*pi*(d/lambda)*sin(theta)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from ._linalg import eigh_desc, hermitian_part
from .errors import DimensionError, InvalidCovarianceError, InvalidParameterError

HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-10
SQRT_FLOOR = 1e-12


@dataclass(frozen=True)
class UlaGeometry:
    antenna_count: int
    spacing: float = 0.5  # d / lambda
    path_count: int = 1

    def __post_init__(self):
        if self.antenna_count < 1:
            raise InvalidParameterError("antenna_count must be >= 1")
        if self.spacing <= 0:
            raise InvalidParameterError("spacing (d/lambda) must be > 0")
        if self.path_count < 1:
            raise InvalidParameterError("path_count must be >= 1")

    def spatial_frequency(self, theta):
        return 2 * np.pi * self.spacing * np.sin(theta)


@dataclass(frozen=True)
class AngularSpreadParams:
    """Angles of arrival confined to ``[theta_start, theta_start + span]``.

    ``overlap`` is scenario bookkeeping (how much this spread overlaps its
    neighbour); it does not enter the covariance.
    """

    theta_start: float
    span: float
    distribution: str = "uniform"
    overlap: float = 0.0

    def __post_init__(self):
        if not 0 <= self.theta_start < np.pi / 2:
            raise InvalidParameterError("theta_start must lie in [0, pi/2)")
        if self.span < 0:
            raise InvalidParameterError("span must be >= 0")
        if self.distribution not in ("uniform", "gaussian"):
            raise InvalidParameterError(f"unknown distribution {self.distribution!r}")

    @property
    def mean_angle(self) -> float:
        return self.theta_start + self.span / 2

    @property
    def sigma_theta(self) -> float:
        # std of an angle uniform over the span; the Gaussian law reuses it
        return self.span / (2 * np.sqrt(3))

    def sigma_omega(self, geom: UlaGeometry, mean_angle: float | None = None) -> float:
        theta = self.mean_angle if mean_angle is None else mean_angle
        return 2 * np.pi * geom.spacing * self.sigma_theta * np.cos(theta)

    def delta_omega(self, geom: UlaGeometry, mean_angle: float | None = None) -> float:
        """Half-width of the equivalent uniform law in the omega domain."""
        return np.sqrt(3) * self.sigma_omega(geom, mean_angle)


class CovarianceMatrix:
    """Hermitian PSD ``M x M`` matrix with a lazily cached eigendecomposition.

    Behaves like an ndarray under ``np.asarray``.
    """

    __array_priority__ = 10

    def __init__(self, entries, check=True):
        a = np.array(entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError(f"covariance must be square, got shape {a.shape}")
        if check:
            scale = max(np.linalg.norm(a), 1e-300)
            if np.linalg.norm(a - a.conj().T) / scale > HERMITIAN_TOL:
                raise InvalidCovarianceError("matrix is not Hermitian")
            tr = np.trace(a).real
            w = np.linalg.eigvalsh(hermitian_part(a))
            if w.size and w.min() < -PSD_TOL * max(abs(tr), 1e-300):
                raise InvalidCovarianceError(
                    f"matrix is not PSD (min eigenvalue {w.min():.3e})")
        a.setflags(write=False)
        self._a = a

    @property
    def entries(self) -> np.ndarray:
        return self._a

    @property
    def size(self) -> int:
        return self._a.shape[0]

    @cached_property
    def eig(self):
        """``(eigenvalues descending, eigenvectors)``; eigenvalues clipped at 0."""
        w, v = eigh_desc(self._a)
        return np.clip(w, 0, None), v

    def trace(self) -> float:
        return float(np.trace(self._a).real)

    def __array__(self, dtype=None, copy=None):
        return self._a if dtype is None else self._a.astype(dtype)

    def __repr__(self):
        return f"CovarianceMatrix(M={self.size}, trace={self.trace():.4g})"

    def scaled(self, alpha: float) -> "CovarianceMatrix":
        return CovarianceMatrix(alpha * self._a, check=False)


@dataclass(frozen=True)
class LinkGains:
    """``alpha[l, c]`` is the attenuation from user ``l`` to base station ``c``."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidParameterError("alpha must be a square C x C matrix")
        if np.any(a < 0) or np.any(np.diag(a) <= 0):
            raise InvalidParameterError("alpha must be nonnegative with positive diagonal")
        object.__setattr__(self, "alpha", a)

    @classmethod
    def from_beta(cls, cells: int, beta: float = 1.0) -> "LinkGains":
        """Direct links at unit gain, every interfering link at ``1 / beta``."""
        if beta <= 0:
            raise InvalidParameterError("beta must be > 0")
        a = np.full((cells, cells), 1.0 / beta)
        np.fill_diagonal(a, 1.0)
        return cls(a)

    @property
    def beta(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.diag(self.alpha)[None, :] / self.alpha


@dataclass(frozen=True)
class TrainingSequence:
    symbols: np.ndarray
    power: float

    def __post_init__(self):
        s = np.asarray(self.symbols, dtype=complex).ravel()
        object.__setattr__(self, "symbols", s)
        if not np.allclose(np.abs(s) ** 2, self.power / s.size, rtol=1e-9, atol=1e-15):
            raise InvalidParameterError("training symbols must satisfy |s_j|^2 = P / tau")

    @property
    def length(self) -> int:
        return self.symbols.size

    @property
    def energy(self) -> float:
        """``s^H s``; equals ``tau`` for unit-modulus symbols."""
        return float(np.vdot(self.symbols, self.symbols).real)

    def matrix(self, antenna_count: int) -> np.ndarray:
        """``S = s (x) I_M`` of shape ``(M*tau, M)``."""
        return np.kron(self.symbols[:, None], np.eye(antenna_count))

    @classmethod
    def orthogonal_set(cls, count: int, length: int, power: float = 1.0):
        """``count`` mutually orthogonal DFT-row sequences of length ``length``."""
        if count > length:
            raise InvalidParameterError("cannot build more orthogonal sequences than tau")
        n = np.arange(length)
        amp = np.sqrt(power / length)
        return [cls(amp * np.exp(2j * np.pi * k * n / length), power) for k in range(count)]


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray
    user: int = 0
    cell: int = 0


@dataclass(frozen=True)
class ReceivedSignal:
    y: np.ndarray
    noise_variance: float
    antenna_count: int

    @property
    def tau(self) -> int:
        return self.y.size // self.antenna_count


def as_matrix(r) -> np.ndarray:
    return np.asarray(r, dtype=complex)


def exponential_correlation(M: int, rho: complex) -> CovarianceMatrix:
    """Toeplitz matrix with ``rho**|i-j|`` below the diagonal, conjugate above."""
    if M < 1:
        raise InvalidParameterError("M must be >= 1")
    if abs(rho) > 1:
        raise InvalidParameterError("|rho| must be <= 1")
    i = np.arange(M)
    lag = i[:, None] - i[None, :]
    rho = complex(rho)
    r = np.where(lag >= 0, rho ** np.abs(lag), np.conj(rho) ** np.abs(lag))
    return CovarianceMatrix(r)


def ula_response(geom: UlaGeometry, theta: float) -> np.ndarray:
    omega = geom.spatial_frequency(theta)
    return np.exp(-1j * np.arange(geom.antenna_count) * omega)


def angular_kernel(M: int, width: float, distribution: str) -> np.ndarray:
    """Real Toeplitz factor ``B`` for an angular law of given omega-domain width.

    ``width`` is ``sigma_omega`` for the Gaussian law and the half-width
    ``delta_omega`` for the uniform law.
    """
    lag = np.arange(M)[:, None] - np.arange(M)[None, :]
    if distribution == "gaussian":
        return np.exp(-0.5 * (lag * width) ** 2)
    if distribution == "uniform":
        return np.sinc(lag * width / np.pi)  # np.sinc(x) = sin(pi x)/(pi x), 1 at 0
    raise InvalidParameterError(f"unknown distribution {distribution!r}")


def practical_correlation(geom: UlaGeometry, spread: AngularSpreadParams,
                          mean_angle: float | None = None) -> CovarianceMatrix:
    """``D_a B D_a^H`` with ``D_a = diag(a(mean_angle))``.

    ``mean_angle`` defaults to the middle of the spread.
    """
    theta = spread.mean_angle if mean_angle is None else mean_angle
    if spread.distribution == "gaussian":
        width = spread.sigma_omega(geom, theta)
    else:
        width = spread.delta_omega(geom, theta)
    a = ula_response(geom, theta)
    b = angular_kernel(geom.antenna_count, width, spread.distribution)
    r = (a[:, None] * b) * a.conj()[None, :]
    return CovarianceMatrix(hermitian_part(r))


def multipath_channel(geom: UlaGeometry, angles, gains) -> np.ndarray:
    """Finite-path channel ``sum_i gains[i] * a(angles[i])``."""
    angles = np.atleast_1d(angles)
    gains = np.atleast_1d(gains)
    if angles.shape != gains.shape:
        raise DimensionError("angles and gains must have the same length")
    n = np.arange(geom.antenna_count)
    omega = geom.spatial_frequency(angles)
    return np.exp(-1j * np.outer(n, omega)) @ gains


def covariance_sqrt(r, floor: float = SQRT_FLOOR) -> np.ndarray:
    """Hermitian square root with eigenvalues below ``floor * lambda_max`` dropped."""
    if isinstance(r, CovarianceMatrix):
        w, v = r.eig
        tr = r.trace()
    else:
        a = as_matrix(r)
        w, v = eigh_desc(a)
        tr = float(np.trace(a).real)
    if w.size and w.min() < -PSD_TOL * max(abs(tr), 1e-300):
        raise InvalidCovarianceError("covariance is not PSD")
    top = w.max() if w.size else 0.0
    if top <= 0:
        return np.zeros((w.size, w.size), dtype=complex)
    keep = w > floor * top
    return (v[:, keep] * np.sqrt(w[keep])) @ v[:, keep].conj().T


def standard_complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def draw_channel(r, rng: np.random.Generator, user: int = 0, cell: int = 0,
                 size: int | None = None):
    """One ``CN(0, R)`` draw, or ``size`` draws stacked as rows when ``size`` is set."""
    root = covariance_sqrt(r)
    M = root.shape[0]
    if size is None:
        g = standard_complex_normal(rng, M)
        return ChannelRealization(root @ g, user, cell)
    g = standard_complex_normal(rng, (size, M))
    return g @ root.T


def _check_orthogonal(sequences: Sequence[TrainingSequence]):
    for i, si in enumerate(sequences):
        for sj in sequences[i + 1:]:
            if si.length != sj.length:
                raise InvalidParameterError("training sequences must share one length")
            scale = np.sqrt(si.energy * sj.energy)
            if abs(np.vdot(si.symbols, sj.symbols)) > 1e-9 * scale:
                raise InvalidParameterError("training sequences are not mutually orthogonal")


def assemble_received(channels: Sequence[Sequence[ChannelRealization]],
                      sequences: Sequence[TrainingSequence], sigma2: float,
                      rng: np.random.Generator | None = None) -> ReceivedSignal:
    """``y = sum_i (s_i (x) I_M) sum_{l in K_i} h_l + n`` with ``n ~ CN(0, sigma2 I)``.

    ``channels[i]`` holds the users transmitting ``sequences[i]``.
    """
    if len(channels) != len(sequences):
        raise DimensionError("one channel group per training sequence is required")
    _check_orthogonal(sequences)
    flat = [c for group in channels for c in group]
    if not flat:
        raise DimensionError("at least one channel is required")
    M = flat[0].h.size
    if any(c.h.size != M for c in flat):
        raise DimensionError("all channels must have the same length")
    tau = sequences[0].length
    # vec(h s^T) = s (x) h
    y = np.zeros(M * tau, dtype=complex)
    for group, seq in zip(channels, sequences):
        total = sum((c.h for c in group), np.zeros(M, dtype=complex))
        y += np.kron(seq.symbols, total)
    if sigma2 > 0:
        if rng is None:
            raise InvalidParameterError("an rng is required when sigma2 > 0")
        y += np.sqrt(sigma2) * standard_complex_normal(rng, M * tau)
    return ReceivedSignal(y, float(sigma2), M)


def correlate(sequence: TrainingSequence, received: ReceivedSignal) -> np.ndarray:
    """Matched-filter output ``S^H y / (s^H s)``; the noise-free single-user value is ``h``."""
    M = received.antenna_count
    if received.y.size != M * sequence.length:
        raise DimensionError("received signal length does not match M * tau")
    Y = received.y.reshape(sequence.length, M)  # row j holds the M antennas at symbol j
    return sequence.symbols.conj() @ Y / sequence.energy
