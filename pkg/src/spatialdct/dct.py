"""Spatial DCT-II basis, transforms, compaction diagnostics and mask selection."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._linalg import hermitian_part
from .errors import DimensionError, InvalidParameterError, UndefinedMetricError
from .model import CovarianceMatrix, UlaGeometry, as_matrix


@dataclass(frozen=True, eq=False)
class DctBasis:
    """Orthonormal DCT-II matrix; row ``k`` is spatial frequency ``k``."""

    matrix: np.ndarray
    weights: np.ndarray
    tridiag_zeta: float | None = None

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class CompressionMask:
    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=bool)
        if q.ndim != 1 or not q.any():
            raise InvalidParameterError("a mask must be a nonempty vector with at least one bin set")
        object.__setattr__(self, "q", q)

    @property
    def eta(self) -> float:
        return np.count_nonzero(self.q) / self.q.size

    @classmethod
    def full(cls, M: int) -> "CompressionMask":
        return cls(np.ones(M, dtype=bool))


def dct_weights(M: int) -> np.ndarray:
    c = np.full(M, np.sqrt(2.0 / M))
    c[0] = np.sqrt(1.0 / M)
    return c


def dct_basis(M: int, rho: float | None = None) -> DctBasis:
    """``U[k, n] = c[k] cos((2n + 1) k pi / (2M))``.

    ``rho`` only records the tridiagonal coupling ``rho / (1 + rho**2)`` whose
    eigenvectors are these rows (see :func:`tridiagonal_generator`).
    """
    if M < 1:
        raise InvalidParameterError("M must be >= 1")
    c = dct_weights(M)
    k = np.arange(M)[:, None]
    n = np.arange(M)[None, :]
    u = c[:, None] * np.cos((2 * n + 1) * k * np.pi / (2 * M))
    u.setflags(write=False)
    zeta = None if rho is None else rho / (1 + rho**2)
    return DctBasis(u, c, zeta)


def tridiagonal_generator(M: int, rho: float) -> np.ndarray:
    """Symmetric tridiagonal matrix diagonalised by the DCT-II basis."""
    zeta = rho / (1 + rho**2)
    q = np.eye(M) - zeta * (np.eye(M, k=1) + np.eye(M, k=-1))
    q[0, 0] -= zeta
    q[-1, -1] -= zeta
    return q


def _check_len(basis: DctBasis, v):
    if v.shape[0] != basis.size:
        raise DimensionError(f"expected length {basis.size}, got {v.shape[0]}")


def forward(basis: DctBasis, m) -> np.ndarray:
    m = np.asarray(m)
    _check_len(basis, m)
    return basis.matrix @ m


def inverse(basis: DctBasis, m_d) -> np.ndarray:
    m_d = np.asarray(m_d)
    _check_len(basis, m_d)
    return basis.matrix.T @ m_d


def transform_covariance(basis: DctBasis, r) -> CovarianceMatrix:
    """Two-dimensional DCT ``U R U^T`` of a covariance."""
    a = as_matrix(r)
    if a.shape != (basis.size, basis.size):
        raise DimensionError(f"expected {basis.size}x{basis.size} covariance, got {a.shape}")
    u = basis.matrix
    return CovarianceMatrix(hermitian_part(u @ a @ u.T), check=False)


def scn(r, floor: float | None = None) -> float:
    """Standard condition number ``lambda_max / max(lambda_min, floor)``."""
    w = np.linalg.eigvalsh(hermitian_part(as_matrix(r)))
    top = w[-1]
    if top <= 0:
        raise UndefinedMetricError("SCN is undefined for a zero matrix")
    floor = 1e-14 * top if floor is None else floor
    return float(top / max(w[0], floor))


def residual_scn(basis: DctBasis, r) -> float:
    """SCN of the DCT-domain covariance after normalising every frequency to unit power.

    Measures the correlation the transform leaves between spatial frequencies;
    for the exponential model it tends to ``1 + rho`` as ``M`` grows.
    """
    t = np.asarray(transform_covariance(basis, r))
    p = np.real(np.diag(t))
    if np.any(p <= 0):
        raise UndefinedMetricError("a spatial frequency carries no power")
    d = 1 / np.sqrt(p)
    return scn(d[:, None] * t * d[None, :])


def _dirichlet(x, M):
    """``sin(M x / 2) / sin(x / 2)`` with its removable singularities filled in."""
    x = np.asarray(x, dtype=float)
    s = np.sin(x / 2)
    out = np.empty_like(x)
    small = np.abs(s) < 1e-12
    out[~small] = np.sin(M * x[~small] / 2) / s[~small]
    m = np.round(x[small] / (2 * np.pi))
    out[small] = M * (-1.0) ** (m * (M - 1))
    return out


def steering_dct(geom: UlaGeometry, omega, k):
    """Closed-form DCT coefficient ``k`` of the steering vector at spatial frequency ``omega``."""
    M = geom.antenna_count
    k = np.asarray(k)
    if np.any((k < 0) | (k > M - 1)):
        raise InvalidParameterError("k must lie in [0, M-1]")
    omega = np.asarray(omega, dtype=float)
    phi = np.pi * k / M
    half = (M - 1) / 2
    c = np.where(k == 0, np.sqrt(1 / M), np.sqrt(2 / M))
    minus = np.exp(1j * (phi / 2 - (omega - phi) * half)) * _dirichlet(omega - phi, M)
    plus = np.exp(-1j * (phi / 2 + (omega + phi) * half)) * _dirichlet(omega + phi, M)
    out = c * (minus + plus) / 2
    return out[()] if out.ndim == 0 else out


def energy_profile(r, basis: DctBasis) -> np.ndarray:
    """Per-frequency power ``diag(U R U^T)``."""
    t = np.asarray(transform_covariance(basis, r))
    return np.clip(np.real(np.diag(t)), 0, None)


def mask_size(M: int, eta: float) -> int:
    # guard against ceil(k/M * M) landing on k + 1 through rounding
    return max(1, math.ceil(eta * M - 1e-9))


def select_mask(profile, eta: float) -> CompressionMask:
    """Keep the ``ceil(eta * M)`` strongest frequencies; ties go to the lower index."""
    if not 0 < eta <= 1:
        raise InvalidParameterError("eta must lie in (0, 1]")
    p = np.asarray(profile, dtype=float)
    keep = np.argsort(-p, kind="stable")[: mask_size(p.size, eta)]
    q = np.zeros(p.size, dtype=bool)
    q[keep] = True
    return CompressionMask(q)


def mask_projector(basis: DctBasis, mask: CompressionMask) -> np.ndarray:
    """``U^T diag(q) U``: extract the kept frequencies and return to the antenna domain."""
    u = basis.matrix
    return (u.T * mask.q) @ u


def eta_grid(M: int):
    """Every distinct compression ratio for ``M`` antennas."""
    return [k / M for k in range(1, M + 1)]
