"""Hermitian eigendecomposition helpers.

Every inverse, square root and fractional power in the package goes through
these functions so that rank-deficient covariances are handled the same way
everywhere: eigenvalues below ``floor * lambda_max`` are treated as zero.
"""
from functools import lru_cache

import numpy as np

EIG_FLOOR = 1e-12


def hermitian_part(a):
    a = np.asarray(a)
    return 0.5 * (a + a.conj().T)


@lru_cache(maxsize=4096)
def _eigh_cached(shape, dtype, raw):
    a = np.frombuffer(raw, dtype=dtype).reshape(shape)
    w, v = np.linalg.eigh(hermitian_part(a))
    w, v = w[::-1].copy(), v[:, ::-1].copy()
    w.setflags(write=False)
    v.setflags(write=False)
    return w, v


def eigh_desc(a):
    """Eigenvalues (descending) and eigenvectors of the Hermitian part of ``a``.

    Results are memoised on the matrix contents and returned read-only; the
    simulator decomposes the same few covariances many times.
    """
    a = np.ascontiguousarray(a)
    return _eigh_cached(a.shape, a.dtype.str, a.tobytes())


def numerical_rank(w, floor=EIG_FLOOR):
    w = np.asarray(w)
    top = w.max() if w.size else 0.0
    if top <= 0:
        return 0
    return int(np.count_nonzero(w > floor * top))


def positive_subspace(a, floor=EIG_FLOOR):
    """Truncated decomposition ``(w_r, v_r)`` keeping eigenvalues above the floor."""
    w, v = eigh_desc(a)
    r = numerical_rank(w, floor)
    return w[:r], v[:, :r]


def psd_power(a, p, floor=EIG_FLOOR):
    """``a**p`` for a PSD matrix; negative powers act on the positive subspace only."""
    w, v = positive_subspace(a, floor)
    if w.size == 0:
        return np.zeros_like(np.asarray(a), dtype=complex)
    return (v * w**p) @ v.conj().T


def psd_sqrt(a, floor=EIG_FLOOR):
    return psd_power(a, 0.5, floor)


def pinv_psd(a, floor=EIG_FLOOR):
    return psd_power(a, -1.0, floor)


def rel_fro(a, b):
    """Relative Frobenius distance ``||a - b|| / ||b||``."""
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(b))
