"""Dense symmetric / SPD matrices of size 2x2 and 3x3.

Matrices are plain ``numpy`` arrays. Every function accepts a single matrix
of shape ``(d, d)`` or a stack of shape ``(..., d, d)`` and works along the
last two axes. Validation happens in :func:`as_sym` and :func:`as_spd`, which
symmetrize their input and return a new array.
"""
from dataclasses import dataclass

import numpy as np

from .errors import MatrixOverflowError, NotSPDError, NotSymmetricError

ASYM_TOL = 1e-8
SPD_FLOOR = 1e-12
EXP_LIMIT = 700.0


def _check_shape(a):
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    if a.shape[-1] not in (2, 3):
        raise ValueError(f"only d=2 or d=3 is supported, got d={a.shape[-1]}")


def as_sym(a):
    """Return the symmetric part of ``a`` after checking it is (nearly) symmetric.

    Raises ``NotSymmetricError`` when ``||A - A^T||_F > 1e-8 ||A||_F``.
    """
    a = np.array(a, dtype=float)
    _check_shape(a)
    at = np.swapaxes(a, -1, -2)
    asym = np.linalg.norm(a - at, axis=(-2, -1))
    scale = np.linalg.norm(a, axis=(-2, -1))
    if np.any(asym > ASYM_TOL * scale):
        raise NotSymmetricError(
            f"matrix is not symmetric (max asymmetry {np.max(asym):.3e})")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return 0.5 * (a + at)


def as_spd(a):
    """Symmetrize ``a`` and check strict positive definiteness.

    The check is relative: the smallest eigenvalue must exceed ``1e-12`` times
    the largest one.
    """
    s = as_sym(a)
    w = np.linalg.eigvalsh(s)
    lo, hi = w[..., 0], w[..., -1]
    if np.any(hi <= 0) or np.any(lo <= SPD_FLOOR * hi):
        raise NotSPDError(
            f"matrix is not positive definite (min eigenvalue {np.min(lo):.3e})")
    return s


def sym_eig(s):
    """Eigendecomposition ``S = Q diag(w) Q^T`` with ``Q`` in SO(d).

    Eigenvalues come back sorted in descending order. When the raw solver
    returns ``det Q = -1`` the last column is negated. Scalar matrices get
    ``Q = I``.

    Returns
    -------
    q : ndarray, shape (..., d, d)
    w : ndarray, shape (..., d)
    """
    s = as_sym(s)
    d = s.shape[-1]
    w, q = np.linalg.eigh(s)
    w = w[..., ::-1].copy()
    q = q[..., ::-1].copy()
    flip = np.where(np.linalg.det(q) < 0, -1.0, 1.0)
    q[..., :, -1] *= flip[..., None]
    # scalar matrices: the eigenbasis is arbitrary, pin it to the identity
    tr = np.trace(s, axis1=-2, axis2=-1) / d
    dev = np.linalg.norm(s - tr[..., None, None] * np.eye(d), axis=(-2, -1))
    scalar = dev <= 1e-12 * np.linalg.norm(s, axis=(-2, -1))
    if np.any(scalar):
        q = np.where(scalar[..., None, None], np.eye(d), q)
        w = np.where(scalar[..., None], tr[..., None], w)
    return q, w


@dataclass(frozen=True)
class Spectrum:
    """The pair (Q, Lambda) in SO(d) x Diag+(d).

    ``rotation`` has shape ``(..., d, d)`` and ``scaling`` holds the diagonal
    of Lambda with shape ``(..., d)``. Leading axes index a stack of spectra.
    """
    rotation: np.ndarray
    scaling: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.scaling) <= 0):
            raise NotSPDError("spectrum has non-positive eigenvalues")

    @property
    def d(self):
        return self.rotation.shape[-1]

    @property
    def log_scaling(self):
        return np.log(self.scaling)

    def reconstruct(self):
        q = self.rotation
        return (q * self.scaling[..., None, :]) @ np.swapaxes(q, -1, -2)

    def __len__(self):
        return self.scaling.shape[0] if self.scaling.ndim > 1 else 1

    def __getitem__(self, idx):
        return Spectrum(self.rotation[idx], self.scaling[idx])


def spd_spectrum(c):
    """Spectrum of an SPD matrix (eigenvalues descending)."""
    c = as_spd(c)
    q, w = sym_eig(c)
    return Spectrum(q, w)


def _spectral_apply(q, w):
    out = (q * w[..., None, :]) @ np.swapaxes(q, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def spd_exp(h):
    """Matrix exponential of a symmetric matrix, via its eigendecomposition."""
    q, w = sym_eig(h)
    if np.any(w > EXP_LIMIT):
        raise MatrixOverflowError(
            f"eigenvalue {np.max(w):.3g} of the exponent exceeds {EXP_LIMIT}")
    return _spectral_apply(q, np.exp(w))


def spd_log(c):
    """Principal matrix logarithm of an SPD matrix."""
    q, w = sym_eig(as_spd(c))
    return _spectral_apply(q, np.log(w))


def spd_power(c, p):
    q, w = sym_eig(as_spd(c))
    return _spectral_apply(q, w ** p)


def spd_sqrt(c):
    return spd_power(c, 0.5)


def spd_invsqrt(c):
    return spd_power(c, -0.5)


def spd_inv(c):
    return spd_power(c, -1.0)


def hyd_dev_split(h):
    """Split ``H`` into ``(tr H / d) I`` and its trace-free remainder."""
    h = as_sym(h)
    d = h.shape[-1]
    hyd = (np.trace(h, axis1=-2, axis2=-1) / d)[..., None, None] * np.eye(d)
    return hyd, h - hyd


def nondimensionalize(c, ref):
    """Scale ``C`` by a reference tensor: ``Qr Lr^{-1/2} C Lr^{-1/2} Qr^T``.

    ``Qr`` and ``Lr`` are the eigenvectors and eigenvalues of ``ref``. The
    product is taken literally in that order.
    """
    c = as_spd(c)
    q, w = sym_eig(as_spd(ref))
    s = q * (w ** -0.5)[..., None, :]
    out = s @ c @ np.swapaxes(s, -1, -2)
    return as_spd(out)


def frobenius_inner(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-2:] != b.shape[-2:]:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return np.sum(a * b, axis=(-2, -1))


def frobenius_norm(a):
    return np.linalg.norm(np.asarray(a, dtype=float), axis=(-2, -1))
