"""SO(2) / SO(3) elements and their Lie-algebra coordinates.

In 3D a rotation is parametrized by its Euler vector ``w`` (axis times angle);
in 2D by the counterclockwise angle ``phi``. The exponential map is the
Rodrigues formula; the logarithm uses the trace for the angle and the skew
part for the axis, with a symmetric-part fallback close to a half turn.
"""
import numpy as np

from .errors import NotRotationError

ORTHO_TOL = 1e-10
DRIFT_TOL = 1e-8
TAYLOR_CUTOFF = 1e-4


def skew2(phi):
    phi = np.asarray(phi, dtype=float)
    out = np.zeros(phi.shape + (2, 2))
    out[..., 0, 1] = -phi
    out[..., 1, 0] = phi
    return out


def skew3(w):
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != 3:
        raise ValueError(f"Euler vectors must have 3 components, got shape {w.shape}")
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def skew_from_euler(w):
    """Skew matrix of an Euler vector (3D) or of a scalar angle (2D)."""
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        return skew2(w)
    return skew3(w)


def euler_from_skew(W):
    W = np.asarray(W, dtype=float)
    if W.shape[-1] == 2:
        return W[..., 1, 0].copy()
    return np.stack([W[..., 2, 1], W[..., 0, 2], W[..., 1, 0]], axis=-1)


def wrap_euler(w):
    """Reduce an Euler vector into the closed ball of radius pi."""
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        return float(np.pi - np.mod(np.pi - w, 2 * np.pi))
    phi = np.linalg.norm(w, axis=-1, keepdims=True)
    red = np.mod(phi, 2 * np.pi)
    red = np.where(red > np.pi, red - 2 * np.pi, red)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(phi > np.pi, w / phi * red, w)
    return out


def _rodrigues_coeffs(phi):
    phi2 = phi * phi
    small = phi < TAYLOR_CUTOFF
    safe = np.where(small, 1.0, phi)
    a = np.where(small, 1 - phi2 / 6 + phi2 ** 2 / 120, np.sin(safe) / safe)
    # (1 - cos phi) / phi^2 in its half-angle form, free of cancellation
    b = np.where(small, 0.5 - phi2 / 24 + phi2 ** 2 / 720,
                 0.5 * (np.sin(0.5 * safe) / (0.5 * safe)) ** 2)
    return a, b


def rotation_2d(phi):
    """Counterclockwise rotation(s) by ``phi``."""
    phi = np.asarray(phi, dtype=float)
    c, s = np.cos(phi), np.sin(phi)
    out = np.empty(phi.shape + (2, 2))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def rodrigues_exp(w):
    """``exp(W) = I + sin(phi)/phi W + (1 - cos(phi))/phi^2 W^2``.

    A scalar argument is treated as a 2D angle.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim == 0:
        return rotation_2d(w)
    W = skew3(w)
    phi = np.linalg.norm(w, axis=-1)
    a, b = _rodrigues_coeffs(phi)
    return np.eye(3) + a[..., None, None] * W + b[..., None, None] * (W @ W)


def rotation_angle(R):
    """Rotation angle in [0, pi] of each rotation in a stack."""
    R = np.asarray(R, dtype=float)
    if R.shape[-1] == 2:
        return np.abs(np.arctan2(R[..., 1, 0], R[..., 0, 0]))
    s = euler_from_skew(0.5 * (R - np.swapaxes(R, -1, -2)))
    sin_phi = np.linalg.norm(s, axis=-1)
    cos_phi = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    return np.arctan2(sin_phi, cos_phi)


def rotation_log(R, with_flag=False):
    """Euler vector (3D) or angle (2D) of a rotation.

    The result lies in the ball of radius pi. At a half turn the axis sign is
    ambiguous; the representative whose first nonzero component is positive is
    returned and, if ``with_flag`` is set, a boolean degeneracy flag alongside.
    """
    R = np.asarray(R, dtype=float)
    if R.shape[-1] == 2:
        phi = np.arctan2(R[..., 1, 0], R[..., 0, 0])
        flag = np.abs(phi) >= np.pi - 1e-12
        phi = np.where(flag, np.pi, phi)
        phi = float(phi) if phi.ndim == 0 else phi
        return (phi, flag) if with_flag else phi

    s = euler_from_skew(0.5 * (R - np.swapaxes(R, -1, -2)))
    sin_phi = np.linalg.norm(s, axis=-1)
    cos_phi = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    phi = np.arctan2(sin_phi, cos_phi)

    small = phi < TAYLOR_CUTOFF
    safe_sin = np.where(sin_phi > 0, sin_phi, 1.0)
    factor = np.where(small, 1 + phi ** 2 / 6 + 7 * phi ** 4 / 360, phi / safe_sin)
    w = factor[..., None] * s

    # near a half turn sin(phi) carries no precision; read the axis off the
    # symmetric part (R + R^T)/2 - cos(phi) I = (1 - cos(phi)) a a^T
    near_pi = cos_phi < -0.9
    if np.any(near_pi):
        sym = 0.5 * (R + np.swapaxes(R, -1, -2)) - cos_phi[..., None, None] * np.eye(3)
        sym = sym / (1.0 - cos_phi)[..., None, None]
        diag = np.diagonal(sym, axis1=-2, axis2=-1)
        k = np.argmax(diag, axis=-1)
        col = np.take_along_axis(sym, k[..., None, None], axis=-1)[..., 0]
        axis = col / np.linalg.norm(col, axis=-1, keepdims=True)
        dot = np.sum(axis * s, axis=-1)
        first = np.take_along_axis(
            axis, np.argmax(np.abs(axis) > 1e-12, axis=-1)[..., None], axis=-1)[..., 0]
        sign = np.where(np.abs(dot) > 1e-14, np.sign(dot), np.sign(first))
        w = np.where(near_pi[..., None], (sign * phi)[..., None] * axis, w)
    flag = (np.pi - phi) < 1e-8
    return (w, flag) if with_flag else w


def procrustes_so(m):
    """Closest special-orthogonal matrix to ``m`` in the Frobenius norm."""
    u, _, vt = np.linalg.svd(m)
    det = np.linalg.det(u @ vt)
    k = m.shape[-1]
    fix = np.ones(m.shape[:-2] + (k,))
    fix[..., -1] = np.sign(det)
    fix[..., -1] = np.where(fix[..., -1] == 0, 1.0, fix[..., -1])
    return (u * fix[..., None, :]) @ vt


def as_rotation(R):
    """Validate a rotation matrix and re-orthonormalize small drift.

    Drift ``||R^T R - I||_F`` up to 1e-8 is removed by polar projection;
    anything larger (or a reflection) raises ``NotRotationError``.
    """
    R = np.array(R, dtype=float)
    if R.ndim < 2 or R.shape[-1] != R.shape[-2] or R.shape[-1] not in (2, 3):
        raise NotRotationError(f"expected 2x2 or 3x3 matrices, got shape {R.shape}")
    d = R.shape[-1]
    drift = np.linalg.norm(np.swapaxes(R, -1, -2) @ R - np.eye(d), axis=(-2, -1))
    if np.any(drift > DRIFT_TOL) or np.any(np.linalg.det(R) <= 0):
        raise NotRotationError(f"not a rotation (orthogonality drift {np.max(drift):.3e})")
    if np.any(drift > ORTHO_TOL):
        R = procrustes_so(R)
    return R


def rotation_to(a, b):
    """Rotation about ``a x b`` taking unit vector ``a`` onto unit vector ``b``.

    Returns ``(R, antipodal)``; for ``b = -a`` the axis is an arbitrary
    direction perpendicular to ``a`` and ``antipodal`` is set.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    cross = np.cross(a, b)
    sin_phi = np.linalg.norm(cross, axis=-1)
    cos_phi = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    phi = np.arctan2(sin_phi, cos_phi)
    with np.errstate(invalid="ignore", divide="ignore"):
        axis = cross / sin_phi[..., None]
    antipodal = (sin_phi < 1e-12) & (cos_phi < 0)
    if np.any(antipodal):
        # any unit vector orthogonal to a
        helper = np.where(np.abs(a[..., :1]) < 0.9, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
        perp = np.cross(a, helper)
        perp /= np.linalg.norm(perp, axis=-1, keepdims=True)
        axis = np.where(antipodal[..., None], perp, axis)
    degenerate = sin_phi < 1e-300
    axis = np.where((degenerate & ~antipodal)[..., None], 0.0, axis)
    return rodrigues_exp(axis * phi[..., None]), antipodal
