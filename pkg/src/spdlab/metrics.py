"""Distances on Sym(d), Sym+(d) and SO(d), and the log-Euclidean group product.

All distance functions broadcast over leading stack axes.
"""
import itertools
from functools import lru_cache

import numpy as np
import scipy.linalg

from .linalg import (Spectrum, as_spd, as_sym, frobenius_norm, spd_exp,
                     spd_invsqrt, spd_log, spd_spectrum)
from .rotations import as_rotation, procrustes_so, rotation_angle

TIE_RTOL = 1e-8

METRIC_ALIASES = {
    "F": "F", "frobenius": "F", "euclidean": "F",
    "G": "G", "affine": "G", "affine_invariant": "G",
    "L": "L", "logeuclid": "L", "log_euclidean": "L",
    "S": "S", "scaling": "S", "scaling_rotation": "S",
}


def metric_key(name):
    try:
        return METRIC_ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown metric {name!r}; choose from "
                         f"{sorted(set(METRIC_ALIASES))}") from None


def _check_weight(c):
    if not c > 0:
        raise ValueError(f"product weight c must be positive, got {c}")


def dist_frobenius(c1, c2):
    c1, c2 = as_sym(c1), as_sym(c2)
    if c1.shape[-1] != c2.shape[-1]:
        raise ValueError("dimension mismatch")
    return frobenius_norm(c1 - c2)


def dist_affine_invariant(c1, c2):
    """``||log(C1^{-1/2} C2 C1^{-1/2})||_F``."""
    c1, c2 = as_spd(c1), as_spd(c2)
    s = spd_invsqrt(c1)
    w = np.linalg.eigvalsh(s @ c2 @ s)
    return np.sqrt(np.sum(np.log(w) ** 2, axis=-1))


def pencil_eigenvalues(c1, c2):
    """Generalized eigenvalues of ``C1 s = lambda C2 s`` (eigenvalues of C2^{-1} C1)."""
    return scipy.linalg.eigh(as_spd(c1), as_spd(c2), eigvals_only=True)


def dist_affine_invariant_factored(y1, q1, y2, q2):
    """Affine-invariant distance from the (log-eigenvalue, eigenvector) factors."""
    y1, y2 = np.asarray(y1, float), np.asarray(y2, float)
    if y1.ndim == 2:
        y1, y2 = np.diagonal(y1), np.diagonal(y2)
    h1 = np.exp(-0.5 * y1)
    m = q1.T @ q2
    inner = (h1[:, None] * m * np.exp(y2)[None, :]) @ (m.T * h1[None, :])
    return float(frobenius_norm(spd_log(inner)))


def dist_log_euclidean(c1, c2):
    return frobenius_norm(spd_log(c1) - spd_log(c2))


def dist_rotation(q1, q2):
    """Bi-invariant distance ``||log(Q1^T Q2)||_F`` on SO(d)."""
    q1, q2 = as_rotation(q1), as_rotation(q2)
    return np.sqrt(2.0) * rotation_angle(np.swapaxes(q1, -1, -2) @ q2)


def dist_product(s1, s2, c=1.0):
    """Product distance on Diag+(d) x SO(d)."""
    _check_weight(c)
    dy = np.log(s1.scaling) - np.log(s2.scaling)
    dr = dist_rotation(s1.rotation, s2.rotation)
    return np.sqrt(np.sum(dy ** 2, axis=-1) + c * dr ** 2)


@lru_cache(maxsize=None)
def signed_permutations(d):
    """All ``(perm, signs)`` with det(diag(signs) P) = +1.

    A version of ``(Lambda, Q)`` is ``Q'[:, i] = signs[perm[i]] Q[:, perm[i]]``,
    ``lambda'[i] = lambda[perm[i]]``. There are ``d! 2^(d-1)`` of them.
    """
    out = []
    for perm in itertools.permutations(range(d)):
        parity = np.linalg.det(np.eye(d)[:, list(perm)])
        for signs in itertools.product((1.0, -1.0), repeat=d):
            if np.prod(signs) * parity > 0:
                out.append((np.array(perm), np.array(signs)))
    return tuple(out)


@lru_cache(maxsize=None)
def _version_arrays(d):
    perms = np.array([p for p, _ in signed_permutations(d)])
    signs = np.array([sg[p] for p, sg in signed_permutations(d)])
    return perms, signs


def spectrum_version(s, perm, signs):
    q = s.rotation[..., :, perm] * signs[perm]
    return Spectrum(q, s.scaling[..., perm])


def tie_blocks(lam, rtol=TIE_RTOL):
    """Index groups of (relatively) equal eigenvalues, each of size >= 2."""
    lam = np.asarray(lam)
    order = np.argsort(lam)
    blocks, cur = [], [order[0]]
    for i in order[1:]:
        if abs(lam[i] - lam[cur[-1]]) <= rtol * max(abs(lam[i]), abs(lam[cur[-1]])):
            cur.append(i)
        else:
            blocks.append(cur)
            cur = [i]
    blocks.append(cur)
    return [sorted(b) for b in blocks if len(b) > 1]


def _align_block(q_move, q_target, block):
    # rotate the columns of q_move spanning a tied eigenspace towards q_target
    u = q_move[:, block]
    o = procrustes_so(u.T @ q_target[:, block])
    out = q_move.copy()
    out[:, block] = u @ o
    return out


def align_ties(s_move, s_fixed):
    """Resolve the continuum of eigenbases within tied eigenvalue blocks.

    Columns of ``s_move`` belonging to a tied block are rotated (within SO(k))
    as close as possible to the matching columns of ``s_fixed``; ties in
    ``s_fixed`` are then handled symmetrically. Returns the adjusted rotations
    ``(q_fixed, q_move)``.
    """
    q_move, q_fixed = s_move.rotation, s_fixed.rotation
    for block in tie_blocks(s_move.scaling):
        q_move = _align_block(q_move, q_fixed, block)
    for block in tie_blocks(s_fixed.scaling):
        q_fixed = _align_block(q_fixed, q_move, block)
    return q_fixed, q_move


def _tie_state(lam):
    """(any tie, all eigenvalues tied) along the last axis."""
    lam = np.sort(lam, axis=-1)
    tied = np.diff(lam, axis=-1) <= TIE_RTOL * lam[..., 1:]
    return np.any(tied, axis=-1), np.all(tied, axis=-1)


def _scan_versions(ref, s, c):
    """Minimize the product distance over versions of ``s`` (single pair).

    Exact ties in distance are broken by the smaller raw rotation angle to the
    reference, so the identity version wins whenever it is optimal.
    Returns ``(distance, version)`` with the version's rotation tie-aligned.
    """
    y_ref = np.log(ref.scaling)
    if not (_tie_state(ref.scaling)[0] or _tie_state(s.scaling)[0]):
        # no tied eigenvalues: score every version at once
        perms, signs = _version_arrays(ref.d)
        qs = np.moveaxis(s.rotation[:, perms], 1, 0) * signs[:, None, :]
        lams = s.scaling[perms]
        raw = rotation_angle(ref.rotation.T @ qs)
        dy = y_ref - np.log(lams)
        dist = np.sqrt(np.sum(dy ** 2, axis=-1) + 2.0 * c * raw ** 2)
        near = dist <= dist.min() + 1e-12 * (1 + dist.min())
        k = np.flatnonzero(near)[np.argmin(raw[near])]
        return float(dist[k]), Spectrum(qs[k], lams[k])
    best = (np.inf, np.inf)
    out = None
    for perm, signs in signed_permutations(ref.d):
        v = spectrum_version(s, perm, signs)
        raw = rotation_angle(ref.rotation.T @ v.rotation)
        q_ref, q_v = align_ties(v, ref)
        dy = y_ref - np.log(v.scaling)
        dist = np.sqrt(dy @ dy + 2.0 * c * rotation_angle(q_ref.T @ q_v) ** 2)
        if dist < best[0] - 1e-12 * (1 + dist) or (
                abs(dist - best[0]) <= 1e-12 * (1 + dist) and raw < best[1]):
            best = (dist, raw)
            out = Spectrum(q_v, v.scaling)
    return float(best[0]), out


def best_versions(ref, spectra, c=1.0):
    """For every spectrum in a stack, the eigendecomposition version closest to
    ``ref`` in the product distance.

    Returns ``(distances, aligned)``; ``aligned`` is a stacked
    :class:`Spectrum`. Where a sample is isotropic its eigenbasis is replaced
    by the reference eigenbasis, which is the optimal choice.
    """
    _check_weight(c)
    d = ref.d
    n = spectra.scaling.shape[0]
    y_ref = np.log(ref.scaling)
    ref_any, ref_all = _tie_state(ref.scaling)
    s_any, s_all = _tie_state(spectra.scaling)
    free_rot = s_all | ref_all

    best = np.full(n, np.inf)
    best_raw = np.full(n, np.inf)
    best_q = np.empty((n, d, d))
    best_lam = np.empty((n, d))
    for perm, signs in signed_permutations(d):
        v = spectrum_version(spectra, perm, signs)
        raw = rotation_angle(ref.rotation.T @ v.rotation)
        dy = y_ref - np.log(v.scaling)
        dist = np.sqrt(np.sum(dy ** 2, axis=-1)
                       + 2.0 * c * np.where(free_rot, 0.0, raw) ** 2)
        tol = 1e-12 * (1 + dist)
        better = (dist < best - tol) | ((np.abs(dist - best) <= tol) & (raw < best_raw))
        best = np.where(better, dist, best)
        best_raw = np.where(better, raw, best_raw)
        best_q[better] = v.rotation[better]
        best_lam[better] = v.scaling[better]
    best_q[s_all] = ref.rotation

    partial = (s_any & ~s_all) | (ref_any & ~ref_all & ~s_all)
    for i in np.flatnonzero(partial):
        dist, v = _scan_versions(ref, spectra[i], c)
        best[i], best_q[i], best_lam[i] = dist, v.rotation, v.scaling
    return best, Spectrum(best_q, best_lam)


def dist_scaling_rotation(c1, c2, c=1.0):
    """Scaling-rotation distance: the product distance minimized over all
    eigendecomposition versions of the two arguments."""
    _check_weight(c)
    s1, s2 = spd_spectrum(c1), spd_spectrum(c2)
    if s1.rotation.ndim == 2 and s2.rotation.ndim == 2:
        return _scan_versions(s1, s2, c)[0]
    if s1.rotation.ndim == 2:
        return best_versions(s1, s2, c)[0]
    if s2.rotation.ndim == 2:
        return best_versions(s2, s1, c)[0]
    return np.array([_scan_versions(s1[i], s2[i], c)[0]
                     for i in range(len(s1))])


def boxtimes(c1, c2):
    """Commutative product ``exp(log C1 + log C2)``."""
    return spd_exp(spd_log(c1) + spd_log(c2))


def distance(c1, c2, metric, c=1.0):
    key = metric_key(metric)
    if key == "F":
        return dist_frobenius(c1, c2)
    if key == "G":
        return dist_affine_invariant(c1, c2)
    if key == "L":
        return dist_log_euclidean(c1, c2)
    return dist_scaling_rotation(c1, c2, c)
