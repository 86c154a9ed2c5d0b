"""Frechet variances and means of SPD ensembles under the four metrics.

Ensembles are stacks of matrices with shape ``(n, d, d)`` plus optional
weights (uniform when omitted). The log-Euclidean and Euclidean means are
closed forms; the affine-invariant and rotation means are Karcher fixed-point
iterations; the scaling-rotation mean averages log-eigenvalues and
eigenbases separately after aligning every sample's eigendecomposition
version to a reference.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DispersionError
from .linalg import (Spectrum, as_spd, as_sym, spd_exp, spd_log, spd_spectrum,
                     sym_eig, _spectral_apply)
from .metrics import best_versions, distance, metric_key
from .rotations import (as_rotation, procrustes_so, rodrigues_exp,
                        rotation_2d, rotation_angle, rotation_log)


@dataclass(frozen=True)
class KarcherConfig:
    max_iter: int = 200
    tol: float = 1e-10
    damping: float = 1.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


DEFAULT_KARCHER = KarcherConfig()


def ensemble_weights(n, weights=None):
    """Validated weight vector; uniform when ``weights`` is None."""
    if n == 0:
        raise ValueError("ensemble is empty")
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"expected {n} weights, got shape {w.shape}")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights must sum to 1 (sum is {w.sum()!r})")
    return w


def _stack(points):
    points = np.asarray(points, dtype=float)
    if points.ndim == 2:
        points = points[None]
    return points


def frechet_variance(b, points, metric, weights=None, c=1.0):
    """``sum_k w_k dist(B, C_k)^2`` for the chosen metric."""
    points = _stack(points)
    w = ensemble_weights(len(points), weights)
    key = metric_key(metric)
    if key == "F":
        b = as_sym(b)
    d = distance(b, points, key, c)
    return float(np.sum(w * np.asarray(d) ** 2))


def mean_euclidean(points, weights=None):
    points = as_sym(_stack(points))
    w = ensemble_weights(len(points), weights)
    return np.einsum("k,kij->ij", w, points)


def mean_log_euclidean(points, weights=None):
    points = _stack(points)
    w = ensemble_weights(len(points), weights)
    return spd_exp(np.einsum("k,kij->ij", w, spd_log(points)))


def mean_affine_invariant(points, weights=None, cfg=DEFAULT_KARCHER):
    """Karcher mean under the affine-invariant metric.

    Iterates ``M <- M^{1/2} exp(t sum_k w_k log(M^{-1/2} C_k M^{-1/2})) M^{1/2}``
    from the log-Euclidean mean until the tangent step norm drops below
    ``cfg.tol``.
    """
    points = as_spd(_stack(points))
    w = ensemble_weights(len(points), weights)
    m = mean_log_euclidean(points, w)
    step = np.inf
    for it in range(cfg.max_iter):
        q, lam = sym_eig(m)
        half = _spectral_apply(q, np.sqrt(lam))
        ihalf = _spectral_apply(q, 1.0 / np.sqrt(lam))
        t = np.einsum("k,kij->ij", w, spd_log(ihalf @ points @ ihalf))
        step = np.linalg.norm(t)
        if step < cfg.tol:
            return m
        m = as_spd(half @ spd_exp(cfg.damping * t) @ half)
    raise ConvergenceError(
        f"affine-invariant mean did not converge in {cfg.max_iter} iterations "
        f"(last step norm {step:.3e})", iterations=cfg.max_iter, step_norm=step)


def _rot_log(r):
    if r.shape[-1] == 2:
        return np.asarray(rotation_log(r))[..., None]
    return rotation_log(r)


def _rot_exp(v):
    if v.shape[-1] == 1:
        return rotation_2d(v[..., 0])
    return rodrigues_exp(v)


def mean_rotation_karcher(rotations, weights=None, cfg=DEFAULT_KARCHER):
    """Karcher mean on SO(d) under the bi-invariant metric.

    The samples must lie within a rotation angle of pi/2 of their projected
    chordal mean, otherwise ``DispersionError`` is raised.
    """
    rotations = as_rotation(_stack(rotations))
    w = ensemble_weights(len(rotations), weights)
    q = procrustes_so(np.einsum("k,kij->ij", w, rotations))
    spread = rotation_angle(q.T @ rotations)
    if np.max(spread) >= np.pi / 2:
        raise DispersionError(
            f"rotations spread up to {np.max(spread):.3f} rad from their centre; "
            "the Karcher mean needs them inside a ball of radius pi/2")
    step = np.inf
    for it in range(cfg.max_iter):
        t = w @ _rot_log(q.T @ rotations)
        step = np.linalg.norm(t)
        if step < cfg.tol:
            return q
        q = procrustes_so(q @ _rot_exp(cfg.damping * t))
    raise ConvergenceError(
        f"rotation mean did not converge in {cfg.max_iter} iterations "
        f"(last step norm {step:.3e})", iterations=cfg.max_iter, step_norm=step)


def align_spectra(points, reference=None, c=1.0):
    """Eigendecompositions of a stack, each in the version nearest ``reference``.

    ``reference`` defaults to the spectrum of the log-Euclidean mean.
    """
    points = _stack(points)
    spectra = spd_spectrum(points)
    if reference is None:
        reference = spd_spectrum(mean_log_euclidean(points))
    elif not isinstance(reference, Spectrum):
        reference = spd_spectrum(reference)
    _, aligned = best_versions(reference, spectra, c)
    return aligned


def mean_scaling_rotation(spectra, weights=None, cfg=DEFAULT_KARCHER):
    """Mean of version-aligned spectra: geometric mean of the eigenvalues and
    Karcher mean of the eigenbases.

    Does not depend on the product weight ``c`` once versions are fixed.
    """
    w = ensemble_weights(spectra.scaling.shape[0], weights)
    lam = np.exp(w @ np.log(spectra.scaling))
    q = mean_rotation_karcher(spectra.rotation, w, cfg)
    return Spectrum(q, lam)


def mean_scaling_rotation_spd(points, reference=None, weights=None, c=1.0,
                              cfg=DEFAULT_KARCHER):
    """Scaling-rotation mean of an SPD stack, returned as a matrix."""
    return mean_scaling_rotation(align_spectra(points, reference, c),
                                 weights, cfg).reconstruct()


def scaling_rotation_tangents(spectra, centre):
    """Tangent coordinates of aligned spectra around a centre spectrum.

    Columns are the log-eigenvalue offsets followed by the rotation log of
    ``Q_centre^T Q_k`` (one angle in 2D, an Euler vector in 3D). Their sample
    means and standard errors quantify how far an estimated mean lies from
    ``centre``.
    """
    dy = np.log(spectra.scaling) - np.log(centre.scaling)
    dr = _rot_log(centre.rotation.T @ spectra.rotation)
    return np.concatenate([dy, dr], axis=-1)


def _sym_basis(d):
    basis = []
    for i in range(d):
        e = np.zeros((d, d))
        e[i, i] = 1.0
        basis.append(e)
    for i in range(d):
        for j in range(i + 1, d):
            e = np.zeros((d, d))
            e[i, j] = e[j, i] = 1.0 / np.sqrt(2.0)
            basis.append(e)
    return np.array(basis)


def frechet_minimize_generic(points, metric, init=None, weights=None, c=1.0,
                             step=0.25, step_tol=1e-9, max_evals=200_000):
    """Derivative-free minimizer of the Frechet variance (slow; oracle only).

    Compass search on the coordinates of ``log B`` in an orthonormal basis of
    Sym(d): every axis is probed in both directions, the first improving
    probe is taken, and the step halves after a full sweep without progress.
    """
    points = _stack(points)
    w = ensemble_weights(len(points), weights)
    d = points.shape[-1]
    basis = _sym_basis(d)
    h = spd_log(mean_log_euclidean(points, w) if init is None else as_spd(init))
    x = np.einsum("kij,ij->k", basis, h)

    def psi(coords):
        return frechet_variance(spd_exp(np.einsum("k,kij->ij", coords, basis)),
                                points, metric, w, c)

    fx = psi(x)
    evals = 1
    while step > step_tol:
        moved = False
        for k in range(len(x)):
            for sgn in (1.0, -1.0):
                trial = x.copy()
                trial[k] += sgn * step
                ft = psi(trial)
                evals += 1
                if ft < fx:
                    x, fx, moved = trial, ft, True
                    break
        if not moved:
            step *= 0.5
        if evals > max_evals:
            raise ConvergenceError(
                f"compass search exceeded {max_evals} evaluations", iterations=evals)
    return spd_exp(np.einsum("k,kij->ij", x, basis))


def frechet_mean(points, metric, weights=None, c=1.0, cfg=DEFAULT_KARCHER,
                 reference=None):
    """Dispatch to the closed-form or iterative mean for ``metric``."""
    key = metric_key(metric)
    if key == "F":
        return mean_euclidean(points, weights)
    if key == "L":
        return mean_log_euclidean(points, weights)
    if key == "G":
        return mean_affine_invariant(points, weights, cfg)
    return mean_scaling_rotation_spd(points, reference, weights, c, cfg)
