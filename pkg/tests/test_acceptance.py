"""Numbered acceptance criteria; a summary line per criterion is printed at the end of the run."""
import os
import time

import numpy as np
import pytest
from scipy.special import ive

from spdlab.cli import distortion_check, main
from spdlab.config import preset_config
from spdlab.fem import BoundaryConditions, assemble, reaction_power, solve, unit_square, femur_like_2d
from spdlab.linalg import hyd_dev_split, spd_exp, spd_inv, spd_log, spd_spectrum
from spdlab.means import (align_spectra, frechet_mean, frechet_minimize_generic, frechet_variance,
                          mean_euclidean, mean_rotation_karcher, mean_scaling_rotation,
                          scaling_rotation_tangents)
from spdlab.mc import run_mc
from spdlab.metrics import (dist_affine_invariant, dist_frobenius, dist_log_euclidean,
                            dist_scaling_rotation)
from spdlab.rotations import rodrigues_exp, rotation_2d, rotation_angle, rotation_log
from spdlab.stochastic import (rho2_von_mises, sample_batch, sample_tensor, sample_von_mises,
                               scenario)

from conftest import random_rotation, random_spd
from oracles import expm_series_scaled
from test_fem import _l2_error


class Timer:
    def __init__(self, limit):
        self.limit = limit

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.limit, f"took {self.elapsed:.1f} s (limit {self.limit} s)"


def cpu_workers():
    return max(1, min(8, os.cpu_count() or 1))


@pytest.mark.acceptance(1, "metric invariances")
def test_metric_invariances():
    rng = np.random.default_rng(1)
    invariant = {"G": dist_affine_invariant, "L": dist_log_euclidean, "S": dist_scaling_rotation}
    with Timer(5.0):
        for d in (2, 3):
            for _ in range(250):
                a, b = random_spd(rng, d), random_spd(rng, d)
                s = np.exp(rng.uniform(-3, 3))
                r = random_rotation(rng, d)
                for name, f in invariant.items():
                    base = f(a, b)
                    tol = 1e-9 * max(1.0, base)
                    assert abs(f(spd_inv(a), spd_inv(b)) - base) < tol, name
                    assert abs(f(s * a, s * b) - base) < tol, name
                    assert abs(f(r @ a @ r.T, r @ b @ r.T) - base) < tol, name
        # stored witness: Frobenius distance changes under inversion and scaling
        a, b = np.diag([1.0, 4.0]), np.array([[2.0, 1.0], [1.0, 2.0]])
        base = dist_frobenius(a, b)
        assert abs(dist_frobenius(spd_inv(a), spd_inv(b)) - base) > 0.1
        assert abs(dist_frobenius(3.0 * a, 3.0 * b) - base) > 0.1


@pytest.mark.acceptance(2, "commuting-case identity")
def test_commuting_identity():
    rng = np.random.default_rng(2)
    with Timer(2.0):
        for k in range(500):
            d = 2 + k % 2
            q = random_rotation(rng, d)
            l1, l2 = np.exp(rng.standard_normal(d)), np.exp(rng.standard_normal(d))
            a, b = (q * l1) @ q.T, (q * l2) @ q.T
            expected = np.sqrt(np.sum(np.log(l1 / l2) ** 2))
            g, le = dist_affine_invariant(a, b), dist_log_euclidean(a, b)
            assert abs(g - le) < 1e-10
            assert abs(g - expected) < 1e-10


@pytest.mark.acceptance(3, "rotational distortion of the arithmetic mean")
def test_rotational_distortion():
    with Timer(60.0):
        for eta in (5.0, 75.0):
            # the quadrature value used by the closed form against a Bessel-ratio oracle
            assert rho2_von_mises(eta) == pytest.approx(ive(2, eta) / ive(0, eta), abs=1e-12)
            r = distortion_check(eta, 1_000_000, seed=31)
            assert r["passed"], (eta, r["deviation"], r["standard_error"])
            assert np.abs(r["distortion"]).max() > 1e-3  # genuinely distorted reference
            iso = distortion_check(eta, 1_000_000, seed=32, isotropic=True)
            assert iso["passed"]
            assert np.all(iso["distortion"] == 0.0)


@pytest.mark.acceptance(4, "scaling-rotation mean recovers the reference")
def test_mean_recovery():
    model = scenario("ortho-ortho-dir")
    ref = model.reference.matrix
    n = 100_000
    with Timer(30.0):
        c = sample_batch(lambda rng, m: sample_tensor(model, rng, m), n, seed=44)
        spectra = align_spectra(c)
        centre = mean_scaling_rotation(spectra)
        tangents = scaling_rotation_tangents(spectra, centre)
        se = tangents.std(axis=0, ddof=1) / np.sqrt(n)
        offset = scaling_rotation_tangents(align_spectra(ref[None], centre), centre)[0]
        # constant coordinates (rotation-only model) get a roundoff floor
        assert np.all(np.abs(offset) <= np.maximum(3 * se, 1e-12)), (offset, se)
        np.testing.assert_allclose(centre.reconstruct(), ref, atol=1e-3)

        # the Euclidean mean is pulled towards isotropy
        _, dev_ref = hyd_dev_split(ref)
        unit = dev_ref / np.linalg.norm(dev_ref)
        proj = np.einsum("kij,ij->k", c, unit)
        shift = np.einsum("ij,ij->", mean_euclidean(c) - ref, unit)
        assert shift < 0
        assert abs(shift) > 3 * proj.std(ddof=1) / np.sqrt(n)


@pytest.mark.acceptance(5, "lognormal scaling calibration")
def test_scaling_calibration():
    model = scenario("iso-iso-scl", dispersion=0.1)
    n = 100_000
    with Timer(2.0):
        c = sample_batch(lambda rng, m: sample_tensor(model, rng, m), n, seed=55)
        logs = np.log(c[:, 0, 0])
        se = logs.std(ddof=1) / np.sqrt(n)
        assert abs(logs.mean() - np.log(0.54)) <= 3 * se
        assert logs.std(ddof=1) == pytest.approx(np.sqrt(np.log(1.01)), rel=0.02)


@pytest.mark.acceptance(6, "generic Frechet minimizer agrees with the means")
def test_frechet_oracle():
    rng = np.random.default_rng(6)
    with Timer(60.0):
        for k in range(20):
            d = 2 + k % 2
            n = 3 + k % 3
            base = spd_log(random_spd(rng, d))
            pts = np.array([spd_exp(base + 0.4 * spd_log(random_spd(rng, d))) for _ in range(n)])
            for metric in ("F", "L"):
                b = frechet_minimize_generic(pts, metric)
                psi_closed = frechet_variance(frechet_mean(pts, metric), pts, metric)
                assert abs(frechet_variance(b, pts, metric) - psi_closed) < 1e-5
            q = random_rotation(rng, d)
            triple = np.array([(q * np.exp(rng.standard_normal(d))) @ q.T for _ in range(3)])
            b = frechet_minimize_generic(triple, "G")
            psi_iter = frechet_variance(frechet_mean(triple, "G"), triple, "G")
            assert abs(frechet_variance(b, triple, "G") - psi_iter) < 1e-5


@pytest.mark.acceptance(7, "FEM patch test, convergence and energy balance")
def test_fem_correctness():
    with Timer(30.0):
        m = unit_square(6)
        kappa = random_spd(np.random.default_rng(7), 2)
        exact_lin = lambda x: 2.0 * x[:, 0] - x[:, 1] + 0.5
        t = solve(assemble(m, kappa, BoundaryConditions({"boundary": exact_lin})))
        assert np.abs(t - exact_lin(m.nodes)).max() < 1e-12

        exact = lambda x: np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
        source = lambda x: 2 * np.pi ** 2 * exact(x)
        errs = []
        for n in (8, 16, 32, 64):
            mesh = unit_square(n)
            th = solve(assemble(mesh, np.eye(2), BoundaryConditions({"boundary": 0.0}), source=source))
            errs.append(_l2_error(mesh, th, exact))
        rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(rates >= 1.9), rates

        mesh = femur_like_2d()
        s = assemble(mesh, np.array([[0.77, 0.23], [0.23, 0.77]]),
                     BoundaryConditions({"fixed": 0.0}, {"flux": 0.1}))
        assert abs(reaction_power(s, solve(s)) - 0.1) < 1e-8 * 0.1


@pytest.mark.acceptance(8, "qualitative UQ findings on femur_like_2d")
def test_femur_findings():
    runs = {}
    with Timer(600.0):
        for name in ("iso-iso-scl", "iso-ortho-scl", "ortho-ortho-dir"):
            runs[name] = run_mc(preset_config(name, 2, n_samples=10_000, seed=8),
                                workers=cpu_workers())
    iso = runs["iso-iso-scl"]
    assert not iso.undirected.any()
    rel = iso.flux_norm_std / iso.flux_norm_mean
    assert rel.max() < 1e-10
    assert np.nanmax(iso.circular_std) < 1e-10

    t_iso = iso.temperature_std
    t_dir = runs["ortho-ortho-dir"].temperature_std
    t_ortho = runs["iso-ortho-scl"].temperature_std
    assert np.mean(t_dir < t_iso) >= 0.95
    assert np.mean(t_ortho <= t_iso) >= 0.95


@pytest.mark.acceptance(9, "rotation machinery")
def test_rotation_machinery():
    rng = np.random.default_rng(9)
    with Timer(20.0):
        for w in rng.normal(size=(1000, 3)) * rng.uniform(0, 3, (1000, 1)):
            assert np.abs(rodrigues_exp(w) - expm_series_scaled(
                np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]]))).max() < 1e-12
        for _ in range(1000):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            w = axis * rng.uniform(0, np.pi - 1e-3)
            assert np.abs(rotation_log(rodrigues_exp(w)) - w).max() < 1e-9

        n = 100_000
        phi = sample_von_mises(0.0, 75.0, rng, n)
        mean = mean_rotation_karcher(rotation_2d(phi))
        se = phi.std(ddof=1) / np.sqrt(n)
        assert abs(rotation_angle(mean)) <= 3 * se


@pytest.mark.acceptance(10, "run output independent of worker count")
def test_reproducible_run(tmp_path):
    outs = []
    for workers in (1, 8):
        out = tmp_path / f"w{workers}"
        assert main(["run", "--preset", "ortho-ortho-dir", "--samples", "2000", "--seed", "10",
                     "--workers", str(workers), "--out", str(out)]) == 0
        outs.append(out)
    for name in ("nodes.csv", "elements.csv", "summary.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name
