"""Monte-Carlo driver: N random conductivities, one FEM solve each.

Samples are processed in fixed-size chunks; sample ``i`` always draws from
``rng_for(seed, i)`` and chunk accumulators are merged in chunk order, so the
output is identical for any number of workers.
"""
import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .fem import HomogeneousSolver
from .means import frechet_mean, frechet_variance
from .stats import DirectionAccumulator, MomentAccumulator
from .stochastic import rng_for, sample_tensor

ENSEMBLE_METRICS = ("F", "L", "S")


@dataclass
class ChunkResult:
    start: int
    temperature: MomentAccumulator
    flux_norm: MomentAccumulator
    direction: DirectionAccumulator
    tensors: np.ndarray


@dataclass
class McSummary:
    n_samples: int
    seed: int
    nodes: np.ndarray
    temperature_mean: np.ndarray
    temperature_std: np.ndarray
    flux_norm_mean: np.ndarray
    flux_norm_std: np.ndarray
    flux_direction: np.ndarray
    resultant_length: np.ndarray
    circular_std: np.ndarray
    undirected: np.ndarray
    tensor_means: dict
    tensors: np.ndarray

    def check(self):
        assert np.all((self.resultant_length >= 0) & (self.resultant_length <= 1))
        assert len(self.temperature_mean) == len(self.nodes)


_STATE = {}


def _init_worker(cfg):
    mesh = cfg.mesh.build()
    _STATE["cfg"] = cfg
    _STATE["solver"] = HomogeneousSolver(mesh, cfg.boundary)


def _run_chunk(bounds):
    start, stop = bounds
    cfg = _STATE["cfg"]
    solver = _STATE["solver"]
    mesh = solver.mesh
    n = stop - start
    kappa = np.empty((n, mesh.d, mesh.d))
    temps = np.empty((n, mesh.n_nodes))
    q = np.empty((n, mesh.n_elements, mesh.d))
    for k in range(n):
        i = start + k
        try:
            kappa[k] = sample_tensor(cfg.model, rng_for(cfg.seed, i))
            temps[k] = solver.solve(kappa[k])
        except (ValueError, NumericalError) as exc:
            raise type(exc)(f"sample {i}: {exc}") from exc
        grad = np.einsum("eid,ei->ed", solver.grads, temps[k][mesh.elements])
        q[k] = -grad @ kappa[k].T
    norm = np.linalg.norm(q, axis=-1)
    peak = norm.max(axis=-1, keepdims=True)
    valid = norm > 1e-12 * peak
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(valid[..., None], q / norm[..., None], 0.0)
    return ChunkResult(
        start,
        MomentAccumulator((mesh.n_nodes,)).update(temps),
        MomentAccumulator((mesh.n_elements,)).update(norm),
        DirectionAccumulator((mesh.n_elements,), mesh.d).update(unit, valid),
        kappa)


def chunk_bounds(n, size):
    return [(lo, min(n, lo + size)) for lo in range(0, n, size)]


def resolve_workers(workers=None):
    if workers is None:
        workers = int(os.environ.get("SPDLAB_WORKERS", "1"))
    if workers < 1:
        raise ValueError("workers must be at least 1")
    return workers


def run_mc(cfg, workers=None):
    workers = resolve_workers(workers)
    bounds = chunk_bounds(cfg.n_samples, cfg.chunk_size)
    if workers == 1 or len(bounds) == 1:
        _init_worker(cfg)
        chunks = [_run_chunk(b) for b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(cfg,)) as pool:
            chunks = list(pool.map(_run_chunk, bounds))
    mesh = cfg.mesh.build()
    temp = MomentAccumulator((mesh.n_nodes,))
    qn = MomentAccumulator((mesh.n_elements,))
    direc = DirectionAccumulator((mesh.n_elements,), mesh.d)
    for ch in sorted(chunks, key=lambda c: c.start):
        temp.merge(ch.temperature)
        qn.merge(ch.flux_norm)
        direc.merge(ch.direction)
    tensors = np.concatenate([c.tensors for c in sorted(chunks, key=lambda c: c.start)])
    direction, L, cstd, undirected = direc.result()
    summary = McSummary(
        n_samples=cfg.n_samples, seed=cfg.seed, nodes=mesh.nodes,
        temperature_mean=temp.mean, temperature_std=temp.std(),
        flux_norm_mean=qn.mean, flux_norm_std=qn.std(),
        flux_direction=direction, resultant_length=L, circular_std=cstd,
        undirected=undirected,
        tensor_means=ensemble_means(tensors, cfg.metric_weight),
        tensors=tensors)
    summary.check()
    return summary


def ensemble_means(tensors, c=1.0):
    """Frechet means of the sampled conductivities and their Frechet variances."""
    out = {}
    for key in ENSEMBLE_METRICS:
        b = frechet_mean(tensors, key, c=c)
        out[key] = {"mean": b, "frechet_variance": frechet_variance(b, tensors, key, c=c)}
    return out


def _fmt(x):
    return "" if not np.isfinite(x) else repr(float(x))


def write_outputs(summary, cfg, out_dir):
    """``nodes.csv``, ``elements.csv`` and ``summary.json`` (byte-reproducible)."""
    os.makedirs(out_dir, exist_ok=True)
    d = summary.nodes.shape[1]
    axes = "xyz"[:d]
    with open(os.path.join(out_dir, "nodes.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", *axes, "T_mean", "T_std"])
        for i, (x, m, s) in enumerate(zip(summary.nodes, summary.temperature_mean,
                                          summary.temperature_std)):
            w.writerow([i, *(_fmt(v) for v in x), _fmt(m), _fmt(s)])
    with open(os.path.join(out_dir, "elements.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["element", "q_mean", "q_std", *(f"dir_{a}" for a in axes), "L",
                    "circ_std", "undirected"])
        for e in range(len(summary.flux_norm_mean)):
            w.writerow([e, _fmt(summary.flux_norm_mean[e]), _fmt(summary.flux_norm_std[e]),
                        *(_fmt(v) for v in summary.flux_direction[e]),
                        _fmt(summary.resultant_length[e]), _fmt(summary.circular_std[e]),
                        int(summary.undirected[e])])
    config = cfg.to_dict()
    config.pop("output")  # where the files live is not part of the result
    doc = {
        "config": config,
        "n_samples": summary.n_samples,
        "seed": summary.seed,
        "tensor_means": {k: {"mean": v["mean"].tolist(),
                             "frechet_variance": v["frechet_variance"]}
                         for k, v in summary.tensor_means.items()},
        "undirected_elements": int(summary.undirected.sum()),
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
