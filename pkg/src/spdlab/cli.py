"""SPD tensor metrics, means, random sampling and Monte-Carlo heat-conduction runs.

Exit codes: 0 success, 1 invalid input or failed check, 2 numerical failure.
"""
import argparse
import csv
import json
import sys

import numpy as np

from .config import load_config, model_from_dict, preset_config
from .errors import NumericalError
from .fem import MESH_PRESETS, generate_mesh, write_mesh
from .linalg import as_spd, hyd_dev_split, spd_log
from .means import frechet_mean, frechet_variance
from .metrics import distance
from .mc import resolve_workers, run_mc, write_outputs
from .stochastic import (SCENARIOS, distorted_euclid_mean_2d, rho2_von_mises, rng_for,
                         sample_batch, sample_tensor, sample_von_mises, scenario)

METRIC_CHOICES = ("frobenius", "affine", "logeuclid", "scaling")
ORTHO_REFERENCE_2D = np.array([[0.77, 0.23], [0.23, 0.77]])


def _u64(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _read_rows(path):
    """Whitespace/comma separated numeric rows; blank and '#' lines skipped."""
    rows = []
    with (sys.stdin if path == "-" else open(path)) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].replace(",", " ").strip()
            if not text:
                continue
            try:
                rows.append((lineno, [float(v) for v in text.split()]))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a list of numbers") from None
    return rows


def _matrix(values, d, where):
    m = np.array(values, dtype=float).reshape(d, d)
    try:
        return as_spd(m)
    except ValueError as exc:
        raise ValueError(f"{where}: {exc}") from None


def _dim_from(count, per, where):
    for d in (2, 3):
        if count == per * d * d:
            return d
    raise ValueError(f"{where}: expected {per * 4} or {per * 9} numbers, got {count}")


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


def _close(fh):
    if fh is not sys.stdout:
        fh.close()


def cmd_metrics(args):
    out = _open_out(args.out)
    try:
        out.write("distance\n")
        for lineno, vals in _read_rows(args.input):
            where = f"{args.input}:{lineno}"
            d = _dim_from(len(vals), 2, where)
            a = _matrix(vals[:d * d], d, where)
            b = _matrix(vals[d * d:], d, where)
            out.write(repr(float(distance(a, b, args.metric, args.c))) + "\n")
    finally:
        _close(out)
    return 0


def cmd_means(args):
    rows = _read_rows(args.input)
    if not rows:
        raise ValueError(f"{args.input}: no tensors")
    d = _dim_from(len(rows[0][1]), 1, f"{args.input}:{rows[0][0]}")
    pts = np.array([_matrix(v, d, f"{args.input}:{ln}") if len(v) == d * d else
                    _dim_from(len(v), 1, f"{args.input}:{ln}") for ln, v in rows])
    b = frechet_mean(pts, args.metric, c=args.c)
    doc = {"metric": args.metric, "n": len(pts), "mean": b.tolist(),
           "frechet_variance": frechet_variance(b, pts, args.metric, c=args.c)}
    out = _open_out(args.out)
    try:
        out.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    finally:
        _close(out)
    return 0


def _model_from_args(args):
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
        return model_from_dict(data.get("model", data))
    return scenario(args.preset or "iso-iso-scl", args.dim)


def cmd_sample(args):
    model = _model_from_args(args)
    d = model.d
    out = _open_out(args.out)
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow([f"c{i + 1}{j + 1}" for i in range(d) for j in range(d)])
        for i in range(args.samples):
            c = sample_tensor(model, rng_for(args.seed, i))
            w.writerow([repr(float(v)) for v in c.ravel()])
    finally:
        _close(out)
    return 0


def distortion_check(eta, n, seed=0, isotropic=False):
    """Arithmetic mean of ``R H R^T`` over von Mises rotations versus the closed form.

    Returns a dict with the closed form, the MC mean, its standard errors and
    a pass flag: every entry within 3 standard errors, or within roundoff of
    the reference when the samples are (numerically) constant.
    """
    ref = 0.54 * np.eye(2) if isotropic else ORTHO_REFERENCE_2D
    h = spd_log(ref)
    rho2 = rho2_von_mises(eta)
    expected = distorted_euclid_mean_2d(h, rho2)
    phi = sample_batch(lambda rng, m: sample_von_mises(0.0, eta, rng, m), n, seed)
    c, s = np.cos(phi), np.sin(phi)
    a, b, e = h[0, 0], h[0, 1], h[1, 1]
    # entries of R H R^T written out for a batch of angles
    xx = c * c * a - 2 * c * s * b + s * s * e
    xy = c * s * (a - e) + (c * c - s * s) * b
    yy = s * s * a + 2 * c * s * b + c * c * e
    samples = np.stack([xx, xy, yy])  # rows contiguous: pairwise summation
    mean = samples.mean(axis=1)
    se = samples.std(axis=1, ddof=1) / np.sqrt(n)
    dev = mean - np.array([expected[0, 0], expected[0, 1], expected[1, 1]])
    tol = np.maximum(3 * se, 1e-12 * np.abs(h).max())
    hyd, _ = hyd_dev_split(h)
    return {"eta": eta, "n": n, "rho2": rho2, "reference_log": h,
            "closed_form": expected, "mc_mean": np.array([[mean[0], mean[1]], [mean[1], mean[2]]]),
            "deviation": dev, "standard_error": se, "tolerance": tol, "passed": bool(np.all(np.abs(dev) <= tol)),
            "distortion": expected - h, "hydrostatic": hyd}


def cmd_verify_distortion(args):
    r = distortion_check(args.eta, args.samples, args.seed, args.isotropic)
    print(f"eta                 {r['eta']!r}")
    print(f"samples             {r['n']}")
    print(f"rho2                {r['rho2']!r}")
    print(f"reference log       {r['reference_log'].tolist()}")
    print(f"closed-form mean    {r['closed_form'].tolist()}")
    print(f"MC arithmetic mean  {r['mc_mean'].tolist()}")
    print(f"deviation (xx,xy,yy) {r['deviation'].tolist()}")
    print(f"3 x std error       {(3 * r['standard_error']).tolist()}")
    print(f"distortion          {r['distortion'].tolist()}")
    print("PASS" if r["passed"] else "FAIL")
    return 0 if r["passed"] else 1


def cmd_mesh(args):
    if args.preset == "rect_2d":
        mesh = generate_mesh("rect_2d", args.width, args.height, args.resolution)
    else:
        mesh = generate_mesh(args.preset, args.resolution)
    out = _open_out(args.out)
    try:
        write_mesh(mesh, out)
    finally:
        _close(out)
    return 0


def cmd_run(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset_config(args.preset or "iso-iso-scl", args.dim)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.samples is not None:
        changes["n_samples"] = args.samples
    if args.out is not None:
        changes["output"] = args.out
    if args.c is not None:
        changes["metric_weight"] = args.c
    cfg = cfg.replace(**changes) if changes else cfg
    summary = run_mc(cfg, workers=resolve_workers(args.workers))
    write_outputs(summary, cfg, cfg.output)
    print(f"wrote {cfg.output}/nodes.csv, elements.csv, summary.json "
          f"({cfg.n_samples} samples, seed {cfg.seed})")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="spdlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="Monte-Carlo FEM experiment")
    r.add_argument("--config", help="experiment JSON (see schema/experiment.schema.json)")
    r.add_argument("--preset", choices=SCENARIOS, help="scenario when no --config is given")
    r.add_argument("--dim", type=int, choices=(2, 3), default=2)
    r.add_argument("--seed", type=_u64)
    r.add_argument("--samples", type=int)
    r.add_argument("--workers", type=int, help="worker processes (default $SPDLAB_WORKERS or 1)")
    r.add_argument("--out", help="output directory")
    r.add_argument("--c", type=float, help="rotation weight of the scaling-rotation metric")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("metrics", help="distance for each SPD pair in a file")
    m.add_argument("input", help="one pair per line: entries of C1 then C2, row-major ('-' = stdin)")
    m.add_argument("--metric", choices=METRIC_CHOICES, default="affine")
    m.add_argument("--c", type=float, default=1.0)
    m.add_argument("--out")
    m.set_defaults(func=cmd_metrics)

    a = sub.add_parser("means", help="Frechet mean of the SPD tensors in a file")
    a.add_argument("input", help="one tensor per line, row-major ('-' = stdin)")
    a.add_argument("--metric", choices=METRIC_CHOICES, default="affine")
    a.add_argument("--c", type=float, default=1.0)
    a.add_argument("--out")
    a.set_defaults(func=cmd_means)

    s = sub.add_parser("sample", help="draw tensors from a stochastic model")
    s.add_argument("--config", help="JSON with a 'model' section (or a bare model)")
    s.add_argument("--preset", choices=SCENARIOS)
    s.add_argument("--dim", type=int, choices=(2, 3), default=2)
    s.add_argument("--samples", type=int, default=10)
    s.add_argument("--seed", type=_u64, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sample)

    v = sub.add_parser("verify-distortion",
                       help="check the distorted Euclidean mean of randomly rotated log-tensors")
    v.add_argument("--eta", type=float, default=75.0)
    v.add_argument("--samples", type=int, default=1_000_000)
    v.add_argument("--seed", type=_u64, default=0)
    v.add_argument("--isotropic", action="store_true", help="use the isotropic reference 0.54 I")
    v.set_defaults(func=cmd_verify_distortion)

    g = sub.add_parser("mesh", help="write a preset mesh in the text format")
    g.add_argument("--preset", choices=sorted(MESH_PRESETS), default="femur_like_2d")
    g.add_argument("--resolution", type=int, default=8)
    g.add_argument("--width", type=float, default=1.0)
    g.add_argument("--height", type=float, default=1.0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_mesh)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "samples", None) is not None and args.samples < 0:
            raise ValueError("--samples must be non-negative")
        return args.func(args)
    except NumericalError as exc:
        print(f"spdlab: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"spdlab: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
