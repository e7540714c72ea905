"""Command-line entry points: gen-data, optimize, evaluate, reconstruct.

Exit codes: 0 success, 1 runtime failure, 2 usage error (argparse default).
Worker count can be capped with the RBFPDM_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import grid as gridmod
from . import io as iomod
from . import metrics as metricsmod
from . import surface as surfacemod
from .errors import RbfPdmError, ZeroVariance
from .mesh import mesh_from_grid, save_obj


def _cmd_gen_data(args) -> int:
    grids = gridmod.make_ellipsoid_cohort(
        count=args.count,
        axis_range=tuple(args.x_range),
        fixed_axes=(args.yz, args.yz),
        dims=(args.dims, args.dims, args.dims),
        seed=args.seed,
    )
    os.makedirs(args.out, exist_ok=True)
    x_axes = np.linspace(args.x_range[0], args.x_range[1], args.count)
    with open(os.path.join(args.out, "manifest.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file", "semi_x", "semi_y", "semi_z"])
        for i, (g, ax) in enumerate(zip(grids, x_axes)):
            name = f"ellipsoid_{i:03d}.sdfgrid"
            gridmod.save_grid(g, os.path.join(args.out, name))
            writer.writerow([name, f"{ax:.17g}", f"{args.yz:.17g}", f"{args.yz:.17g}"])
    print(f"wrote {len(grids)} grids to {args.out}")
    return 0


def _load_cohort(cfg: iomod.RunConfig):
    paths = cfg.resolve_grid_paths()
    if not paths:
        raise RbfPdmError("no input grids configured")
    grids = []
    for p in paths:
        try:
            grids.append(gridmod.load_grid(p))
        except OSError as exc:
            raise RbfPdmError(f"cannot read grid {p}: {exc}") from exc
    if cfg.band_auto:
        cfg.loss.s = 2.0 * float(np.mean([g.spacing.mean() for g in grids]))
    return paths, grids


def _cmd_optimize(args) -> int:
    cfg = iomod.load_config(args.config)
    paths, grids = _load_cohort(cfg)
    from .optimizer import optimize
    state = optimize(grids, cfg.optimizer_config(), particle_count=cfg.particles)

    os.makedirs(cfg.output, exist_ok=True)
    for i, ps in enumerate(state.systems):
        iomod.save_particles(ps, os.path.join(cfg.output, f"particles_{i:03d}.txt"))
    with open(os.path.join(cfg.output, "loss_history.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "surface", "sampling", "eigenshape",
                         "correspondence", "total"])
        for row in state.history:
            writer.writerow([row["epoch"]] + [f"{row[k]:.17g}" for k in
                            ("surface", "sampling", "eigenshape", "correspondence", "total")])
    with open(os.path.join(cfg.output, "model_manifest.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["shape_id", "grid", "particles"])
        for i, p in enumerate(paths):
            writer.writerow([i, p, f"particles_{i:03d}.txt"])
    with open(os.path.join(cfg.output, "run_config.txt"), "w") as fh:
        fh.write(iomod.serialize_config(cfg))
    print(f"optimized {len(grids)} shapes for {cfg.epochs} epochs -> {cfg.output}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = iomod.load_config(args.config)
    paths, grids = _load_cohort(cfg)
    particle_paths = [os.path.join(cfg.output, f"particles_{i:03d}.txt")
                      for i in range(len(grids))]
    systems = [iomod.load_particles(p, shape_id=i) for i, p in enumerate(particle_paths)]
    counts = {ps.count for ps in systems}
    if len(counts) != 1:
        raise RbfPdmError(f"particle files disagree on particle count: {sorted(counts)}")

    vectors = np.stack([ps.flattened() for ps in systems])
    model = metricsmod.pca_fit(vectors)
    available = len(model.eigenvalues)
    requested = cfg.modes
    rows = []
    if requested > available:
        rows.append(["warning", requested, f"capped to {available} available modes"])
    for m in range(1, min(requested, available) + 1):
        try:
            rows.append(["compactness", m, f"{metricsmod.compactness(model, m):.17g}"])
        except ZeroVariance:
            rows.append(["compactness", m, "zero-variance"])
        rows.append(["specificity", m,
                     f"{metricsmod.specificity(model, vectors, m, cfg.specificity_samples, cfg.seed):.17g}"])
        if len(systems) >= 3:
            rows.append(["generalization", m, f"{metricsmod.generalization(vectors, m):.17g}"])

    os.makedirs(cfg.output, exist_ok=True)
    out_csv = os.path.join(cfg.output, "metrics.csv")
    with open(out_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "mode_count", "value"])
        for row in rows:
            writer.writerow(row)
        for i, (ps, grid) in enumerate(zip(systems, grids)):
            surf = surfacemod.fit_particles(ps, cfg.loss.s, cfg.kernel, cfg.regularization)
            lo, hi = grid.box
            res = args.mesh_resolution
            rbf_mesh = surfacemod.extract_mesh(surf, (lo, hi), (res, res, res))
            truth_mesh = mesh_from_grid(grid)
            mean_d, max_d = metricsmod.surface_to_surface_distance(rbf_mesh, truth_mesh)
            writer.writerow(["distance", i, f"{mean_d:.17g}", f"{max_d:.17g}"])
    print(f"wrote {out_csv}")
    return 0


def _cmd_reconstruct(args) -> int:
    ps = iomod.load_particles(args.particles)
    surf = surfacemod.fit_particles(ps, args.s, args.kernel, args.regularization)
    lo = ps.points.min(axis=0)
    hi = ps.points.max(axis=0)
    pad = args.padding * (hi - lo).max()
    mesh = surfacemod.extract_mesh(
        surf, (lo - pad, hi + pad),
        (args.resolution, args.resolution, args.resolution))
    save_obj(mesh, args.out)
    print(f"wrote {args.out}: {len(mesh.vertices)} vertices, {len(mesh.faces)} faces")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rbfpdm",
        description="Correspondence-based statistical shape models over signed-distance grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic ellipsoid cohort")
    g.add_argument("--count", type=int, default=20)
    g.add_argument("--x-range", type=float, nargs=2, default=[1.0, 2.0],
                   metavar=("LO", "HI"))
    g.add_argument("--yz", type=float, default=0.5, help="fixed y and z semi-axes")
    g.add_argument("--dims", type=int, default=64)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_gen_data)

    o = sub.add_parser("optimize", help="run the full model construction")
    o.add_argument("config", help="run configuration file")
    o.set_defaults(func=_cmd_optimize)

    e = sub.add_parser("evaluate", help="compute model metrics and mesh distances")
    e.add_argument("config", help="run configuration file of a finished run")
    e.add_argument("--mesh-resolution", type=int, default=64)
    e.set_defaults(func=_cmd_evaluate)

    r = sub.add_parser("reconstruct", help="particle file -> OBJ mesh")
    r.add_argument("particles")
    r.add_argument("--out", required=True)
    r.add_argument("--s", type=float, default=0.1, help="dipole offset")
    r.add_argument("--kernel", default="biharmonic")
    r.add_argument("--regularization", type=float, default=0.0)
    r.add_argument("--resolution", type=int, default=64)
    r.add_argument("--padding", type=float, default=0.25,
                   help="box padding as a fraction of the largest extent")
    r.set_defaults(func=_cmd_reconstruct)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RbfPdmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
