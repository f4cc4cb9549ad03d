"""Command line entry point: trace, bench, ablate, query and demo."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from .mesh import MeshError, load_mesh
from .smooth import DistanceField, SmoothParams, alpha_heuristic

THREADS_ENV = "SMOOTHDIST_THREADS"


def _threads_default():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _size(text):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"size must look like 256x256, got {text!r}") from exc


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _simplex(text):
    pts = [_floats(p) for p in text.split(";")]
    if not 1 <= len(pts) <= 3 or any(len(p) != 3 for p in pts):
        raise argparse.ArgumentTypeError("query must be 1-3 points 'x,y,z;x,y,z'")
    return np.array(pts)


def add_params(p):
    p.add_argument("--alpha", type=float, help="LogSumExp sharpness (default: 1 / shortest edge)")
    p.add_argument("--alpha-u", type=float, help="weight attenuation scale (default 6 alpha)")
    p.add_argument("--beta", type=float, default=0.5, help="Barnes-Hut opening ratio, 0 = exact sum")
    p.add_argument("--alpha-q", type=float, help="outer sharpness for mesh queries (default alpha)")
    p.add_argument("--threads", type=int, default=_threads_default(), help=f"worker threads (env {THREADS_ENV})")


def add_render(p):
    p.add_argument("--camera", default=None, help="'ox,oy,oz:tx,ty,tz' (default: looks at the bbox centre)")
    p.add_argument("--up", default="0,1,0")
    p.add_argument("--fov", type=float, default=40.0)
    p.add_argument("--size", type=_size, default=(256, 256))
    p.add_argument("--threshold", type=float, help="hit threshold (default 1e-3 * bbox diagonal)")
    p.add_argument("--max-steps", type=int, default=256)


def params_for(mesh, args):
    alpha = args.alpha
    alpha_u = args.alpha_u
    if alpha is None:
        alpha, default_u = alpha_heuristic(mesh)
        alpha_u = alpha_u if alpha_u is not None else default_u
    return SmoothParams(alpha=alpha, alpha_u=alpha_u, beta=args.beta, alpha_q=args.alpha_q)


def render_config(mesh, args):
    from .mesh import bounding_box
    from .render import RenderConfig, parse_camera

    if args.camera:
        origin, target = parse_camera(args.camera)
    else:
        box = bounding_box(mesh)
        target = tuple(box.center)
        origin = tuple(box.center + np.array([0.0, 0.0, 1.5 * box.diagonal]))
    up = tuple(_floats(args.up))
    w, h = args.size
    return RenderConfig(origin, target, up, args.fov, w, h, args.threshold, args.max_steps)


def cmd_trace(args):
    from .render import trace

    mesh = load_mesh(args.mesh)
    params = params_for(mesh, args)
    res = trace(mesh, params, render_config(mesh, args), args.out, threads=args.threads, png_path=args.png)
    print(f"wrote {args.out}  time={res.seconds:.3f}s  mean_leaves={res.mean_leaves:.1f}  hits={int(np.isfinite(res.depth).sum())}")


def cmd_bench(args):
    from .render import grid_bench, write_bench_csv

    mesh = load_mesh(args.mesh)
    params = params_for(mesh, args)
    res = grid_bench(mesh, params, args.grid, threads=args.threads)
    write_bench_csv(args.out, res)
    print(f"wrote {args.out}  queries={len(res.d_hat)}  time={res.seconds:.3f}s  leaves={res.total_leaves}  far={int(res.far.sum())}")


def cmd_ablate(args):
    from .render import ablate_beta, write_ablation_csv

    mesh = load_mesh(args.mesh)
    params = params_for(mesh, args)
    rows, _ = ablate_beta(mesh, params, _floats(args.betas), render_config(mesh, args), threads=args.threads)
    write_ablation_csv(args.out, rows)
    for r in rows:
        print(f"beta={r.beta:g}  time={r.seconds:.3f}s  mean_err={r.mean_error:.3e}  max_err={r.max_error:.3e}  mismatched={r.mismatched}")


def _fmt(x):
    return "inf" if math.isinf(x) else f"{x:.10g}"


def cmd_query(args):
    from .render import query_report

    mesh = load_mesh(args.mesh)
    params = params_for(mesh, args)
    rep = query_report(DistanceField.build(mesh), args.at, params, exact=args.exact)
    print(f"d_hat    {_fmt(rep['d_hat'])}")
    print("grad     " + " ".join(_fmt(g) for g in rep["grad"]))
    print(f"d_min    {_fmt(rep['d_min'])}  (primitive {rep['closest']})")
    print(f"gap      {_fmt(rep['gap'])}")
    print(f"leaves   {rep['leaves']}  far_field {rep['far_field']}")
    if args.exact:
        print(f"d_hat at beta=0  {_fmt(rep['d_hat_exact'])}")


def cmd_demo(args):
    from .demo import DEFAULT_ALPHA, run_demo

    traj = run_demo(args.scenario, args.mode, args.steps, args.dt, alpha=args.alpha or DEFAULT_ALPHA, out=args.out)
    a = traj.array
    print(f"wrote {args.out}  rows={len(a)}  min_constraint={a[:, 7].min():.3e}")


def build_parser():
    ap = argparse.ArgumentParser(prog="smoothdist", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("trace", help="sphere trace the smooth distance isosurface")
    p.add_argument("mesh")
    add_params(p)
    add_render(p)
    p.add_argument("--out", required=True, help="PPM output path")
    p.add_argument("--png", help="optional PNG copy")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("bench", help="evaluate on a voxel grid over [0,1]^3")
    p.add_argument("mesh")
    add_params(p)
    p.add_argument("--grid", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", help="render time and isosurface error across beta")
    p.add_argument("mesh")
    add_params(p)
    add_render(p)
    p.add_argument("--betas", default="0,0.1,0.2,0.3,0.4,0.5")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("query", help="smooth and exact distance for one query primitive")
    p.add_argument("mesh")
    add_params(p)
    p.add_argument("--at", type=_simplex, required=True, help="'x,y,z' or 'x,y,z;x,y,z[;x,y,z]'")
    p.add_argument("--exact", action="store_true", help="also report the beta=0 value")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("demo", help="point mass in a V-shaped bowl")
    p.add_argument("--scenario", choices=("shallow", "deep"), default="deep")
    p.add_argument("--mode", choices=("exact", "smooth"), default="smooth")
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--dt", type=float, default=1.0 / 200.0)
    p.add_argument("--alpha", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_demo)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (OSError, MeshError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
