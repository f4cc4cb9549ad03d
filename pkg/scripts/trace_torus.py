"""Render the smooth-distance isosurface of a bumpy torus to PPM (and PNG if Pillow is present)."""

import argparse

from smoothdist.mesh import SimplexMesh, min_edge_length
from smoothdist.render import RenderConfig, trace
from smoothdist.shapes import bumpy_torus
from smoothdist.smooth import SmoothParams


def scaled_torus(inv_min_edge=200.0):
    m = bumpy_torus()
    return SimplexMesh(m.vertices * ((1.0 / inv_min_edge) / min_edge_length(m)), m.simplices)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--beta", type=float, default=0.5)
    ap.add_argument("--out", default="torus.ppm")
    ap.add_argument("--png")
    args = ap.parse_args()
    mesh = scaled_torus()
    cfg = RenderConfig(origin=(0.0, -0.45, 0.4), target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0),
                       width=args.size, height=args.size)
    res = trace(mesh, SmoothParams(alpha=200.0, alpha_u=1200.0, beta=args.beta), cfg, args.out, png_path=args.png)
    print(f"{len(mesh)} triangles, {res.seconds:.2f}s, mean leaves per ray {res.mean_leaves:.0f}")


if __name__ == "__main__":
    main()
