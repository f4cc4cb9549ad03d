"""Render time and isosurface displacement against the Barnes-Hut opening ratio beta."""

import argparse

from smoothdist.render import RenderConfig, ablate_beta, write_ablation_csv
from smoothdist.smooth import SmoothParams
from trace_torus import scaled_torus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--betas", default="0.1,0.2,0.3,0.4,0.5,0.8")
    ap.add_argument("--out", default="ablation.csv")
    args = ap.parse_args()
    mesh = scaled_torus()
    cfg = RenderConfig(origin=(0.0, -0.45, 0.4), target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0),
                       width=args.size, height=args.size)
    betas = [float(b) for b in args.betas.split(",")]
    rows, ref = ablate_beta(mesh, SmoothParams(alpha=200.0, alpha_u=1200.0), betas, cfg)
    write_ablation_csv(args.out, rows)
    print(f"beta=0: {ref.seconds:.2f}s")
    for r in rows:
        print(f"beta={r.beta:<4g} {r.seconds:7.2f}s  speedup {ref.seconds / r.seconds:5.2f}x  "
              f"mean err {r.mean_error:.2e}  max err {r.max_error:.2e}  mismatched {r.mismatched}")


if __name__ == "__main__":
    main()
