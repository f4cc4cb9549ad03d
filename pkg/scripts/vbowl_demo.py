"""Point mass sliding into a V-shaped bowl, exact minimum distance against smooth distance."""

import argparse

from smoothdist.demo import passes_base, run_demo, stalled


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--outdir", default=".")
    args = ap.parse_args()
    for scenario in ("shallow", "deep"):
        for mode in ("exact", "smooth"):
            traj = run_demo(scenario, mode, args.steps, out=f"{args.outdir}/{scenario}_{mode}.csv")
            a = traj.array
            print(f"{scenario:7s} {mode:6s} max x {a[:, 1].max():+.3f}  min constraint {a[:, 7].min():.2e}  "
                  f"passes base {passes_base(traj)}  stalled {stalled(traj)}")


if __name__ == "__main__":
    main()
