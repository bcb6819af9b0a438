# Edge-of-stability band in the reduced two-parameter map: for small eps the
# final rescaled curvature T(0) lands just below 2 regardless of the start.
import argparse

import numpy as np

from eoslab import two_param

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("--eps", type=float, default=0.005)
parser.add_argument("--plot", action="store_true", help="save eos_band.png")
args = parser.parse_args()

m = two_param.ReducedModel.from_eps(args.eps)
finals = []
trajs = []
for z0 in np.linspace(0.1, 0.3, 5):
    for y0 in (0.001, 0.005, 0.01):
        s = two_param.from_y(m, two_param.YState(float(z0), y0))
        steps, zs, ts, ys = two_param.trajectory(m, s, 3000)
        rep = two_param.run_to_convergence(m, s, tol=1e-10, max_steps=10**7)
        finals.append(rep.t0)
        trajs.append(ts)
        print(f"z0={z0:.2f} y0={y0:.3f}: {rep.verdict} in {rep.steps} steps, T_final={rep.t0:.6f}")

lo, hi = min(finals), max(finals)
print(f"\nband: [{lo:.6f}, {hi:.6f}]  (expected inside [{2 - 5 * args.eps}, 2])")

if args.plot:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for ts in trajs:
        plt.plot(ts, lw=0.8, alpha=0.7)
    plt.axhline(2.0, color="k", ls="--", lw=1)
    plt.xlabel("step")
    plt.ylabel("T(0)")
    plt.title(f"rescaled curvature, eps={args.eps}")
    plt.savefig("eos_band.png", dpi=150)
    print("wrote eos_band.png")
