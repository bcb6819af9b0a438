# Small convergence/divergence phase diagram over the two init scales
# (sigma_z_tilde, sigma_j_tilde^2).  Writes phase_diagram.png.  The full-size
# grid from the acceptance checks takes ~20 minutes; this one is meant to run
# in about a minute.
import argparse
import math
import os

import numpy as np

from eoslab.quad_model import phase_sweep

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("--d", type=int, default=20)
parser.add_argument("--p", type=int, default=40)
parser.add_argument("--nx", type=int, default=6, help="sigma_j^2 grid points")
parser.add_argument("--ny", type=int, default=6, help="sigma_z grid points")
parser.add_argument("--seeds", type=int, default=5)
parser.add_argument("--max-steps", type=int, default=8000)
parser.add_argument("--workers", type=int, default=min(8, os.cpu_count() or 1))
args = parser.parse_args()

sz_values = [float(v) for v in np.linspace(0.1, 3.0, args.ny)]
sj_sq = [float(v) for v in np.linspace(0.05, 0.45, args.nx)]
recs = phase_sweep(
    sz_values, [math.sqrt(v) for v in sj_sq],
    d=args.d, p=args.p, n_seeds=args.seeds, max_steps=args.max_steps,
    base_seed=0, alpha=1.0, n_workers=args.workers,
)

div_frac = np.array([r.n_diverged / r.n_seeds for r in recs]).reshape(args.ny, args.nx)
med = np.array([math.nan if r.median_lambda_max is None else r.median_lambda_max for r in recs]).reshape(
    args.ny, args.nx
)
for iy, sz in enumerate(sz_values):
    cells = "  ".join(
        f"{'div' if div_frac[iy, ix] > 0.5 else ('%4.2f' % med[iy, ix] if med[iy, ix] == med[iy, ix] else 'stall')}"
        for ix in range(args.nx)
    )
    print(f"sz={sz:4.2f}:  {cells}")

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

fig, axes = plt.subplots(1, 2, figsize=(10, 4))
im0 = axes[0].imshow(div_frac, origin="lower", aspect="auto",
                     extent=[sj_sq[0], sj_sq[-1], sz_values[0], sz_values[-1]], vmin=0, vmax=1)
axes[0].set_title("diverged fraction")
fig.colorbar(im0, ax=axes[0])
im1 = axes[1].imshow(med, origin="lower", aspect="auto",
                     extent=[sj_sq[0], sj_sq[-1], sz_values[0], sz_values[-1]])
axes[1].set_title("median final lambda1 (converged)")
fig.colorbar(im1, ax=axes[1])
for ax in axes:
    ax.set_xlabel("sigma_j_tilde^2")
    ax.set_ylabel("sigma_z_tilde")
fig.tight_layout()
fig.savefig("phase_diagram.png", dpi=150)
print("wrote phase_diagram.png")
