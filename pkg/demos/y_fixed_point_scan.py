# The y coordinate (distance of T(0) from the two-step nullcline) settles at
# -eps/2 + O(eps^2).  Compare the full map, the low-order ODE, and the
# low-order fixed point across eps.
import numpy as np

from eoslab import two_param

rows = []
for eps in [0.002, 0.005, 0.01, 0.02, 0.05]:
    m = two_param.ReducedModel.from_eps(eps)
    s = two_param.from_y(m, two_param.YState(0.1, 0.005))
    rep = two_param.run_to_convergence(m, s, tol=1e-10, max_steps=10**7)
    traj = two_param.ode_integrate(0.1, 0.005, eps, 1e-3, 10.0 / eps)
    rows.append((eps, rep.y, float(traj.y[-1]), two_param.y_star(eps)))
    print(
        f"eps={eps:6.3f}: map y_inf = {rep.y:+.7f}   ode y_end = {traj.y[-1]:+.7f}   "
        f"y* = {two_param.y_star(eps):+.7f}   -eps/2 = {-eps / 2:+.7f}"
    )

devs = [abs(y + e / 2) for e, y, _, _ in rows]
slope = np.polyfit(np.log([r[0] for r in rows]), np.log(devs), 1)[0]
print(f"\n|y_inf + eps/2| scales like eps^{slope:.2f} (expect ~2)")
