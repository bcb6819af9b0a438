# Symmetric-spectrum catapult: with eigenvalues (+1, -1) and E = 0, the
# rescaled kernel T(0) moves away from 4 in the direction of sign(T - 4),
# so runs starting above 4 blow up and runs below settle onto T <= 2.
import numpy as np

from eoslab import mode_space, two_param

m = two_param.ReducedModel(a=1.0)

print("one-step sign law, z = 0.05:")
for t0 in [1.0, 2.5, 3.9, 4.1, 5.0]:
    z1, t1 = two_param._step_raw(m, 0.05, t0)
    print(f"  T0 = {t0:4.1f}  ->  dT = {t1 - t0:+.5f}   (sign of T-4: {np.sign(t0 - 4):+.0f})")

print("\nfull runs from z = 0.05:")
for t0 in [3.5, 4.5]:
    rep = two_param.run_to_convergence(m, two_param.ReducedState(0.05, t0), tol=1e-10, max_steps=200000)
    print(f"  T0 = {t0}: {rep.verdict} after {rep.steps} steps, final T = {rep.t0:.6f}")

# the same dynamics in mode space, with the conserved constant along for the ride
s = mode_space.ModeState(z_tilde=0.05, jsq=np.array([1.8, 1.7]), omega=np.array([1.0, -1.0]))
e0 = mode_space.conserved_e(s)
for i in range(4000):
    s = mode_space.gd_step(s)
ef = mode_space.conserved_e(s)
print(f"\nmode-space run: T0 = {mode_space.t_moment(s, 0):.6f}, E drift = {abs(ef - e0):.2e}")
