# A one-hidden-layer linear network on a single input, packed into the
# quadratic model: spectrum +-||x|| with the hidden multiplicity, an exactly
# conserved catapult invariant, and GD that matches the raw network weights.
import numpy as np

from eoslab import quad_model, reductions
from eoslab.tensor_core import RngSpec

g = RngSpec(7, 0).generator()
x = np.array([3.0, 4.0])
k = 4
spec = reductions.LinearNetSpec(x=x, k=k, v0=g.standard_normal(k) * 0.1, u0=g.standard_normal((k, 2)) * 0.1)

pred = reductions.predicted_spectrum(spec)
print(f"||x|| = {pred.omega_plus}, multiplicities: +{pred.mult_plus} / 0 x{pred.n_zero} / -{pred.mult_minus}")
print(f"spectrum max abs error vs eigensolver: {reductions.verify_spectrum(spec):.2e}")

model, theta = reductions.build_quad_model(spec)
v, u = spec.v0.copy(), spec.u0.copy()
max_dev = 0.0
for i in range(30):
    theta = quad_model.gd_step_theta(model, theta, 0.05)
    v, u = reductions.raw_gd_step(x, v, u, 0.05)
    max_dev = max(max_dev, float(np.max(np.abs(theta - np.concatenate([v, u.ravel()])))))

print(f"packed vs raw GD, 30 steps: max deviation {max_dev:.2e}")
print(f"catapult invariant at the end: {reductions.catapult_invariant(spec, theta):.2e}")
print(f"network output at the end: {float(v @ (u @ x)):+.6f}")
