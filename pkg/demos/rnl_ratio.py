# Size of the quadratic GD-update term relative to the linear one at
# initialization.  The closed form is (1/2) alpha sigma_z D; the measured ratio
# at D=64, P=128 sits around 0.83 of it, stable across sigma_z.
from eoslab.quad_model import InitSpec, r_nl_closed, r_nl_empirical
from eoslab.tensor_core import RngSpec

d, p = 64, 128
print(f"D={d} P={p}, alpha=1, 200 samples per row\n")
for k, sz in enumerate([1.0 / 256, 1.0 / 128, 1.0 / 64, 1.0 / 32]):
    spec = InitSpec(d, p, sz * d, 1.0, RngSpec(2024, k * 2**32), alpha=1.0)
    emp = r_nl_empirical(spec, 200)
    closed = r_nl_closed(1.0, sz, d)
    print(f"sigma_z = 1/{round(1 / sz):4d}:  empirical {emp:.5f}   closed {closed:.5f}   ratio {emp / closed:.4f}")
