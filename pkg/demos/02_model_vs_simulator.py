"""
Closed form, full chain and packet simulator side by side
=========================================================

The closed form treats the refresh as a geometric timer. The full chain
keeps the deterministic IR/FO/SO schedule and the CRC false negatives.
The simulator runs the actual compressor and decompressor state machines.
"""

from rohcge import from_eps_lb, solve_model2
from rohcge.model_full import oos_breakdown, p_oos_model1
from rohcge.sim import RohcConfig, run_seeds

chan = from_eps_lb(0.02, 5)

for irt in (100, 200, 300):
    cfg = RohcConfig(irt=irt)
    sim = run_seeds(cfg, chan, 100_000, 11, base_seed=2010)
    print(f"IRT={irt}: model2 {solve_model2(chan, 29, irt).p_oos_exact:.2e}  "
          f"model1 {p_oos_model1(cfg, chan):.2e}  "
          f"sim {sim.mean:.2e} +- {sim.half_width:.1e}")

# where the full chain puts its mass at IRT=300
print()
for key, mass in sorted(oos_breakdown(RohcConfig(irt=300), chan).items()):
    print(f"{key:>8s} {mass:.3e}")

# switching CRC false negatives off shows how much of the loss they cause
print()
print("model1 without CRC false negatives:", f"{p_oos_model1(RohcConfig(irt=300, crc_fn=0.0), chan):.2e}")
