"""
Several flows sharing one channel
=================================

With M interleaved flows each flow sees only about one packet in M, so a
channel burst looks shorter from the tagged flow's point of view. The
price is the IP-ID window: the IP-ID advances for every packet of every
flow, and a long gap in the tagged flow can overrun W_o.
"""

import numpy as np

from rohcge import from_eps_lb
from rohcge.model_multiflow import MultiflowParams, effective_lb, p_oos_model3_chain, p_oos_multiflow

chan = from_eps_lb(0.02, 5)

for m in range(1, 9):
    p = MultiflowParams(m, 62, 47, 300, chan)
    print(f"M={m}  effective burst {effective_lb(chan, m):5.2f}  "
          f"formula {p_oos_multiflow(p):.3e}  chain {p_oos_model3_chain(p):.3e}")

# a wider IP-ID window pays off exponentially
print()
wos = np.arange(20, 81, 10)
vals = [p_oos_multiflow(MultiflowParams(3, 62, int(wo), 300, chan)) for wo in wos]
for wo, v in zip(wos, vals):
    print(f"W_o={wo:2d}  {v:.3e}")
