"""
How the SN window and the refresh timeout trade off
===================================================

A single flow over a bursty channel with 2% mean loss and bursts of five
packets on average. The compressor refreshes context with a full header
every IRT packets; the decompressor can ride out a burst as long as it is
shorter than the W-LSB window.
"""

from rohcge import from_eps_lb, solve_model2, min_w, max_irt

chan = from_eps_lb(0.02, 5)

# the textbook setting: k = 4 LSBs, p = 1 gives W = 29
for irt in (100, 200, 300, 400, 500):
    s = solve_model2(chan, 29, irt)
    print(f"W=29  IRT={irt:3d}  exact {s.p_oos_exact:.3e}  approx {s.p_oos_approx:.3e}")

# without wraparound the usable window shrinks to W1 = 13 and losses explode
print()
print(f"W=13  IRT=300  exact {solve_model2(chan, 13, 300).p_oos_exact:.3e}")

# the design rule goes both ways: pick W for a target, or IRT for a given W
print()
print("W needed for P_OoS <= 0.1 at IRT=300:", min_w(0.1, 5, 300).ceil)
print("longest IRT that W=29 allows:", round(max_irt(0.1, 5, 29), 1))
