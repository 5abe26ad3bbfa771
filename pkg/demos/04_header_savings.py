"""
What robustness costs in header bytes
=====================================

Shorter refresh intervals protect against long bursts but send more full
headers. Header sizes are 60 bytes (IPv6/UDP/RTP), 6 for FO and 3 for SO;
the last two are estimates, not measured values.
"""

from rohcge.experiments import compression_efficiency, retuned_irt, shrink_factor
from rohcge.sim import HeaderSizeModel, RohcConfig

hs = HeaderSizeModel(60, 6, 3)
mu = compression_efficiency(hs, RohcConfig(irt=300))
print(f"IRT=300: efficiency {mu:.4f}, headers shrink by {shrink_factor(mu):.1f}x")

# keep W=29 fixed and shorten the IRT as bursts get longer
print()
for lb in range(2, 11):
    irt = retuned_irt(0.1, lb, 29, cap=300)
    mu = compression_efficiency(hs, RohcConfig(irt=irt))
    print(f"L_B={lb:2d}  IRT={irt:3d}  efficiency {mu:.4f}")
