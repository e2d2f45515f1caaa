"""Fluctuating target: x ~ CN(0, Rx) with a one-lag correlated Rx.

Prints the eigenvalue grouping that drives the fluctuation density, then the
analytic detection curve.
"""
from ngamd import TextureParams, reference_scenario
from ngamd.montecarlo import theory_curve
from ngamd.theory import eig_grouping

s = reference_scenario(TextureParams(2.0, 0.5), "fluctuating", snr_db=0.0)
g = eig_grouping(s.whitened_gram(), s.target.Rx)
print("eigenvalues", g.values, "multiplicities", g.multiplicities)
curve = theory_curve(s, (-15.0, -10.0, -5.0, 0.0, 5.0), 1e-2)
for p in curve.points:
    print(f"{p.snr_db:6.1f} dB  P_D {p.probability:.4f}")
