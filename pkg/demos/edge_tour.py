"""
Edges of the deformed semicircle
================================

Walks through the free convolution of the semicircle with a Jacobi-type
potential: the critical coupling, the two edge regimes and the density near
the upper edge.
"""
import numpy as np

from spectral_lab import build_measure, edge_constants
from spectral_lab.freeconv import density_fc, solve_mfc

# potential density (15/16)(1 - v^2)^2 on [-1, 1]
mu = build_measure(2, 2)
print("normalization 1/Z =", 1 / mu.z_norm)

# below lambda_+ the edge is square-root like, above it the edge follows v's tail
for lam in (1.0, 2.0):
    ec = edge_constants(mu, lam)
    print(f"lambda={lam}: lambda_+={ec.lambda_plus:.6f} regime={ec.regime} L_+={ec.l_plus:.6f}")

ec = edge_constants(mu, 2.0)
print("C_lambda =", ec.c_lambda, " C_mu =", ec.c_mu)

# density just inside the edge: slope ~ 2 at lambda=2, ~ 1/2 at lambda=1
kappa = np.geomspace(1e-3, 1e-1, 6)
for lam in (2.0, 1.0):
    l_plus = edge_constants(mu, lam).l_plus
    rho = density_fc(mu, lam, l_plus - kappa)
    slope = np.polyfit(np.log(kappa), np.log(rho), 1)[0]
    print(f"lambda={lam}: fitted edge exponent {slope:.3f}")

# the Stieltjes transform at a point just above the edge
sol = solve_mfc(mu, 2.0, ec.l_plus + 1e-4j)
print("m_fc(L_+ + 1e-4 i) =", sol.m, " residual", sol.residual, " R2", sol.r2)
