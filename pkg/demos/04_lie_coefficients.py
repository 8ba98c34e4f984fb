"""
Lie coefficients from the map and from the field
================================================

The field of the mu-family has a Taylor expansion mu a_1 + mu^2 a_2 + ...
whose coefficients can also be computed from iterated directional
derivatives of f - id. Compare both routes.
"""

import numpy as np

from flowembed import EulerStep, LinearScalar, default_mu_grid, lie_coefficient, lie_vs_field_taylor

# scalar case: the field is log(1 + mu u) x, so a_2 = -u^2 x / 2 and a_3 = u^3 x / 3
f = LinearScalar(1.05)
u, x = 0.05, 0.7
print("closed form  a_2, a_3:", -u**2 * x / 2, u**3 * x / 3)
print("finite diff. a_2, a_3:", lie_coefficient(f, 2, [x])[0], lie_coefficient(f, 3, [x])[0])

# pendulum Euler step; compare with the field's mu-Taylor fit
g = EulerStep("pendulum", 0.01)
p = np.array([0.3, -0.2])
for m in (2, 3):
    for c in lie_vs_field_taylor(g, m, p, default_mu_grid(m, epsilon=0.01, delta=0.5)):
        print(f"m={m} k={c.k}  from map {c.a_k_numeric}  from field {c.a_k_from_field}  rel {c.rel_discrepancy:.1e}")
