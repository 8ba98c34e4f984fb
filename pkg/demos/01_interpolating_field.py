"""
The interpolating field of a near-identity map
==============================================

Build X_m for one explicit Euler step of the pendulum and watch the
time-one flow of X_m reproduce the map better as m grows.
"""

import numpy as np

from flowembed import EulerStep, InterpField, embedding_error, field_eval

f = EulerStep("pendulum", 0.01)
x = np.array([0.4, -0.3])

# m = 1 is just the displacement f(x) - x
print("f(x) - x       :", f(x) - x)
for m in (1, 2, 3, 4):
    print(f"X_{m}(x)         :", field_eval(f, x, m))

# how far is the time-one flow of X_m from f(x)?
for m in range(1, 6):
    err, disc = embedding_error(f, m, x)
    print(f"m={m}  |flow(X_m) - f| = {err:.3e}   (integrator discrepancy {disc:.1e})")

# the field is an ordinary callable and can be handed to any ODE solver
X = InterpField(f, 3)
print("X_3 on a batch of points:\n", X(np.array([[0.0, 0.0], [0.1, 0.2], [-0.5, 0.5]])))
