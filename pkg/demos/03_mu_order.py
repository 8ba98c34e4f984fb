"""
Order of agreement along the mu-family
======================================

Scale the displacement, f_mu(x) = x + mu (f(x) - x), and read off the order
in mu of the embedding error. For X_m it should be m + 1.
"""

from flowembed import Domain, EulerStep, SampleGrid, mu_order_check

f = EulerStep("pendulum", 0.01)
dom = Domain([-0.8, -0.8], [0.8, 0.8], delta=0.5)

for m in (1, 2, 3):
    est = mu_order_check(f, m, dom, grid=SampleGrid(21, 8))
    errs = "  ".join(f"{e:.3e}" for e in est.errors)
    print(f"m={m}  mu={est.mu_values}  errors {errs}  order {est.observed_order:.3f}")

# at higher m the errors sink to the integrator floor and the estimate
# is reported as inconclusive instead of returning a meaningless number
est = mu_order_check(f, 6, dom, grid=SampleGrid(21, 8))
print("m=6 inconclusive:", est.inconclusive)
