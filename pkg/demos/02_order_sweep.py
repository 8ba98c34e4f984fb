"""
Measured error against the certified bound
==========================================

Sweep the order m up to the largest certified order for the pendulum
Euler step on a box and compare the sampled embedding error with the bound.
"""

from flowembed import Domain, EulerStep, SampleGrid, best_order, epsilon_used, order_sweep, plan_order

f = EulerStep("pendulum", 0.005)
dom = Domain([-0.8, -0.8], [0.8, 0.8], delta=0.5)
grid = SampleGrid(21, 8)

eps = epsilon_used(f, dom, grid)       # sampled displacement size, inflated by 1.25
plan = plan_order(eps, dom.delta)
print(f"eps_used = {eps:.5g}   M = {plan.M_eps:.3f}   m_star = {plan.m_star}")

reports = order_sweep(f, dom, grid, m_max=10)
print(" m   measured     bound      exp. bound   ok")
for r in reports:
    exp = f"{r.bound_exp:.3e}" if r.bound_exp is not None else "    -    "
    print(f"{r.m:2d}   {r.measured_error:.3e}  {r.bound_poly:.3e}  {exp}   {r.satisfied}")

print("best order:", best_order(reports))
# the bound is very conservative here: the measured error drops by roughly
# a factor eps per order while the bound barely moves
