"""Fluid-limit hitting times against long simulations for a smooth model.

Takes under a minute: each ODE classification integrates a few hundred
directions and each simulation runs 3 replicas to t = 3e5.
"""
from bdstab.ctmc_sim import SimConfig, estimate_recurrence
from bdstab.drift_model import builtin_scenario
from bdstab.ode_flow import classify_smooth

cfg = SimConfig(seed=11, time=3e5, replicas=3, slope_lo=0.005, slope_hi=0.01)
for lam in [(0.4, 0.8), (0.5, 0.8)]:
    model = builtin_scenario("shannon2", lam=list(lam)).model
    ode = classify_smooth(model)
    sim = estimate_recurrence(model, cfg)
    print(lam, "ode:", ode.label.value, "| simulation:", sim.label.value,
          f"(median slope {sim.certificate['median_slope']:.4f})")
