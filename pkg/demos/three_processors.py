"""Three coupled processors: the pinned-face condition against full simulation.

Coordinate 3 is held busy while the other two run as a 2D chain; the
occupancies of that chain give the mean service rate of coordinate 3, and
the sign of arrivals minus that rate should predict escape of the full chain.
"""
from bdstab.ctmc_sim import SimConfig, estimate_recurrence, pinned_face_occupancy
from bdstab.drift_model import coupled3_model

a = [1.5, 1.5, 1.5]
pair = [[0, 1.2, 1.2], [1.2, 0, 1.2], [1.2, 1.2, 0]]
for lam3 in (0.6, 1.8):
    model = coupled3_model(a, pair, [0.3, 0.3, lam3])
    occ = pinned_face_occupancy(model, 2, SimConfig(seed=1, time=1e5))
    sim = estimate_recurrence(model, SimConfig(seed=2, time=1e5, replicas=3))
    print(f"lambda3={lam3}: pinned lhs {occ.lhs:+.3f}  pi={occ.pi}  simulation {sim.label.value}")
