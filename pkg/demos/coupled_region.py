"""Stability region of two coupled processors, three ways.

The closed-form polygon, the grid sweep with its certificates, and the
cone-separation check (A1) at a handful of arrival vectors.
"""
from bdstab.cone_geometry import check_a1
from bdstab.drift_model import builtin_scenario
from bdstab.region2d import as_partition, classify_2d, grid, region_polygon, sweep_region

sc = builtin_scenario("coupled2", a=[0.6, 0.6], lam=[0.3, 0.3])
print("region vertices:", region_polygon(sc.model).vertices.tolist())

sw = sweep_region(sc.model, grid(0.0, 1.2, 25))
stable = sum(lab.value == "stable" for _, _, lab in sw.cells())
print(f"sweep: {stable} of {25 * 25} cells stable")

for lam in [(0.3, 0.3), (0.5, 0.9), (0.9, 0.2)]:
    m = builtin_scenario("coupled2", a=[0.6, 0.6], lam=list(lam)).model
    region = classify_2d(as_partition(m))
    print(lam, "region:", region.label.value, "| A1:", check_a1(m).label.value)
    if "witness" in region.certificate:
        print("   witness:", region.certificate["witness"])
