import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bdstab.drift_model import (ConePartition2D, SmoothDrift, SupportPatternDrift, builtin_scenario,
                                check_homogeneity, cones_from_support, coupled2_model, drift_at,
                                drift_bound, sphere_samples)
from bdstab.errors import DimensionError, DomainError


def coupled2(lam=(0.5, 0.9), a=(0.6, 0.6)):
    return builtin_scenario("coupled2", a=list(a), lam=list(lam)).model


def test_coupled2_interior_drift():
    assert drift_at(coupled2(), (1, 1)) == pytest.approx([-0.1, 0.3], abs=1e-15)


def test_coupled2_axis_drift_is_masked():
    assert drift_at(coupled2(), (5, 0)) == pytest.approx([-0.5, 0.9], abs=1e-15)


def test_drift_is_scale_free():
    m = coupled2()
    for x in [(1, 2), (3, 0), (0, 7)]:
        assert np.array_equal(drift_at(m, x), drift_at(m, 2 * np.array(x)))


@pytest.mark.parametrize("x", [(0, 0), (-1, 2), (1, 2, 3)])
def test_bad_states(x):
    with pytest.raises(DomainError):
        drift_at(coupled2(), x)


def test_masking_invariant_all_builtins():
    for name in ("coupled2", "coupled3"):
        m = builtin_scenario(name).model
        for pat in m.patterns:
            dr = m.pattern_drift(pat)
            b = m.birth(pat)
            for i in range(m.dimension):
                if i not in pat:
                    assert dr[i] == b[i]


def test_unmasked_flag_keeps_nominal_deaths():
    m = coupled2_model((0.6, 0.6), (0.5, 0.9))
    raw = SupportPatternDrift(2, m.table(), masked=False)
    assert raw.drift((5, 0)) == pytest.approx([-0.5, 0.9 - 0.6])


def test_cones_from_support_psi_chain():
    part = cones_from_support(coupled2((0.3, 0.3)))
    assert part.psi.tolist() == [[1.0, 0.0], [0.6, 0.6], [0.0, 1.0]]
    ind = cones_from_support(coupled2((0.3, 0.3), a=(1, 1)))
    assert ind.psi.tolist() == [[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]


def test_cones_from_support_needs_planar_model():
    with pytest.raises(DimensionError):
        cones_from_support(builtin_scenario("coupled3").model)


def test_cones_reproduce_pattern_drifts():
    rng = np.random.default_rng(5)
    m = coupled2((0.4, 0.7))
    part = cones_from_support(m)
    pts = [np.array([rng.uniform(0.1, 9), 0.0]) for _ in range(100)]
    pts += [np.array([0.0, rng.uniform(0.1, 9)]) for _ in range(100)]
    pts += [rng.uniform(0.1, 9, 2) for _ in range(100)]
    for x in pts:
        assert np.array_equal(part.drift(x), m.drift(x))


def test_builtin_catalog_shapes():
    sc = builtin_scenario("coupled2", a=[0.6, 0.6], lam=[0.3, 0.3])
    assert isinstance(sc.model, SupportPatternDrift) and len(sc.model.patterns) == 3
    jsq = builtin_scenario("jsq2", lam=[0.1, 0.1], nu=0.2, a=[0.5, 0.5]).model
    assert isinstance(jsq, ConePartition2D)
    h = 1 / math.sqrt(2)
    assert np.allclose(jsq.rays, [[1, 0], [1, 0], [h, h], [0, 1], [0, 1]], atol=1e-15)
    sh = builtin_scenario("shannon2", lam=[0.4, 0.8], noise=0.1).model
    b, d = sh.rates((0.6, 0.8))
    assert d[0] == pytest.approx(math.log(1 + 0.6 / (0.1 + 0.8)), rel=1e-15)
    assert b.tolist() == [0.4, 0.8]


def test_jsq2_drifts_match_table():
    # axis cone e1: flexible traffic joins queue 2, queue 2 is not served
    jsq = builtin_scenario("jsq2", lam=[0.1, 0.1], nu=0.2, a=[0.5, 0.5]).model
    assert jsq.drift((3, 0)) == pytest.approx([0.1 - 1, 0.1 + 0.2])
    assert jsq.drift((3, 1)) == pytest.approx([0.1 - 0.5, 0.1 + 0.2 - 0.5])
    assert jsq.drift((1, 3)) == pytest.approx([0.1 + 0.2 - 0.5, 0.1 - 0.5])
    assert jsq.drift((0, 3)) == pytest.approx([0.1 + 0.2, 0.1 - 1])


@pytest.mark.parametrize("name,params", [
    ("coupled2", {"a": [0.0, 0.6]}),
    ("coupled2", {"a": [0.6]}),
    ("shannon2", {"noise": 0.0}),
    ("polytope2", {"capacities": []}),
    ("nope", {}),
])
def test_builtin_rejects_bad_params(name, params):
    with pytest.raises(DomainError):
        builtin_scenario(name, params)


def test_support_table_validation():
    good = coupled2_model((0.6, 0.6), (0.3, 0.3)).table()
    bad = dict(good)
    bad.pop(frozenset({0}))
    with pytest.raises(DomainError):
        SupportPatternDrift(2, bad)
    neg = dict(good)
    neg[frozenset({0})] = ((0.3, 0.3), (-1.0, 0.0))
    with pytest.raises(DomainError):
        SupportPatternDrift(2, neg)
    zero = {p: ((0, 0), d) for p, (b, d) in good.items()}
    with pytest.raises(DomainError):
        SupportPatternDrift(2, zero)


def test_partition_validation():
    with pytest.raises(DomainError):
        ConePartition2D([(0, 1), (1, 0)], drifts=[(1, 1)])
    with pytest.raises(DomainError):
        ConePartition2D([(1, 0), (0, 1), (1, 1), (0, 1)], drifts=[(1, 1)] * 3)


def test_polytope_allocation_orientation():
    m = builtin_scenario("polytope2").model
    b, d = m.rates((1.0, 0.0))
    # arrival vertex minimizing x1, service vertex maximizing x1
    assert b.tolist() == [0.3, 0.4]
    assert d.tolist() == [1.0, 0.0]


def test_drift_bound_is_finite():
    for name in ("coupled2", "shannon2", "polytope2", "jsq2"):
        bound = drift_bound(builtin_scenario(name).model)
        assert math.isfinite(bound) and bound > 0


@pytest.mark.parametrize("name", ["coupled2", "jsq2", "coupled3", "shannon2", "polytope2"])
def test_builtins_are_homogeneous(name):
    assert check_homogeneity(builtin_scenario(name).model) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(min_value=1e-3, max_value=1e3), min_size=2, max_size=2),
       st.sampled_from([0.5, 2.0, 10.0, 1e4]))
def test_homogeneity_property(x, alpha):
    x = np.array(x)
    for name in ("coupled2", "shannon2", "polytope2", "jsq2"):
        m = builtin_scenario(name).model
        d0 = m.drift(x)
        assert np.max(np.abs(m.drift(alpha * x) - d0)) <= 1e-9 * (1 + np.linalg.norm(d0))


def test_sphere_samples_on_orthant_sphere():
    pts = sphere_samples(3, 50, np.random.default_rng(0))
    assert np.allclose(np.linalg.norm(pts, axis=1), 1)
    assert np.all(pts >= 0)


def test_smooth_from_expressions_and_constants():
    m = SmoothDrift(2, births=[0.2, "0.1"], deaths=["x1/norm", "x2/norm"])
    assert m.drift((3, 4)) == pytest.approx([0.2 - 0.6, 0.1 - 0.8])
    # deaths masked on the axis
    assert m.drift((1, 0)) == pytest.approx([0.2 - 1.0, 0.1])
    neg = m.negated()
    assert neg.drift((3, 4)) == pytest.approx(-m.drift((3, 4)))


def test_with_lambda_for_scenarios():
    sc = builtin_scenario("coupled2")
    sc2 = sc.with_lambda([0.5, 0.9])
    assert sc2.lam.tolist() == [0.5, 0.9]
    assert drift_at(sc2.model, (1, 1)) == pytest.approx([-0.1, 0.3])
