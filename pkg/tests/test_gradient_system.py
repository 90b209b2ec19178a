import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from bdstab.drift_model import SmoothDrift, builtin_scenario, sphere_samples
from bdstab.errors import ContractError
from bdstab.gradient_system import (check_gradient_criterion, is_conservative, jacobian, potential,
                                    potential_report)
from bdstab.ode_flow import FlowSettings, classify_smooth
from bdstab.verdict import Label

INWARD = SmoothDrift(2, births=[0, 0], deaths=["x1/norm", "x2/norm"])
OUTWARD = SmoothDrift(2, births=["x1/norm", "x2/norm"], deaths=[0, 0])


def _rotation(x):
    r = math.hypot(x[0], x[1])
    # drift (-x2, x1) / |x| written with non-negative rates
    return np.array([0.0, x[0] / r]), np.array([x[1] / r, 0.0])


ROTATION = SmoothDrift(2, rates_fn=_rotation, name="rotation")
CONSTANT = SmoothDrift(2, births=[0, 0], deaths=[1, 1], masked=False)
POLYTOPE = builtin_scenario("polytope2").model
ARRIVALS = np.array(builtin_scenario("polytope2").params["arrivals"])
CAPACITIES = np.array(builtin_scenario("polytope2").params["capacities"])


def test_radial_field_is_conservative():
    rep = is_conservative(INWARD)
    assert rep.conservative and rep.max_asymmetry <= 1e-6


def test_rotational_field_is_not():
    rep = is_conservative(ROTATION)
    assert rep.status == "non_conservative"
    # curl of (-x2, x1)/r is d(x1/r)/dx1 + d(x2/r)/dx2 = 1/r, i.e. 1 on the unit sphere
    assert rep.max_asymmetry == pytest.approx(1.0, rel=1e-4)


def test_rotation_curl_at_a_point():
    x = np.array([0.6, 0.8]) * 2.5
    J = jacobian(ROTATION, x)
    assert J[1, 0] - J[0, 1] == pytest.approx(1 / 2.5, rel=1e-6)


def test_constant_field_is_conservative():
    assert is_conservative(CONSTANT).conservative


def test_potential_values():
    assert potential(INWARD, (3, 4)) == pytest.approx(5.0, abs=1e-12)
    assert potential(CONSTANT, (2, 3)) == pytest.approx(5.0, abs=1e-12)


def test_potential_refuses_non_gradient():
    with pytest.raises(ContractError):
        potential(ROTATION, (1, 1))


def test_polytope_potential_is_support_function():
    assert is_conservative(POLYTOPE).conservative
    rng = np.random.default_rng(8)
    for x in rng.uniform(0.01, 5, size=(100, 2)):
        brute = max(CAPACITIES @ x) - min(ARRIVALS @ x)
        assert potential(POLYTOPE, x) == pytest.approx(brute, abs=1e-12)


def _line_integral(model, x):
    x = np.asarray(x, dtype=float)
    val, _ = quad(lambda s: float(np.dot(model.drift(s * x), x)), 1e-12, 1.0,
                  epsabs=1e-13, epsrel=1e-13)
    return -val


@pytest.mark.parametrize("model", [INWARD, POLYTOPE, CONSTANT])
def test_potential_matches_line_integral(model):
    pts = sphere_samples(2, 100, np.random.default_rng(4)) * 3.0
    for x in pts:
        assert potential(model, x) == pytest.approx(_line_integral(model, x), abs=1e-8)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 100), st.floats(0.01, 100), st.floats(0.1, 50))
def test_potential_is_one_homogeneous(a, b, K):
    x = np.array([a, b])
    assert potential(INWARD, K * x) == pytest.approx(K * potential(INWARD, x), rel=1e-12)
    assert potential(POLYTOPE, K * x) == pytest.approx(K * potential(POLYTOPE, x), rel=1e-12)


def test_finite_difference_gradient_of_potential():
    pts = sphere_samples(2, 100, np.random.default_rng(12))
    pts = pts[np.min(pts, axis=1) > 1e-3]
    h = 1e-6
    for x in pts:
        grad = np.array([(potential(INWARD, x + h * e) - potential(INWARD, x - h * e)) / (2 * h)
                         for e in np.eye(2)])
        assert grad == pytest.approx(-INWARD.drift(x), abs=1e-4)


def test_criterion_verdicts():
    v = check_gradient_criterion(INWARD)
    assert v.label is Label.STABLE
    assert v.certificate["min_potential"] == pytest.approx(1.0, abs=1e-12)
    assert v.certificate["min_drift_norm"] == pytest.approx(1.0, abs=1e-12)
    assert v.metadata["mesh"] > 0
    assert check_gradient_criterion(OUTWARD).label is Label.INCONCLUSIVE
    assert check_gradient_criterion(ROTATION).label is Label.INCONCLUSIVE


def test_polytope_criterion_stable():
    # V is the support function of C - A, positive on the quadrant since C - A holds a ball
    # around a positive point
    rep = potential_report(POLYTOPE)
    assert rep.conservative.conservative
    assert rep.min_potential > 1e-3 and rep.min_drift_norm > 0
    assert check_gradient_criterion(POLYTOPE).label is Label.STABLE


def test_gradient_stable_implies_ode_not_unstable():
    s = FlowSettings(mesh=32)
    for model in (INWARD, POLYTOPE, CONSTANT):
        if check_gradient_criterion(model, samples=200).label is Label.STABLE:
            assert classify_smooth(model, s).label is not Label.UNSTABLE
