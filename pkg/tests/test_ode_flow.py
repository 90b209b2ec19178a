import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bdstab.drift_model import SmoothDrift, builtin_scenario
from bdstab.errors import BdStabError, DomainError
from bdstab.ode_flow import (FlowSettings, Termination, classify_smooth, hitting_time, icosphere,
                             integrate, scaling_check, sphere_mesh, trajectory_csv)
from bdstab.verdict import Label

INWARD = SmoothDrift(2, births=[0, 0], deaths=["x1/norm", "x2/norm"])
OUTWARD = SmoothDrift(2, births=["x1/norm", "x2/norm"], deaths=[0, 0])
COARSE = FlowSettings(mesh=48)


def test_radial_hit_time():
    ht = hitting_time(INWARD, (0.6, 0.8))
    assert ht.status == "hit"
    assert ht.time == pytest.approx(0.999, abs=1e-6)
    assert ht.trajectory.termination is Termination.HIT_INNER_BALL


def test_radial_hit_time_from_radius_two():
    assert hitting_time(INWARD, (0.0, 2.0)).time == pytest.approx(1.999, abs=1e-6)


def test_norm_decays_linearly_along_path():
    tr = integrate(INWARD, (1.0, 1.0))
    r0 = math.sqrt(2)
    assert np.allclose(tr.norms, r0 - tr.t, atol=1e-9)
    assert np.all(np.diff(tr.t) > 0) and np.all(np.isfinite(tr.u))


def test_constant_outward_drift_is_straight_line():
    h = 1 / math.sqrt(2)
    field = SmoothDrift(2, births=[h, h], deaths=[0, 0])
    tr = integrate(field, (1.0, 0.0))
    assert tr.termination is Termination.EXCEEDED_RADIUS
    pts = tr.state_at([1.0, 10.0, 100.0])
    assert pts == pytest.approx(np.array([[1 + h * t, h * t] for t in (1.0, 10.0, 100.0)]), abs=1e-8)
    assert hitting_time(field, (1.0, 0.0)).status == "divergent"


def test_outward_radial_is_divergent():
    assert hitting_time(OUTWARD, (0.6, 0.8)).status == "divergent"


def test_timeout_is_undetermined():
    # unit-speed decay slowed to 1e-4: the inner ball is out of reach within t_max
    slow = SmoothDrift(2, births=[0, 0], deaths=["1e-4 * x1/norm", "1e-4 * x2/norm"])
    ht = hitting_time(slow, (1.0, 0.0), FlowSettings(t_max=10.0))
    assert ht.status == "undetermined"
    assert ht.trajectory.termination is Termination.TIMEOUT


def test_exit_from_orthant():
    field = SmoothDrift(2, births=[0, 0.5], deaths=[1, 0])
    tr = integrate(field, (1.0, 1.0))
    assert tr.termination is Termination.EXITED_ORTHANT
    assert tr.coordinate == 0
    assert tr.time == pytest.approx(1.0, abs=1e-9)
    v = classify_smooth(field, COARSE)
    assert v.label is Label.INCONCLUSIVE
    assert v.metadata["tallies"]["exited_orthant"] > 0


def test_rate_failure_reports_state():
    # the path turns towards e2 until x1/norm drops below 0.5
    bad = SmoothDrift(2, births=[0, 1], deaths=["sqrt(x1/norm - 0.5)", "0"])
    with pytest.raises(BdStabError) as info:
        integrate(bad, (1.0, 0.2))
    assert "state" in str(info.value)


def test_classify_radial_fields():
    v = classify_smooth(INWARD, COARSE)
    assert v.label is Label.STABLE
    assert v.certificate["sup_hitting_time"] == pytest.approx(0.999, abs=1e-6)
    u = classify_smooth(OUTWARD, COARSE)
    assert u.label is Label.UNSTABLE
    # |u(T)| = 1 + T along every direction
    assert u.certificate["a"] == pytest.approx(1 + u.certificate["T"], rel=1e-6)
    assert u.certificate["a"] >= 1.05


def test_time_reversal_swaps_verdicts():
    assert classify_smooth(INWARD.negated(), COARSE).label is Label.UNSTABLE


def test_mesh_refinement_keeps_verdict():
    a = classify_smooth(INWARD, FlowSettings(mesh=24)).label
    b = classify_smooth(INWARD, FlowSettings(mesh=48)).label
    assert a is b is Label.STABLE


def test_scaling_identity():
    rep = scaling_check(INWARD)
    assert rep.passed and rep.deviation <= 1e-8
    sh = builtin_scenario("shannon2").model
    assert scaling_check(sh, n=5).passed


def test_scaling_detects_non_homogeneous_field():
    lin = SmoothDrift(2, births=["x1", "0.1"], deaths=["1", "1"])
    assert not scaling_check(lin, n=5).passed


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, math.pi / 2), st.sampled_from([2.0, 10.0]))
def test_hitting_time_is_one_homogeneous(theta, K):
    x = np.array([math.cos(theta), math.sin(theta)])
    s = FlowSettings(kappa=1e-3)
    t1 = hitting_time(INWARD, x, s).time
    tK = hitting_time(INWARD, K * x, s).time
    # T_{Kx} = K T_x up to the ball radius: (K - kappa) vs K (1 - kappa)
    assert tK == pytest.approx(K * t1, abs=K * 1e-3 + 1e-6)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, math.pi / 2), st.floats(1e-4, 0.5), st.floats(1e-4, 0.5))
def test_hitting_time_monotone_in_kappa(theta, k1, k2):
    x = np.array([math.cos(theta), math.sin(theta)])
    lo, hi = sorted((k1, k2))
    t_lo = hitting_time(INWARD, x, FlowSettings(kappa=lo)).time
    t_hi = hitting_time(INWARD, x, FlowSettings(kappa=hi)).time
    assert t_lo >= t_hi - 1e-12


@pytest.mark.parametrize("kw", [{"kappa": 0}, {"kappa": 1.5}, {"r_max": 0.5}, {"t_max": 0},
                                {"mesh": 4}])
def test_settings_validation(kw):
    with pytest.raises(DomainError):
        FlowSettings(**kw)


def test_meshes():
    m2 = sphere_mesh(2)
    assert len(m2) == 720 and np.allclose(m2[0], [1, 0]) and np.allclose(m2[-1], [0, 1], atol=1e-15)
    assert len(icosphere(4)) == 2562
    m3 = sphere_mesh(3)
    assert np.all(m3 >= 0) and np.allclose(np.linalg.norm(m3, axis=1), 1)
    assert len(sphere_mesh(4, 20)) == 20


def test_trajectory_csv():
    text = trajectory_csv(integrate(INWARD, (0.6, 0.8)))
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["t", "u1", "u2", "norm"]
    assert float(rows[1][3]) == pytest.approx(1.0)
    assert "\r\n" in text


def test_state_at_hermite_matches_exact_line():
    tr = integrate(INWARD, (0.6, 0.8))
    ts = np.linspace(0, 0.99, 17)
    exact = np.outer(1 - ts, [0.6, 0.8])
    assert np.allclose(tr.state_at(ts), exact, atol=1e-10)
    assert np.all(np.isnan(tr.state_at([5.0])))
