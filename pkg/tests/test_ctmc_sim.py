import json
import math

import numpy as np
import pytest

from bdstab.cone_geometry import all_faces
from bdstab.ctmc_sim import (RNG_ALGORITHM, SimConfig, estimate_recurrence, pinned_face_occupancy,
                             simulate, simulate_replicas)
from bdstab.drift_model import SmoothDrift, SupportPatternDrift, builtin_scenario, coupled3_model
from bdstab.errors import DomainError
from bdstab.verdict import Label


def coupled2(lam, a=(0.6, 0.6)):
    return builtin_scenario("coupled2", a=list(a), lam=list(lam)).model


def mm1(lam, mu):
    # queue 1 is an M/M/1 queue; coordinate 2 never moves
    table = {p: ((lam, 0.0), (mu, 0.0)) for p in all_faces(2)}
    return SupportPatternDrift(2, table)


def test_same_seed_same_summary():
    m = coupled2((0.4, 0.4))
    cfg = SimConfig(seed=5, time=2e3, initial=(3, 4))
    a, b = simulate(m, cfg), simulate(m, cfg)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    c = simulate(m, SimConfig(seed=6, time=2e3, initial=(3, 4)))
    assert c.end_state != a.end_state or c.events != a.events


def test_replicas_are_reproducible_and_distinct():
    m = coupled2((0.4, 0.4))
    cfg = SimConfig(seed=9, time=1e3, replicas=3)
    r1 = [s.to_dict() for s in simulate_replicas(m, cfg)]
    r2 = [s.to_dict() for s in simulate_replicas(m, cfg)]
    assert r1 == r2
    assert len({json.dumps(r) for r in r1}) == 3
    assert r1[0]["rng"]["algorithm"] == RNG_ALGORITHM
    assert [r["rng"]["spawn_key"] for r in r1] == [[0], [1], [2]]


def test_occupancy_sums_to_one():
    s = simulate(coupled2((0.5, 0.5)), SimConfig(seed=1, time=1e4))
    assert math.fsum(s.occupancy.values()) == pytest.approx(1.0, abs=1e-12)
    assert set(s.occupancy) == {"", "1", "2", "1,2"}
    assert np.all(np.isfinite(s.slopes)) and math.isfinite(s.norm_slope)


def test_event_horizon():
    s = simulate(coupled2((0.5, 0.5)), SimConfig(seed=1, time=None, events=500))
    assert s.events == 500


def test_zero_arrivals_absorb_at_origin():
    m = SmoothDrift(2, births=[0, 0], deaths=[1, 1])
    s = simulate(m, SimConfig(seed=3, time=1e3, initial=(5, 5)))
    assert s.absorbed and s.end_state == [0, 0] and s.events == 10


def test_mm1_idle_fraction():
    lam, mu = 0.5, 1.0
    s = simulate(mm1(lam, mu), SimConfig(seed=77, time=1e6))
    assert s.occupancy[""] == pytest.approx(1 - lam / mu, abs=0.01)


def test_escape_slope_on_unstable_point():
    runs = simulate_replicas(coupled2((0.5, 0.9)), SimConfig(seed=2024, time=1e5, replicas=5))
    s2 = np.median([r.slopes[1] for r in runs])
    s1 = np.median([r.slopes[0] for r in runs])
    assert s2 == pytest.approx(7 / 30, abs=0.05)
    assert s1 <= 0.02


def test_recurrence_verdicts():
    cfg = SimConfig(seed=4, time=1e5, replicas=3)
    stable = estimate_recurrence(coupled2((0.3, 0.3)), cfg)
    assert stable.label is Label.EMPIRICALLY_STABLE
    assert min(stable.certificate["returns"]) >= 100
    unstable = estimate_recurrence(coupled2((0.5, 0.9)), cfg)
    assert unstable.label is Label.EMPIRICALLY_UNSTABLE
    assert unstable.metadata["rng"] == RNG_ALGORITHM


def test_returns_from_far_start():
    s = simulate(coupled2((0.3, 0.3)), SimConfig(seed=8, time=1e5, initial=(50, 50)))
    assert s.norm_slope <= 0.02 and s.returns >= 100
    assert s.mean_return_time is not None and s.mean_return_time > 0


def test_thinned_path():
    s = simulate(coupled2((0.3, 0.3)), SimConfig(seed=8, time=100, thin=10))
    assert s.path and all(len(row) == 3 for row in s.path)


@pytest.mark.parametrize("kw", [{"time": None}, {"time": -1.0}, {"events": 0, "time": None},
                                {"replicas": 0}])
def test_config_validation(kw):
    with pytest.raises(DomainError):
        SimConfig(**kw)


def test_pinned_independent_queues():
    m = coupled3_model([1, 1, 1], [[1, 1, 1]] * 3, [0.5, 0.5, 0.5])
    occ = pinned_face_occupancy(m, 2, SimConfig(seed=12, time=1e5))
    assert occ.free == (0, 1) and occ.reliable
    # product of two M/M/1 idle probabilities 0.5 * 0.5
    assert occ.pi["00"] == pytest.approx(0.25, abs=0.02)
    assert math.fsum(occ.pi.values()) == pytest.approx(1.0, abs=1e-12)
    # queue 3 drains at rate 1 on every face: lhs = 0.5 - 1
    assert occ.lhs == pytest.approx(-0.5, abs=1e-12)


def test_pinned_empty_queue():
    m = coupled3_model([1.5, 1.5, 1.5], [[0, 1.2, 1.2], [1.2, 0, 1.2], [1.2, 1.2, 0]], [0.0, 0.4, 0.4])
    occ = pinned_face_occupancy(m, 2, SimConfig(seed=13, time=2e4))
    assert occ.pi["10"] == 0.0 and occ.pi["11"] == 0.0


def test_pinned_needs_3d_support_model():
    with pytest.raises(DomainError):
        pinned_face_occupancy(coupled2((0.3, 0.3)), 0)
