"""Fluid trajectories ``du/dt = delta(u)`` and the hitting-time criteria.

Integration is classic fourth-order Runge-Kutta with step doubling: a step
is accepted when one full step and two half steps agree to tolerance, and
the two-half-step value is kept.  Events (reaching the inner ball, leaving
the outer ball, leaving the orthant) are located by bisection on the step
length.

Because the drift is 0-homogeneous, trajectories scale:
``u^{Kx}(t) = K u^x(t / K)``, so the hitting time of the origin is
1-homogeneous and its supremum over the unit sphere decides stability.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .drift_model import DriftModel, SmoothDrift, sphere_samples
from .errors import BdStabError, DomainError
from .verdict import Label, Verdict

UNSTABLE_MARGIN = 1.05


@dataclass
class FlowSettings:
    h0: float = 1e-2
    rtol: float = 1e-10
    atol: float = 1e-12
    kappa: float = 1e-3
    r_max: float = 1e3
    t_max: float = 1e3
    mesh: int | None = None  # default: 720 in 2D, icosphere(2562) in 3D
    max_steps: int = 200_000
    event_tol: float = 1e-13

    def __post_init__(self):
        if not 0 < self.kappa < 1 < self.r_max:
            raise DomainError("need 0 < kappa < 1 < r_max")
        if not self.t_max > 0:
            raise DomainError("t_max must be positive")
        if self.mesh is not None and self.mesh < 8:
            raise DomainError("mesh needs at least 8 directions")


class Termination(str, enum.Enum):
    HIT_INNER_BALL = "hit_inner_ball"
    EXCEEDED_RADIUS = "exceeded_radius"
    EXITED_ORTHANT = "exited_orthant"
    TIMEOUT = "timeout"


@dataclass
class Trajectory:
    t: np.ndarray
    u: np.ndarray
    du: np.ndarray  # drift at each stored state, for Hermite dense output
    termination: Termination
    time: float
    coordinate: int | None = None  # for EXITED_ORTHANT
    t_eval: np.ndarray | None = None
    u_eval: np.ndarray | None = None  # rows for the t_eval times reached

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.u, axis=1)

    @property
    def min_norm(self) -> float:
        return float(self.norms.min())

    def state_at(self, times) -> np.ndarray:
        """Cubic Hermite interpolation of the path; NaN rows past the end."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.full((len(times), self.u.shape[1]), np.nan)
        idx = np.searchsorted(self.t, times, side="right") - 1
        for r, (T, i) in enumerate(zip(times, idx)):
            if i < 0 or T > self.t[-1]:
                continue
            if i == len(self.t) - 1:
                out[r] = self.u[-1]
                continue
            h = self.t[i + 1] - self.t[i]
            s = (T - self.t[i]) / h
            h00, h10 = 2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s
            h01, h11 = -2 * s**3 + 3 * s**2, s**3 - s**2
            out[r] = (h00 * self.u[i] + h10 * h * self.du[i]
                      + h01 * self.u[i + 1] + h11 * h * self.du[i + 1])
        return out


def _drift_fn(model: DriftModel):
    # unmasked: a path reaching a face with outward interior drift must register
    # an exit instead of being held on the face by the masked deaths
    raw = model.interior_rates if isinstance(model, SmoothDrift) else model.rates

    def f(u):
        # stages may overshoot the boundary slightly; such steps end in an exit event
        v = np.maximum(u, 0.0)
        try:
            b, d = raw(v)
        except BdStabError as exc:
            exc.args = (f"{exc.args[0]} (at state {u.tolist()})", *exc.args[1:])
            raise
        return b - d

    return f


def _rk4(f, u, h, k1=None):
    k1 = f(u) if k1 is None else k1
    k2 = f(u + 0.5 * h * k1)
    k3 = f(u + 0.5 * h * k2)
    k4 = f(u + h * k3)
    return u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _double_step(f, u, h, k1=None):
    return _rk4(f, _rk4(f, u, 0.5 * h, k1), 0.5 * h)


def integrate(model: DriftModel, x0, settings: FlowSettings | None = None, t_eval=None) -> Trajectory:
    """Integrate from ``x0`` until the first event or ``t_max``.

    ``t_eval`` (increasing times) are hit exactly by the step control; the
    states reached there are returned in ``u_eval``.
    """
    s = settings or FlowSettings()
    f = _drift_fn(model)
    u = np.asarray(x0, dtype=float).copy()
    if np.any(u < 0) or not np.any(u > 0):
        raise DomainError("initial state must be a non-zero point of the closed orthant")
    t = 0.0
    h = s.h0
    k1 = f(u)
    ts, us, dus = [0.0], [u.copy()], [k1]
    evals = [] if t_eval is None else [float(v) for v in t_eval]
    ev_i = 0
    u_eval = []

    # event functions; an event fires when one becomes <= 0
    def g_inner(v):
        return float(np.linalg.norm(v)) - s.kappa

    def g_outer(v):
        return s.r_max - float(np.linalg.norm(v))

    def g_orthant(v):
        return float(np.min(v)) + 1e-12 * max(1.0, float(np.linalg.norm(v)))

    events = ((Termination.HIT_INNER_BALL, g_inner), (Termination.EXCEEDED_RADIUS, g_outer),
              (Termination.EXITED_ORTHANT, g_orthant))

    def finish(kind, t_end, coord=None):
        return Trajectory(np.array(ts), np.array(us), np.array(dus), kind, t_end, coord,
                          None if t_eval is None else np.array(evals),
                          np.array(u_eval).reshape(-1, len(u)))

    for _ in range(s.max_steps):
        while ev_i < len(evals) and evals[ev_i] <= t:
            u_eval.append(u.copy())
            ev_i += 1
        if t >= s.t_max:
            break
        speed = float(np.linalg.norm(k1))
        h_cap = 0.5 * float(np.linalg.norm(u)) / speed if speed > 0 else math.inf
        target = s.t_max if ev_i >= len(evals) else min(s.t_max, evals[ev_i])
        h = min(h, h_cap, target - t)
        while True:
            full = _rk4(f, u, h, k1)
            half = _double_step(f, u, h, k1)
            err = float(np.max(np.abs(half - full))) / 15.0
            scale = s.atol + s.rtol * float(np.max(np.abs(half)))
            if err <= scale or h < 1e-14 * max(1.0, t):
                break
            h *= 0.5
        fired = [(kind, g) for kind, g in events if g(half) <= 0]
        if fired:
            # earliest root over the fired events; each is bracketed on [0, h]
            best = None
            for kind, g in fired:
                root = brentq(lambda tau: g(_double_step(f, u, tau, k1)), 0.0, h,
                              xtol=s.event_tol * max(1.0, t), rtol=4 * np.finfo(float).eps)
                if best is None or root < best[1]:
                    best = (kind, root)
            kind, tau = best
            u_hit = _double_step(f, u, tau, k1)
            ts.append(t + tau)
            us.append(u_hit)
            dus.append(f(u_hit))
            coord = int(np.argmin(u_hit)) if kind is Termination.EXITED_ORTHANT else None
            return finish(kind, t + tau, coord)
        t += h
        u = half
        if target - t <= 1e-12 * max(1.0, t):
            t = target
        k1 = f(u)
        ts.append(t)
        us.append(u.copy())
        dus.append(k1)
        if err < scale / 32.0:
            h *= 2.0
    while ev_i < len(evals) and evals[ev_i] <= t:
        u_eval.append(u.copy())
        ev_i += 1
    return finish(Termination.TIMEOUT, t)


@dataclass
class HittingTime:
    status: str  # "hit" | "divergent" | "undetermined"
    time: float | None
    trajectory: Trajectory = field(repr=False, default=None)


def hitting_time(model: DriftModel, x, settings: FlowSettings | None = None) -> HittingTime:
    """Time for the fluid path from ``x`` to enter the ball of radius kappa."""
    traj = integrate(model, x, settings)
    if traj.termination is Termination.HIT_INNER_BALL:
        return HittingTime("hit", traj.time, traj)
    if traj.termination is Termination.EXCEEDED_RADIUS:
        return HittingTime("divergent", None, traj)
    return HittingTime("undetermined", None, traj)


# -- meshes ----------------------------------------------------------------


def icosphere(subdivisions: int = 4) -> np.ndarray:
    """Vertices of a subdivided icosahedron (10 * 4**n + 2 points)."""
    p = (1 + math.sqrt(5)) / 2
    verts = [(-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0), (0, -1, p), (0, 1, p),
             (0, -1, -p), (0, 1, -p), (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1)]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return np.array(verts)


def sphere_mesh(dimension: int, m: int | None = None) -> np.ndarray:
    """Directions on the unit sphere inside the closed orthant."""
    if dimension == 2:
        th = np.linspace(0.0, math.pi / 2, m or 720)
        return np.column_stack([np.cos(th), np.sin(th)])
    if dimension == 3 and m is None:
        V = icosphere(4)
        V = V[np.all(V >= -1e-12, axis=1)]
        return np.clip(V, 0.0, None) / np.linalg.norm(np.clip(V, 0.0, None), axis=1, keepdims=True)
    rng = np.random.default_rng(2024)
    return np.vstack([np.eye(dimension), sphere_samples(dimension, (m or 500) - dimension, rng)])


# -- classification --------------------------------------------------------


def classify_smooth(model: DriftModel, settings: FlowSettings | None = None,
                    n_times: int = 200) -> Verdict:
    """Hitting-time (stable) and expansion (unstable) criteria over a sphere mesh.

    Stable if every mesh trajectory reaches the kappa-ball before ``t_max``
    (certificate: the largest hitting time).  Unstable if some time ``T``
    has every trajectory at norm ``>= a > 1.05`` without having entered the
    kappa-ball (certificate: ``T`` and ``a``).  Anything else is inconclusive.
    """
    s = settings or FlowSettings()
    mesh = sphere_mesh(model.dimension, s.mesh)
    times = np.geomspace(1e-3, s.t_max, n_times)
    trajs = [integrate(model, x, s) for x in mesh]
    tally = {k.value: 0 for k in Termination}
    for tr in trajs:
        tally[tr.termination.value] += 1
    meta = {"mesh": len(mesh), "kappa": s.kappa, "r_max": s.r_max, "t_max": s.t_max,
            "tallies": tally}
    if tally[Termination.HIT_INNER_BALL.value] == len(trajs):
        hit = [tr.time for tr in trajs]
        worst = int(np.argmax(hit))
        return Verdict(Label.STABLE, "ode",
                       certificate={"sup_hitting_time": float(hit[worst]),
                                    "argmax_direction": mesh[worst].tolist()},
                       metadata=meta)
    if tally[Termination.EXITED_ORTHANT.value] == 0:
        norms = np.empty((len(trajs), len(times)))
        for r, tr in enumerate(trajs):
            row = np.linalg.norm(tr.state_at(times), axis=1)
            past = times > tr.time
            if tr.termination is Termination.EXCEEDED_RADIUS:
                row[past] = s.r_max
            elif tr.termination is Termination.HIT_INNER_BALL:
                row[times >= tr.time] = -np.inf
            norms[r] = row
        worst = norms.min(axis=0)
        ok = np.flatnonzero(worst >= UNSTABLE_MARGIN)
        if len(ok):
            j = int(ok[0])
            return Verdict(Label.UNSTABLE, "ode",
                           certificate={"T": float(times[j]), "a": float(worst[j])},
                           metadata=meta)
    return Verdict(Label.INCONCLUSIVE, "ode", certificate={}, metadata=meta)


@dataclass
class ScalingReport:
    deviation: float
    passed: bool
    per_k: dict


def scaling_check(model: DriftModel, settings: FlowSettings | None = None, ks=(2, 10),
                  n: int = 20, seed: int = 99, times=(0.05, 0.1, 0.2)) -> ScalingReport:
    """Compare ``u^{Kx}(K t)`` with ``K u^x(t)`` on random sphere points.

    Relative deviation; passes iff it is at most ``1e-6 * K`` for each K.
    """
    s = settings or FlowSettings()
    rng = np.random.default_rng(seed)
    pts = sphere_samples(model.dimension, n, rng)
    per_k = {}
    for K in ks:
        worst = 0.0
        for x in pts:
            base = integrate(model, x, s, t_eval=times)
            scaled = integrate(model, K * x, s, t_eval=[K * t for t in times])
            m = min(len(base.u_eval), len(scaled.u_eval))
            for j in range(m):
                ref = K * base.u_eval[j]
                dev = float(np.linalg.norm(scaled.u_eval[j] - ref)) / max(float(np.linalg.norm(ref)), 1e-300)
                worst = max(worst, dev)
        per_k[K] = worst
    passed = all(per_k[K] <= 1e-6 * K for K in ks)
    return ScalingReport(max(per_k.values()), passed, per_k)


def trajectory_csv(traj: Trajectory) -> str:
    """Rows ``t, u_1..u_d, |u|`` with CRLF line endings."""
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    d = traj.u.shape[1]
    w.writerow(["t", *[f"u{i + 1}" for i in range(d)], "norm"])
    for t, u in zip(traj.t, traj.u):
        w.writerow([repr(float(t)), *[repr(float(v)) for v in u], repr(float(np.linalg.norm(u)))])
    return buf.getvalue()


__all__ = [
    "FlowSettings", "Termination", "Trajectory", "HittingTime", "integrate", "hitting_time",
    "classify_smooth", "scaling_check", "sphere_mesh", "icosphere", "trajectory_csv",
]
