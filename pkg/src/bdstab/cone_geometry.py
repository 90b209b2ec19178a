"""Cone separation, cone membership and sliding-mode coefficients.

The separating-vector problem is a tiny dense LP solved by the simplex
method in this module (two phases, Bland's rule, so results are
reproducible bit for bit).  Cone membership goes through a non-negative
least-squares solve instead, which gives an independent route for checking
Farkas duality: for every ``(D, x)`` exactly one of "separator exists" and
"x in cone(D)" should hold.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear, nnls

from .drift_model import SupportPatternDrift, pattern_label
from .errors import DimensionError, DomainError

STRICT_MARGIN = 1e-9
_PIVOT_EPS = 1e-12


# -- simplex ---------------------------------------------------------------


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None = None
    objective: float | None = None
    iterations: int = 0


def _pivot(T, basis, row, col):
    T[row] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r] -= T[r, col] * T[row]
    basis[row] = col


def _run_simplex(T, basis, n_allowed, max_iter):
    """Maximize the objective held in the last row (stored as ``-c``).

    Columns ``>= n_allowed`` never enter.  Bland's rule: lowest-index entering
    column with negative reduced cost, ties in the ratio test go to the
    lowest basic variable index.
    """
    m = T.shape[0] - 1
    for it in range(max_iter):
        obj = T[-1, :n_allowed]
        cands = np.nonzero(obj < -_PIVOT_EPS)[0]
        if len(cands) == 0:
            return "optimal", it
        col = int(cands[0])
        column = T[:m, col]
        best_row, best_ratio = -1, math.inf
        for r in range(m):
            if column[r] > _PIVOT_EPS:
                ratio = T[r, -1] / column[r]
                if ratio < best_ratio - 1e-14 or (
                    abs(ratio - best_ratio) <= 1e-14 and basis[r] < basis[best_row]
                ):
                    best_row, best_ratio = r, ratio
        if best_row < 0:
            return "unbounded", it
        _pivot(T, basis, best_row, col)
    raise RuntimeError("simplex iteration limit reached")  # pragma: no cover


def linprog(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, max_iter=10_000) -> LPResult:
    """Maximize ``c @ z`` subject to ``A_ub z <= b_ub``, ``A_eq z = b_eq``, ``z >= 0``.

    Dense two-phase tableau simplex meant for problems with a few dozen rows.
    """
    c = np.asarray(c, dtype=float)
    n = len(c)
    A_ub = np.zeros((0, n)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    m_ub, m_eq = len(b_ub), len(b_eq)
    m = m_ub + m_eq

    # columns: original | slacks (one per ub row) | artificials
    rows = np.zeros((m, n + m_ub))
    rhs = np.concatenate([b_ub, b_eq])
    rows[:m_ub, :n] = A_ub
    rows[:m_ub, n:] = np.eye(m_ub)
    rows[m_ub:, :n] = A_eq
    needs_art = []
    for r in range(m):
        if rhs[r] < 0:
            rows[r] *= -1
            rhs[r] *= -1
        if r >= m_ub or rows[r, n + r] != 1.0:
            needs_art.append(r)
    n_art = len(needs_art)
    n_tot = n + m_ub + n_art
    T = np.zeros((m + 1, n_tot + 1))
    T[:m, : n + m_ub] = rows
    T[:m, -1] = rhs
    basis = [0] * m
    for r in range(m_ub):
        if r not in needs_art:
            basis[r] = n + r
    for j, r in enumerate(needs_art):
        T[r, n + m_ub + j] = 1.0
        basis[r] = n + m_ub + j

    iters = 0
    if n_art:
        # phase 1: maximize -(sum of artificials)
        T[-1, n + m_ub:n_tot] = 1.0
        for r in needs_art:
            T[-1] -= T[r]
        status, it = _run_simplex(T, basis, n_tot, max_iter)
        iters += it
        if T[-1, -1] < -1e-9 * max(1.0, float(np.max(np.abs(rhs), initial=0.0))):
            return LPResult("infeasible", iterations=iters)
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = []
        for r in range(m):
            if basis[r] >= n + m_ub:
                nz = np.nonzero(np.abs(T[r, : n + m_ub]) > 1e-9)[0]
                if len(nz) == 0:
                    continue
                _pivot(T, basis, r, int(nz[0]))
            keep.append(r)
        T = np.vstack([T[keep], T[-1:]])
        basis = [basis[r] for r in keep]
        T = np.delete(T, np.s_[n + m_ub:n_tot], axis=1)
        m = len(keep)

    T[-1] = 0.0
    T[-1, :n] = -c
    for r in range(m):
        if T[-1, basis[r]] != 0.0:
            T[-1] -= T[-1, basis[r]] * T[r]
    status, it = _run_simplex(T, basis, n + m_ub, max_iter)
    iters += it
    if status == "unbounded":
        return LPResult("unbounded", iterations=iters)
    z = np.zeros(n + m_ub)
    for r in range(m):
        z[basis[r]] = T[r, -1]
    return LPResult("optimal", z[:n], float(c @ z[:n]), iters)


# -- separation and membership --------------------------------------------


@dataclass
class Separator:
    """Witness ``eta`` with ``<eta, v> <= -margin`` for all v in D and ``<eta, x> >= margin``.

    Vectors are normalized to unit length before solving and ``eta`` is
    scaled to unit sup-norm, so ``margin`` is scale free.
    """

    eta: np.ndarray
    margin: float


def _unit_rows(vectors, what):
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    norms = np.linalg.norm(V, axis=1)
    if np.any(norms == 0) or not np.all(np.isfinite(V)):
        raise DomainError(f"{what} contains a zero or non-finite vector")
    return V / norms[:, None]


def separation_margin(D, x) -> tuple[float, np.ndarray]:
    """Optimal ``(s, eta)`` of: max s s.t. <eta,v> + s <= 0 (v in D u {-x}), |eta|_inf <= 1."""
    D = _unit_rows(D, "drift set")
    x = _unit_rows([x], "direction")[0]
    d = D.shape[1]
    if x.shape[0] != d:
        raise DimensionError("direction and drift vectors differ in dimension")
    V = np.vstack([D, -x])
    # variables: eta+ (d), eta- (d), s
    A = np.zeros((len(V) + 2 * d, 2 * d + 1))
    A[: len(V), :d] = V
    A[: len(V), d:2 * d] = -V
    A[: len(V), -1] = 1.0
    for i in range(d):
        A[len(V) + i, i], A[len(V) + i, d + i] = 1.0, -1.0
        A[len(V) + d + i, i], A[len(V) + d + i, d + i] = -1.0, 1.0
    b = np.zeros(len(A))
    b[len(V):] = 1.0
    c = np.zeros(2 * d + 1)
    c[-1] = 1.0
    res = linprog(c, A, b)
    if res.status != "optimal":  # pragma: no cover - origin is always feasible, s is bounded
        raise RuntimeError(f"separator LP ended with status {res.status}")
    z = res.x
    return float(z[-1]), z[:d] - z[d:2 * d]


def farkas_separator(D, x, a_min: float = STRICT_MARGIN) -> Separator | None:
    """Separating vector for ``D`` and ``-x``, or ``None`` when none has margin > ``a_min``."""
    s, eta = separation_margin(D, x)
    if s <= a_min:
        return None
    scale = float(np.max(np.abs(eta)))
    return Separator(eta / scale, s / scale)


@dataclass
class ConeMembership:
    inside: bool
    coefficients: np.ndarray
    residual: float


def in_cone(D, x) -> ConeMembership:
    """Is ``x`` a non-negative combination of the rows of ``D``?"""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    x = np.asarray(x, dtype=float)
    tol = 1e-9 * float(np.linalg.norm(x))
    coef, _ = nnls(D.T, x)
    # recompute: some scipy releases report a zero residual for a wrong solution
    residual = float(np.linalg.norm(D.T @ coef - x))
    if residual > tol:
        alt = lsq_linear(D.T, x, bounds=(0.0, np.inf), method="bvls", tol=1e-14)
        alt_res = float(np.linalg.norm(D.T @ alt.x - x))
        if alt_res < residual:
            coef, residual = alt.x, alt_res
    inside = residual <= tol and bool(np.all(coef >= -1e-12))
    return ConeMembership(bool(inside), coef, float(residual))


# -- sliding modes ---------------------------------------------------------


@dataclass
class SlidingSolution:
    """``alpha * da + (1 - alpha) * db = A * v``; ``A`` is the signed speed along v."""

    alpha: float
    A: float
    degenerate: bool = False
    residual: float = 0.0


def _cross(u, w):
    return u[0] * w[1] - u[1] * w[0]


def solve_sliding(da, db, v) -> SlidingSolution | None:
    """Convex combination of two planar drifts that is collinear with ray ``v``.

    Returns ``None`` if no ``alpha`` in [0, 1] exists.  When both drifts are
    collinear with ``v`` every alpha works; identical drifts are reported
    with ``alpha = 0.5`` and otherwise the endpoint with the larger speed.
    """
    da = np.asarray(da, dtype=float)
    db = np.asarray(db, dtype=float)
    v = np.asarray(v, dtype=float)
    if da.shape != (2,) or db.shape != (2,) or v.shape != (2,):
        raise DimensionError("solve_sliding works in dimension 2")
    v = v / np.linalg.norm(v)
    pa, pb = _cross(v, da), _cross(v, db)
    scale = max(1.0, float(np.linalg.norm(da)), float(np.linalg.norm(db)))
    if abs(pa - pb) <= 1e-14 * scale:
        if abs(pa) > 1e-14 * scale:
            return None
        ta, tb = float(da @ v), float(db @ v)
        if np.array_equal(da, db):
            alpha = 0.5
        else:
            alpha = 1.0 if ta >= tb else 0.0
        A = alpha * ta + (1 - alpha) * tb
        return SlidingSolution(alpha, A, degenerate=True,
                               residual=float(np.linalg.norm(alpha * da + (1 - alpha) * db - A * v)))
    alpha = pb / (pb - pa)
    if alpha < -1e-12 or alpha > 1 + 1e-12:
        return None
    alpha = min(1.0, max(0.0, alpha))
    A = alpha * float(da @ v) + (1 - alpha) * float(db @ v)
    resid = float(np.linalg.norm(alpha * da + (1 - alpha) * db - A * v))
    return SlidingSolution(float(alpha), float(A), residual=resid)


# -- assumption (A1) on support-pattern models ----------------------------


@dataclass
class A1Result:
    holds: bool
    face: frozenset
    witnesses: list = field(default_factory=list)  # (direction, eta, margin)
    failing_direction: np.ndarray | None = None
    critical_direction: np.ndarray | None = None
    reason: str = ""

    def to_dict(self):
        return {
            "face": pattern_label(self.face),
            "holds": self.holds,
            "n_directions": len(self.witnesses),
            "witnesses": [
                {"direction": np.asarray(x).tolist(), "eta": eta.tolist(), "margin": m}
                for x, eta, m in self.witnesses[:5]
            ],
            "failing_direction": None if self.failing_direction is None else self.failing_direction.tolist(),
            "reason": self.reason,
        }


def neighbourhood_drifts(model: SupportPatternDrift, face) -> list[np.ndarray]:
    """Drifts seen near a point of the open face: all patterns containing it."""
    face = frozenset(face)
    rest = [i for i in range(model.dimension) if i not in face]
    out = []
    for r in range(len(rest) + 1):
        for extra in itertools.combinations(rest, r):
            out.append(model.pattern_drift(face | set(extra)))
    return out


def face_directions(dimension: int, face, resolution: int | float | None = None) -> np.ndarray:
    """Unit directions in the relative interior of an orthant face.

    One direction for an axis; ``resolution`` interior angles (default 181)
    on a 2-coordinate face; a barycentric grid with ``resolution`` degrees
    spacing (default 1) on higher faces.
    """
    face = sorted(face)
    k = len(face)
    if k == 1:
        x = np.zeros(dimension)
        x[face[0]] = 1.0
        return x[None, :]
    if k == 2:
        n = int(resolution or 181)
        th = np.linspace(0.0, math.pi / 2, n + 2)[1:-1]
        X = np.zeros((n, dimension))
        X[:, face[0]] = np.cos(th)
        X[:, face[1]] = np.sin(th)
        return X
    spacing = float(resolution or 1.0)
    steps = max(k, int(round(90.0 / spacing)))
    pts = []
    for comp in itertools.product(range(1, steps), repeat=k - 1):
        last = steps - sum(comp)
        if last >= 1:
            pts.append(list(comp) + [last])
    B = np.asarray(pts, dtype=float)
    B /= np.linalg.norm(B, axis=1, keepdims=True)
    X = np.zeros((len(B), dimension))
    X[:, face] = B
    return X


def cone_meets_face(D, dimension: int, face) -> np.ndarray | None:
    """A unit point of cone(D) in the relative interior of ``face``, if any (LP)."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    face = set(face)
    ub = [-D[:, i] for i in range(dimension) if i in face]
    eq = [D[:, i] for i in range(dimension) if i not in face]
    res = linprog(
        np.zeros(len(D)),
        np.array(ub) if ub else None,
        -np.ones(len(ub)) if ub else None,
        np.array(eq) if eq else None,
        np.zeros(len(eq)) if eq else None,
    )
    if res.status != "optimal":
        return None
    x = D.T @ res.x
    for i in range(dimension):
        if i not in face:
            x[i] = 0.0
    return x / np.linalg.norm(x)


def a1_holds(model: SupportPatternDrift, face, directions=None, resolution=None,
             a_min: float = STRICT_MARGIN) -> A1Result:
    """Check the separation hypothesis on one open face of the orthant.

    Within a face the neighbouring drifts do not depend on the direction, so
    only the ``<eta, -x>`` constraint varies.  Besides the sampled
    ``directions`` the check always includes a direction of cone(D) inside
    the face when one exists (found by LP), so a failure cannot slip between
    mesh points.
    """
    if not isinstance(model, SupportPatternDrift):
        raise DomainError("a1_holds needs a support-pattern model")
    face = frozenset(face)
    D = neighbourhood_drifts(model, face)
    if any(not np.any(d) for d in D):
        return A1Result(False, face, reason="a neighbouring drift is zero")
    crit = cone_meets_face(D, model.dimension, face)
    if directions is None:
        directions = face_directions(model.dimension, face, resolution)
    dirs = list(np.atleast_2d(directions))
    if crit is not None:
        dirs.insert(0, crit)
    result = A1Result(True, face, critical_direction=crit)
    for x in dirs:
        sep = farkas_separator(D, x, a_min)
        if sep is None:
            result.holds = False
            result.failing_direction = np.asarray(x)
            result.reason = "direction lies in the cone of neighbouring drifts"
            return result
        result.witnesses.append((np.asarray(x), sep.eta, sep.margin))
    return result


def all_faces(dimension: int) -> list[frozenset]:
    return [frozenset(s) for r in range(1, dimension + 1)
            for s in itertools.combinations(range(dimension), r)]


def check_a1(model: SupportPatternDrift, resolution=None, a_min: float = STRICT_MARGIN):
    """Run :func:`a1_holds` on every face; returns a :class:`~bdstab.verdict.Verdict`.

    (A1) is only sufficient, so a failure yields ``inconclusive``.
    """
    from .verdict import Label, Verdict

    results = [a1_holds(model, f, resolution=resolution, a_min=a_min) for f in all_faces(model.dimension)]
    ok = all(r.holds for r in results)
    return Verdict(
        Label.STABLE if ok else Label.INCONCLUSIVE,
        "a1",
        certificate={"faces": [r.to_dict() for r in results]},
        metadata={"sampled_hypothesis": True, "resolution": resolution, "margin": a_min},
    )
