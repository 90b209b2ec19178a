"""Planar piecewise-constant drifts: U-set classification and stability regions.

For a :class:`~bdstab.drift_model.ConePartition2D` with rays ``v_1..v_N``
and cone drifts ``delta^1..delta^{N-1}`` (1-based, as in the theory):

* ``U^1_k``: the drift of cone k points into cone k,
  ``delta^k = A v_k + B v_{k+1}`` with ``A, B >= 0, A + B > 0``;
* ``U^2_k``: a convex combination of the drifts on both sides of ray
  ``v_k`` slides outward along it,
  ``alpha delta^k + (1 - alpha) delta^{k-1} = A v_k`` with ``A >= 0``.

The process is positive recurrent when the drift configuration lies in
*none* of these sets (the bar over the sets in the stability theorem is read
as set complement, which is what its proof uses) and not positive recurrent
when it lies robustly inside one of them.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cone_geometry import solve_sliding
from .drift_model import ConePartition2D, Scenario, SupportPatternDrift, cones_from_support
from .errors import Unsupported
from .verdict import Label, Verdict

DEFAULT_TOL = 1e-9


@dataclass
class USetWitness:
    kind: str  # "U1" | "U2"
    k: int  # 1-based cone (U1) or ray (U2) index
    coefficients: tuple[float, float]  # (A, B) for U1, (alpha, A) for U2
    margin: float  # A + B for U1, A for U2

    def strict(self, tol: float) -> bool:
        return self.margin > tol

    def to_dict(self):
        names = ("A", "B") if self.kind == "U1" else ("alpha", "A")
        return {"kind": self.kind, "k": self.k, **dict(zip(names, self.coefficients)),
                "margin": self.margin}


def _u1_coefficients(part: ConePartition2D, k: int, tol: float):
    d = part.drifts[k - 1]
    va, vb = part.rays[k - 1], part.rays[k]
    if part.is_degenerate(k - 1):
        cross = va[0] * d[1] - va[1] * d[0]
        if abs(cross) > tol:
            return None
        return float(d @ va), 0.0
    M = np.column_stack([va, vb])
    A, B = np.linalg.solve(M, d)
    return float(A), float(B)


def membership_u1(part: ConePartition2D, k: int, tol: float = DEFAULT_TOL,
                  loose: bool = False) -> USetWitness | None:
    """Witness that cone ``k``'s drift points into its own cone, else ``None``.

    Member iff both coefficients are ``>= -tol`` and their sum ``> tol``;
    with ``loose=True`` the sum only has to be ``>= -tol`` (used to detect
    the boundary tube).
    """
    if not 1 <= k <= part.n_cones:
        raise IndexError(f"cone index {k} outside 1..{part.n_cones}")
    coef = _u1_coefficients(part, k, tol)
    if coef is None:
        return None
    A, B = coef
    need = -tol if loose else tol
    if A >= -tol and B >= -tol and A + B > need:
        return USetWitness("U1", k, (A, B), A + B)
    return None


def membership_u2(part: ConePartition2D, k: int, tol: float = DEFAULT_TOL) -> USetWitness | None:
    """Witness of outward sliding along ray ``k`` (between cones k-1 and k).

    Member iff a sliding solution with ``alpha`` in [0, 1] and ``A >= -tol``
    exists.  Ray ``N`` has no cone after it and is never a member.
    """
    n = len(part.rays)
    if not 2 <= k <= n:
        raise IndexError(f"ray index {k} outside 2..{n}")
    if k == n:
        return None
    sol = solve_sliding(part.drifts[k - 1], part.drifts[k - 2], part.rays[k - 1])
    if sol is None or sol.A < -tol:
        return None
    return USetWitness("U2", k, (sol.alpha, sol.A), sol.A)


def _witnesses(part, tol, loose):
    out = []
    for k in range(1, part.n_cones + 1):
        w = membership_u1(part, k, tol, loose=loose)
        if w is not None:
            out.append(w)
    for k in range(2, len(part.rays) + 1):
        w = membership_u2(part, k, tol)
        if w is not None:
            out.append(w)
    return out


def classify_2d(part: ConePartition2D, tol: float = DEFAULT_TOL) -> Verdict:
    """Stable / Unstable / Boundary verdict with the deciding witness attached."""
    members = _witnesses(part, tol, loose=True)
    strict = [w for w in members if w.strict(tol)]
    meta = {"interpretation": "complement", "tol": tol, "u2_range": "2..N"}
    if strict:
        best = max(strict, key=lambda w: w.margin)
        return Verdict(Label.UNSTABLE, "region2d",
                       certificate={"witness": best.to_dict(),
                                    "all_witnesses": [w.to_dict() for w in strict]},
                       metadata=meta)
    if members:
        return Verdict(Label.BOUNDARY, "region2d",
                       certificate={"witness": members[0].to_dict(),
                                    "all_witnesses": [w.to_dict() for w in members]},
                       metadata=meta)
    return Verdict(Label.STABLE, "region2d",
                   certificate={"drifts": part.drifts.tolist(), "witness": None}, metadata=meta)


# -- family handling -------------------------------------------------------


def as_partition(obj) -> ConePartition2D:
    if isinstance(obj, ConePartition2D):
        return obj
    if isinstance(obj, Scenario):
        obj = obj.model
    if isinstance(obj, SupportPatternDrift):
        return cones_from_support(obj)
    if isinstance(obj, ConePartition2D):
        return obj
    raise Unsupported(f"no planar cone partition for {type(obj).__name__}")


def partition_family(obj) -> Callable[[np.ndarray], ConePartition2D]:
    """Map ``lam -> ConePartition2D`` for a scenario, partition or callable."""
    if callable(obj) and not isinstance(obj, (Scenario, ConePartition2D, SupportPatternDrift)):
        return obj
    if isinstance(obj, Scenario) and not isinstance(obj.model, SupportPatternDrift):
        return lambda lam: as_partition(obj.with_lambda(lam))
    part = as_partition(obj)
    if part.lam is None:
        raise Unsupported("partition is not parameterized by arrivals")
    return part.with_lambda


# -- stability region polygon ---------------------------------------------


@dataclass
class RegionPolygon:
    """Counter-clockwise vertices of the stability region, starting at the origin."""

    vertices: np.ndarray
    psi_chain: np.ndarray
    rays: np.ndarray = field(default=None)

    def to_dict(self):
        return {"vertices": self.vertices.tolist(), "psi_chain": self.psi_chain.tolist(),
                "rays": None if self.rays is None else self.rays.tolist()}

    @property
    def edges(self):
        V = self.vertices
        return [(V[i], V[(i + 1) % len(V)]) for i in range(len(V))]

    def contains(self, p) -> bool:
        """Even-odd rule; points on the boundary may go either way."""
        x, y = p
        inside = False
        for (x1, y1), (x2, y2) in self.edges:
            if (y1 > y) != (y2 > y):
                xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
                if x < xc:
                    inside = not inside
        return inside

    def boundary_distance(self, p) -> float:
        p = np.asarray(p, dtype=float)
        best = np.inf
        for a, b in self.edges:
            ab = b - a
            t = 0.0 if not ab.any() else float(np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0))
            best = min(best, float(np.linalg.norm(p - a - t * ab)))
        return best

    def is_simple(self) -> bool:
        E = self.edges
        n = len(E)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_intersect(*E[i], *E[j]):
                    return False
        return True


def _orient(a, b, c):
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _segments_intersect(p1, p2, q1, q2):
    d1, d2 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    d3, d4 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def _dedupe(points, eps=1e-15):
    out = []
    for p in points:
        if not out or np.linalg.norm(np.asarray(p) - out[-1]) > eps:
            out.append(np.asarray(p, dtype=float))
    return out


def region_polygon(obj) -> RegionPolygon:
    """Stability region in the arrival plane from the chain of effective service vectors.

    The chain ``psi_1 .. psi_{N-1}`` is clipped where it enters the quadrant
    across the lambda1 axis and where it leaves across the lambda2 axis, and
    closed through the origin.
    """
    part = as_partition(obj)
    if part.lam is None:
        raise Unsupported("region construction needs drifts affine in the arrival vector")
    P = _dedupe(part.psi)
    if P[0][1] > 0:
        raise Unsupported("chain starts above the lambda1-axis; the region is not compact")
    if P[-1][0] > 0:
        raise Unsupported("chain ends right of the lambda2-axis; the region is not compact")

    # entry across the lambda1-axis
    first, p_start = 1, P[0]
    if P[0][1] < 0:
        for i in range(len(P) - 1):
            a, b = P[i], P[i + 1]
            if a[1] < 0 <= b[1]:
                p_start = a + (-a[1] / (b[1] - a[1])) * (b - a)
                first = i + 1
                break
        else:
            raise Unsupported("chain never reaches the lambda1-axis")
    # exit across the lambda2-axis
    last, p_end = len(P) - 2, P[-1]
    if P[-1][0] < 0:
        for j in range(len(P) - 1, 0, -1):
            a, b = P[j - 1], P[j]
            if a[0] >= 0 > b[0]:
                p_end = a + (a[0] / (a[0] - b[0])) * (b - a)
                last = j - 1
                break
        else:
            raise Unsupported("chain never reaches the lambda2-axis")
    if last < first - 1:
        raise Unsupported("chain crosses the axes in the wrong order")
    chain = _dedupe([p_start, *P[first:last + 1], p_end])
    for p in chain:
        if p[0] < -1e-12 or p[1] < -1e-12:
            raise Unsupported("chain leaves the quadrant between the axes")
    verts = _dedupe([np.zeros(2), *chain])
    verts = [np.where(np.abs(v) < 1e-15, 0.0, v) for v in verts]
    poly = RegionPolygon(np.array(verts), np.array(part.psi), part.rays)
    return poly


# -- sweeps ---------------------------------------------------------------


@dataclass
class SweepResult:
    lam1: np.ndarray
    lam2: np.ndarray
    labels: np.ndarray  # object array of Label, indexed [i2, i1]

    @property
    def step(self) -> float:
        steps = [np.diff(v).min() for v in (self.lam1, self.lam2) if len(v) > 1]
        return float(min(steps)) if steps else 0.0

    def cells(self):
        for i2, l2 in enumerate(self.lam2):
            for i1, l1 in enumerate(self.lam1):
                yield float(l1), float(l2), self.labels[i2, i1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["lambda1", "lambda2", "label"])
        for l1, l2, lab in self.cells():
            w.writerow([repr(l1), repr(l2), lab.value])
        return buf.getvalue()

    def to_dict(self):
        return {"lambda1": self.lam1.tolist(), "lambda2": self.lam2.tolist(),
                "labels": [[lab.value for lab in row] for row in self.labels]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def sweep_region(obj, lam1, lam2=None, tol: float = DEFAULT_TOL) -> SweepResult:
    """Classify every arrival vector on the grid ``lam1 x lam2``."""
    family = partition_family(obj)
    lam1 = np.asarray(lam1, dtype=float)
    lam2 = lam1 if lam2 is None else np.asarray(lam2, dtype=float)
    labels = np.empty((len(lam2), len(lam1)), dtype=object)
    for i2, l2 in enumerate(lam2):
        for i1, l1 in enumerate(lam1):
            labels[i2, i1] = classify_2d(family(np.array([l1, l2])), tol).label
    return SweepResult(lam1, lam2, labels)


def grid(lo: float, hi: float, n: int) -> np.ndarray:
    return np.linspace(lo, hi, n)


# -- SVG ------------------------------------------------------------------


def render_svg(poly: RegionPolygon, sweep: SweepResult | None = None, size: int = 480,
               extent: float | None = None) -> str:
    """Static drawing of the construction: axes, psi points, chain, cones, region."""
    pts = np.vstack([poly.vertices, poly.psi_chain])
    ext = extent or float(max(1.0, np.max(np.abs(pts)) * 1.25))
    pad = 40
    scale = (size - 2 * pad) / (ext * 1.2)
    ox, oy = pad + 0.2 * ext * scale, size - pad - 0.2 * ext * scale

    def tx(p):
        return ox + p[0] * scale, oy - p[1] * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">', '<rect width="100%" height="100%" fill="white"/>']
    if sweep is not None:
        colors = {Label.STABLE: "#cde8cd", Label.UNSTABLE: "#f3cccc", Label.BOUNDARY: "#dddddd"}
        r = max(1.0, sweep.step * scale / 2)
        for l1, l2, lab in sweep.cells():
            x, y = tx((l1, l2))
            out.append(f'<rect x="{x - r:.2f}" y="{y - r:.2f}" width="{2 * r:.2f}" '
                       f'height="{2 * r:.2f}" fill="{colors.get(lab, "#ffffff")}"/>')
    poly_pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in map(tx, poly.vertices))
    out.append(f'<polygon points="{poly_pts}" fill="#4a90d9" fill-opacity="0.35" '
               f'stroke="#1f4e79" stroke-width="1.5"/>')
    x0, y0 = tx((-0.2 * ext, 0))
    x1, _ = tx((ext, 0))
    out.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y0:.2f}" stroke="black"/>')
    xa, ya = tx((0, -0.2 * ext))
    _, yb = tx((0, ext))
    out.append(f'<line x1="{xa:.2f}" y1="{ya:.2f}" x2="{xa:.2f}" y2="{yb:.2f}" stroke="black"/>')
    chain = " ".join(f"{x:.2f},{y:.2f}" for x, y in map(tx, poly.psi_chain))
    out.append(f'<polyline points="{chain}" fill="none" stroke="#c0392b" stroke-dasharray="4 3"/>')
    if poly.rays is not None:
        reach = 0.25 * ext
        for k, p in enumerate(poly.psi_chain):
            for v in (poly.rays[k], poly.rays[k + 1]):
                a, b = tx(p), tx(p + reach * v)
                out.append(f'<line x1="{a[0]:.2f}" y1="{a[1]:.2f}" x2="{b[0]:.2f}" '
                           f'y2="{b[1]:.2f}" stroke="#e67e22" stroke-width="1"/>')
    for k, p in enumerate(poly.psi_chain, start=1):
        x, y = tx(p)
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3.5" fill="#c0392b"/>')
        out.append(f'<text x="{x + 5:.2f}" y="{y - 5:.2f}" font-size="11">psi{k}</text>')
    out.append(f'<text x="{x1 - 20:.2f}" y="{y0 + 16:.2f}" font-size="12">lambda1</text>')
    out.append(f'<text x="{xa + 6:.2f}" y="{yb + 4:.2f}" font-size="12">lambda2</text>')
    out.append("</svg>")
    return "\n".join(out)
