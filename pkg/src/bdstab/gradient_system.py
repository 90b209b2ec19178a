"""Drifts that are gradients of a potential.

When ``delta = -grad V`` with ``V`` 1-homogeneous, Euler's identity gives
``V(x) = -<x, delta(x)>``, so the potential is available in closed form and
stability reduces to ``V > 0`` on the sphere (plus a non-vanishing drift).

Whether ``delta`` is a gradient is tested numerically: the Jacobian of a
gradient field is symmetric.  Samples where the field is not smooth at the
finite-difference scale (switching surfaces of piecewise fields) are
skipped; if too many are skipped the test is undetermined.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np

from .drift_model import DriftModel, sphere_samples
from .errors import ContractError
from .verdict import Label, Verdict

FD_STEP = 1e-5
MAX_SKIPPED = 0.05

_reports: "weakref.WeakKeyDictionary[DriftModel, ConservativeReport]" = weakref.WeakKeyDictionary()


@dataclass
class ConservativeReport:
    status: str  # "conservative" | "non_conservative" | "undetermined"
    max_asymmetry: float
    samples: int
    skipped: int
    witness: list | None = None  # sample with the largest asymmetry

    @property
    def conservative(self) -> bool:
        return self.status == "conservative"

    def to_dict(self):
        return {"status": self.status, "max_asymmetry": self.max_asymmetry,
                "samples": self.samples, "skipped": self.skipped, "witness": self.witness}


def jacobian(model: DriftModel, x, step: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian ``J[i, j] = d delta_i / d x_j``; step relative to |x|."""
    x = np.asarray(x, dtype=float)
    h = step * float(np.linalg.norm(x))
    d = len(x)
    J = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        J[:, j] = (model.drift(x + e) - model.drift(x - e)) / (2 * h)
    return J


def _interior_samples(dimension, n, seed, margin):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        for p in sphere_samples(dimension, n, rng):
            if p.min() >= margin:
                out.append(p)
    return np.array(out[:n])


def is_conservative(model: DriftModel, tol: float = 1e-6, samples: int = 200,
                    seed: int = 2718) -> ConservativeReport:
    """Symmetry test of the finite-difference Jacobian on random sphere points."""
    pts = _interior_samples(model.dimension, samples, seed, margin=1e-3)
    worst, witness, skipped = 0.0, None, 0
    for x in pts:
        J = jacobian(model, x)
        J_half = jacobian(model, x, FD_STEP / 2)
        scale = 1.0 + float(np.max(np.abs(J)))
        if float(np.max(np.abs(J - J_half))) > 1e-3 * scale:
            skipped += 1
            continue
        asym = float(np.max(np.abs(J - J.T)))
        if asym > worst:
            worst, witness = asym, x.tolist()
    if skipped > MAX_SKIPPED * samples:
        status = "undetermined"
    elif worst <= tol:
        status = "conservative"
    else:
        status = "non_conservative"
    report = ConservativeReport(status, worst, samples, skipped, witness)
    _reports[model] = report
    return report


def potential(model: DriftModel, x, check: bool = True) -> float:
    """``V(x) = -<x, delta(x)>``; refuses fields that fail the gradient test."""
    if check:
        report = _reports.get(model) or is_conservative(model)
        if not report.conservative:
            raise ContractError(
                f"drift is not a gradient field ({report.status}, "
                f"asymmetry {report.max_asymmetry:.3g})"
            )
    x = np.asarray(x, dtype=float)
    return -float(np.dot(x, model.drift(x)))


@dataclass
class PotentialReport:
    conservative: ConservativeReport
    min_potential: float
    min_drift_norm: float
    argmin: list = field(default_factory=list)

    def to_dict(self):
        return {"conservative": self.conservative.to_dict(), "min_potential": self.min_potential,
                "min_drift_norm": self.min_drift_norm, "argmin": self.argmin}


def potential_report(model: DriftModel, samples: int = 2000, seed: int = 31,
                     tol: float = 1e-6) -> PotentialReport:
    cons = is_conservative(model, tol=tol)
    rng = np.random.default_rng(seed)
    pts = np.vstack([np.eye(model.dimension), sphere_samples(model.dimension, samples, rng)])
    V = np.array([-float(np.dot(p, model.drift(p))) for p in pts])
    speed = min(float(np.linalg.norm(model.drift(p))) for p in pts)
    i = int(np.argmin(V))
    return PotentialReport(cons, float(V[i]), speed, pts[i].tolist())


def check_gradient_criterion(model: DriftModel, samples: int = 2000, tol: float = 1e-6) -> Verdict:
    """Stable iff the drift is a gradient, ``V > 0`` and ``|delta| > 0`` on the sphere."""
    rep = potential_report(model, samples=samples, tol=tol)
    cert = rep.to_dict()
    # minima are over the sampled mesh, not the continuum
    meta = {"mesh": samples + model.dimension}
    if not rep.conservative.conservative:
        return Verdict(Label.INCONCLUSIVE, "gradient", cert,
                       {**meta, "reason": f"gradient test {rep.conservative.status}"})
    if rep.min_potential > 0 and rep.min_drift_norm > 0:
        return Verdict(Label.STABLE, "gradient", cert, meta)
    return Verdict(Label.INCONCLUSIVE, "gradient", cert,
                   {**meta, "reason": "potential not positive on the sphere"})


__all__ = ["ConservativeReport", "PotentialReport", "jacobian", "is_conservative", "potential",
           "potential_report", "check_gradient_criterion"]
