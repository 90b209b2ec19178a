"""Birth-and-death models with 0-homogeneous rates.

Three model families share one small interface (``dimension``,
``rates(x)``, ``drift(x)``):

* :class:`SupportPatternDrift` -- rates constant on each face of the orthant,
  indexed by the set of strictly positive coordinates;
* :class:`ConePartition2D` -- planar drifts constant on angular cones
  ``{A v_k + B v_{k+1}}``;
* :class:`SmoothDrift` -- rates given by arbitrary 0-homogeneous functions
  (builtin Shannon and polytope families, or parsed expressions).

Deaths of empty coordinates are masked to zero by every family, so the
drift on a boundary face is ``birth - masked death``.
"""
from __future__ import annotations

import copy
import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import DimensionError, DomainError, HomogeneityError

HOMOGENEITY_TOL = 1e-9


def _as_state(x, dimension: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (dimension,):
        raise DomainError(f"expected a state of dimension {dimension}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"non-finite state {x.tolist()}")
    if np.any(x < 0):
        raise DomainError(f"negative coordinate in {x.tolist()}")
    if not np.any(x > 0):
        raise DomainError("drift is undefined at the origin")
    return x


def pattern_mask(x) -> int:
    """Bitmask of strictly positive coordinates (bit i <-> coordinate i+1)."""
    m = 0
    for i, v in enumerate(x):
        if v > 0:
            m |= 1 << i
    return m


def mask_to_pattern(mask: int, dimension: int) -> frozenset:
    return frozenset(i for i in range(dimension) if mask >> i & 1)


def pattern_to_mask(pattern) -> int:
    return sum(1 << i for i in pattern)


def pattern_label(pattern) -> str:
    """1-based comma label, e.g. ``frozenset({0, 2}) -> "1,3"``."""
    return ",".join(str(i + 1) for i in sorted(pattern))


class DriftModel:
    """Common interface; subclasses set ``dimension`` and ``family``."""

    dimension: int
    family: str
    masked: bool = True

    def rates(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Birth and (masked) death vectors at state ``x``."""
        raise NotImplementedError

    def drift(self, x) -> np.ndarray:
        b, d = self.rates(x)
        return b - d

    def _mask(self, x, death):
        if self.masked:
            death = np.where(np.asarray(x) > 0, death, 0.0)
        return death


# -- support-pattern family -------------------------------------------------


class SupportPatternDrift(DriftModel):
    """Rates constant on each face of the orthant.

    ``table`` maps every non-empty support pattern (a frozenset of 0-based
    coordinate indices) to a pair ``(birth, death)`` of rate vectors.  Death
    entries for coordinates outside the pattern are nominal values; they are
    masked to zero unless ``masked=False``.
    """

    family = "support_pattern"

    def __init__(self, dimension: int, table: Mapping[frozenset, tuple], masked: bool = True):
        if dimension < 2:
            raise DimensionError("dimension must be >= 2")
        self.dimension = dimension
        self.masked = masked
        expected = {
            frozenset(s)
            for r in range(1, dimension + 1)
            for s in itertools.combinations(range(dimension), r)
        }
        keys = {frozenset(k) for k in table}
        if keys != expected:
            missing = sorted(pattern_label(s) for s in expected - keys)
            extra = sorted(str(sorted(s)) for s in keys - expected)
            raise DomainError(f"support table must cover 2^d-1 patterns; missing {missing}, extra {extra}")
        self._births = np.zeros((1 << dimension, dimension))
        self._deaths = np.zeros((1 << dimension, dimension))
        any_birth = False
        for pat, (b, d) in table.items():
            b = np.asarray(b, dtype=float)
            d = np.asarray(d, dtype=float)
            if b.shape != (dimension,) or d.shape != (dimension,):
                raise DomainError(f"rate vectors for pattern {pattern_label(pat)} must have length {dimension}")
            if not (np.all(np.isfinite(b)) and np.all(np.isfinite(d))):
                raise DomainError(f"non-finite rate for pattern {pattern_label(pat)}")
            if np.any(b < 0) or np.any(d < 0):
                raise DomainError(f"negative rate for pattern {pattern_label(pat)}")
            any_birth = any_birth or bool(np.any(b > 0))
            m = pattern_to_mask(pat)
            self._births[m] = b
            self._deaths[m] = d
        if not any_birth:
            raise DomainError("at least one birth rate must be positive")

    @property
    def patterns(self) -> list[frozenset]:
        return [mask_to_pattern(m, self.dimension) for m in range(1, 1 << self.dimension)]

    def birth(self, pattern) -> np.ndarray:
        return self._births[pattern_to_mask(pattern)].copy()

    def death(self, pattern, masked: bool | None = None) -> np.ndarray:
        m = pattern_to_mask(pattern)
        d = self._deaths[m].copy()
        if self.masked if masked is None else masked:
            for i in range(self.dimension):
                if not m >> i & 1:
                    d[i] = 0.0
        return d

    def pattern_drift(self, pattern) -> np.ndarray:
        """The constant drift on the open face with support ``pattern``."""
        return self.birth(pattern) - self.death(pattern)

    def rates(self, x):
        x = _as_state(x, self.dimension)
        pat = mask_to_pattern(pattern_mask(x), self.dimension)
        return self.birth(pat), self.death(pat)

    def with_births(self, lam) -> "SupportPatternDrift":
        """Copy with every pattern's birth vector replaced by ``lam``."""
        lam = np.asarray(lam, dtype=float)
        table = {p: (lam, self._deaths[pattern_to_mask(p)]) for p in self.patterns}
        return SupportPatternDrift(self.dimension, table, self.masked)

    def table(self) -> dict:
        return {p: (self.birth(p), self._deaths[pattern_to_mask(p)].copy()) for p in self.patterns}


# -- planar cone partitions -------------------------------------------------


class ConePartition2D(DriftModel):
    """Planar drift constant on the cones spanned by consecutive rays.

    ``rays`` run from ``e1`` to ``e2`` in angular order; equal consecutive
    rays give a degenerate (ray-shaped) cone.  Cone ``k`` (0-based here) has
    drift ``lam - psi[k]``.  When ``lam`` is omitted the drifts are taken as
    given (``psi = -drifts``).

    Points on a ray shared by two cones are assigned to a degenerate cone at
    that ray if one exists, otherwise to the cone that starts at the ray.
    """

    family = "cone_partition"
    dimension = 2

    def __init__(self, rays, psi=None, lam=None, drifts=None, masked: bool = True):
        rays = np.asarray(rays, dtype=float)
        if rays.ndim != 2 or rays.shape[1] != 2 or len(rays) < 2:
            raise DimensionError("rays must be an (N, 2) array with N >= 2")
        norms = np.linalg.norm(rays, axis=1)
        if np.any(norms == 0) or np.any(rays < 0):
            raise DomainError("rays must be non-zero vectors in the closed quadrant")
        rays = rays / norms[:, None]
        if not (np.allclose(rays[0], [1, 0], atol=1e-12) and np.allclose(rays[-1], [0, 1], atol=1e-12)):
            raise DomainError("first ray must be e1 and last ray e2")
        rays[0] = (1.0, 0.0)
        rays[-1] = (0.0, 1.0)
        angles = np.arctan2(rays[:, 1], rays[:, 0])
        if np.any(np.diff(angles) < -1e-12):
            raise DomainError("rays must be ordered by non-decreasing angle")
        self.rays = rays
        self.angles = angles
        self.masked = masked
        n_cones = len(rays) - 1
        if psi is not None:
            psi = np.asarray(psi, dtype=float)
            if psi.shape != (n_cones, 2):
                raise DimensionError(f"psi must have shape ({n_cones}, 2)")
            self.lam = None if lam is None else np.asarray(lam, dtype=float)
            if self.lam is None:
                raise DomainError("psi requires lam")
            self.psi = psi
            self.drifts = self.lam[None, :] - psi
        elif drifts is not None:
            drifts = np.asarray(drifts, dtype=float)
            if drifts.shape != (n_cones, 2):
                raise DimensionError(f"drifts must have shape ({n_cones}, 2)")
            self.lam = None if lam is None else np.asarray(lam, dtype=float)
            self.drifts = drifts
            self.psi = (self.lam[None, :] if self.lam is not None else 0.0) - drifts
        else:
            raise DomainError("either psi (with lam) or drifts is required")
        if self.lam is not None and np.any(self.lam < 0):
            raise DomainError("arrival rates must be non-negative")

    @property
    def n_cones(self) -> int:
        return len(self.rays) - 1

    def is_degenerate(self, k: int) -> bool:
        return abs(self.angles[k + 1] - self.angles[k]) <= 1e-12

    def cone_index(self, x) -> int:
        """0-based index of the cone containing ``x``."""
        x = _as_state(x, 2)
        theta = math.atan2(x[1], x[0])
        a = self.angles
        eps = 1e-12
        on_ray = [j for j in range(len(a)) if abs(a[j] - theta) <= eps]
        if on_ray:
            for k in range(self.n_cones):
                if self.is_degenerate(k) and abs(a[k] - theta) <= eps:
                    return k
            j = on_ray[-1]
            return min(j, self.n_cones - 1)
        for k in range(self.n_cones):
            if a[k] < theta < a[k + 1]:
                return k
        raise DomainError(f"state {x.tolist()} not covered by the partition")  # pragma: no cover

    def cone_rates(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Non-negative (birth, death) pair realizing cone ``k``'s drift."""
        if self.lam is not None:
            psi = self.psi[k]
            return self.lam + np.maximum(-psi, 0.0), np.maximum(psi, 0.0)
        d = self.drifts[k]
        return np.maximum(d, 0.0), np.maximum(-d, 0.0)

    def rates(self, x):
        x = _as_state(x, 2)
        b, d = self.cone_rates(self.cone_index(x))
        return b, self._mask(x, d)

    def with_lambda(self, lam) -> "ConePartition2D":
        if self.lam is None:
            raise DomainError("partition is not parameterized by arrivals")
        return ConePartition2D(self.rays, psi=self.psi, lam=lam, masked=self.masked)


# -- smooth family ---------------------------------------------------------


def _as_rate(f, dimension):
    if isinstance(f, str):
        from .rate_dsl import parse

        return parse(f, dimension)
    if isinstance(f, (int, float)):
        v = float(f)
        return lambda x: v
    return f


class SmoothDrift(DriftModel):
    """Rates given by 0-homogeneous functions of the state.

    ``births`` and ``deaths`` are sequences of callables taking the state
    (a float sequence) and returning a rate; :class:`~bdstab.rate_dsl.RateExpr`
    instances, expression strings and constants also qualify.  Alternatively ``rates_fn`` returns both vectors at once.
    """

    family = "smooth"

    def __init__(self, dimension: int, births=None, deaths=None, rates_fn=None,
                 name: str = "smooth", masked: bool = True, meta: dict | None = None):
        if dimension < 2:
            raise DimensionError("dimension must be >= 2")
        self.dimension = dimension
        self.name = name
        self.masked = masked
        self.meta = meta or {}
        if rates_fn is None:
            if births is None or deaths is None or len(births) != dimension or len(deaths) != dimension:
                raise DimensionError("births and deaths need one rate function per coordinate")
            births = [_as_rate(f, dimension) for f in births]
            deaths = [_as_rate(g, dimension) for g in deaths]

            def rates_fn(x):
                xs = [float(v) for v in x]
                return (np.array([f(xs) for f in births]), np.array([g(xs) for g in deaths]))

        self.births = births
        self.deaths = deaths
        self._rates_fn = rates_fn

    def rates(self, x):
        x = _as_state(x, self.dimension)
        b, d = self._rates_fn(x)
        return np.asarray(b, dtype=float), self._mask(x, np.asarray(d, dtype=float))

    def raw_rates(self, x):
        """Rates without validation; used in tight integration loops."""
        b, d = self._rates_fn(x)
        return np.asarray(b, dtype=float), self._mask(x, np.asarray(d, dtype=float))

    def interior_rates(self, x):
        """Rate expressions without death masking (the field of the open orthant)."""
        b, d = self._rates_fn(x)
        return np.asarray(b, dtype=float), np.asarray(d, dtype=float)

    def negated(self) -> "SmoothDrift":
        """Model whose drift is the negative of this one (births and deaths swapped)."""
        fn = self._rates_fn
        return SmoothDrift(self.dimension, rates_fn=lambda x: tuple(reversed(fn(x))),
                           name=f"-{self.name}", masked=False, meta=self.meta)


def shannon_rates(lam, noise: float, log=math.log):
    lam = np.asarray(lam, dtype=float)

    def rates_fn(x):
        n = math.hypot(x[0], x[1])
        p1, p2 = x[0] / n, x[1] / n
        d = np.array([log(1.0 + p1 / (noise + p2)), log(1.0 + p2 / (noise + p1))])
        return lam, d

    return rates_fn


def polytope_rates(arrivals, capacities):
    """Arrival vertex minimizing <x, lambda>, service vertex maximizing <x, eta>.

    Ties go to the lowest vertex index (``np.argmax``/``np.argmin`` order).
    """
    A = np.asarray(arrivals, dtype=float)
    C = np.asarray(capacities, dtype=float)

    def pick(scores):
        # near-ties (rounding on a switching line) go to the lowest index
        return int(np.flatnonzero(scores >= scores.max() - 1e-12)[0])

    def rates_fn(x):
        u = np.asarray(x, dtype=float)
        u = u / np.linalg.norm(u)
        return A[pick(-(A @ u))], C[pick(C @ u)]

    return rates_fn


# -- checks ----------------------------------------------------------------


def sphere_samples(dimension: int, n: int, rng) -> np.ndarray:
    """``n`` random points on the unit sphere inside the closed orthant."""
    z = np.abs(rng.standard_normal((n, dimension)))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def check_homogeneity(model: DriftModel, samples: int = 200, scales=(0.5, 2.0, 10.0),
                      seed: int = 12345, tol: float = HOMOGENEITY_TOL, raise_error: bool = True):
    """Numerically verify ``delta(alpha x) == delta(x)``.

    Returns the worst relative deviation; raises :class:`HomogeneityError`
    with a witness ``(x, alpha, deviation)`` when it exceeds ``tol``.
    """
    rng = np.random.default_rng(seed)
    worst = (0.0, None, None)
    for x in sphere_samples(model.dimension, samples, rng):
        d0 = model.drift(x)
        for alpha in scales:
            dev = float(np.max(np.abs(model.drift(alpha * x) - d0))) / (1.0 + float(np.linalg.norm(d0)))
            if dev > worst[0]:
                worst = (dev, x, alpha)
    if raise_error and worst[0] > tol:
        dev, x, alpha = worst
        raise HomogeneityError(
            f"rates are not 0-homogeneous: |delta({alpha}x) - delta(x)| = {dev:.3g} at x={x.tolist()}",
            witness={"x": x.tolist(), "alpha": alpha, "deviation": dev},
        )
    return worst[0]


def drift_bound(model: DriftModel, samples: int = 500, seed: int = 7) -> float:
    """Largest |delta| over random sphere samples (plus axis points)."""
    rng = np.random.default_rng(seed)
    pts = list(sphere_samples(model.dimension, samples, rng)) + list(np.eye(model.dimension))
    return max(float(np.linalg.norm(model.drift(p))) for p in pts)


def drift_at(model: DriftModel, x) -> np.ndarray:
    """Drift ``birth - masked death`` at ``x``; raises DomainError at the origin."""
    return model.drift(x)


def cones_from_support(model: SupportPatternDrift) -> ConePartition2D:
    """Three-cone partition (axis e1, open quadrant, axis e2) of a planar table."""
    if not isinstance(model, SupportPatternDrift) or model.dimension != 2:
        raise DimensionError("cones_from_support needs a 2-dimensional support-pattern model")
    p1, p12, p2 = frozenset({0}), frozenset({0, 1}), frozenset({1})
    lam_set = {tuple(model.birth(p)) for p in (p1, p12, p2)}
    rays = [(1, 0), (1, 0), (0, 1), (0, 1)]
    if len(lam_set) == 1:
        lam = np.array(next(iter(lam_set)))
        psi = np.array([model.death(p1), model.death(p12), model.death(p2)])
        return ConePartition2D(rays, psi=psi, lam=lam, masked=model.masked)
    drifts = np.array([model.pattern_drift(p) for p in (p1, p12, p2)])
    return ConePartition2D(rays, drifts=drifts, masked=model.masked)


# -- scenarios -------------------------------------------------------------

BUILTINS = ("coupled2", "jsq2", "coupled3", "shannon2", "polytope2")

DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "coupled2": {"a": [0.6, 0.6], "lambda": [0.3, 0.3]},
    "jsq2": {"a": [0.5, 0.5], "lambda": [0.1, 0.1], "nu": 0.2},
    "coupled3": {
        "a": [1.5, 1.5, 1.5],
        "a_pair": [[0, 1.2, 1.2], [1.2, 0, 1.2], [1.2, 1.2, 0]],
        "lambda": [0.4, 0.4, 0.4],
    },
    "shannon2": {"lambda": [0.4, 0.8], "noise": 0.1, "log_base": "e"},
    "polytope2": {
        "arrivals": [[0.3, 0.4], [0.4, 0.3]],
        "capacities": [[0.0, 0.0], [1.0, 0.0], [0.9, 0.5], [0.5, 0.9], [0.0, 1.0]],
    },
}


@dataclass
class Scenario:
    """A named model instance plus analysis settings.

    ``document`` is the scenario-file form; :func:`bdstab.cli_report.scenario_document`
    reproduces it, which keeps load/save lossless.
    """

    name: str
    model: DriftModel
    family: str
    builtin: str | None = None
    params: dict[str, Any] = field(default_factory=dict)
    analysis: dict[str, Any] = field(default_factory=dict)
    sweep: dict[str, Any] | None = None
    document: dict[str, Any] | None = None

    @property
    def dimension(self) -> int:
        return self.model.dimension

    @property
    def lam(self):
        """Arrival vector if the scenario is parameterized by one."""
        if "lambda" in self.params:
            return np.asarray(self.params["lambda"], dtype=float)
        if isinstance(self.model, ConePartition2D) and self.model.lam is not None:
            return self.model.lam
        return None

    def with_lambda(self, lam) -> "Scenario":
        """Same scenario with the arrival vector replaced (used by sweeps)."""
        lam = [float(v) for v in lam]
        if self.builtin is not None and "lambda" in DEFAULT_PARAMS[self.builtin]:
            params = dict(self.params, **{"lambda": lam})
            sc = builtin_scenario(self.builtin, params)
            sc.name, sc.analysis, sc.sweep = self.name, self.analysis, self.sweep
            return sc
        new = copy.copy(self)
        new.params = dict(self.params, **{"lambda": lam})
        if isinstance(self.model, SupportPatternDrift):
            new.model = self.model.with_births(lam)
        elif isinstance(self.model, ConePartition2D):
            new.model = self.model.with_lambda(lam)
        else:
            from .errors import Unsupported

            raise Unsupported("smooth scenarios cannot be re-parameterized by arrivals")
        new.document = None
        return new


def _vec(params, key, n, positive=False, nonneg=True):
    v = params.get(key)
    if v is None:
        raise DomainError(f"missing parameter {key!r}")
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise DomainError(f"parameter {key!r} must have length {n}")
    if positive and np.any(v <= 0):
        raise DomainError(f"parameter {key!r} must be positive")
    if nonneg and np.any(v < 0):
        raise DomainError(f"parameter {key!r} must be non-negative")
    return v


def coupled2_model(a, lam) -> SupportPatternDrift:
    """Two coupled processors: full rate 1 when alone, ``a_i`` when both busy."""
    a1, a2 = a
    table = {
        frozenset({0}): (lam, (1.0, a2)),
        frozenset({1}): (lam, (a1, 1.0)),
        frozenset({0, 1}): (lam, (a1, a2)),
    }
    return SupportPatternDrift(2, table)


def coupled3_model(a, a_pair, lam, full: float = 1.0) -> SupportPatternDrift:
    """Three coupled processors; ``a_pair[i][j]`` is i's rate when only j also busy."""
    table = {}
    for r in (1, 2, 3):
        for pat in itertools.combinations(range(3), r):
            d = np.zeros(3)
            for i in range(3):
                others = [j for j in pat if j != i]
                if not others:
                    d[i] = a[i]
                elif len(others) == 1:
                    d[i] = a_pair[i][others[0]]
                else:
                    d[i] = full
            table[frozenset(pat)] = (lam, d)
    return SupportPatternDrift(3, table)


def jsq2_partition(a, lam, nu) -> ConePartition2D:
    """Dedicated arrivals plus flexible traffic ``nu`` joining the shorter queue.

    Ties go to processor 1; the diagonal ray therefore belongs to the cone
    above it.
    """
    a1, a2 = a
    rays = [(1, 0), (1, 0), (1, 1), (0, 1), (0, 1)]
    psi = [(1.0, -nu), (a1, a2 - nu), (a1 - nu, a2), (-nu, 1.0)]
    return ConePartition2D(rays, psi=psi, lam=lam)


def builtin_scenario(name: str, params: Mapping[str, Any] | None = None, **kwargs) -> Scenario:
    """Build one of the catalog scenarios.

    ``params`` override :data:`DEFAULT_PARAMS`; ``lam=`` is accepted as an
    alias for the ``"lambda"`` key.
    """
    if name not in BUILTINS:
        raise DomainError(f"unknown builtin scenario {name!r}; choose from {BUILTINS}")
    merged = copy.deepcopy(DEFAULT_PARAMS[name])
    merged.update(params or {})
    if "lam" in kwargs:
        kwargs["lambda"] = kwargs.pop("lam")
    merged.update(kwargs)
    p = merged
    if name == "coupled2":
        a = _vec(p, "a", 2, positive=True)
        lam = _vec(p, "lambda", 2)
        model = coupled2_model(a, lam)
    elif name == "jsq2":
        a = _vec(p, "a", 2, positive=True)
        lam = _vec(p, "lambda", 2)
        nu = float(p.get("nu", 0.0))
        if nu < 0:
            raise DomainError("parameter 'nu' must be non-negative")
        model = jsq2_partition(a, lam, nu)
    elif name == "coupled3":
        a = _vec(p, "a", 3, positive=True)
        lam = _vec(p, "lambda", 3)
        ap = np.asarray(p["a_pair"], dtype=float)
        if ap.shape != (3, 3):
            raise DomainError("parameter 'a_pair' must be a 3x3 matrix")
        off = ap[~np.eye(3, dtype=bool)]
        if np.any(off <= 0):
            raise DomainError("parameter 'a_pair' must be positive off the diagonal")
        full = float(p.get("full", 1.0))
        if full <= 0:
            raise DomainError("parameter 'full' must be positive")
        model = coupled3_model(a, ap, lam, full)
    elif name == "shannon2":
        lam = _vec(p, "lambda", 2)
        noise = float(p.get("noise", 0.1))
        if not noise > 0:
            raise DomainError("parameter 'noise' must be positive")
        base = p.get("log_base", "e")
        if base == "e":
            log = math.log
        else:
            b = float(base)
            if not (b > 0 and b != 1):
                raise DomainError("parameter 'log_base' must be 'e' or a positive number != 1")
            log = lambda v, _b=b: math.log(v, _b)  # noqa: E731
        model = SmoothDrift(2, rates_fn=shannon_rates(lam, noise, log), name="shannon2",
                            meta={"lambda": lam.tolist(), "noise": noise})
    else:
        A = np.asarray(p["arrivals"], dtype=float)
        C = np.asarray(p["capacities"], dtype=float)
        for key, V in (("arrivals", A), ("capacities", C)):
            if V.ndim != 2 or V.shape[1] != 2 or len(V) == 0:
                raise DomainError(f"parameter {key!r} must be a non-empty list of 2-vectors")
            if np.any(V < 0):
                raise DomainError(f"parameter {key!r} must have non-negative vertices")
        model = SmoothDrift(2, rates_fn=polytope_rates(A, C), name="polytope2",
                            meta={"arrivals": A.tolist(), "capacities": C.tolist()})
    return Scenario(name=name, model=model, family=model.family, builtin=name,
                    params=_plain(p))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
