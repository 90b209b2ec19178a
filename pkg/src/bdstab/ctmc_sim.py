"""Event-driven simulation of the lattice birth-death chain.

From state ``x`` coordinate ``i`` goes up at rate ``birth_i(x)`` and down at
rate ``death_i(x)`` (zero when ``x_i = 0``).  The holding time is
exponential with the total rate; the event is picked by scanning the
cumulative rates in the fixed order ``birth_1..birth_d, death_1..death_d``.

A return to the compact set ``C = {|x| <= r}`` is any jump that lands in
``C`` (the usual first-return times, taken successively); ``excursions``
counts the separate trips that leave ``C`` and come back.

The rates at the origin are undefined for 0-homogeneous models; the chain
uses the births seen along the diagonal direction ``(1, .., 1)`` there.

Randomness comes from numpy's SFC64 bit generator.  Replica streams are
spawned from the master seed with :class:`numpy.random.SeedSequence`, so a
(seed, replica index) pair fixes a run bit for bit.
"""
from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field

import numpy as np

from .drift_model import (ConePartition2D, DriftModel, SmoothDrift, SupportPatternDrift,
                          mask_to_pattern)
from .errors import DomainError
from .verdict import Label, Verdict

RNG_ALGORITHM = "numpy.SFC64"
_BLOCK = 1 << 15
_CACHE_LIMIT = 200_000


@dataclass
class SimConfig:
    seed: int = 20240917
    time: float | None = 1e5  # simulated-time horizon
    events: int | None = None  # event-count horizon (used when time is None)
    initial: tuple | None = None  # defaults to the origin
    radius: float | None = None  # compact set |x| <= radius; default 10 * d
    replicas: int = 1
    slope_lo: float = 0.02
    slope_hi: float = 0.1
    thin: int | None = None  # keep every n-th state for trajectory output

    def __post_init__(self):
        if self.time is None and self.events is None:
            raise DomainError("a time or event-count horizon is required")
        if self.time is not None and not self.time > 0:
            raise DomainError("time horizon must be positive")
        if self.events is not None and self.events <= 0:
            raise DomainError("event horizon must be positive")
        if self.replicas < 1:
            raise DomainError("replicas must be >= 1")


@dataclass
class SimSummary:
    end_state: list
    time: float
    events: int
    slopes: list  # X_T,i / T per coordinate
    norm_slope: float  # |X_T| / T
    returns: int  # jumps that land in the compact set
    mean_return_time: float | None  # mean gap between returns
    excursions: int  # completed trips outside the compact set
    occupancy: dict  # support-pattern label ("" for the origin) -> time share
    absorbed: bool
    rng: dict
    path: list | None = field(default=None, repr=False)

    def to_dict(self):
        out = {k: getattr(self, k) for k in (
            "end_state", "time", "events", "slopes", "norm_slope", "returns",
            "mean_return_time", "excursions", "occupancy", "absorbed", "rng")}
        if self.path is not None:
            out["path"] = self.path
        return out


def _label(mask, d):
    return ",".join(str(i + 1) for i in range(d) if mask >> i & 1)


def _rate_source(model: DriftModel):
    """Return ``rates(x_tuple, mask) -> (cumulative list, total)``."""
    d = model.dimension
    origin_births = [float(v) for v in model.rates(np.ones(d))[0]]

    def pack(b, dth):
        cum, acc = [], 0.0
        for r in list(b) + list(dth):
            if r < 0 or not math.isfinite(r):
                raise DomainError(f"invalid rate {r!r}")
            acc += float(r)
            cum.append(acc)
        return cum, acc

    origin = pack(origin_births, [0.0] * d)

    if isinstance(model, SupportPatternDrift):
        table = [origin]
        for m in range(1, 1 << d):
            pat = mask_to_pattern(m, d)
            table.append(pack(model.birth(pat), model.death(pat)))
        return lambda x, m: table[m]

    if isinstance(model, ConePartition2D):
        cache = {}

        def cone_rates(x, m):
            if m == 0:
                return origin
            k = model.cone_index(x)
            key = (k, m)
            if key not in cache:
                b, dth = model.cone_rates(k)
                if model.masked:
                    dth = [v if m >> i & 1 else 0.0 for i, v in enumerate(dth)]
                cache[key] = pack(b, dth)
            return cache[key]

        return cone_rates

    cache = {}
    raw = model.raw_rates if isinstance(model, SmoothDrift) else model.rates

    def smooth_rates(x, m):
        if m == 0:
            return origin
        hit = cache.get(x)
        if hit is None:
            b, dth = raw(np.array(x, dtype=float))
            hit = pack(b, dth)
            if len(cache) >= _CACHE_LIMIT:
                cache.clear()
            cache[x] = hit
        return hit

    return smooth_rates


def _replica_seeds(seed: int, n: int):
    return np.random.SeedSequence(seed).spawn(n)


def simulate(model: DriftModel, config: SimConfig | None = None, seed_seq=None,
             rates=None) -> SimSummary:
    """One run of the chain; ``seed_seq`` overrides the config seed (replicas)."""
    cfg = config or SimConfig()
    d = model.dimension
    x = [0] * d if cfg.initial is None else [int(v) for v in cfg.initial]
    if len(x) != d or min(x) < 0:
        raise DomainError(f"initial state must be a point of Z_+^{d}")
    ss = seed_seq if seed_seq is not None else np.random.SeedSequence(cfg.seed)
    gen = np.random.Generator(np.random.SFC64(ss))
    rates = rates or _rate_source(model)
    radius = cfg.radius if cfg.radius is not None else 10.0 * d
    r2 = radius * radius
    horizon = cfg.time if cfg.time is not None else math.inf
    max_events = cfg.events if cfg.time is None else None

    occupancy = [0.0] * (1 << d)
    mask = sum(1 << i for i in range(d) if x[i] > 0)
    inside = sum(v * v for v in x) <= r2
    returns, excursions, last_return, gap_sum = 0, 0, 0.0, 0.0
    t, events, absorbed = 0.0, 0, False
    path = [] if cfg.thin else None
    buf, pos = gen.random(_BLOCK).tolist(), 0

    while True:
        cum, total = rates(tuple(x), mask)
        if total <= 0.0:
            absorbed = True
            if math.isfinite(horizon):
                occupancy[mask] += horizon - t
                t = horizon
            break
        if pos + 2 > _BLOCK:
            buf, pos = gen.random(_BLOCK).tolist(), 0
        u1, u2 = buf[pos], buf[pos + 1]
        pos += 2
        dt = -math.log(1.0 - u1) / total
        if t + dt >= horizon:
            occupancy[mask] += horizon - t
            t = horizon
            break
        occupancy[mask] += dt
        t += dt
        target = u2 * total
        j = 0
        while j < 2 * d - 1 and cum[j] <= target:
            j += 1
        if j < d:
            x[j] += 1
            mask |= 1 << j
        else:
            i = j - d
            x[i] -= 1
            if x[i] == 0:
                mask &= ~(1 << i)
        events += 1
        now_inside = sum(v * v for v in x) <= r2
        if now_inside:
            returns += 1
            gap_sum += t - last_return
            last_return = t
            if not inside:
                excursions += 1
        inside = now_inside
        if path is not None and events % cfg.thin == 0:
            path.append([t, *x])
        if max_events is not None and events >= max_events:
            break

    total_time = math.fsum(occupancy)
    if total_time > 0:
        occ = {_label(m, d): occupancy[m] / total_time for m in range(1 << d)}
    else:
        occ = {_label(m, d): float(m == mask) for m in range(1 << d)}
    T = t if t > 0 else 1.0
    return SimSummary(
        end_state=list(x), time=t, events=events,
        slopes=[v / T for v in x], norm_slope=math.sqrt(sum(v * v for v in x)) / T,
        returns=returns,
        mean_return_time=gap_sum / returns if returns else None, excursions=excursions,
        occupancy=occ, absorbed=absorbed,
        rng={"algorithm": RNG_ALGORITHM, "entropy": int(ss.entropy),
             "spawn_key": list(ss.spawn_key)},
        path=path,
    )


def simulate_replicas(model: DriftModel, config: SimConfig) -> list[SimSummary]:
    rates = _rate_source(model)
    return [simulate(model, config, ss, rates) for ss in _replica_seeds(config.seed, config.replicas)]


def estimate_recurrence(model: DriftModel, config: SimConfig | None = None,
                        runs: list[SimSummary] | None = None) -> Verdict:
    """Empirical verdict from replica escape slopes and compact-set returns.

    Reported alongside analytic verdicts, never instead of them.
    """
    cfg = config or SimConfig(replicas=3)
    runs = runs or simulate_replicas(model, cfg)
    slopes = [r.norm_slope for r in runs]
    med = statistics.median(slopes)
    cert = {"median_slope": med, "slopes": slopes, "returns": [r.returns for r in runs],
            "coordinate_slopes": [r.slopes for r in runs]}
    meta = {"replicas": len(runs), "horizon": runs[0].time, "seed": cfg.seed,
            "rng": RNG_ALGORITHM, "slope_lo": cfg.slope_lo, "slope_hi": cfg.slope_hi}
    if med <= cfg.slope_lo and all(r.returns > 0 for r in runs):
        return Verdict(Label.EMPIRICALLY_STABLE, "simulation", cert, meta)
    if all(s >= cfg.slope_hi for s in slopes):
        return Verdict(Label.EMPIRICALLY_UNSTABLE, "simulation", cert, meta)
    return Verdict(Label.INCONCLUSIVE, "simulation", cert, meta)


@dataclass
class PinnedOccupancy:
    pinned: int
    free: tuple  # the two free coordinates (0-based), in order
    pi: dict  # "00", "10", "01", "11" -> time share
    drift_terms: dict  # same keys -> pinned coordinate's drift on the matching 3D face
    lhs: float  # sum of drift_terms[k] * pi[k]
    reliable: bool
    summary: SimSummary = field(repr=False, default=None)

    def to_dict(self):
        return {"pinned": self.pinned, "free": list(self.free), "pi": self.pi,
                "drift_terms": self.drift_terms, "lhs": self.lhs, "reliable": self.reliable}


def pinned_face_occupancy(model: SupportPatternDrift, k: int, config: SimConfig | None = None) -> PinnedOccupancy:
    """Boundary time shares of the 2D process with coordinate ``k`` held positive.

    ``k`` is 0-based.  The free pair ``(i, j)`` evolves with the 3D rates of
    the faces that include ``k``.  ``lhs`` weighs coordinate ``k``'s drift on
    each such face by the share of time the free pair spends on it; a
    negative value means the pinned coordinate is pulled down on average.
    """
    if not isinstance(model, SupportPatternDrift) or model.dimension != 3:
        raise DomainError("pinned occupancy needs a 3-dimensional support-pattern model")
    if k not in (0, 1, 2):
        raise DomainError("pinned coordinate must be 0, 1 or 2")
    cfg = config or SimConfig(time=1e5)
    i, j = [c for c in range(3) if c != k]
    table = {}
    for m2 in range(1, 4):
        pat3 = frozenset({k} | {c for c, bit in ((i, 1), (j, 2)) if m2 & bit})
        b, dth = model.birth(pat3), model.death(pat3)
        table[frozenset(c for c, bit in ((0, 1), (1, 2)) if m2 & bit)] = ((b[i], b[j]), (dth[i], dth[j]))
    pair = SupportPatternDrift(2, table)
    # both free coordinates empty: the 3D face where only k is positive
    b_k = [float(v) for v in model.birth(frozenset({k}))]
    origin = ([b_k[i], b_k[i] + b_k[j], b_k[i] + b_k[j], b_k[i] + b_k[j]], b_k[i] + b_k[j])
    base = _rate_source(pair)

    def rates(x, m):
        return origin if m == 0 else base(x, m)

    summary = simulate(pair, cfg, rates=rates)
    occ = summary.occupancy
    pi = {"00": occ[""], "10": occ["1"], "01": occ["2"], "11": occ["1,2"]}
    terms = {}
    for key, free in (("00", ()), ("10", (i,)), ("01", (j,)), ("11", (i, j))):
        pat = frozenset({k, *free})
        terms[key] = float(model.pattern_drift(pat)[k])
    lhs = math.fsum(terms[key] * pi[key] for key in pi)
    reliable = summary.norm_slope <= cfg.slope_lo
    return PinnedOccupancy(k, (i, j), pi, terms, lhs, reliable, summary)


__all__ = ["SimConfig", "SimSummary", "simulate", "simulate_replicas", "estimate_recurrence",
           "PinnedOccupancy", "pinned_face_occupancy", "RNG_ALGORITHM"]
