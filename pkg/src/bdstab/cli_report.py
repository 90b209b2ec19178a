"""Scenario files, analysis dispatch and the ``bdstab`` command line.

Exit codes: 0 success, 2 input error, 3 analytic methods disagree
(Stable vs Unstable), 4 runtime failure.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import __version__
from .cone_geometry import check_a1
from .ctmc_sim import SimConfig, estimate_recurrence, simulate
from .drift_model import (BUILTINS, ConePartition2D, Scenario, SmoothDrift, SupportPatternDrift,
                          builtin_scenario, check_homogeneity)
from .errors import BdStabError, DomainError, HomogeneityError, ParseError, SchemaError, Unsupported
from .gradient_system import check_gradient_criterion
from .ode_flow import FlowSettings, classify_smooth, integrate, trajectory_csv
from .rate_dsl import parse
from .region2d import classify_2d, grid, region_polygon, render_svg, sweep_region
from .verdict import Label, Verdict

MAX_FILE = 1 << 20
EXIT_OK, EXIT_INPUT, EXIT_CONFLICT, EXIT_RUNTIME = 0, 2, 3, 4
ANALYTIC = ("ode", "gradient", "a1", "region2d")
COMMANDS = ("validate", "classify", "region", "simulate", "trace-ode", "report")


def _schema() -> dict:
    text = resources.files("bdstab").joinpath("schema/scenario.schema.json").read_text("utf-8")
    return json.loads(text)


_VALIDATOR = None


def _validator():
    global _VALIDATOR
    if _VALIDATOR is None:
        _VALIDATOR = jsonschema.Draft202012Validator(_schema())
    return _VALIDATOR


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


# -- scenario files --------------------------------------------------------


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file (JSON, at most 1 MiB)."""
    p = Path(path)
    if not p.is_file():
        raise SchemaError("", f"no such scenario file: {path}")
    if p.stat().st_size > MAX_FILE:
        raise SchemaError("", "scenario file exceeds 1 MiB")
    try:
        doc = json.loads(p.read_text("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError("", f"not valid UTF-8 JSON: {exc}") from None
    return scenario_from_document(doc)


def scenario_from_document(doc: Any) -> Scenario:
    err = jsonschema.exceptions.best_match(_validator().iter_errors(doc))
    if err is not None:
        raise SchemaError(_pointer(err.absolute_path), err.message)
    d = doc["dimension"]
    m = doc["model"]
    fam = m["family"]
    if fam == "builtin":
        try:
            sc = builtin_scenario(m["builtin"], m.get("params") or {})
        except (DomainError, KeyError, TypeError, ValueError) as exc:
            raise SchemaError("/model/params", str(exc)) from None
        if sc.dimension != d:
            raise SchemaError("/dimension", f"builtin {m['builtin']} has dimension {sc.dimension}")
        model = sc.model
        params = sc.params
    elif fam == "support_pattern":
        table = {}
        for i, row in enumerate(m["table"]):
            at = f"/model/table/{i}"
            if max(row["support"]) > d:
                raise SchemaError(f"{at}/support", f"coordinate exceeds dimension {d}")
            for key in ("births", "deaths"):
                if len(row[key]) != d:
                    raise SchemaError(f"{at}/{key}", f"expected {d} rates")
            pat = frozenset(j - 1 for j in row["support"])
            if pat in table:
                raise SchemaError(f"{at}/support", "duplicate support pattern")
            table[pat] = (row["births"], row["deaths"])
        try:
            model = SupportPatternDrift(d, table, masked=m.get("masked", True))
        except DomainError as exc:
            raise SchemaError("/model/table", str(exc)) from None
        params = {}
    elif fam == "cone_partition":
        if d != 2:
            raise SchemaError("/dimension", "cone partitions are planar")
        try:
            model = ConePartition2D(m["rays"], psi=m.get("psi"), lam=m.get("lambda"),
                                    drifts=m.get("drifts"), masked=m.get("masked", True))
        except BdStabError as exc:
            raise SchemaError("/model", str(exc)) from None
        params = {"lambda": m["lambda"]} if "lambda" in m else {}
    else:
        funcs = {}
        for key in ("births", "deaths"):
            if len(m[key]) != d:
                raise SchemaError(f"/model/{key}", f"expected {d} rate expressions")
            out = []
            for i, e in enumerate(m[key]):
                if isinstance(e, str):
                    try:
                        out.append(parse(e, d))
                    except ParseError as exc:
                        raise SchemaError(f"/model/{key}/{i}",
                                          f"{exc.reason} at line {exc.line}, column {exc.column}") from None
                else:
                    out.append(float(e))
            funcs[key] = out
        model = SmoothDrift(d, births=funcs["births"], deaths=funcs["deaths"], name=doc["name"],
                            masked=m.get("masked", True))
        check_homogeneity(model)
        params = {}
    sweep = doc.get("sweep")
    if sweep:
        for key, ax in sweep.items():
            if not ax["stop"] > ax["start"]:
                raise SchemaError(f"/sweep/{key}", "stop must exceed start")
    sc = Scenario(name=doc["name"], model=model, family=model.family,
                  builtin=m.get("builtin"), params=params,
                  analysis=dict(doc.get("analysis") or {}), sweep=sweep,
                  document=copy.deepcopy(doc))
    return sc


def scenario_document(sc: Scenario) -> dict:
    """Scenario-file form of ``sc`` (the loaded document when available)."""
    if sc.document is not None:
        return copy.deepcopy(sc.document)
    doc: dict[str, Any] = {"schema_version": 1, "name": sc.name, "dimension": sc.dimension}
    model = sc.model
    if sc.builtin is not None:
        doc["model"] = {"family": "builtin", "builtin": sc.builtin, "params": copy.deepcopy(sc.params)}
    elif isinstance(model, SupportPatternDrift):
        rows = []
        for pat, (b, dth) in model.table().items():
            rows.append({"support": sorted(i + 1 for i in pat), "births": b.tolist(),
                         "deaths": dth.tolist()})
        doc["model"] = {"family": "support_pattern", "masked": model.masked, "table": rows}
    elif isinstance(model, ConePartition2D):
        m = {"family": "cone_partition", "masked": model.masked, "rays": model.rays.tolist()}
        if model.lam is not None:
            m.update({"lambda": model.lam.tolist(), "psi": model.psi.tolist()})
        else:
            m["drifts"] = model.drifts.tolist()
        doc["model"] = m
    elif isinstance(model, SmoothDrift) and all(hasattr(f, "text") or isinstance(f, float)
                                                for f in list(model.births or []) + list(model.deaths or [])):
        conv = lambda f: f.text if hasattr(f, "text") else f  # noqa: E731
        doc["model"] = {"family": "smooth", "masked": model.masked,
                        "births": [conv(f) for f in model.births],
                        "deaths": [conv(f) for f in model.deaths]}
    else:
        raise Unsupported("model built from Python callables has no file form")
    if sc.analysis:
        doc["analysis"] = copy.deepcopy(sc.analysis)
    if sc.sweep:
        doc["sweep"] = copy.deepcopy(sc.sweep)
    return doc


def fingerprint(sc: Scenario) -> str:
    """sha256 of the canonical JSON scenario document."""
    try:
        doc = scenario_document(sc)
    except Unsupported:
        doc = {"name": sc.name, "family": sc.family, "dimension": sc.dimension}
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return "sha256:" + hashlib.sha256(text.encode("utf-8")).hexdigest()


def resolve(spec: str) -> Scenario:
    """A builtin name or a path to a scenario file."""
    if spec in BUILTINS and not os.path.exists(spec):
        sc = builtin_scenario(spec)
        sc.document = {"schema_version": 1, "name": spec, "dimension": sc.dimension,
                       "model": {"family": "builtin", "builtin": spec, "params": sc.params}}
        return sc
    return load_scenario(spec)


# -- analysis --------------------------------------------------------------


@dataclass
class Settings:
    mesh: int | None = None
    tol: float = 1e-9
    seed: int = 20240917
    horizon: float = 1e5
    replicas: int = 3
    grid: int = 41
    simulate: bool = False

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class VerdictReport:
    scenario: str
    fingerprint: str
    family: str
    dimension: int
    verdicts: dict
    overall: Label
    settings: dict
    tool_version: str = __version__
    extras: dict = field(default_factory=dict)

    @property
    def conflict(self) -> bool:
        return self.overall is Label.CONFLICT

    def to_dict(self):
        out = {"scenario": self.scenario, "fingerprint": self.fingerprint, "family": self.family,
               "dimension": self.dimension, "overall": self.overall.value,
               "verdicts": {k: v.to_dict() for k, v in self.verdicts.items()},
               "settings": self.settings, "tool_version": self.tool_version}
        out.update(self.extras)
        return out


def overall_label(verdicts: dict) -> Label:
    """Analytic methods decide; simulation is advisory only."""
    labels = {m: v.label for m, v in verdicts.items() if m in ANALYTIC}
    vals = set(labels.values())
    if Label.STABLE in vals and Label.UNSTABLE in vals:
        return Label.CONFLICT
    for lab in (Label.STABLE, Label.UNSTABLE, Label.BOUNDARY):
        if lab in vals:
            return lab
    return Label.INCONCLUSIVE


def analyse(sc: Scenario, settings: Settings | None = None) -> VerdictReport:
    s = settings or Settings()
    model = sc.model
    verdicts: dict[str, Verdict] = {}
    if isinstance(model, SmoothDrift):
        verdicts["ode"] = classify_smooth(model, FlowSettings(mesh=s.mesh))
        verdicts["gradient"] = check_gradient_criterion(model)
    elif isinstance(model, SupportPatternDrift):
        verdicts["a1"] = check_a1(model)
        if model.dimension == 2:
            verdicts["region2d"] = classify_2d(_partition(sc), s.tol)
    elif isinstance(model, ConePartition2D):
        verdicts["region2d"] = classify_2d(model, s.tol)
    if s.simulate:
        verdicts["simulation"] = estimate_recurrence(model, _sim_config(s))
    return VerdictReport(sc.name, fingerprint(sc), sc.family, sc.dimension, verdicts,
                         overall_label(verdicts), s.to_dict())


def _partition(sc):
    from .region2d import as_partition

    return as_partition(sc)


def _sim_config(s: Settings) -> SimConfig:
    return SimConfig(seed=s.seed, time=s.horizon, replicas=s.replicas)


def _settings_for(sc: Scenario, args) -> Settings:
    a = sc.analysis
    s = Settings(mesh=a.get("mesh"), tol=a.get("tol", 1e-9), seed=a.get("seed", 20240917),
                 horizon=a.get("horizon", 1e5), replicas=a.get("replicas", 3),
                 simulate=a.get("simulate", False) or "simulation" in a.get("methods", []))
    if args is None:
        return s
    for key in ("mesh", "tol", "seed", "horizon", "replicas", "grid"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(s, key, v)
    if getattr(args, "simulate", False):
        s.simulate = True
    return s


def _sweep_axes(sc: Scenario, n: int):
    if sc.sweep:
        ax1 = sc.sweep["lambda1"]
        ax2 = sc.sweep.get("lambda2", ax1)
        return (np.linspace(ax1["start"], ax1["stop"], ax1["num"]),
                np.linspace(ax2["start"], ax2["stop"], ax2["num"]))
    g = grid(0.0, 1.2, n)
    return g, g


# -- command line ----------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bdstab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("scenario", help="builtin name or path to a scenario JSON file")
    p.add_argument("--lambda", dest="lam", type=_floats, help="arrival vector, e.g. 0.5,0.9")
    p.add_argument("--grid", type=int, help="points per axis for region sweeps (default 41)")
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=float, help="simulated time per replica")
    p.add_argument("--replicas", type=int)
    p.add_argument("--mesh", type=int, help="sphere directions for the ODE criterion")
    p.add_argument("--tol", type=float)
    p.add_argument("--x0", type=_floats, help="initial point for trace-ode")
    p.add_argument("--simulate", action="store_true", help="append the simulation verdict")
    p.add_argument("--thin", type=int, help="keep every n-th simulated state (csv output)")
    p.add_argument("--format", choices=("json", "csv", "svg"), default="json")
    p.add_argument("--out", help="directory for output files (stdout otherwise)")
    return p


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, ensure_ascii=False, default=_default) + "\n"


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def run(command: str, scenario: str, args=None) -> tuple[int, dict[str, str]]:
    """Execute a command; returns (exit code, {file name: content})."""
    sc = resolve(scenario)
    if args is not None and getattr(args, "lam", None) is not None:
        sc = sc.with_lambda(args.lam)
    s = _settings_for(sc, args)
    fmt = getattr(args, "format", "json") if args is not None else "json"

    if command == "validate":
        return EXIT_OK, {"validate.json": _json({
            "valid": True, "name": sc.name, "family": sc.family, "dimension": sc.dimension,
            "fingerprint": fingerprint(sc)})}

    if command in ("classify", "report"):
        if command == "report":
            s.simulate = True
        rep = analyse(sc, s)
        if command == "report":
            rep.extras["scenario_document"] = _safe_document(sc)
        code = EXIT_CONFLICT if rep.conflict else EXIT_OK
        return code, {f"{command}.json": _json(rep.to_dict())}

    if command == "region":
        if sc.dimension != 2 or isinstance(sc.model, SmoothDrift):
            raise Unsupported("region sweeps need a planar piecewise-constant scenario")
        lam1, lam2 = _sweep_axes(sc, s.grid)
        sweep = sweep_region(sc, lam1, lam2, s.tol)
        try:
            poly = region_polygon(sc)
        except Unsupported as exc:
            poly, why = None, str(exc)
        else:
            why = None
        files = {"region.csv": sweep.to_csv(),
                 "region.json": _json({"polygon": poly.to_dict() if poly else None,
                                       "polygon_error": why, "sweep": sweep.to_dict(),
                                       "fingerprint": fingerprint(sc)})}
        if poly is not None:
            files["region.svg"] = render_svg(poly, sweep)
        order = {"csv": "region.csv", "json": "region.json", "svg": "region.svg"}
        if fmt == "svg" and poly is None:
            raise Unsupported(why)
        return EXIT_OK, _primary_first(files, order[fmt])

    if command == "simulate":
        cfg = SimConfig(seed=s.seed, time=s.horizon, replicas=s.replicas,
                        thin=getattr(args, "thin", None) if args is not None else None)
        if fmt == "csv":
            cfg.thin = cfg.thin or 100
            run1 = simulate(sc.model, cfg)
            lines = ["t," + ",".join(f"x{i + 1}" for i in range(sc.dimension))]
            lines += [",".join(repr(v) if isinstance(v, float) else str(v) for v in row)
                      for row in run1.path]
            return EXIT_OK, {"simulate.csv": "\r\n".join(lines) + "\r\n"}
        v = estimate_recurrence(sc.model, cfg)
        return EXIT_OK, {"simulate.json": _json({"scenario": sc.name,
                                                 "fingerprint": fingerprint(sc),
                                                 "verdict": v.to_dict()})}

    if command == "trace-ode":
        if not isinstance(sc.model, SmoothDrift):
            raise Unsupported("trace-ode needs a smooth scenario")
        x0 = getattr(args, "x0", None) if args is not None else None
        x0 = x0 or [1.0 / np.sqrt(sc.dimension)] * sc.dimension
        if len(x0) != sc.dimension:
            raise DomainError(f"--x0 needs {sc.dimension} coordinates")
        traj = integrate(sc.model, x0, FlowSettings())
        if fmt == "json":
            return EXIT_OK, {"trace.json": _json({"termination": traj.termination.value,
                                                  "time": traj.time, "t": traj.t, "u": traj.u})}
        return EXIT_OK, {"trace.csv": trajectory_csv(traj)}

    raise DomainError(f"unknown command {command!r}")


def _primary_first(files, primary):
    out = {primary: files[primary]}
    out.update({k: v for k, v in files.items() if k != primary})
    return out


def _safe_document(sc):
    try:
        return scenario_document(sc)
    except Unsupported:
        return None


def _error_payload(exc) -> dict:
    out = {"error": type(exc).__name__, "message": str(exc)}
    for key in ("pointer", "line", "column", "witness"):
        if getattr(exc, key, None) is not None:
            out[key] = getattr(exc, key)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        code, files = run(args.command, args.scenario, args)
    except (BdStabError, HomogeneityError) as exc:
        sys.stderr.write(_json(_error_payload(exc)))
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        sys.stderr.write(_json({"error": type(exc).__name__, "message": str(exc)}))
        return EXIT_RUNTIME
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in files.items():
            (out / name).write_text(text, encoding="utf-8", newline="")
    else:
        try:
            sys.stdout.write(next(iter(files.values())))
            sys.stdout.flush()
        except BrokenPipeError:
            # reader closed early (e.g. piped into head); silence the flush at exit
            os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
