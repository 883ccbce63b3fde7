"""Scenario runner and command-line entry point.

A scenario is a JSON document naming one command plus its parameters::

    {
      "command": "verify",
      "law": "lemma2",
      "chart": "cartesian",
      "field": {"name": "rotation", "params": {"omega": 1.0}},
      "params": {"p": [0, 1, 0, 0], "lambda1": 0.3, "lambda2": 0.5},
      "outputs": {"report": "lemma2.json"}
    }

Exit codes: 0 success or PASS, 1 a law check failed its tolerance,
2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import inspect
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from ._io import atomic_write, csv_text, fmt, json_text
from .charts import BUILTIN_METRICS, BUILTIN_TRANSFORMS, ConnectionCoeffs, builtin_metric
from .errors import FlowGradError, NumericalFailure, ParseError, SingularMetric, ValidationError, VanishingField
from .fields import BUILTIN_FIELDS, builtin_field
from .flow import IntegratorConfig, integrate_flow, reparametrize_arclength
from .laws import (
    GridSpec,
    ResidualReport,
    bch_combine,
    check_covariance,
    check_group_property,
    check_representation_relation,
    eulerian_residual,
)
from .refgrad import (
    MATRIX_COLUMNS,
    SeriesTruncation,
    refgrad_finite_difference,
    refgrad_series,
    refgrad_variational,
)

COMMANDS = ("flow", "refgrad", "verify", "grid-residual", "bch")
LAWS = ("lemma1", "lemma2", "lemma3", "eulerian")
TOP_KEYS = {"command", "law", "chart", "metric", "connection", "field", "params", "integrator", "outputs"}
OUTPUT_KEYS = {"csv", "report"}
CHART_METRICS = {"cartesian": "minkowski", "cylindrical": "cylindrical", "spherical": "spherical"}
FLAT_METRICS = {"minkowski", "euclidean"}
REFGRAD_METHODS = ("variational", "series", "finite_difference", "all")

PARAM_DEFAULTS = {
    "flow": {"s_total": None},
    "refgrad": {"method": "all", "h": 1e-4, "N": 12, "quadrature_step": None, "M": None, "m": None, "one_sided": False},
    "lemma1": {"tol": 1e-5},
    "lemma2": {"tol": 1e-7},
    "lemma3": {"lambda": None, "s_total": None, "N": None, "quadrature_step": None, "tol": 1e-5},
    "eulerian": {"transport": "intrinsic", "tol": None, "convergence": False, "ratio_range": [3.0, 5.0]},
    "bch": {"degree": 5, "quintic": "complete"},
}
PARAM_REQUIRED = {
    "flow": ("p",),
    "refgrad": ("p", "lambda"),
    "lemma1": ("p", "lambda", "transform", "target"),
    "lemma2": ("p", "lambda1", "lambda2"),
    "lemma3": ("p",),
    "eulerian": ("grid", "lambda"),
    "bch": ("X", "Y"),
}


@dataclass(frozen=True)
class Scenario:
    command: str
    law: str | None
    chart: str
    metric: str
    connection: object
    field_name: str
    field_params: dict
    params: dict
    integrator: dict
    outputs: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        """Parameter-schema key: the law for ``verify``, else the command."""
        if self.command == "grid-residual":
            return "eulerian"
        return self.law if self.command == "verify" else self.command

    def to_dict(self) -> dict:
        doc = {"command": self.command}
        if self.law is not None:
            doc["law"] = self.law
        doc.update(
            chart=self.chart,
            metric=self.metric,
            connection=self.connection,
            field={"name": self.field_name, "params": self.field_params},
            params=self.params,
            integrator=self.integrator,
            outputs=self.outputs,
        )
        return doc

    def config(self) -> IntegratorConfig:
        return IntegratorConfig(**self.integrator)


# --------------------------------------------------------------------------
# Parsing and validation


def _fail(message: str, location: str):
    raise ValidationError(message, location)


def _finite_numbers(value, location: str):
    """Reject NaN/inf anywhere inside nested numeric parameters."""
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return
    if isinstance(value, (int, float)):
        if not math.isfinite(value):
            _fail("numeric parameter must be finite", location)
        return
    if isinstance(value, list):
        for i, v in enumerate(value):
            _finite_numbers(v, f"{location}[{i}]")
        return
    if isinstance(value, dict):
        for k, v in value.items():
            _finite_numbers(v, f"{location}.{k}")


def _vector(value, n: int, location: str) -> list[float]:
    if not isinstance(value, list) or len(value) != n or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        _fail(f"expected a list of {n} numbers", location)
    return [float(v) for v in value]


def _matrix(value, location: str) -> list[list[float]]:
    if not isinstance(value, list) or len(value) != 4:
        _fail("expected a 4x4 matrix", location)
    return [_vector(row, 4, f"{location}[{i}]") for i, row in enumerate(value)]


def _number(value, location: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail("expected a number", location)
    if positive and not value > 0:
        _fail("must be positive", location)
    return float(value)


def _check_field_spec(spec, location: str) -> tuple[str, dict]:
    if isinstance(spec, str):
        spec = {"name": spec}
    if not isinstance(spec, dict) or "name" not in spec:
        _fail("expected {\"name\": ..., \"params\": {...}}", location)
    unknown = set(spec) - {"name", "params"}
    if unknown:
        _fail(f"unknown key {sorted(unknown)[0]!r}", location)
    name = spec["name"]
    if name not in BUILTIN_FIELDS:
        _fail(f"unknown builtin field {name!r}; known: {sorted(BUILTIN_FIELDS)}", f"{location}.name")
    params = spec.get("params", {})
    if not isinstance(params, dict):
        _fail("expected an object", f"{location}.params")
    accepted = inspect.signature(BUILTIN_FIELDS[name]).parameters
    for key in params:
        if key not in accepted:
            _fail(f"field {name!r} has no parameter {key!r}", f"{location}.params.{key}")
    _finite_numbers(params, f"{location}.params")
    return name, dict(params)


def _check_metric(name, location: str) -> str:
    if name not in BUILTIN_METRICS:
        _fail(f"unknown metric {name!r}; known: {sorted(BUILTIN_METRICS)}", location)
    return name


def _check_params(kind: str, params: dict) -> dict:
    merged = {**PARAM_DEFAULTS.get(kind, {}), **params}
    for key in PARAM_REQUIRED[kind]:
        if key not in params:
            _fail(f"missing parameter {key!r}", f"params.{key}")
    allowed = set(PARAM_DEFAULTS.get(kind, {})) | set(PARAM_REQUIRED[kind])
    allowed |= {"flow": {"lambda"}, "lemma3": set(), "eulerian": set()}.get(kind, set())
    for key in params:
        if key not in allowed:
            _fail(f"unknown parameter {key!r} for {kind}", f"params.{key}")
    _finite_numbers(params, "params")
    if "p" in merged:
        merged["p"] = _vector(merged["p"], 4, "params.p")
    for key in ("lambda", "lambda1", "lambda2", "s_total"):
        if merged.get(key) is not None:
            merged[key] = _number(merged[key], f"params.{key}")
    for key in ("h", "quadrature_step", "tol"):
        if merged.get(key) is not None:
            merged[key] = _number(merged[key], f"params.{key}", positive=True)
    for key in ("M", "m"):
        if merged.get(key) is not None:
            merged[key] = _number(merged[key], f"params.{key}")
    if merged.get("N") is not None and (isinstance(merged["N"], bool) or not isinstance(merged["N"], int) or merged["N"] < 0):
        _fail("must be an integer >= 0", "params.N")

    if kind == "flow" and merged.get("lambda") is None and merged.get("s_total") is None:
        _fail("missing parameter 'lambda' (or 's_total')", "params.lambda")
    if kind == "lemma3" and merged["lambda"] is None and merged["s_total"] is None:
        _fail("missing parameter 'lambda' (or 's_total')", "params.lambda")
    if kind == "refgrad" and merged["method"] not in REFGRAD_METHODS:
        _fail(f"unknown method {merged['method']!r}; use one of {REFGRAD_METHODS}", "params.method")
    if kind == "lemma1":
        t = merged["transform"]
        if not isinstance(t, dict) or t.get("name") not in BUILTIN_TRANSFORMS:
            _fail(f"unknown transform; known: {sorted(BUILTIN_TRANSFORMS)}", "params.transform.name")
        target = merged["target"]
        if not isinstance(target, dict) or "field" not in target:
            _fail("expected {\"chart\": ..., \"metric\": ..., \"field\": {...}}", "params.target")
        _check_field_spec(target["field"], "params.target.field")
        if "metric" in target:
            _check_metric(target["metric"], "params.target.metric")
    if kind == "eulerian":
        grid = merged["grid"]
        if not isinstance(grid, dict):
            _fail("expected an object with lower, upper, counts, fd_steps", "params.grid")
        try:
            GridSpec(**grid)
        except TypeError as exc:
            _fail(str(exc), "params.grid")
        rr = merged["ratio_range"]
        if not (isinstance(rr, list) and len(rr) == 2):
            _fail("expected [low, high]", "params.ratio_range")
    if kind == "bch":
        merged["X"] = _matrix(merged["X"], "params.X")
        merged["Y"] = _matrix(merged["Y"], "params.Y")
    return merged


def parse_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document, filling defaults."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise ParseError("scenario must be a JSON object", 1, 1)
    unknown = set(doc) - TOP_KEYS
    if unknown:
        key = sorted(unknown)[0]
        _fail(f"unknown key {key!r}", key)
    command = doc.get("command")
    if command not in COMMANDS:
        _fail(f"expected one of {COMMANDS}, got {command!r}", "command")
    law = doc.get("law")
    if command == "verify":
        if law not in LAWS:
            _fail(f"expected one of {LAWS}, got {law!r}", "law")
    elif law is not None:
        _fail("only the verify command takes a law", "law")

    chart = doc.get("chart", "cartesian")
    if chart not in CHART_METRICS:
        _fail(f"unknown chart {chart!r}; known: {sorted(CHART_METRICS)}", "chart")
    metric = _check_metric(doc.get("metric", CHART_METRICS[chart]), "metric")
    connection = doc.get("connection", "levi-civita")
    if isinstance(connection, dict):
        if set(connection) != {"constant"}:
            _fail("expected {\"constant\": [4x4x4 array]}", "connection")
        arr = np.asarray(connection["constant"], dtype=float) if isinstance(connection["constant"], list) else None
        if arr is None or arr.shape != (4, 4, 4) or not np.all(np.isfinite(arr)):
            _fail("expected a finite 4x4x4 array", "connection.constant")
    elif connection not in ("levi-civita", "flat"):
        _fail(f"expected 'levi-civita', 'flat' or a constant array, got {connection!r}", "connection")

    if command == "bch":
        field_name, field_params = "constant", {}
        if "field" in doc:
            field_name, field_params = _check_field_spec(doc["field"], "field")
    else:
        if "field" not in doc:
            _fail("missing field selection", "field")
        field_name, field_params = _check_field_spec(doc["field"], "field")

    kind = "eulerian" if command == "grid-residual" else (law if command == "verify" else command)
    params = doc.get("params", {})
    if not isinstance(params, dict):
        _fail("expected an object", "params")
    params = _check_params(kind, params)

    integrator = doc.get("integrator", {})
    if not isinstance(integrator, dict):
        _fail("expected an object", "integrator")
    known = {"method", "step_size", "rel_tol", "abs_tol", "max_steps"}
    for key in integrator:
        if key not in known:
            _fail(f"unknown integrator setting {key!r}", f"integrator.{key}")
    _finite_numbers(integrator, "integrator")
    integrator = {**{"method": "rk4", "step_size": None, "rel_tol": 1e-10, "abs_tol": 1e-12, "max_steps": 10_000_000}, **integrator}
    IntegratorConfig(**integrator)

    outputs = doc.get("outputs", {})
    if not isinstance(outputs, dict):
        _fail("expected an object", "outputs")
    for key, value in outputs.items():
        if key not in OUTPUT_KEYS:
            _fail(f"unknown output {key!r}; use {sorted(OUTPUT_KEYS)}", f"outputs.{key}")
        if not isinstance(value, str) or not value:
            _fail("expected a file path", f"outputs.{key}")

    return Scenario(command, law, chart, metric, connection, field_name, field_params, params, integrator, dict(outputs))


# --------------------------------------------------------------------------
# Execution


def _make_field(name: str, params: dict, chart: str):
    params = dict(params)
    if "chart" in inspect.signature(BUILTIN_FIELDS[name]).parameters and "chart" not in params:
        params["chart"] = chart
    return builtin_field(name, **params)


def _make_connection(s: Scenario):
    if isinstance(s.connection, dict):
        return ConnectionCoeffs.constant(s.connection["constant"])
    if s.connection == "flat" or s.metric in FLAT_METRICS:
        return None
    return ConnectionCoeffs.levi_civita(builtin_metric(s.metric))


@dataclass
class RunResult:
    exit_code: int
    lines: list[str]
    files: dict[str, str]


def _write_outputs(s: Scenario, out_dir: Path, texts: dict[str, str]) -> dict[str, str]:
    written = {}
    for key, text in texts.items():
        if key in s.outputs:
            path = out_dir / s.outputs[key]
            atomic_write(path, text)
            written[key] = str(path)
    return written


def _refgrad_csv(results) -> str:
    lines = [",".join(["method", "lambda", *MATRIX_COLUMNS])]
    for r in results:
        lines.append(",".join([r.method, *(fmt(v) for v in r.csv_row())]))
    return "\n".join(lines) + "\n"


def _run_flow(s: Scenario, fld, cfg):
    P = s.params
    if P.get("s_total") is not None:
        sol = reparametrize_arclength(fld, builtin_metric(s.metric), P["p"], P["s_total"], cfg)
    else:
        sol = integrate_flow(fld, P["p"], P["lambda"], cfg)
    record = {
        "command": "flow",
        "field": s.field_name,
        "parameter": sol.parameter,
        "terminal": sol.terminal,
        "p": P["p"],
        "endpoint": sol.endpoint,
        "samples": len(sol.sigma),
    }
    if sol.lambda_of_s is not None:
        record["lambda_of_s"] = float(sol.lambda_of_s[-1])
    line = "FLOW endpoint=" + ",".join(f"{v:.10g}" for v in sol.endpoint)
    return 0, [line], {"csv": sol.csv(), "report": json_text(record)}


def _run_refgrad(s: Scenario, fld, conn, cfg):
    P = s.params
    method = P["method"]
    results = []
    if method in ("variational", "series", "all"):
        F, sol = refgrad_variational(fld, conn, P["p"], P["lambda"], cfg, full_output=True)
        if method != "series":
            results.append(F)
        if method in ("series", "all"):
            trunc = SeriesTruncation(P["N"], P["quadrature_step"], P["M"], P["m"])
            results.append(refgrad_series(fld, conn, sol, trunc))
    if method in ("finite_difference", "all"):
        results.append(refgrad_finite_difference(fld, P["p"], P["lambda"], P["h"], cfg, one_sided=P["one_sided"]))
    record = {"command": "refgrad", "field": s.field_name, "results": [r.record() for r in results]}
    if len(results) > 1:
        record["max_discrepancy"] = max(
            float(np.max(np.abs(a.matrix - b.matrix))) for i, a in enumerate(results) for b in results[i + 1 :]
        )
    lines = [f"REFGRAD {r.method} det={np.linalg.det(r.matrix):.10g}" for r in results]
    return 0, lines, {"csv": _refgrad_csv(results), "report": json_text(record)}


def _report_outputs(reports: list[ResidualReport], extra: dict | None = None):
    ok = all(r.passed for r in reports)
    record = {"reports": [r.record() for r in reports], **(extra or {})}
    csv = csv_text(["residual", "tol"], [[r.residual, r.tol] for r in reports])
    return (0 if ok else 1), [r.summary() for r in reports], {"report": json_text(record), "csv": csv}


def _run_verify(s: Scenario, fld, conn, cfg, threads: int, tol_override: float | None):
    P = dict(s.params)
    if tol_override is not None:
        P["tol"] = tol_override
    kind = s.kind
    if kind == "lemma1":
        target = P["target"]
        t_spec = P["transform"]
        t = BUILTIN_TRANSFORMS[t_spec["name"]](**t_spec.get("params", {}))
        tchart = target.get("chart", t.target if t.target in CHART_METRICS else s.chart)
        tname, tparams = _check_field_spec(target["field"], "params.target.field")
        field_I = _make_field(tname, tparams, tchart)
        metric_I = builtin_metric(target.get("metric", CHART_METRICS.get(tchart, s.metric)))
        metric_J = builtin_metric(s.metric)
        report = check_covariance(
            field_I,
            fld,
            t,
            P["p"],
            P["lambda"],
            cfg,
            metric_I=None if metric_I.name in FLAT_METRICS else metric_I,
            metric_J=None if metric_J.name in FLAT_METRICS else metric_J,
            tol=P["tol"],
        )
        return _report_outputs([report])
    if kind == "lemma2":
        report = check_group_property(fld, conn, P["p"], P["lambda1"], P["lambda2"], cfg, tol=P["tol"])
        return _report_outputs([report])
    if kind == "lemma3":
        trunc = None if P["N"] is None else SeriesTruncation(P["N"], P["quadrature_step"])
        report = check_representation_relation(
            fld, builtin_metric(s.metric), conn, P["p"], P["lambda"], P["s_total"], cfg, trunc, tol=P["tol"]
        )
        return _report_outputs([report])
    # eulerian
    grid = GridSpec(**P["grid"])
    ecfg = cfg if s.integrator.get("step_size") is not None else IntegratorConfig(**{**s.integrator, "step_size": 1e-2})
    report = eulerian_residual(fld, conn, grid, P["lambda"], ecfg, transport_kind=P["transport"], tol=P["tol"], threads=threads)
    if not P["convergence"]:
        return _report_outputs([report])
    finer = eulerian_residual(fld, conn, grid.halved(), P["lambda"], ecfg, transport_kind=P["transport"], tol=P["tol"], threads=threads)
    ratio = report.residual / finer.residual if finer.residual > 0 else math.inf
    lo, hi = P["ratio_range"]
    code, lines, texts = _report_outputs([report, finer], {"ratio": ratio, "ratio_range": [lo, hi]})
    ok = lo <= ratio <= hi
    lines.append(f"CONVERGENCE ratio={ratio:.4g} range=[{lo:g}, {hi:g}] {'PASS' if ok else 'FAIL'}")
    return (code if ok else 1), lines, texts


def _run_bch(s: Scenario):
    P = s.params
    X, Y = np.array(P["X"]), np.array(P["Y"])
    Z = bch_combine(X, Y, P["degree"], quintic=P["quintic"])
    mismatch = float(np.max(np.abs(expm(X) @ expm(Y) - expm(Z))))
    record = {"command": "bch", "degree": P["degree"], "quintic": P["quintic"], "Z": Z, "exp_mismatch": mismatch}
    csv = csv_text(MATRIX_COLUMNS, [np.ravel(Z)])
    return 0, [f"BCH degree={P['degree']} exp_mismatch={mismatch:.3e}"], {"report": json_text(record), "csv": csv}


def run_scenario(s: Scenario, out_dir=".", threads: int = 1, tol: float | None = None) -> RunResult:
    """Execute one scenario; errors propagate (``main`` maps them to exit codes)."""
    out_dir = Path(out_dir)
    cfg = s.config()
    if s.command == "bch":
        code, lines, texts = _run_bch(s)
    else:
        fld = _make_field(s.field_name, s.field_params, s.chart)
        conn = _make_connection(s)
        if s.command == "flow":
            code, lines, texts = _run_flow(s, fld, cfg)
        elif s.command == "refgrad":
            code, lines, texts = _run_refgrad(s, fld, conn, cfg)
        else:
            code, lines, texts = _run_verify(s, fld, conn, cfg, threads, tol)
    files = _write_outputs(s, out_dir, texts)
    return RunResult(code, lines, files)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (NumericalFailure, SingularMetric, VanishingField, FloatingPointError, OverflowError)):
        return 3
    if isinstance(exc, (FlowGradError, KeyError, TypeError, ValueError, OSError)):
        return 2
    return 3


def _diagnostic(exc: BaseException, code: int) -> str:
    message = getattr(exc, "message", None) or str(exc).strip("'\"")
    payload = {"error": type(exc).__name__, "exit": code, "message": message}
    for attr in ("location", "line", "column"):
        if getattr(exc, attr, None) is not None:
            payload[attr] = getattr(exc, attr)
    return json.dumps(payload, sort_keys=True)


# --------------------------------------------------------------------------
# Command line


def _parse_json_arg(text: str, name: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"not valid JSON: {exc.msg}", name) from None


def _param_pairs(pairs: list[str] | None) -> dict:
    out = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"expected key=value, got {item!r}", "--param")
        out[key] = _parse_json_arg(value, f"--param {key}")
    return out


def _vec_arg(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def _common_flags(sub: argparse.ArgumentParser, field_required: bool = True) -> None:
    sub.add_argument("--field", required=field_required, help="builtin field name")
    sub.add_argument("--param", action="append", metavar="KEY=JSON", help="field parameter (repeatable)")
    sub.add_argument("--chart", default="cartesian")
    sub.add_argument("--metric")
    sub.add_argument("--method", dest="integrator_method", choices=["rk4", "rk45"], default="rk4")
    sub.add_argument("--step", type=float, help="fixed integrator step")
    sub.add_argument("--csv", help="CSV output path")
    sub.add_argument("--report", help="JSON report output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowgrad", description="Flows of vector fields and their referential gradients.")
    subs = parser.add_subparsers(dest="cmd", required=True)

    run = subs.add_parser("run", help="execute a scenario file")
    run.add_argument("scenario")
    run.add_argument("--out", default=".", help="directory for output files")
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--tol", type=float, help="override the law tolerance")

    flow = subs.add_parser("flow", help="integrate one orbit")
    _common_flags(flow)
    flow.add_argument("--p", type=_vec_arg, required=True, help="reference point t,x,y,z")
    flow.add_argument("--lambda", dest="lam", type=float)
    flow.add_argument("--s-total", type=float)

    rg = subs.add_parser("refgrad", help="compute F(lambda, p)")
    _common_flags(rg)
    rg.add_argument("--p", type=_vec_arg, required=True)
    rg.add_argument("--lambda", dest="lam", type=float, required=True)
    rg.add_argument("--which", choices=REFGRAD_METHODS, default="all")
    rg.add_argument("--h", type=float, default=1e-4)
    rg.add_argument("--N", type=int, default=12)

    ver = subs.add_parser("verify", help="check one law")
    ver.add_argument("law", choices=LAWS)
    _common_flags(ver)
    ver.add_argument("--p", type=_vec_arg)
    ver.add_argument("--lambda", dest="lam", type=float)
    ver.add_argument("--lambda1", type=float)
    ver.add_argument("--lambda2", type=float)
    ver.add_argument("--s-total", type=float)
    ver.add_argument("--N", type=int)
    ver.add_argument("--extra", type=str, help="JSON object merged into params (e.g. transform, target, grid)")
    ver.add_argument("--threads", type=int, default=1)
    ver.add_argument("--tol", type=float)

    bch = subs.add_parser("bch", help="BCH combination of two 4x4 matrices")
    bch.add_argument("--X", required=True, help="4x4 matrix as JSON")
    bch.add_argument("--Y", required=True, help="4x4 matrix as JSON")
    bch.add_argument("--degree", type=int, default=5)
    bch.add_argument("--quintic", choices=["complete", "printed"], default="complete")
    bch.add_argument("--csv")
    bch.add_argument("--report")
    return parser


def _doc_from_flags(args) -> dict:
    """Translate direct-subcommand flags into a scenario document."""
    doc: dict = {}
    if args.cmd == "bch":
        doc = {
            "command": "bch",
            "params": {
                "X": _parse_json_arg(args.X, "--X"),
                "Y": _parse_json_arg(args.Y, "--Y"),
                "degree": args.degree,
                "quintic": args.quintic,
            },
        }
    else:
        doc["command"] = args.cmd
        if args.cmd == "verify":
            doc["law"] = args.law
        doc["chart"] = args.chart
        if args.metric:
            doc["metric"] = args.metric
        doc["field"] = {"name": args.field, "params": _param_pairs(args.param)}
        integrator = {"method": args.integrator_method}
        if args.step is not None:
            integrator["step_size"] = args.step
        doc["integrator"] = integrator
        params: dict = {}
        if getattr(args, "p", None) is not None:
            params["p"] = args.p
        for attr, key in (("lam", "lambda"), ("lambda1", "lambda1"), ("lambda2", "lambda2"), ("s_total", "s_total"), ("N", "N")):
            if getattr(args, attr, None) is not None:
                params[key] = getattr(args, attr)
        if args.cmd == "refgrad":
            params.update(method=args.which, h=args.h)
        if args.cmd == "verify" and args.extra:
            extra = _parse_json_arg(args.extra, "--extra")
            if not isinstance(extra, dict):
                raise ValidationError("expected a JSON object", "--extra")
            params.update(extra)
        if args.cmd == "verify" and args.law == "eulerian":
            doc["command"] = "grid-residual"
            del doc["law"]
        doc["params"] = params
    outputs = {k: getattr(args, k) for k in ("csv", "report") if getattr(args, k, None)}
    if outputs:
        doc["outputs"] = outputs
    return doc


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.cmd == "run":
            try:
                text = Path(args.scenario).read_text(encoding="utf-8")
            except OSError as exc:
                raise ValidationError(f"cannot read scenario: {exc.strerror}", args.scenario) from None
            scenario = parse_scenario(text)
            result = run_scenario(scenario, args.out, args.threads, args.tol)
        else:
            scenario = parse_scenario(json.dumps(_doc_from_flags(args)))
            threads = getattr(args, "threads", 1)
            result = run_scenario(scenario, ".", threads, getattr(args, "tol", None))
    except Exception as exc:  # every failure becomes an exit code plus one diagnostic line
        code = exit_code_for(exc)
        print(_diagnostic(exc, code), file=sys.stderr)
        return code
    for line in result.lines:
        print(line)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
