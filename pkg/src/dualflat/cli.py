"""Command-line entry point: validate a JSON job, run it, emit a result document.

Usage::

    dualflat <command> --spec job.json [--out FILE] [--format json|csv]
                       [--tolerance T] [--step H] [--p 1,2] [--q 3,4]

Exit status is 0 on success, 2 when the job fails validation and 3 when the
computation itself fails.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from jsonschema import Draft202012Validator

from .checks import available_suites, run_suites
from .divergence import bregman, dual_bregman, mixed_bregman
from .dually_flat import (
    AffineSubmanifold,
    dual_geodesic_projection,
    geodesic_projection,
    orthogonality_defect,
    pythagoras_residual,
)
from .errors import (
    DegeneracyError,
    DualFlatError,
    IntegrationError,
    UnreachableError,
    ValidationError,
)
from .families import FamilySpec, log_partition
from .generator import GeneratorSpec, dual_value, from_dual, to_dual
from .riemannian import (
    PSEUDO,
    RIEMANNIAN,
    MetricField,
    arc_length,
    christoffel,
    geodesic_connect,
    geodesic_shoot,
    metric_from_generator,
)

COMMANDS = ("divergence", "legendre", "metric", "geodesic", "distance", "project", "check")
CSV_COMMANDS = ("geodesic", "distance")
GENERATOR_COMMANDS = ("divergence", "legendre", "project", "check")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

DEFAULTS = {
    "geodesic": {"t_end": 1.0, "step": 1e-3},
    "distance": {"step": 1e-2, "tolerance": 1e-7},
    "project": {"projection": "geodesic", "probe": 0.1, "tolerance": 1e-12},
    "check": {"samples": 20, "seed": 0},
}

REQUIRED = {
    "divergence": ("p", "q"),
    "legendre": ("p",),
    "metric": ("p",),
    "geodesic": ("p", "v"),
    "distance": ("p", "q"),
    "project": ("p", "submanifold"),
    "check": (),
}


def _schema(name: str) -> dict:
    text = resources.files("dualflat").joinpath("schemas", name).read_text(encoding="utf-8")
    return json.loads(text)


JOB_SCHEMA = _schema("job.schema.json")
RESULT_SCHEMA = _schema("result.schema.json")


def result_validator(command: str) -> Draft202012Validator:
    """Validator for the result document of ``command`` (or ``"error"``)."""
    schema = dict(RESULT_SCHEMA)
    schema["$ref"] = f"#/$defs/{command}"
    return Draft202012Validator(schema)


# -- expressions -------------------------------------------------------------


def _symbols(dim):
    import sympy

    names = {f"x{i}": sympy.Symbol(f"x{i}", real=True) for i in range(dim)}
    if dim == 1:
        names["x"] = names["x0"]
    return names


def _parse(text, dim, pointer, errors):
    import sympy
    from sympy.parsing.sympy_parser import parse_expr

    names = _symbols(dim)
    try:
        expr = parse_expr(text, local_dict=dict(names), evaluate=True)
    except Exception as exc:  # parse_expr raises many unrelated types
        errors.append((pointer, f"cannot parse expression {text!r}: {exc}"))
        return None
    if not isinstance(expr, sympy.Expr):
        errors.append((pointer, f"{text!r} is not a scalar expression"))
        return None
    unknown = sorted(str(s) for s in expr.free_symbols if s not in set(names.values()))
    if unknown:
        allowed = ", ".join(f"x{i}" for i in range(dim))
        errors.append((pointer, f"unknown symbols {unknown}; variables are {allowed}"))
        return None
    return expr


def _compile(exprs, dim):
    """Vectorised evaluator of an array of sympy expressions at a point."""
    import sympy

    xs = [sympy.Symbol(f"x{i}", real=True) for i in range(dim)]
    arr = np.asarray(exprs, dtype=object)
    f = sympy.lambdify(xs, arr.reshape(-1).tolist(), modules="numpy")
    shape = arr.shape

    def evaluate(x):
        # overflow shows up as inf/nan, which the solvers already reject
        with np.errstate(all="ignore"):
            vals = f(*np.asarray(x, dtype=float))
        return np.array([float(v) for v in vals]).reshape(shape)

    return evaluate


def _domain_guard(domain, dim, errors):
    if not domain:
        return None
    exprs = [_parse(t, dim, f"/manifold/domain/{i}", errors) for i, t in enumerate(domain)]
    if any(e is None for e in exprs):
        return None
    ev = _compile(exprs, dim)

    def guard(x):
        return bool(np.all(ev(x) > 0))

    return guard


def custom_generator(text: str, dim: int, domain=None, reference=None, errors=None) -> Optional[GeneratorSpec]:
    """Generator from a potential expression in ``x0 .. x{dim-1}``.

    Gradient, Hessian and third derivatives are differentiated symbolically.
    """
    import sympy

    errors = [] if errors is None else errors
    expr = _parse(text, dim, "/manifold/potential", errors)
    guard = _domain_guard(domain, dim, errors)
    if expr is None or errors:
        return None
    xs = [sympy.Symbol(f"x{i}", real=True) for i in range(dim)]
    grad = [sympy.diff(expr, a) for a in xs]
    hess = [[sympy.diff(g, b) for b in xs] for g in grad]
    third = [[[sympy.diff(h, c) for h in row] for row in hess] for c in xs]
    value = _compile([expr], dim)
    return GeneratorSpec(
        dim=dim,
        value=lambda x: float(value(x)[0]),
        gradient=_compile(grad, dim),
        hessian=_compile(hess, dim),
        third=_compile(third, dim),
        domain_guard=guard,
        reference=None if reference is None else np.asarray(reference, dtype=float),
        name="custom",
    )


def custom_metric(rows, signature, domain=None, errors=None) -> Optional[MetricField]:
    """Metric field from a matrix of expressions; partials by finite differences."""
    errors = [] if errors is None else errors
    dim = len(rows)
    exprs = []
    for i, row in enumerate(rows):
        if len(row) != dim:
            errors.append((f"/manifold/fundamental/{i}", f"row has {len(row)} entries, expected {dim}"))
            continue
        exprs.append([_parse(t, dim, f"/manifold/fundamental/{i}/{j}", errors) for j, t in enumerate(row)])
    guard = _domain_guard(domain, dim, errors)
    if errors:
        return None
    return MetricField(
        dim=dim,
        fundamental=_compile(exprs, dim),
        signature=signature,
        domain_guard=guard,
        source="user",
    )


# -- jobs --------------------------------------------------------------------


@dataclass
class Job:
    command: str
    arguments: Dict[str, Any]
    family: Optional[FamilySpec] = None
    metric: Optional[MetricField] = None
    output_path: Optional[str] = None
    output_format: str = "json"
    raw: Dict[str, Any] = field(default_factory=dict)

    @property
    def gen(self) -> Optional[GeneratorSpec]:
        return None if self.family is None else log_partition(self.family)

    @property
    def dim(self) -> int:
        return self.metric.dim if self.family is None else self.family.dim


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def _schema_errors(doc) -> List[Tuple[str, str]]:
    validator = Draft202012Validator(JOB_SCHEMA)
    errs = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    out = []
    for e in errs:
        ptr = _pointer(e.absolute_path)
        if list(e.absolute_path) == ["command"] and e.validator == "enum":
            out.append((ptr, f"unknown command {e.instance!r}; allowed commands: {', '.join(COMMANDS)}"))
        else:
            out.append((ptr, e.message))
    return out


def _build_manifold(m, errors):
    kind = m["kind"]
    if kind == "metric":
        sig = m.get("signature", RIEMANNIAN)
        return None, custom_metric(m["fundamental"], sig, m.get("domain"), errors)
    dim = m.get("dim", 1)
    if "reference" in m and len(m["reference"]) != dim:
        errors.append(("/manifold/reference", f"has length {len(m['reference'])}, expected {dim}"))
    if kind == "custom":
        gen = custom_generator(m["potential"], dim, m.get("domain"), m.get("reference"), errors)
        if gen is None:
            return None, None
        if gen.reference is not None and not gen.contains(gen.reference):
            errors.append(("/manifold/reference", "reference point is outside the domain"))
        return FamilySpec("custom", dim, generator=gen), None
    for key in ("potential", "fundamental", "domain", "signature", "reference"):
        if key in m:
            errors.append((f"/manifold/{key}", f"not allowed for kind {kind!r}"))
    return FamilySpec(kind, dim, m.get("variance", 1.0)), None


def _check_arguments(job: Job, errors):
    args = job.arguments
    cmd = job.command
    dim = job.dim
    for key in REQUIRED[cmd]:
        if key not in args:
            errors.append(("/arguments", f"command {cmd!r} requires {key!r}"))
    for key in ("p", "q", "v"):
        if key in args and len(args[key]) != dim:
            errors.append((f"/arguments/{key}", f"has length {len(args[key])}, manifold has dimension {dim}"))
    sub = args.get("submanifold")
    if sub is not None:
        if len(sub["offset"]) != dim:
            errors.append(("/arguments/submanifold/offset", f"has length {len(sub['offset'])}, expected {dim}"))
        basis = sub.get("basis", [])
        for i, b in enumerate(basis):
            if len(b) != dim:
                errors.append((f"/arguments/submanifold/basis/{i}", f"has length {len(b)}, expected {dim}"))
        for key in ("lower", "upper"):
            if key in sub and len(sub[key]) != len(basis):
                errors.append(
                    (f"/arguments/submanifold/{key}", f"has length {len(sub[key])}, expected {len(basis)}")
                )
        if not errors:
            try:
                _submanifold(sub)
            except ValueError as exc:
                errors.append(("/arguments/submanifold", str(exc)))
    if "suites" in args and job.family is not None:
        allowed = available_suites(job.family)
        for i, name in enumerate(args["suites"]):
            if name not in allowed:
                errors.append((f"/arguments/suites/{i}", f"unknown suite {name!r}; available: {', '.join(allowed)}"))
    if cmd in GENERATOR_COMMANDS and job.family is None:
        errors.append(("/manifold/kind", f"command {cmd!r} needs a generator, not a bare metric"))
    if cmd == "distance" and job.metric is not None and job.metric.signature == PSEUDO:
        errors.append(("/manifold/signature", "distance is defined only for riemannian metrics"))
    if job.output_format == "csv" and cmd not in CSV_COMMANDS:
        errors.append(("/output/format", f"csv output is available for {', '.join(CSV_COMMANDS)} only"))
    # domain membership of explicit points
    inside = job.gen.contains if job.family is not None else (job.metric.contains if job.metric else None)
    if inside is not None:
        for key in ("p", "q"):
            if key in args and len(args[key]) == dim and not inside(np.asarray(args[key], dtype=float)):
                errors.append((f"/arguments/{key}", "point is outside the domain"))


def validate(job_text, overrides: Optional[Dict[str, Any]] = None) -> Job:
    """Parse and fully validate a job document; raise ValidationError listing every violation.

    ``overrides`` may carry a ``command`` and entries merged into ``arguments``
    or ``output`` before validation.
    """
    if isinstance(job_text, (bytes, bytearray)):
        try:
            job_text = job_text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ValidationError([("", f"job is not UTF-8: {exc}")])
    try:
        doc = json.loads(job_text)
    except json.JSONDecodeError as exc:
        raise ValidationError([("", f"invalid JSON: {exc}")])
    if not isinstance(doc, dict):
        raise ValidationError([("", "job must be a JSON object")])
    overrides = overrides or {}
    errors: List[Tuple[str, str]] = list(overrides.get("errors", []))
    if "command" in overrides:
        if "command" in doc and doc["command"] != overrides["command"]:
            errors.append(("/command", f"job declares {doc['command']!r} but {overrides['command']!r} was requested"))
        doc.setdefault("command", overrides["command"])
    if overrides.get("arguments"):
        if not isinstance(doc.get("arguments", {}), dict):
            errors.append(("/arguments", "must be an object"))
        else:
            doc["arguments"] = {**doc.get("arguments", {}), **overrides["arguments"]}
    if overrides.get("output"):
        if isinstance(doc.get("output", {}), dict):
            doc["output"] = {**doc.get("output", {}), **overrides["output"]}

    errors += _schema_errors(doc)
    if errors:
        raise ValidationError(errors)

    family, metric = _build_manifold(doc["manifold"], errors)
    if errors:
        raise ValidationError(errors)
    cmd = doc["command"]
    out = doc.get("output", {})
    args = {**DEFAULTS.get(cmd, {}), **doc.get("arguments", {})}
    job = Job(cmd, args, family, metric, out.get("path"), out.get("format", "json"), doc)
    _check_arguments(job, errors)
    if errors:
        raise ValidationError(errors)
    return job


# -- running -----------------------------------------------------------------


def _vec(a) -> np.ndarray:
    return np.asarray(a, dtype=float)


def _metric(job: Job) -> MetricField:
    return job.metric if job.family is None else metric_from_generator(job.gen)


def _run_divergence(job):
    gen, a = job.gen, job.arguments
    p, q = _vec(a["p"]), _vec(a["q"])
    return {
        "value": bregman(gen, p, q),
        "dual_value": dual_bregman(gen, p, q),
        "mixed_value": mixed_bregman(gen, p, to_dual(gen, q)),
    }


def _run_legendre(job):
    gen = job.gen
    p = _vec(job.arguments["p"])
    d = to_dual(gen, p)
    back = from_dual(gen, d)
    return {
        "point": p,
        "dual_point": d,
        "value": gen.psi(p),
        "dual_value": dual_value(gen, d),
        "roundtrip_error": float(np.max(np.abs(back - p))),
    }


def _run_metric(job):
    metric = _metric(job)
    p = metric.check(_vec(job.arguments["p"]))
    return {
        "point": p,
        "signature": metric.signature,
        "fundamental": metric.matrix(p),
        "inverse": metric.inverse(p),
        "christoffel": christoffel(metric, p),
    }


def _polyline(sol):
    dim = sol.points.shape[1]
    columns = ["t", *(f"xi{i}" for i in range(dim)), "kinetic"]
    rows = np.column_stack([sol.times, sol.points, sol.kinetic])
    return columns, rows


def _run_geodesic(job):
    a = job.arguments
    sol = geodesic_shoot(_metric(job), (_vec(a["p"]), _vec(a["v"])), a["t_end"], a["step"])
    columns, rows = _polyline(sol)
    return {"terminal": sol.terminal, "columns": columns, "rows": rows}, sol


def _run_distance(job):
    a = job.arguments
    metric = _metric(job)
    p, q = _vec(a["p"]), _vec(a["q"])
    try:
        sol = geodesic_connect(metric, p, q, step=a["step"], tol=a["tolerance"])
    except (UnreachableError, IntegrationError, DegeneracyError):
        return {"distance": None, "reachable": False, "initial_velocity": None}, None
    return {
        "distance": arc_length(metric, sol),
        "reachable": True,
        "initial_velocity": sol.velocities[0],
    }, sol


def _submanifold(spec) -> AffineSubmanifold:
    basis = np.asarray(spec.get("basis", []), dtype=float).reshape(-1, len(spec["offset"])).T
    return AffineSubmanifold(spec["chart"], spec["offset"], basis, spec.get("lower"), spec.get("upper"))


def _probe(gen, sub, u, probe):
    """A second point of ``sub``, ``probe`` away from ``u`` in each coordinate, halved until valid."""
    if sub.m == 0:
        return sub.point(gen, u)
    step = probe
    for _ in range(60):
        try:
            return sub.point(gen, u + step)
        except DualFlatError:
            step *= 0.5
    return sub.point(gen, u)


def _run_project(job):
    gen, a = job.gen, job.arguments
    sub = _submanifold(a["submanifold"])
    p = _vec(a["p"])
    dual = a["projection"] == "dual_geodesic"
    project = dual_geodesic_projection if dual else geodesic_projection
    q = project(gen, p, sub, tol=a["tolerance"])
    r = _probe(gen, sub, sub.coordinates(gen, q), a["probe"])
    D = dual_bregman if dual else bregman
    tri = (p, q, r)
    return {
        "projected_point": q,
        "divergence": D(gen, p, q),
        "orthogonality_defect": orthogonality_defect(gen, tri, dual),
        "pythagoras_residual": pythagoras_residual(gen, tri, dual),
        "probe_point": r,
    }


def _run_check(job):
    a = job.arguments
    results = run_suites(
        job.family, a.get("suites"), samples=a["samples"], seed=a["seed"], tolerance=a.get("tolerance")
    )
    return {
        "passed": all(r.passed for r in results),
        "suites": [
            {
                "name": r.name,
                "passed": r.passed,
                "max_residual": r.max_residual,
                "tolerance": r.tolerance,
                "samples": r.samples,
            }
            for r in results
        ],
    }


_RUNNERS = {
    "divergence": _run_divergence,
    "legendre": _run_legendre,
    "metric": _run_metric,
    "geodesic": _run_geodesic,
    "distance": _run_distance,
    "project": _run_project,
    "check": _run_check,
}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format(obj, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (list, dict)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = (f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items())
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(doc) -> str:
    """Deterministic JSON: insertion key order, 17 significant digits, non-finite as null."""
    return _encode(_plain(doc), 2, 0) + "\n"


def to_csv(columns, rows) -> str:
    """Header row plus one line per sample, floats in shortest round-trip form."""
    buf = io.StringIO()
    buf.write(",".join(columns) + "\n")
    for row in np.asarray(rows, dtype=float):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def run(job: Job) -> Tuple[int, str]:
    """Execute a validated job; return the exit status and the rendered output."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            outcome = _RUNNERS[job.command](job)
    except (DualFlatError, np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
        return EXIT_NUMERICAL, error_document([("", str(exc))], kind=type(exc).__name__)
    sol = None
    if isinstance(outcome, tuple):
        outcome, sol = outcome
    doc = _plain(outcome)
    result_validator(job.command).validate(doc)
    if job.output_format == "csv":
        if sol is None:
            return EXIT_OK, to_csv(["t"], np.zeros((0, 1)))
        return EXIT_OK, to_csv(*_polyline(sol))
    return EXIT_OK, dumps(doc)


def error_document(errors, kind=None) -> str:
    items = []
    for path, message in errors:
        item = {"path": path, "message": message}
        if kind is not None:
            item["kind"] = kind
        items.append(item)
    return dumps({"errors": items})


def _reals(text, pointer, errors):
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        errors.append((pointer, f"expected comma-separated reals, got {text!r}"))
        return None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualflat", description="Dually flat geometry computations from JSON jobs.")
    parser.add_argument("command", help=f"one of: {', '.join(COMMANDS)}")
    parser.add_argument("--spec", required=True, help="job JSON file, or '-' for standard input")
    parser.add_argument("--out", help="write the result here instead of standard output")
    parser.add_argument("--format", choices=("json", "csv"))
    parser.add_argument("--tolerance", type=float)
    parser.add_argument("--step", type=float)
    parser.add_argument("--p", help="override arguments.p, comma-separated")
    parser.add_argument("--q", help="override arguments.q, comma-separated")
    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    errors: List[Tuple[str, str]] = []
    if ns.command not in COMMANDS:
        errors.append(("/command", f"unknown command {ns.command!r}; allowed commands: {', '.join(COMMANDS)}"))
    arguments: Dict[str, Any] = {}
    for key in ("tolerance", "step"):
        if getattr(ns, key) is not None:
            arguments[key] = getattr(ns, key)
    for key in ("p", "q"):
        text = getattr(ns, key)
        if text is not None:
            vals = _reals(text, f"/arguments/{key}", errors)
            if vals is not None:
                arguments[key] = vals
    output = {k: v for k, v in (("path", ns.out), ("format", ns.format)) if v is not None}
    try:
        if ns.spec == "-":
            text = sys.stdin.buffer.read()
        else:
            with open(ns.spec, "rb") as fh:
                text = fh.read()
    except OSError as exc:
        errors.append(("", f"cannot read job: {exc}"))
        text = b"{}"
    try:
        if errors:
            raise ValidationError(errors)
        overrides = {"arguments": arguments, "output": output}
        if ns.command in COMMANDS:
            overrides["command"] = ns.command
        job = validate(text, overrides)
    except ValidationError as exc:
        sys.stderr.write(error_document(exc.errors))
        return EXIT_INVALID
    status, rendered = run(job)
    if status != EXIT_OK:
        sys.stderr.write(rendered)
        return status
    if job.output_path:
        with open(job.output_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(rendered)
    else:
        sys.stdout.write(rendered)
    return status


if __name__ == "__main__":
    sys.exit(main())
