"""Command-line front-end.

Every command reads JSON files, writes its report to stdout and exits with
0 on success, 1 when validation fails, 2 on unreadable or malformed input
and 3 when an enumeration budget is exceeded.  Errors are reported as JSON
on stderr.  A file argument may also name a shipped bundle (``ex83``).
"""
from __future__ import annotations

import csv
import functools
import io as _io
import itertools
import sys
from importlib import resources
from pathlib import Path

import click
import numpy as np

from . import semantics as sem
from .counterfactual import (BudgetExceeded, CounterfactualError, counterfactual_state,
                             evaluate_counterfactual, id_cf)
from .diagram import DiagramError, to_dot as diagram_dot
from .expression import (Conditional, ExpressionError, Marginal, PStarTables, evaluate_expression,
                         to_dot as expression_dot, to_json as expression_json, to_text)
from .graph import GraphError, active_trail, d_separated, rootify, to_dot as graph_dot
from .identify import IdentificationError, effect_expression, truncated_factorization
from .intervention import InterventionError, apply
from .io import (SchemaError, admg_from_json, dumps, expression_from_json,
                 intervention_from_json, load_json, load_model_file, model_to_json,
                 tables_from_json, tables_to_json, terms_from_json, terms_to_json)
from .model import (ModelError, conditionally_independent, fcm_from_model,
                    full_joint, markov_check, model_from_fcm, output_state)
from .semantics import FinObject, Morphism
from .witnesses import GATE

UNDECIDED = "undecided by implemented criteria"
NOT_IDENTIFIED = "not identified by implemented criteria"


class ValidationFailed(Exception):
    def __init__(self, report):
        super().__init__("validation failed")
        self.report = report


# file handling ------------------------------------------------------------------

def bundle_names() -> list:
    root = resources.files("causal_diagrams") / "bundles"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundle_path(name: str) -> Path:
    return Path(str(resources.files("causal_diagrams") / "bundles" / f"{name}.json"))


def _read(path: str, part: str | None = None):
    p = Path(path)
    if not p.exists() and path in bundle_names():
        p = bundle_path(path)
    js = load_json(p)
    # bundles keep the model, graph and queries side by side
    if part and isinstance(js, dict) and part in js and js.get("kind") == "bundle":
        return js[part]
    return js


def _model(path):
    if path is None:
        raise SchemaError("this command needs --model")
    return load_model_file(_read(path, "model"))


def _admg(path):
    if path is None:
        raise SchemaError("this command needs --admg")
    return admg_from_json(_read(path, "admg"))


def _query(path, key):
    if path is None:
        raise SchemaError("this command needs --query")
    js = _read(path, "query")
    if key not in js:
        raise SchemaError(f"query file has no {key!r} entry")
    return js[key]


def _method(rootify_flag: str) -> str:
    return "rho" if rootify_flag == "rho" else "rho_tilde"


# output -------------------------------------------------------------------------

def table_json(m: Morphism) -> dict:
    return {"dom": [[n, c] for n, c in m.dom.atoms], "cod": [[n, c] for n, c in m.cod.atoms],
            "entries": [float(x) for x in m.array.ravel()]}


def table_rows(m: Morphism) -> list:
    rows = []
    for idx in itertools.product(*[range(c) for c in m.dom.cards + m.cod.cards]):
        rows.append(list(idx) + [float(m.array[idx])])
    return rows


def table_csv(m: Morphism) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(m.dom.names) + list(m.cod.names) + ["p"])
    for row in table_rows(m):
        w.writerow(row[:-1] + [format(row[-1], ".17g")])
    return buf.getvalue()


def table_text(m: Morphism) -> str:
    head = " ".join(m.dom.names) + (" | " if m.dom.names else "") + " ".join(m.cod.names)
    lines = [head + "  p"]
    for row in table_rows(m):
        k = len(m.dom)
        lhs = " ".join(str(v) for v in row[:k])
        rhs = " ".join(str(v) for v in row[k:-1])
        lines.append((lhs + " | " if k else "") + rhs + f"  {row[-1]:.10g}")
    return "\n".join(lines) + "\n"


def emit(obj: dict, fmt: str, table: Morphism | None = None, text: str | None = None):
    if fmt == "csv" and table is not None:
        click.echo(table_csv(table), nl=False)
    elif fmt == "text":
        if text is not None:
            click.echo(text)
        elif table is not None:
            click.echo(table_text(table), nl=False)
        else:
            click.echo(dumps(obj))
    else:
        click.echo(dumps(obj))


def _fail(kind: str, message: str, code: int, extra: dict | None = None):
    err = {"error": kind, "message": message, "exit_code": code}
    if extra:
        err.update(extra)
    click.echo(dumps(err, indent=None), err=True)
    sys.exit(code)


def guarded(fn):
    """Map library exceptions to exit codes and stderr JSON."""
    @functools.wraps(fn)
    def wrapper(*args, **kw):
        try:
            return fn(*args, **kw)
        except ValidationFailed as exc:
            click.echo(dumps(exc.report))
            _fail("validation", "validation failed", 1)
        except BudgetExceeded as exc:
            _fail("budget", str(exc), 3)
        except SchemaError as exc:
            _fail("schema", str(exc), 2)
        except (ModelError, GraphError, DiagramError, InterventionError, ExpressionError,
                IdentificationError, CounterfactualError, sem.CompositionError,
                ValueError, KeyError) as exc:
            _fail("validation", str(exc), 1)
    return wrapper


def common(fn):
    opts = [
        click.option("--model", type=str, default=None, help="Model JSON (or bundle name)."),
        click.option("--admg", type=str, default=None, help="ADMG JSON (or bundle name)."),
        click.option("--query", type=str, default=None, help="Query JSON (or bundle name)."),
        click.option("--data", type=str, multiple=True,
                     help="Tables JSON, or CSV samples for ingest ([X,Y@]path)."),
        click.option("--tol", type=float, default=1e-9, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--format", "fmt", type=click.Choice(["json", "csv", "dot", "text"]),
                     default="json", show_default=True),
        click.option("--rootify", "rootify_flag", type=click.Choice(["rho", "rho-tilde"]),
                     default="rho-tilde", show_default=True),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return guarded(fn)


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Causal models as string diagrams: queries, identification, counterfactuals."""


# validate -----------------------------------------------------------------------

def validate_model_json(js, tol: float) -> dict:
    checks = {}
    try:
        m, fcm = load_model_file(js)
    except ModelError as exc:
        return {"valid": False, "checks": {"structure": False}, "problems": [str(exc)]}
    checks["structure"] = True
    checks["channels"] = all(sem.classify(mech, tol).is_channel for mech in m.mechanisms().values())
    if m.is_closed():
        checks["markov_factorisation"] = markov_check(m, max(tol, 1e-12))
    if fcm is not None:
        derived = model_from_fcm(fcm)
        checks["fcm_matches_mechanisms"] = all(
            derived.mechanism(v).max_diff(m.mechanism(v)) <= tol for v in fcm.variables)
    problems = [k for k, ok in checks.items() if not ok]
    return {"valid": not problems, "checks": checks, "variables": list(m.variables),
            "problems": problems}


@main.command()
@common
def validate(model, admg, query, data, tol, seed, fmt, rootify_flag):
    """Check a model (or graph) file against its invariants."""
    if model is None and admg is None:
        raise SchemaError("validate needs --model or --admg")
    report = {}
    if model is not None:
        report["model"] = validate_model_json(_read(model, "model"), tol)
    if admg is not None:
        try:
            a, cards = _admg(admg)
            report["admg"] = {"valid": True, "vertices": list(a.vertices),
                              "bidirected": [list(e) for e in sorted(a.bidirected)]}
        except GraphError as exc:
            report["admg"] = {"valid": False, "problems": [str(exc)]}
    ok = all(r["valid"] for r in report.values())
    report["valid"] = ok
    if not ok:
        raise ValidationFailed(report)
    emit(report, fmt)


# joint ---------------------------------------------------------------------------

@main.command()
@common
def joint(model, admg, query, data, tol, seed, fmt, rootify_flag):
    """Distribution over the model's outputs (or the query's ``outputs``)."""
    m, _ = _model(model)
    if query is not None:
        m = m.with_outputs(_query(query, "outputs"))
    st = output_state(m)
    emit({"distribution": table_json(st)}, fmt, table=st)


# d-separation and independence ----------------------------------------------------

def _graph_for(model, admg, rootify_flag):
    if model is not None:
        m, _ = _model(model)
        return m.dag, None
    a, _ = _admg(admg)
    if not a.bidirected:
        return a.dag, None
    dag, roots = rootify(a, _method(rootify_flag))
    return dag, roots


@main.command()
@common
def dsep(model, admg, query, data, tol, seed, fmt, rootify_flag):
    """d-separation of Y and Z given W, with an open trail when connected."""
    q = _query(query, "dsep")
    g, _ = _graph_for(model, admg, rootify_flag)
    ys, zs, ws = q.get("Y", []), q.get("Z", []), q.get("W", [])
    sep = d_separated(g, ys, zs, ws)
    out = {"d_separated": sep, "Y": ys, "Z": zs, "W": ws}
    if not sep:
        out["active_trail"] = active_trail(g, ys, zs, ws)
    emit(out, fmt, text=f"{'separated' if sep else 'connected'}")


@main.command()
@common
def ci(model, admg, query, data, tol, seed, fmt, rootify_flag):
    """Conditional independence X ⊥ Y | Z in the model's joint distribution."""
    q = _query(query, "ci")
    m, _ = _model(model)
    xs, ys, zs = q.get("X", []), q.get("Y", []), q.get("Z", [])
    omega = full_joint(m)
    ind = conditionally_independent(omega, xs, ys, zs, tol)
    out = {"independent": ind, "X": xs, "Y": ys, "Z": zs, "tol": tol,
           "d_separated": d_separated(m.dag, xs, ys, zs)}
    emit(out, fmt, text="independent" if ind else "dependent")


# interventions --------------------------------------------------------------------

@main.command()
@common
def intervene(model, admg, query, data, tol, seed, fmt, rootify_flag):
    """Apply a list of interventions; prints the new model and its distribution."""
    m, _ = _model(model)
    sigmas = [intervention_from_json(s, m.cards) for s in _query(query, "intervene")]
    new = apply(m, sigmas)
    st = output_state(new)
    emit({"model": model_to_json(new), "distribution": table_json(st)}, fmt, table=st)


# effect identification ------------------------------------------------------------

def _eta(spec, x, cards):
    if isinstance(spec, (int, np.integer)):
        return int(spec)
    if "do" in spec:
        return int(spec["do"])
    sig = intervention_from_json({**spec, "var": x}, cards)
    return getattr(sig, "eta", None)


def _tables(data):
    if not data:
        return None
    return tables_from_json(_read(data[0], "data"))


def _witness_verdict(js, a, q, tol):
    """Check a cached model pair against the query; returns a report or None.

    The pair must agree on ``P(O)`` within ``tol`` and differ on the
    target by at least the witness gate in some column whose conditioning
    event has probability at least that gate in both models.
    """
    if not isinstance(js, dict) or "witness" not in js:
        return None
    x = q["X"]
    target, given = list(q.get("target", [])), list(q.get("conditioning", []))
    models = [load_model_file(w)[0] for w in js["witness"]["models"]]
    obs = list(a.vertices)
    joints = [sem.marginalize(output_state(m.with_outputs(m.variables)), obs) for m in models]
    gap = joints[0].max_diff(joints[1])
    dist = 0.0
    for value in range(models[0].cards[x]):
        answers = []
        for m in models:
            st = truncated_factorization(m, {x: value})
            j = sem.marginalize(st, given + target)
            gate = sem.marginalize(st, given).array.ravel() if given else np.ones(1)
            answers.append((sem.conditional(j, given) if given else j, gate))
        (t1, g1), (t2, g2) = answers
        tv = 0.5 * np.abs(t1.matrix - t2.matrix).sum(axis=1)
        dist = max(dist, float(tv[(g1 >= GATE) & (g2 >= GATE)].max(initial=0.0)))
    if gap <= tol and dist >= GATE:
        return {"status": "not_identifiable", "observational_gap": gap, "target_distance": dist,
                "message": "a cached model pair agrees on P(O) but not on the effect"}
    return None


@main.command("effect-id")
@common
def effect_id(model, admg, query, data, tol, seed, fmt, rootify_flag):
    """Identify an interventional effect through the c-component criterion."""
    a, cards = _admg(admg)
    q = _query(query, "effect_id")
    x = q["X"]
    eta = _eta(q.get("eta", {"do": 0}), x, cards)
    res = effect_expression(a, x, eta, cards, seed=seed, method=_method(rootify_flag))
    if res is None:
        verdict = _witness_verdict(_read(admg), a, q, tol)
        out = verdict or {"status": "undecided", "message": UNDECIDED}
        emit(out, fmt, text=out.get("message", out["status"]))
        return
    p, expr = res
    target, given = list(q.get("target", [])), list(q.get("conditioning", []))
    if target or given:
        expr = Marginal(expr, tuple(given + target))
        if given:
            expr = Conditional(expr, tuple(given))
    roster = tuple((v, cards[v]) for v in a.vertices)
    out = {"status": "identifiable",
           "partition": {"A": list(p.a), "B": list(p.b), "C": list(p.c)},
           "text": to_text(expr), "expression": expression_json(expr),
           "roster": [[n, c] for n, c in roster]}
    tabs = _tables(data)
    if tabs is not None:
        out["value"] = table_json(evaluate_expression(expr, tabs))
    emit(out, fmt, text=out["text"])


# counterfactuals -----------------------------------------------------------------

@main.command("cf-id")
@common
def cf_id(model, admg, query, data, tol, seed, fmt, rootify_flag):
    """Identify a counterfactual from interventional tables, or report FAIL."""
    a, cards = _admg(admg)
    terms = terms_from_json(_query(query, "cf"))
    tabs = _tables(data)
    res = id_cf(a, terms, tabs, cards=cards, seed=seed, method=_method(rootify_flag))
    if not res:
        out = {"status": "FAIL", "reason": res.reason, "detail": res.detail,
               "message": NOT_IDENTIFIED}
        emit(out, fmt, text=f"FAIL[{res.reason}]: {res.detail}")
        return
    roster = tuple((v, cards[v]) for v in a.vertices)
    out = {"status": "identifiable", "text": to_text(res.expression),
           "expression": expression_json(res.expression),
           "roster": [[n, c] for n, c in roster],
           "fragments": [list(f.observed) for f in res.fragments]}
    if tabs is not None:
        out["value"] = table_json(evaluate_expression(res.expression, tabs))
    if fmt == "dot":
        click.echo(expression_dot(res.expression), nl=False)
        return
    emit(out, fmt, text=out["text"])


@main.command("cf-eval")
@common
def cf_eval(model, admg, query, data, tol, seed, fmt, rootify_flag):
    """Evaluate a counterfactual on an explicit functional model."""
    m, fcm = _model(model)
    if fcm is None:
        fcm = fcm_from_model(m)
    js = _read(query, "query") if query else {}
    terms = terms_from_json(js.get("cf_eval", js.get("cf")) if isinstance(js, dict) else None)
    raw = evaluate_counterfactual(fcm, terms, normalised=False)
    st = sem.normalize(raw)
    out = {"distribution": table_json(st), "evidence_probability": float(raw.array.sum()),
           "query": terms_to_json(terms)}
    emit(out, fmt, table=st)


# export -------------------------------------------------------------------------

@main.command("export-dot")
@common
def export_dot(model, admg, query, data, tol, seed, fmt, rootify_flag):
    """DOT text for a model diagram, a graph, a counterfactual diagram or an expression."""
    if query is not None:
        js = _read(query, "query")
        if "expression" in js:
            expr, _ = expression_from_json(js)
            click.echo(expression_dot(expr), nl=False)
            return
        if "cf" in js or "cf_eval" in js:
            _, fcm = _model(model)
            fcm = fcm or fcm_from_model(_model(model)[0])
            terms = terms_from_json(js.get("cf_eval", js.get("cf")))
            click.echo(diagram_dot(counterfactual_state(fcm, terms).diagram, "CF"), nl=False)
            return
    if model is not None:
        m, _ = _model(model)
        click.echo(diagram_dot(m.diagram), nl=False)
        return
    if admg is not None:
        a, _ = _admg(admg)
        click.echo(graph_dot(a), nl=False)
        return
    raise SchemaError("export-dot needs --model, --admg or --query")


# ingestion -----------------------------------------------------------------------

def _read_samples(path: str) -> tuple:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path}: empty sample file")
    header = [h.strip() for h in rows[0]]
    try:
        body = np.array([[int(v) for v in r] for r in rows[1:] if r], dtype=np.int64)
    except ValueError as exc:
        raise SchemaError(f"{path}: samples must be integer codes ({exc})") from exc
    if body.size and (body.ndim != 2 or body.shape[1] != len(header)):
        raise SchemaError(f"{path}: ragged rows")
    if body.size and body.min() < 0:
        raise SchemaError(f"{path}: negative codes")
    return header, body.reshape(-1, len(header))


def frequency_table(header, body, roster, doset) -> Morphism:
    """``P(rest | doset)`` from counts; unseen do-values give zero columns."""
    cards = dict(roster)
    names = [n for n, _ in roster]
    xs = [n for n in names if n in doset]
    rest = [n for n in names if n not in doset]
    col = {h: k for k, h in enumerate(header)}
    missing = [n for n in names if n not in col]
    if missing:
        raise SchemaError(f"samples lack columns {missing}")
    shape = tuple(cards[n] for n in xs + rest)
    counts = np.zeros(shape)
    for row in body:
        idx = tuple(int(row[col[n]]) for n in xs + rest)
        if any(i >= s for i, s in zip(idx, shape)):
            raise SchemaError(f"sample value out of range: {dict(zip(xs + rest, idx))}")
        counts[idx] += 1
    dom = FinObject(tuple((n, cards[n]) for n in xs))
    cod = FinObject(tuple((n, cards[n]) for n in rest))
    return sem.normalize(Morphism(dom, cod, counts, check=False))


@main.command()
@common
def ingest(model, admg, query, data, tol, seed, fmt, rootify_flag):
    """Estimate P(O) (and P(O\\X ; do X) from experiments) by frequencies."""
    if not data:
        raise SchemaError("ingest needs --data samples.csv (and optional X,Y@file.csv)")
    parsed = []
    for spec in data:
        doset, _, path = spec.rpartition("@")
        header, body = _read_samples(path)
        parsed.append(([d for d in doset.split(",") if d], header, body))
    if admg is not None:
        a, cards = _admg(admg)
        roster = tuple((v, cards[v]) for v in a.vertices)
    else:
        header = parsed[0][1]
        maxima = np.zeros(len(header), dtype=int)
        for _, h, body in parsed:
            if body.size:
                for k, n in enumerate(h):
                    if n in header:
                        maxima[header.index(n)] = max(maxima[header.index(n)], body[:, k].max())
        roster = tuple((n, max(2, int(mx) + 1)) for n, mx in zip(header, maxima))
    tables = {}
    for doset, header, body in parsed:
        tables[frozenset(doset)] = frequency_table(header, body, roster, set(doset))
    out = tables_to_json(PStarTables(roster, tables))
    out["samples"] = {",".join(d) or "observational": int(b.shape[0]) for d, _, b in parsed}
    emit(out, fmt)


if __name__ == "__main__":
    main()
