"""Command-line front end.

Exit codes: 0 success, 1 input error, 2 solver failure (infeasible,
unbounded, inaccurate) or failed checks.
"""

from __future__ import annotations

import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Any

import click
import numpy as np

from . import __version__
from . import apps
from . import entropy as en
from . import io
from . import netmodel as nm
from . import verify as vf
from .errors import LayoutError, NotPSDError, QnetError, SolverError

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2
TASKS = ("max_score", "d_max_to_set", "min_entropy_state", "min_entropy_network", "min_entropy_test", "d_max_pair")
SETS = ("comb", "dual_comb", "tester", "nosig", "dual_nosig")


def _seed(option: int | None) -> int:
    if option is not None:
        return option
    env = os.environ.get("QNET_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise click.UsageError(f"QNET_SEED must be an integer, got {env!r}") from None


def _finite(x: float) -> float | str:
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _emit(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        click.echo(text)


def _fail(msg: str, code: int) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


# ---------------------------------------------------------------------------
# problem files


def _objective(problem: dict, layout, base: Path) -> tuple[nm.LabeledOperator, list[bytes]]:
    obj = problem.get("objective")
    blobs: list[bytes] = []
    if not isinstance(obj, dict):
        raise io.InputError("objective: expected an object with 'builder', 'matrix' or 'inline'")
    if "builder" in obj:
        params = obj.get("params", {})
        if not isinstance(params, dict):
            raise io.InputError("objective.params: expected an object")
        try:
            spec = apps.get_app(obj["builder"])
        except KeyError as exc:
            raise io.InputError(f"objective.builder: {exc.args[0]}") from None
        d = params.get("d", spec.default_d)
        if isinstance(d, bool) or not isinstance(d, int):
            raise io.InputError("objective.params.d: expected an integer")
        try:
            om = spec.omega(d)
        except LayoutError as exc:
            raise io.InputError(f"objective.params.d: {exc}") from None
        if layout is not None:
            if sorted(layout.labels) != sorted(om.labels):
                raise io.InputError("layout: labels differ from the builder's systems")
            om = nm.LabeledOperator(layout, om.aligned(layout))
        return om, blobs
    if "matrix" in obj:
        path = base / obj["matrix"]
        blobs.append(path.read_bytes() if path.is_file() else b"")
        return io.load_operator(io.read_json(path), layout, "objective.matrix"), blobs
    if "inline" in obj:
        return io.load_operator(obj["inline"], layout, "objective.inline"), blobs
    raise io.InputError("objective: expected one of 'builder', 'matrix', 'inline'")


def _parties(problem: dict, layout):
    fs = problem.get("feasible_set")
    raw = fs.get("parties") if isinstance(fs, dict) else None
    if raw is None:
        ins = [s for s in layout if s.role == "in"]
        outs = [s for s in layout if s.role == "out"]
        if len(ins) != len(outs):
            raise io.InputError("feasible_set.parties: cannot pair inputs and outputs; list the parties")
        return [nm.Party(i.label, o.label, i.dim, o.dim) for i, o in zip(ins, outs)]
    if not isinstance(raw, list):
        raise io.InputError("feasible_set.parties: expected a list of [in_label, out_label]")
    parties = []
    for k, p in enumerate(raw):
        if not (isinstance(p, list) and len(p) == 2 and all(isinstance(s, str) for s in p)):
            raise io.InputError(f"feasible_set.parties[{k}]: expected [in_label, out_label]")
        try:
            parties.append(nm.Party(p[0], p[1], layout.system(p[0]).dim, layout.system(p[1]).dim))
        except LayoutError as exc:
            raise io.InputError(f"feasible_set.parties[{k}]: {exc}") from None
    return parties


def _constraint_set(problem: dict, layout) -> nm.ConstraintSet:
    fs = problem.get("feasible_set")
    kind = fs.get("kind") if isinstance(fs, dict) else fs
    if kind not in SETS:
        raise io.InputError(f"feasible_set: expected one of {list(SETS)}, got {kind!r}")
    try:
        if kind == "comb":
            return nm.comb_constraints(layout)
        if kind == "dual_comb":
            return nm.dual_comb_constraints(layout)
        if kind == "tester":
            outcomes = problem.get("outcomes", 2)
            if isinstance(outcomes, bool) or not isinstance(outcomes, int):
                raise io.InputError("outcomes: expected an integer")
            return nm.tester_constraints(layout, outcomes)
        parties = _parties(problem, layout)
        if kind == "nosig":
            return nm.nosig_constraints(parties, layout)
        return nm.dual_nosig_constraints(parties, layout)
    except LayoutError as exc:
        raise io.InputError(f"feasible_set: {exc}") from None


def _partner(cs: nm.ConstraintSet, problem: dict, layout) -> nm.ConstraintSet:
    if cs.kind == "Comb":
        return nm.dual_comb_constraints(layout)
    if cs.kind == "DualComb":
        return nm.comb_constraints(layout)
    if cs.kind in ("NoSig", "DualNoSig"):
        nosig = nm.nosig_constraints(_parties(problem, layout), layout)
        return nosig if cs.kind == "DualNoSig" else nm.dual_constraints(nosig)
    raise io.InputError(f"task max_score is not defined over {cs.kind}")


def _certs(sol) -> dict:
    if sol is None:
        return {}
    return {"status": sol.status, "residual_primal": sol.residual_primal,
            "residual_dual": sol.residual_dual, "gap": sol.gap, "iterations": sol.iterations}


def run_problem(problem: dict, base: Path, use_dual: bool, tol: float | None) -> tuple[dict, int]:
    if not isinstance(problem, dict):
        raise io.InputError("problem: expected a JSON object")
    task = problem.get("task")
    if task not in TASKS:
        raise io.InputError(f"task: expected one of {list(TASKS)}, got {task!r}")
    options = problem.get("options", {})
    if not isinstance(options, dict):
        raise io.InputError("options: expected an object")
    solver_tol = tol if tol is not None else options.get("tol", en.DEFAULT_TOL)
    layout = io.load_layout(problem["layout"]) if "layout" in problem else None
    omega, blobs = _objective(problem, layout, base)
    layout = omega.layout if layout is None else layout
    report: dict[str, Any] = {"task": task}
    witness = None
    status = "optimal"
    if task == "max_score":
        cs = _constraint_set(problem, layout)
        res = en.max_score(omega, cs, _partner(cs, problem, layout), solver_tol)
        report.update(primal_value=res.omega_max, dual_value=res.dual_lambda, gap=res.gap,
                      value=res.dual_lambda if use_dual else res.omega_max,
                      bits=_finite(math.log2(res.dual_lambda)) if res.dual_lambda > 0 else "-inf",
                      certificates={"primal": _certs(res.primal_solution), "dual": _certs(res.dual_solution)})
        witness = res.dual_gamma if use_dual else res.optimal_network
        statuses = [res.primal_solution.status, res.dual_solution.status if res.dual_solution else "optimal"]
        status = "optimal" if all(s == "optimal" for s in statuses) else statuses[0]
    elif task == "d_max_pair":
        ref = problem.get("reference")
        if ref is None:
            raise io.InputError("reference: required for d_max_pair")
        if isinstance(ref, str):
            blobs.append((base / ref).read_bytes() if (base / ref).is_file() else b"")
            ref = io.read_json(base / ref)
        b = io.load_operator(ref, layout, "reference")
        ent = en.d_max_pair(omega.op, b.op)
        report.update(value=ent.lam, bits=_finite(ent.bits))
    else:
        if task == "d_max_to_set":
            ent = en.d_max_to_set(omega, _constraint_set(problem, layout), solver_tol)
        elif task == "min_entropy_state":
            cond = problem.get("conditioning")
            if not (isinstance(cond, list) and cond and all(isinstance(s, str) for s in cond)):
                raise io.InputError("conditioning: expected a non-empty list of labels")
            try:
                ent = en.cond_min_entropy_state(omega, tuple(cond), solver_tol)
            except LayoutError as exc:
                raise io.InputError(f"conditioning: {exc}") from None
        elif task == "min_entropy_network":
            ent = en.network_min_entropy(omega, layout, solver_tol)
        else:
            ent = en.test_min_entropy(omega, layout, solver_tol)
        sol = ent.details.get("solution")
        report.update(value=ent.lam, bits=_finite(ent.bits), certificates=_certs(sol))
        for key in ("p_max", "f_max"):
            if key in ent.details:
                report[key] = ent.details[key]
        witness = ent.witness
        status = sol.status if sol is not None else "optimal"
    report["status"] = status
    if witness is not None and problem.get("emit_witness", False):
        report["witness"] = io.matrix_to_dict(witness)
    report["_blobs"] = blobs
    return report, EXIT_OK if status == "optimal" else EXIT_SOLVER


# ---------------------------------------------------------------------------
# commands


@click.group()
@click.version_option(__version__, prog_name="qnetopt")
def main() -> None:
    """Optimize quantum networks against performance operators."""


@main.command()
@click.option("-f", "--file", "path", required=True, type=click.Path(), help="Problem JSON file.")
@click.option("--dual", "use_dual", is_flag=True, help="Report the dual (certificate) value.")
@click.option("--out", type=click.Path(), default=None, help="Write the report here instead of stdout.")
@click.option("--tol", type=float, default=None, help="Solver tolerance.")
@click.option("--witness", is_flag=True, help="Include the optimizer in the report.")
def solve(path: str, use_dual: bool, out: str | None, tol: float | None, witness: bool) -> None:
    """Solve the problem described in a JSON file."""
    t0 = time.perf_counter()
    p = Path(path)
    try:
        raw = p.read_bytes() if p.is_file() else None
        if raw is None:
            raise io.InputError(f"file not found: {p}")
        problem = io.read_json(p)
        if witness and isinstance(problem, dict):
            problem["emit_witness"] = True
        report, code = run_problem(problem, p.parent, use_dual, tol)
    except (io.InputError, LayoutError, NotPSDError) as exc:
        _fail(str(exc), EXIT_INPUT)
        return
    except (SolverError, QnetError) as exc:
        _fail(str(exc), EXIT_SOLVER)
        return
    blobs = report.pop("_blobs")
    report.update(version=__version__, input_digest=io.digest(raw, *blobs),
                  timing_s=round(time.perf_counter() - t0, 3), dual_flag=use_dual)
    _emit(report, out)
    sys.exit(code)


def run_app(name: str, d: int | None, tol: float = vf.DEFAULT_TOL) -> dict:
    spec = apps.get_app(name)
    d = spec.default_d if d is None else d
    om = spec.omega(d)
    primal_cs, dual_cs = apps.feasible_sets(name, d)
    res = en.max_score(om, primal_cs, dual_cs)
    ref = spec.reference(d)
    checks = []

    def check(label, value, reference):
        ok = reference is None or abs(value - reference) <= tol
        checks.append({"name": label, "value": value, "reference": reference, "pass": bool(ok)})

    check("primal", res.omega_max, ref)
    check("dual", res.dual_lambda, ref)
    check("bits", math.log2(res.dual_lambda), math.log2(ref) if ref else None)
    if name == "ocb":
        for order in ("AB", "BA"):
            causal = en.max_score_definite_order(om, apps.ocb_layout(order))
            check(f"causal_{order}", causal.omega_max, apps.OCB_CAUSAL_VALUE)
    if name == "conjugation":
        tr = float(np.real(np.vdot(om.op, apps.transpose_comb(d).op)))
        check("transpose_strategy", tr, 2.0 / (d * (d + 1)))
    statuses = [res.primal_solution.status, res.dual_solution.status]
    return {
        "app": name, "d": d, "value": res.omega_max, "dual_value": res.dual_lambda, "gap": res.gap,
        "reference": ref, "status": "optimal" if all(s == "optimal" for s in statuses) else statuses[0],
        "checks": checks, "pass": all(c["pass"] for c in checks) and all(s == "optimal" for s in statuses),
    }


@main.command()
@click.argument("name")
@click.option("--d", "d", type=int, default=None, help="Dimension (search list size for grover).")
@click.option("--out", type=click.Path(), default=None)
def app(name: str, d: int | None, out: str | None) -> None:
    """Run an application end to end and compare with its analytic value."""
    t0 = time.perf_counter()
    try:
        report = run_app(name, d)
    except KeyError as exc:
        _fail(str(exc.args[0]), EXIT_INPUT)
        return
    except LayoutError as exc:
        _fail(str(exc), EXIT_INPUT)
        return
    except (SolverError, QnetError) as exc:
        _fail(str(exc), EXIT_SOLVER)
        return
    report.update(version=__version__, timing_s=round(time.perf_counter() - t0, 3),
                  input_digest=io.digest(json.dumps({"app": name, "d": report["d"]}, sort_keys=True).encode()))
    _emit(report, out)
    sys.exit(EXIT_OK if report["pass"] else EXIT_SOLVER)


@main.group()
def entropy() -> None:
    """Entropy utilities."""


@entropy.command("dmax")
@click.option("--a", "a_path", required=True, type=click.Path())
@click.option("--b", "b_path", required=True, type=click.Path())
@click.option("--out", type=click.Path(), default=None)
def dmax(a_path: str, b_path: str, out: str | None) -> None:
    """Max relative entropy of A with respect to B (bits)."""
    try:
        a, da, _ = io.load_matrix(a_path)
        b, db, _ = io.load_matrix(b_path)
        if a.shape != b.shape:
            raise io.InputError(f"dims differ: {da} vs {db}")
        ent = en.d_max_pair(a, b)
    except (io.InputError, NotPSDError, LayoutError) as exc:
        _fail(str(exc), EXIT_INPUT)
        return
    report = {"task": "d_max_pair", "bits": _finite(ent.bits), "value": _finite(ent.lam),
              "version": __version__,
              "input_digest": io.digest(Path(a_path).read_bytes(), Path(b_path).read_bytes())}
    _emit(report, out)


@main.command("verify")
@click.option("--suite", default="all", type=click.Choice(sorted(vf.SUITES) + ["all"]))
@click.option("--seed", type=int, default=None, help="Defaults to $QNET_SEED or 0.")
@click.option("--tol", type=float, default=vf.DEFAULT_TOL, help="Comparison tolerance.")
@click.option("--out", type=click.Path(), default=None)
def verify_cmd(suite: str, seed: int | None, tol: float, out: str | None) -> None:
    """Run the self-check suites."""
    seed = _seed(seed)
    t0 = time.perf_counter()
    results = vf.run_suite(suite, seed, tol)
    for r in results:
        click.echo(f"[{'PASS' if r.passed else 'FAIL'}] {r.suite}/{r.name} ({r.seconds:.1f}s): {r.detail}", err=True)
    report = {
        "suite": suite, "seed": seed, "tol": tol, "version": __version__,
        "timing_s": round(time.perf_counter() - t0, 3),
        "results": [{"suite": r.suite, "name": r.name, "pass": r.passed, "detail": r.detail} for r in results],
        "pass": all(r.passed for r in results),
    }
    _emit(report, out)
    sys.exit(EXIT_OK if report["pass"] else EXIT_SOLVER)


if __name__ == "__main__":
    main()
