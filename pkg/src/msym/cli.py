"""``msym`` command line: one subcommand per analysis, JSON reports, CSV snapshots."""

from __future__ import annotations

import argparse
import csv
import json
import sys as _sys
import time
from pathlib import Path

import numpy as np

from . import models
from .constraints import RestrictedSystem, restricted_from_lagrangian, run_algorithm
from .equivalence import compare_lagrangian
from .errors import BlowUpError, HyperRegularityError, ModelError, MsymError
from .expr import compile_expr, to_text
from .hdw import count_freedom, curvature, derive
from .integrator import initial_section, simulate
from .modelfile import Model, load_model
from .noether import classify, first_integral, translation

EXIT_OK, EXIT_SCHEMA, EXIT_DOMAIN, EXIT_BLOWUP = 0, 2, 3, 4
COMMANDS = ("derive", "simulate", "noether", "constrain", "compare-lagrangian")


def _header(model: Model, command: str) -> dict:
    return {"model": model.id, "subcommand": command, "seed": model.seed}


def _gauge_arg(model: Model):
    return model.gauge


def _require_system(model: Model):
    if model.system is None:
        raise HyperRegularityError("the Lagrangian metric is singular; only 'constrain' applies")
    return model.system


def cmd_derive(model: Model) -> tuple[dict, dict]:
    sys = _require_system(model)
    field = derive(sys, _gauge_arg(model), seed=model.seed)
    curv = curvature(field, seed=model.seed)
    report = _header(model, "derive")
    report.update({
        "H": to_text(sys.H),
        "H_local": to_text(sys.H_local),
        "notices": list(sys.notices),
        "theta": sys.theta.to_json(),
        "omega": sys.omega.to_json(),
        "free_gauge_slots": count_freedom(sys.m, sys.N),
        "transversality": "1",
        "curvature": curv.to_json(),
    })
    report.update(field.to_json())
    return report, {}


def _currents(model: Model, sys) -> dict:
    """xi for every listed exact symmetry; the energy current when none is listed."""
    cands = model.symmetries or [translation(sys, 0)]
    out = {}
    for cand in cands:
        try:
            fi = first_integral(cand, sys)
        except MsymError:
            continue
        if fi.verified:
            out[cand.label] = fi.xi
    return out


def _run(model: Model, sys, scheme: str, currents: dict):
    if model.grid is None or model.initial is None:
        raise ModelError("simulation needs 'grid' and 'initial'", "/grid" if model.grid is None else "/initial")
    spec = model.grid
    st = initial_section(sys, spec, model.initial["y"], model.initial["p0"], model=model.id)
    return spec, simulate(sys, st, spec, scheme, currents=currents, snapshot_every=model.snapshot_every)


def _solution_error(model: Model, sys, spec, final) -> float | None:
    if model.exact is None:
        return None
    xs = [np.full(spec.spatial_shape, final.t)] + list(spec.mesh())
    err = 0.0
    for a, e in enumerate(model.exact):
        ref = np.broadcast_to(compile_expr(e, sys.coords.x)(*xs), spec.spatial_shape)
        err = max(err, float(np.abs(final.y[a] - ref).max()))
    return err


def cmd_simulate(model: Model, scheme: str) -> tuple[dict, dict]:
    sys = _require_system(model)
    currents = _currents(model, sys)
    spec, res = _run(model, sys, scheme, currents)
    report = _header(model, "simulate")
    summary = res.summary(sys, spec)
    timings = {"wallclock": summary.pop("wallclock")}
    summary["scheme_note"] = {
        "euler": "symplectic Euler (kick then drift), centered periodic spatial differences",
        "leapfrog": "Stormer-Verlet kick-drift-kick, centered periodic spatial differences",
    }[scheme]
    report.update(summary)
    report["grid"] = {"lengths": list(spec.lengths), "counts": list(spec.counts), "dt": spec.dt}
    report["solution_error"] = _solution_error(model, sys, spec, res.final)
    report["_snapshots"] = res.snapshots
    return report, timings


def _write_snapshots(out: Path, sys, spec, snapshots) -> list:
    c = sys.coords
    names = [s.name for s in c.x] + [s.name for s in c.y] + [s.name for row in c.p for s in row]
    mesh = spec.mesh()
    files = []
    for i, st in enumerate(snapshots):
        S = spec.spatial_shape
        cols = [np.full(S, st.t)] + [np.broadcast_to(g, S) for g in mesh]
        cols += [st.y[a] for a in range(c.N)] + [st.p[mu][a] for mu in range(c.m) for a in range(c.N)]
        flat = [np.asarray(col, dtype=float).reshape(-1) for col in cols]
        path = out / f"snapshot_{i:04d}_step{st.step:07d}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for row in zip(*flat):
                w.writerow([repr(float(v)) for v in row])
        files.append(path.name)
    return files


def cmd_noether(model: Model, scheme: str) -> tuple[dict, dict]:
    sys = _require_system(model)
    X = derive(sys, seed=model.seed)
    entries = []
    currents = {}
    for cand in model.symmetries:
        cl = classify(cand, sys, X, seed=model.seed)
        entry = {"label": cand.label, "provenance": cand.provenance, "candidate": cand.Y.to_json(),
                 "classification": cl.to_json(), "xi": None, "verified": False}
        try:
            fi = first_integral(cand, sys, X, cl)
        except MsymError as exc:
            entry["note"] = str(exc)
        else:
            entry["xi"] = fi.xi.to_json()
            entry["verified"] = fi.verified
            if fi.verified:
                currents[cand.label] = fi.xi
        entries.append(entry)
    report = _header(model, "noether")
    report["symmetries"] = entries
    report["general_test"] = "default gauge plus 5 random gauges (sampled)"
    timings = {}
    if currents and model.grid is not None and model.initial is not None:
        t0 = time.perf_counter()
        spec, res = _run(model, sys, scheme, currents)
        report["conservation_run"] = {
            "scheme": scheme, "steps": res.steps,
            "current_drift": res.summary(sys, spec)["current_drift"],
        }
        timings["conservation_run"] = time.perf_counter() - t0
    return report, timings


def cmd_constrain(model: Model) -> tuple[dict, dict]:
    if model.singular_lagrangian:
        rsys = restricted_from_lagrangian(model.lagrangian, seed=model.seed)
        if model.constraints:
            rsys = RestrictedSystem(rsys.sys, list(rsys.constraints) + model.constraints, seed=model.seed)
        source = "image of the Legendre map"
    else:
        rsys = RestrictedSystem(model.system, model.constraints, seed=model.seed)
        source = "model constraints"
    ledger = run_algorithm(rsys, max_gen=model.max_gen)
    report = _header(model, "constrain")
    report["H"] = to_text(rsys.sys.H)
    report["constraint_source"] = source
    report["ledger"] = ledger.to_json()
    return report, {}


def cmd_compare(model: Model) -> tuple[dict, dict]:
    if model.lagrangian is None:
        raise ModelError("compare-lagrangian needs a 'lagrangian' block", "/lagrangian")
    if model.singular_lagrangian:
        raise HyperRegularityError("the Lagrangian metric is singular")
    cmp = compare_lagrangian(model.lagrangian)
    report = _header(model, "compare-lagrangian")
    report.update(cmp.to_json())
    return report, {}


def _verdict_failed(command: str, report: dict) -> bool:
    if command == "compare-lagrangian":
        return not (report["factorwise_pushforward_agrees"] and report["pullback_theta_equals_theta_L"] != "different")
    return False


def resolve_model(arg: str) -> Model:
    if arg.startswith("builtin:"):
        name = arg.split(":", 1)[1]
        try:
            doc = models.get(name)
        except KeyError as exc:
            raise ModelError(str(exc.args[0]), "") from None
        return load_model(doc, name)
    if not Path(arg).is_file():
        raise ModelError(f"no such model file: {arg}", "")
    return load_model(arg)


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=True) + "\n"


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or _sys.stdout
    stderr = stderr or _sys.stderr
    ap = argparse.ArgumentParser(prog="msym", description="Covariant Hamiltonian field theory toolkit")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("model", help="path to a model JSON file, or builtin:<name> (" + ", ".join(models.names()) + ")")
    ap.add_argument("--out", help="directory for report.json, timings.json and CSV snapshots")
    ap.add_argument("--seed", type=int, help="overrides the model's seed")
    ap.add_argument("--scheme", choices=("euler", "leapfrog"), help="overrides the model's scheme")
    args = ap.parse_args(argv)
    try:
        model = resolve_model(args.model)
        if args.seed is not None:
            model.seed = args.seed
        scheme = args.scheme or model.scheme
        if args.command == "derive":
            report, timings = cmd_derive(model)
        elif args.command == "simulate":
            report, timings = cmd_simulate(model, scheme)
        elif args.command == "noether":
            report, timings = cmd_noether(model, scheme)
        elif args.command == "constrain":
            report, timings = cmd_constrain(model)
        else:
            report, timings = cmd_compare(model)
    except ModelError as exc:
        print(f"schema error at {exc.path or '/'}: {exc}", file=stderr)
        return EXIT_SCHEMA
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=stderr)
        return EXIT_BLOWUP
    except MsymError as exc:
        print(f"{type(exc).__name__}: {exc}", file=stderr)
        return EXIT_DOMAIN
    snapshots = report.pop("_snapshots", None)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if snapshots is not None:
            report["snapshots"] = _write_snapshots(out, model.system, model.grid, snapshots)
        (out / "report.json").write_text(dumps(report))
        (out / "timings.json").write_text(dumps(timings))
    stdout.write(dumps(report))
    if _verdict_failed(args.command, report):
        print("verification failed", file=stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
