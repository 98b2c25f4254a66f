"""Command-line entry point.

Exit codes: 0 success, 1 computational infeasibility, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from . import analysis, inequalities as ineq, lhv, quantum, solver

FIGURES = ("fig2", "fig3", "fig4", "fig5", "tableI", "tableII")
THETA_GRID = lhv.TABLE_THETAS


class UsageError(Exception):
    """Malformed flags or configuration (exit code 2)."""


class ComputeError(Exception):
    """Computation-level infeasibility (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- helpers

def _floats(text: str) -> list[float]:
    try:
        return [float(eval_number(x)) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse number list {text!r}") from exc


def eval_number(text: str) -> float:
    """Parse a float, also accepting ``pi`` multiples such as ``pi/4``."""
    t = text.strip().replace(" ", "")
    if "pi" in t:
        num, _, den = t.partition("/")
        coef = num.replace("*pi", "").replace("pi", "") or "1"
        coef = "-1" if coef == "-" else coef
        val = float(coef) * math.pi
        return val / float(den) if den else val
    return float(t)


def _write(out_dir: str | None, name: str, text: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name), "w", newline="") as fh:
        fh.write(text)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return x


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}") from exc


def _scenario(args) -> quantum.PredictionSet:
    """Prediction set from --config or --state/--theta/--r."""
    cfg = _load_config(getattr(args, "config", None))
    try:
        if cfg:
            st = cfg.get("state", {})
            state = quantum.make_state(st.get("kind", "psi1"), **st.get("params", {}))
            conv = cfg.get("convention", "bloch")
            ang = cfg.get("angles")
            if ang:
                settings = (quantum.Setting(eval_number(str(ang["a1"])), "A", conv),
                            quantum.Setting(eval_number(str(ang["a2"])), "A", conv),
                            quantum.Setting(eval_number(str(ang["b1"])), "B", conv),
                            quantum.Setting(eval_number(str(ang["b2"])), "B", conv))
            else:
                settings = quantum.theta_settings(eval_number(str(cfg.get("theta", "pi/4"))))
            permute = cfg.get("permutations", "none")
        else:
            params = {}
            if args.r is not None:
                params["r"] = args.r
            if args.xi is not None:
                params["xi"] = args.xi
            state = quantum.make_state(args.state, **params)
            if args.state == "giustina" and args.theta is None:
                settings = quantum.giustina_settings()
            else:
                settings = quantum.theta_settings(eval_number(args.theta or "pi/4"))
            permute = args.permute
        return quantum.scenario_prediction(state, settings, permute)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad scenario: {exc}") from exc


def _model(name: str, beta: float | None, eta: float | None):
    """Named model; the M family is built at ``eta`` when no ``beta`` is given."""
    if name in ("M", "M'", "M''") and beta is None and eta is not None:
        return lhv.build_M_eta(eta, name)
    b = 2 * math.sqrt(2) if beta is None else beta
    if name == "M":
        return lhv.build_M(b)
    if name == "M'":
        return lhv.extend_to_M_prime(lhv.build_M(b))
    if name == "M''":
        return lhv.build_M_double_prime(b)
    if name == "M3":
        return lhv.build_crosstalk_M3()
    raise UsageError(f"unknown model {name!r}")


def _add_scenario_flags(p):
    p.add_argument("--config", help="scenario JSON file")
    p.add_argument("--state", default="psi1", choices=["psi1", "psi2", "giustina", "larsson"])
    p.add_argument("--theta", help="angle parameter (radians, 'pi/4' accepted)")
    p.add_argument("--r", type=float, default=None, help="giustina state parameter")
    p.add_argument("--xi", type=float, default=None, help="larsson state parameter")
    p.add_argument("--permute", default="none", choices=list(quantum.PERMUTATIONS))


def _add_solver_flags(p):
    p.add_argument("--kind", default="both", choices=["gen", "ng", "both"])
    p.add_argument("--space", default="reduced", choices=["reduced", "full"])
    p.add_argument("--tol", type=float, default=5e-5)
    p.add_argument("--step", type=float, default=0.01)


def _space(args) -> str:
    return "reduced81" if args.space == "reduced" else "full324"


# ---------------------------------------------------------------- commands

def cmd_predict(args) -> int:
    pred = _scenario(args)
    _write(args.out, "prediction.csv", _csv(pred.rows(), ["i", "j", "a", "b", "probability"]))
    return 0


def cmd_eval(args) -> int:
    kind = args.inequality
    eta = args.eta
    if args.model:
        src = _model(args.model, args.beta, eta)
        if args.model != "M3" and args.beta is not None and eta is not None \
                and kind == "eberhard":
            src = lhv.apply_efficiency(src, eta)
    else:
        src = _scenario(args)
    if kind == "chsh":
        rep = ineq.chsh(ineq.correlations(src, eta), args.convention)
    elif kind == "ch_gen":
        rep = ineq.ch_genuine(src, args.convention, eta)
    elif kind == "ch_ng":
        rep = ineq.ch_nongenuine(src, 1.0 if eta is None else eta, args.convention)
    elif kind == "ch_norm":
        rep = ineq.ch_normalized(src, 1.0 if eta is None else eta)
    elif kind == "eberhard":
        if isinstance(src, quantum.PredictionSet):
            rep = ineq.eberhard_qm(src, 1.0 if eta is None else eta)
        else:
            rep = ineq.eberhard(src)
    else:
        raise UsageError(f"unknown inequality {kind!r}")
    sys.stdout.write(json.dumps(rep.to_dict(), sort_keys=True) + "\n")
    return 0


def cmd_build_model(args) -> int:
    if args.model == "appD":
        pred = _scenario(args)
        res = lhv.build_appD_model(pred, 0.5 if args.eta is None else args.eta)
        if isinstance(res, lhv.Infeasible):
            raise ComputeError(f"infeasible at eta={res.eta}: {res.reason}")
        ens = res
    elif args.model == "M3":
        raise UsageError("M3 is contextual; use eval")
    elif args.eta is not None and args.model in ("M", "M'", "M''"):
        try:
            ens = lhv.build_M_eta(args.eta, args.model)
        except lhv.LhvError as exc:
            raise ComputeError(str(exc)) from exc
    else:
        ens = _model(args.model, args.beta, args.eta)
    _write(args.out, "model.csv", ens.to_csv())
    return 0


def cmd_eta_crit(args) -> int:
    pred = _scenario(args)
    res = solver.find_eta_crit(pred, args.kind.upper(), _space(args), args.tol, args.step)
    out = {"etaCrit": res.eta_crit, "trace": [[e, m] for e, m in res.trace]}
    if args.out:
        _write(args.out, "trace.csv", _csv(res.trace, ["eta", "mu"]))
        if res.model is not None:
            _write(args.out, "model.csv", res.model.to_csv())
    sys.stdout.write(json.dumps(out) + "\n")
    return 0


def cmd_sweep(args) -> int:
    thetas = _floats(args.thetas) if args.thetas else list(THETA_GRID)
    states = [s for s in args.state.split(",")]
    rows = solver.sweep(states, thetas, (args.kind.upper(),), _space(args), args.tol,
                        args.step, workers=args.workers)
    text = _csv([(r["state"], r["theta"], r["eta"], r["mu"], r["feasible"], r["etaCrit"])
                 for r in rows], ["state", "theta", "eta", "mu", "feasible", "etaCrit"])
    _write(args.out, "sweep.csv", text)
    return 0


def cmd_analyze(args) -> int:
    try:
        with open(args.record) as fh:
            rec = analysis.ExperimentRecord.from_csv(fh.read())
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read record: {exc}") from exc
    pred = _scenario(args)
    window = tuple(_floats(args.eta_window))
    if len(window) != 2:
        raise UsageError("--eta-window needs lo,hi")
    try:
        etas = analysis.estimate_etas(rec, pred)
    except analysis.AnalysisError as exc:
        raise ComputeError(str(exc)) from exc
    rep = analysis.gamma_bounds(rec, pred, window, args.background)
    out = {"etaA": etas[0], "etaB": etas[1], "gamma": rep.to_dict(),
           "flags": [list(f) for f in analysis.consistency_flags(rep)]}
    sys.stdout.write(json.dumps(out, sort_keys=True) + "\n")
    return 0


def cmd_synth_counts(args) -> int:
    rng = np.random.default_rng(args.seed) if args.seed is not None else None
    if args.model:
        src = _model(args.model, args.beta, None)
        if args.eta is not None and args.beta is not None and args.model != "M3":
            src = lhv.apply_efficiency(src, args.eta)
    else:
        src = ineq.PredictionSource(_scenario(args), 1.0 if args.eta is None else args.eta)
    table = ineq.synthesize_counts(src, args.trials, rng=rng)
    _write(args.out, "counts.csv", table.to_csv())
    return 0


# ---------------------------------------------------------------- reproduce

def _fig2() -> dict[str, str]:
    rows = []
    for k in range(1, 21):
        eta = round(0.05 * k, 2)
        mp = lhv.build_M_eta(eta, "M'", signed=True)
        mpp = lhv.build_M_eta(eta, "M''", signed=True)
        rows.append((eta, ineq.ch_genuine(mp).value, ineq.ch_nongenuine(mp, eta).value,
                     ineq.ch_genuine(mpp).value, ineq.ch_nongenuine(mpp, eta).value,
                     int(eta >= 2 / 3)))
    return {"fig2.csv": _csv(rows, ["eta", "beta_gen_Mp", "beta_ng_Mp", "beta_gen_Mpp",
                                    "beta_ng_Mpp", "weights_nonnegative"])}


def _fig3(tol, step, space, workers) -> dict[str, str]:
    rows = solver.sweep(("psi1", "psi2"), THETA_GRID, solver.KINDS, space, tol, step,
                        workers=workers)
    return {"fig3.csv": _csv([(r["state"], r["kind"], r["theta"], r["etaCrit"], r["mu"])
                              for r in rows], ["state", "kind", "theta", "etaCrit", "mu"])}


def _fig45(convention: str, name: str) -> dict[str, str]:
    rows = []
    for k in range(0, 101):
        theta = math.pi * k / 100
        row = [theta]
        for st in ("psi1", "psi2"):
            pred = quantum.prediction_set(quantum.make_bell_state(st),
                                          *quantum.theta_settings(theta))
            row += [ineq.chsh(pred.correlations(), convention).value,
                    ineq.ch_genuine(pred, convention).value]
        rows.append(row)
    return {f"{name}.csv": _csv(rows, ["theta", "chsh_psi1", "ch_psi1", "chsh_psi2", "ch_psi2"])}


def _table(kind: str, tol: float, step: float, space: str) -> dict[str, str]:
    groups = None
    cols, etas, mus = [], [], []
    for theta in THETA_GRID:
        pred = quantum.prediction_set(quantum.make_bell_state(kind),
                                      *quantum.theta_settings(theta))
        res = solver.find_eta_crit(pred, "BOTH", space, tol, step, symmetric=True)
        system = solver.assemble(pred, res.eta_crit, "BOTH", space, symmetric=True)
        groups = system.columns
        w = res.report.weights
        cols.append(w / (w @ system.matrix[0]))
        etas.append(res.eta_crit)
        mus.append(res.report.mu)
    sym = {1: "+", -1: "-", 0: "0"}
    header = ["A1", "A2", "B1", "B2", "pA", "pB"] + [f"theta={t}" for t in THETA_GRID]
    rows = [["eta", "", "", "", "", ""] + etas, ["mu", "", "", "", "", ""] + mus]
    for k, g in enumerate(groups):
        s = g[0]
        rows.append([sym[v] for v in s.instructions] + [_fmt(s.pA), _fmt(s.pB)]
                    + [c[k] for c in cols])
    name = "tableI" if kind == "psi1" else "tableII"
    return {f"{name}.csv": _csv(rows, header)}


def cmd_reproduce(args) -> int:
    fig = args.figure
    if fig not in FIGURES:
        raise UsageError(f"unknown figure {fig!r}; choose from {', '.join(FIGURES)}")
    space = _space(args)
    t0 = time.perf_counter()
    if fig == "fig2":
        files = _fig2()
    elif fig == "fig3":
        files = _fig3(args.tol, args.step, space, args.workers)
    elif fig == "fig4":
        files = _fig45("paper", "fig4")
    elif fig == "fig5":
        files = _fig45("aspect", "fig5")
    else:
        files = _table("psi1" if fig == "tableI" else "psi2", args.tol, args.step, space)
    out_dir = args.out or "."
    for name, text in files.items():
        _write(out_dir, name, text)
    prov = {"figure": fig, "parameters": {"tol": args.tol, "step": args.step, "space": space},
            "versions": {"lhvkit": __version__, "numpy": np.__version__,
                         "python": platform.python_version()},
            "wall_time_s": round(time.perf_counter() - t0, 3)}
    _write(out_dir, f"{fig}.provenance.json", json.dumps(prov, indent=2, sort_keys=True) + "\n")
    return 0


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lhvkit", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("predict", help="quantum prediction set as CSV")
    _add_scenario_flags(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("eval", help="evaluate an inequality, print a JSON report")
    _add_scenario_flags(sp)
    sp.add_argument("--inequality", default="chsh",
                    choices=["chsh", "ch_gen", "ch_ng", "ch_norm", "eberhard"])
    sp.add_argument("--convention", default="paper", choices=["paper", "aspect"])
    sp.add_argument("--eta", type=float, default=None)
    sp.add_argument("--model", choices=["M", "M'", "M''", "M3"])
    sp.add_argument("--beta", type=float, default=None)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("build-model", help="write an ensemble CSV")
    _add_scenario_flags(sp)
    sp.add_argument("--model", default="M", choices=["M", "M'", "M''", "M3", "appD"])
    sp.add_argument("--beta", type=float, default=None)
    sp.add_argument("--eta", type=float, default=None)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_build_model)

    sp = sub.add_parser("eta-crit", help="critical detection rate by eta descent")
    _add_scenario_flags(sp)
    _add_solver_flags(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_eta_crit)

    sp = sub.add_parser("sweep", help="critical rate over a theta grid")
    sp.add_argument("--state", default="psi1,psi2")
    sp.add_argument("--thetas", help="comma-separated theta grid")
    _add_solver_flags(sp)
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("analyze", help="Gamma analysis of an experiment record")
    _add_scenario_flags(sp)
    sp.add_argument("--record", required=True)
    sp.add_argument("--eta-window", default="0.68,0.73")
    sp.add_argument("--background", type=float, default=0.0)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("synth-counts", help="exact or sampled count table")
    _add_scenario_flags(sp)
    sp.add_argument("--model", choices=["M", "M'", "M''", "M3"])
    sp.add_argument("--beta", type=float, default=None)
    sp.add_argument("--eta", type=float, default=None)
    sp.add_argument("--trials", type=int, default=1_000_000)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_synth_counts)

    sp = sub.add_parser("reproduce", help="write figure or table data")
    sp.add_argument("figure")
    _add_solver_flags(sp)
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_reproduce)
    for action in sub.choices.values():
        action.add_argument("--seed", type=int, default=None)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 2
    except (ComputeError, lhv.LhvError, ineq.InequalityError, solver.SolverError,
            analysis.AnalysisError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
