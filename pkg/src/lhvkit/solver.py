"""Linear feasibility systems for LHV models at fixed eta and critical-rate search."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lhv
from .lhv import Ensemble, LhvState
from .nnls import NNLSIterationError, nnls
from .quantum import INDICES, OUTCOMES, PredictionSet

KINDS = ("GEN", "NG", "BOTH")


class SolverError(ValueError):
    """Raised for malformed solver input."""


@dataclass(frozen=True)
class ConstraintSystem:
    """Rows are restrictions, columns are states (or sign-flip state pairs)."""

    matrix: np.ndarray
    target: np.ndarray
    columns: tuple[tuple[LhvState, ...], ...]
    kind: str
    eta: float
    row_labels: tuple[str, ...] = ()

    @property
    def column_states(self) -> list[LhvState]:
        return [g[0] for g in self.columns]

    def ensemble(self, weights: np.ndarray) -> Ensemble:
        """Ensemble carrying ``weights`` (each column weight on every state of its group),
        renormalized to unit total."""
        entries = [(s, float(w)) for g, w in zip(self.columns, weights) if w > 0 for s in g]
        return Ensemble.normalized(entries).canonical()

    def residual(self, weights: np.ndarray) -> np.ndarray:
        return self.matrix @ weights - self.target


@dataclass(frozen=True)
class SolveReport:
    weights: np.ndarray
    residual_norm: float
    mu: float
    feasible: bool
    eta: float
    iterations: int = 0


def _coeff_rows(states: Sequence[LhvState], pred: PredictionSet, eta: float, kind: str):
    rows, targets, labels = [], [], []

    def add(label, coeffs, t):
        labels.append(label)
        rows.append(coeffs)
        targets.append(t)

    add("norm", [1.0] * len(states), 1.0)
    for i, j, a, b in itertools.product(INDICES, INDICES, OUTCOMES, OUTCOMES):
        add(f"P(A{i}={a:+d},B{j}={b:+d})",
            [float(s.instr("A", i) == a and s.instr("B", j) == b) for s in states],
            eta**2 * pred.q_joint[(i, j, a, b)])
    if kind in ("GEN", "BOTH"):
        for i, a in itertools.product(INDICES, OUTCOMES):
            add(f"P(A{i}={a:+d})", [float(s.instr("A", i) == a) for s in states],
                eta * pred.q_a[(i, a)])
        for j, b in itertools.product(INDICES, OUTCOMES):
            add(f"P(B{j}={b:+d})", [float(s.instr("B", j) == b) for s in states],
                eta * pred.q_b[(j, b)])
    if kind in ("NG", "BOTH"):
        for i, a in itertools.product(INDICES, OUTCOMES):
            add(f"P(A{i}={a:+d},B)", [float(s.instr("A", i) == a) * s.pB for s in states],
                eta**2 * pred.q_a[(i, a)])
        for j, b in itertools.product(INDICES, OUTCOMES):
            add(f"P(A,B{j}={b:+d})", [float(s.instr("B", j) == b) * s.pA for s in states],
                eta**2 * pred.q_b[(j, b)])
        add("P(A)", [s.pA for s in states], eta)
        add("P(B)", [s.pB for s in states], eta)
    return np.array(rows), np.array(targets), tuple(labels)


def assemble(pred: PredictionSet, eta: float, kind: str = "BOTH", space: str = "reduced81",
             states: Sequence[LhvState] | None = None, symmetric: bool = False
             ) -> ConstraintSystem:
    """Build the restriction system at detection rate ``eta``.

    ``symmetric=True`` merges each sign-flip pair into one column carrying a
    common weight, matching the layout of the printed model tables.
    """
    if kind not in KINDS:
        raise SolverError(f"unknown condition kind {kind!r}")
    if not 0 <= eta <= 1:
        raise SolverError("eta outside [0, 1]")
    if states is None:
        states = lhv.enumerate_states(space)
    states = list(states)
    A, b, labels = _coeff_rows(states, pred, eta, kind)
    if symmetric:
        pos = {s: k for k, s in enumerate(states)}
        groups = lhv.sign_pairs(states)
        A = np.column_stack([A[:, [pos[s] for s in g]].sum(axis=1) for g in groups])
        columns = tuple(groups)
    else:
        columns = tuple((s,) for s in states)
    b = np.clip(b, 0.0, 1.0)
    return ConstraintSystem(A, b, columns, kind, eta, labels)


def relative_error(A: np.ndarray, x: np.ndarray, b: np.ndarray) -> float:
    """mu = |A x - b| / |A x|."""
    ax = A @ x
    den = np.linalg.norm(ax)
    return float(np.linalg.norm(ax - b) / den) if den > 0 else math.inf


def nnls_solve(system: ConstraintSystem, tol: float = 5e-5) -> SolveReport:
    """Nonnegative least squares on ``system``; feasible when mu < tol."""
    try:
        res = nnls(system.matrix, system.target)
    except NNLSIterationError as exc:
        p = exc.partial
        mu = relative_error(system.matrix, p.x, system.target)
        exc.partial_report = SolveReport(p.x, p.residual_norm, mu, False, system.eta,
                                         p.iterations)
        raise
    mu = relative_error(system.matrix, res.x, system.target)
    return SolveReport(res.x, res.residual_norm, mu, mu < tol, system.eta, res.iterations)


@dataclass(frozen=True)
class EtaCritResult:
    eta_crit: float
    model: Ensemble | None
    trace: list = field(default_factory=list)
    report: SolveReport | None = None


def eta_grid(step: float, low: float = 0.0) -> list[float]:
    """Descending grid 1, 1 - step, ... down to ``low`` (inclusive, > 0)."""
    n = int(math.floor((1.0 - low) / step + 1e-9))
    out = [round(1.0 - k * step, 12) for k in range(n + 1)]
    return [e for e in out if e > 0]


def find_eta_crit(pred: PredictionSet, kind: str = "BOTH", space: str = "reduced81",
                  tol: float = 5e-5, step: float = 0.01, symmetric: bool = False,
                  continue_to: float | None = None) -> EtaCritResult:
    """Descend eta from 1 in ``step`` until mu < tol.

    With ``continue_to`` the trace keeps going down to that eta after the
    critical value is found.
    """
    if tol <= 0 or step <= 0:
        raise SolverError("tol and step must be positive")
    trace, found = [], None
    for eta in eta_grid(step):
        system = assemble(pred, eta, kind, space, symmetric=symmetric)
        rep = nnls_solve(system, tol)
        trace.append((eta, rep.mu))
        if found is None and rep.feasible:
            found = (eta, system, rep)
            if continue_to is None:
                break
        if found is not None and continue_to is not None and eta <= continue_to + 1e-12:
            break
    if found is None:
        fallback_eta = step * math.floor(0.5 / step)
        model = lhv.build_appD_model(pred, fallback_eta)
        return EtaCritResult(0.0, model if isinstance(model, Ensemble) else None, trace)
    eta, system, rep = found
    return EtaCritResult(eta, system.ensemble(rep.weights), trace, rep)


def _sweep_job(args):
    state_kind, theta, kind, space, tol, step = args
    from .quantum import make_state, prediction_set, theta_settings
    pred = prediction_set(make_state(state_kind), *theta_settings(theta))
    res = find_eta_crit(pred, kind, space, tol, step)
    eta, mu = res.trace[-1]
    return {"state": state_kind, "theta": theta, "kind": kind, "eta": eta, "mu": mu,
            "feasible": res.report is not None, "etaCrit": res.eta_crit}


def sweep(state_kinds, thetas, kinds=("BOTH",), space: str = "reduced81",
          tol: float = 5e-5, step: float = 0.01, workers: int | None = None) -> list[dict]:
    """eta_crit over a grid of states, angles and condition kinds (parallel map)."""
    jobs = [(sk, th, k, space, tol, step) for sk in state_kinds for th in thetas for k in kinds]
    if workers == 1 or len(jobs) == 1:
        return [_sweep_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_sweep_job, jobs))
