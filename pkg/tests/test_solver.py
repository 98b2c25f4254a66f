from __future__ import annotations

import math

import numpy as np
import pytest

from lhvkit import lhv, quantum as q, solver
from lhvkit.lhv import eval_event, joint, nopol, outcome


def pred(kind="psi1", theta=0.7):
    return q.prediction_set(q.make_bell_state(kind), *q.theta_settings(theta))


def test_row_counts_per_kind():
    p = pred()
    assert solver.assemble(p, 0.9, "GEN").matrix.shape == (25, 81)
    assert solver.assemble(p, 0.9, "NG").matrix.shape == (27, 81)
    assert solver.assemble(p, 0.9, "BOTH").matrix.shape == (35, 81)
    assert solver.assemble(p, 0.9, "BOTH", "full324").matrix.shape == (35, 324)


def test_symmetric_columns_halve_space():
    sys_ = solver.assemble(pred(), 0.9, symmetric=True)
    assert sys_.matrix.shape[1] == 41


def test_bad_input():
    with pytest.raises(solver.SolverError):
        solver.assemble(pred(), 0.9, "FOO")
    with pytest.raises(solver.SolverError):
        solver.assemble(pred(), 1.5)
    with pytest.raises(solver.SolverError):
        solver.find_eta_crit(pred(), tol=0)


def test_rows_match_eval_event():
    p = pred("psi2", 0.4)
    m = lhv.build_appD_model(p, 0.4)
    sys_ = solver.assemble(p, 0.4, "BOTH", states=m.states)
    x = np.asarray(m.weights, dtype=float)
    got = sys_.matrix @ x
    lab = dict(zip(sys_.row_labels, got))
    assert abs(lab["P(A1=+1,B2=-1)"] - eval_event(m, joint(1, 2, 1, -1))) < 1e-12
    assert abs(lab["P(A2=-1)"] - eval_event(m, outcome("A", 2, -1))) < 1e-12
    assert abs(lab["P(A1=+1,B)"] - eval_event(m, outcome("A", 1, 1) & nopol("B"))) < 1e-12
    assert abs(lab["P(B)"] - eval_event(m, nopol("B"))) < 1e-12
    assert np.max(np.abs(sys_.residual(x))) < 1e-12


def test_feasible_low_infeasible_near_one():
    p = pred("psi1", math.pi / 4)
    assert solver.nnls_solve(solver.assemble(p, 0.5, space="full324")).feasible
    # The reduced space lacks one-sided states, so it only covers higher rates.
    assert not solver.nnls_solve(solver.assemble(p, 0.5)).feasible
    assert solver.nnls_solve(solver.assemble(p, 0.7)).feasible
    rep = solver.nnls_solve(solver.assemble(p, 0.99))
    assert not rep.feasible and rep.mu > 1e-3


def test_eta_crit_and_model_reproduce_prediction():
    p = pred("psi1", 0.7)
    res = solver.find_eta_crit(p)
    assert 0.8 <= res.eta_crit <= 0.86
    assert res.trace[-1][0] == res.eta_crit
    sys_ = solver.assemble(p, res.eta_crit, states=res.model.states)
    mu = solver.relative_error(sys_.matrix, np.asarray(res.model.weights, float), sys_.target)
    assert mu < 5e-5


def test_continue_to_extends_trace():
    res = solver.find_eta_crit(pred("psi1", 0.7), continue_to=0.75)
    assert res.trace[-1][0] <= 0.75 + 1e-12


def test_eta_grid():
    g = solver.eta_grid(0.25)
    assert g == [1.0, 0.75, 0.5, 0.25]


def test_relative_error_zero_denominator():
    assert solver.relative_error(np.zeros((2, 2)), np.ones(2), np.ones(2)) == math.inf


def test_sweep_serial_and_parallel_agree():
    a = solver.sweep(["psi1"], [0.3, 0.9], ("GEN",), workers=1)
    b = solver.sweep(["psi1"], [0.3, 0.9], ("GEN",), workers=2)
    assert [r["etaCrit"] for r in a] == [r["etaCrit"] for r in b]
