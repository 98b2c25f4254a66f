"""Acceptance criteria 1-12, one test per criterion (4 is split into two checks).

Each test's outcome is reported as a PASS/FAIL line by ``conftest.py``.
Run directly with ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import itertools
import math
import time
from fractions import Fraction

import numpy as np

from lhvkit import analysis, inequalities as ineq, lhv, quantum as q, solver
from lhvkit.lhv import Ensemble, LhvState, conditional, eval_event, joint, nopol, outcome

SQ8 = 2 * math.sqrt(2)


def timed(fn, repeats=3):
    """Best wall time over ``repeats`` calls and the last result."""
    best, res = math.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        res = fn()
        best = min(best, time.perf_counter() - t0)
    return best, res


# ---------------------------------------------------------------- 1

def test_criterion_01_eta_crit_and_frequencies():
    def run():
        eta = lhv.eta_crit_chsh(SQ8)
        m = lhv.build_M(SQ8)
        return eta, m

    dt, (eta, m) = timed(run, 5)
    assert abs(eta - 2 / (1 + math.sqrt(2))) < 1e-12
    p = sum(w for s, w in m if s.instructions in
            {tuple(x * v for v in pat) for pat in lhv.M_P_PATTERNS for x in (1, -1)})
    qq = sum(w for s, w in m if s.instructions in
             {tuple(x * v for v in pat) for pat in lhv.M_Q_PATTERNS for x in (1, -1)})
    assert abs(p - 0.40) < 0.005
    assert abs(qq - 0.57) < 0.005
    assert dt < 1e-3, f"runtime {dt:.2e} s"


# ---------------------------------------------------------------- 2

def test_criterion_02_unfair_sampling_conditional():
    m = lhv.build_M(SQ8)
    eta = lhv.eta_crit_chsh(SQ8)
    dt, got = timed(lambda: conditional(m, lhv.detected("A", 1), outcome("B", 2, 1)), 5)
    expected = eta**2 / 3 + 2 * eta / 3
    assert dt < 10e-3, f"runtime {dt:.2e} s"
    assert abs(got - expected) < 1e-12, f"P(A1|B2=+1) = {got:.6f}, expected {expected:.6f}"


# ---------------------------------------------------------------- 3

def _eta_scan():
    rows = []
    for k in range(1, 21):
        eta = round(0.05 * k, 2)
        mp = lhv.build_M_eta(eta, "M'", signed=True)
        mpp = lhv.build_M_eta(eta, "M''", signed=True)
        rows.append((eta, ineq.ch_genuine(mp).value, ineq.ch_nongenuine(mp, eta).value,
                     ineq.ch_genuine(mpp).value, ineq.ch_nongenuine(mpp, eta).value))
    return rows


def test_criterion_03_enhancement_scan():
    dt, rows = timed(_eta_scan)
    for eta, gen, ng, gen2, ng2 in rows:
        assert gen <= 1e-12, eta
        if eta < 1:
            assert ng > 0, eta
        else:
            assert abs(ng) < 1e-12
        assert abs(gen - gen2) < 1e-12 and abs(ng - ng2) < 1e-12, eta
    assert dt < 1.0, f"runtime {dt:.2f} s"


# ---------------------------------------------------------------- 4

def _closed_form_cases():
    rng = np.random.default_rng(2024)
    out = []
    for _ in range(50):
        state = q.random_pure_state(rng)
        theta = float(rng.uniform(0, math.pi))
        out.append(q.prediction_set(state, *q.theta_settings(theta)))
    return out


def _closed_form_run():
    worst, feasible_all, infeasible = 0.0, True, []
    for pred in _closed_form_cases():
        for eta in (0.1, 0.3, 0.5):
            m = lhv.build_appD_model(pred, eta)
            if not isinstance(m, Ensemble):
                feasible_all = False
                continue
            sys_ = solver.assemble(pred, eta, "BOTH", states=m.states)
            r = np.max(np.abs(sys_.matrix @ np.asarray(m.weights, float) - sys_.target))
            worst = max(worst, float(r))
        infeasible.append(lhv.build_appD_model(pred, 0.51))
    return feasible_all, worst, infeasible


def test_criterion_04a_closed_form_feasible_then_infeasible():
    dt, (feasible_all, worst, infeasible) = timed(_closed_form_run, 1)
    assert feasible_all
    assert worst < 1e-10, f"worst residual {worst:.2e}"
    assert all(isinstance(r, lhv.Infeasible) for r in infeasible)
    assert dt < 5.0, f"runtime {dt:.2f} s"


def test_criterion_04b_closed_form_infeasible_via_rho0():
    _, (_, _, infeasible) = timed(_closed_form_run, 1)
    rho0 = [r.rho0 for r in infeasible]
    # 1 - 4 eta + 4 eta^2 at eta = 0.51 is 0.0004, so this mechanism cannot fire.
    assert all(v < 0 for v in rho0), f"rho0 = {min(rho0):.4g} .. {max(rho0):.4g}"


# ---------------------------------------------------------------- 5

def _table_mu():
    out = []
    for kind in ("psi1", "psi2"):
        for col in lhv.load_table(kind):
            pred = q.prediction_set(q.make_bell_state(kind), *q.theta_settings(col.theta))
            sys_ = solver.assemble(pred, col.eta, "BOTH", states=col.ensemble.states)
            mu = solver.relative_error(sys_.matrix, np.asarray(col.ensemble.weights, float),
                                       sys_.target)
            out.append((kind, col.theta, col.eta, mu))
    return out


def test_criterion_05_table_regression():
    dt, rows = timed(_table_mu, 1)
    assert len(rows) == 22
    bad = [r for r in rows if not r[3] < 1e-3]
    assert not bad, bad
    assert dt < 10.0, f"runtime {dt:.2f} s"


# ---------------------------------------------------------------- 6, 7

_SWEEP: dict = {}


def _sweep():
    if not _SWEEP:
        t0 = time.perf_counter()
        rows = solver.sweep(("psi1", "psi2"), lhv.TABLE_THETAS, solver.KINDS)
        _SWEEP["dt"] = time.perf_counter() - t0
        _SWEEP["rows"] = {(r["state"], r["theta"], r["kind"]): r["etaCrit"] for r in rows}
    return _SWEEP


def test_criterion_06_critical_rate_headers():
    sw = _sweep()
    bad = []
    for kind in ("psi1", "psi2"):
        for theta, eta_hdr in lhv.table_header_etas(kind).items():
            got = sw["rows"][(kind, theta, "BOTH")]
            if abs(got - eta_hdr) > 0.02 + 1e-9:
                bad.append((kind, theta, got, eta_hdr))
    assert not bad, bad
    assert sw["dt"] < 300, f"runtime {sw['dt']:.1f} s"


def test_criterion_07_gen_ng_equivalence():
    sw = _sweep()
    bad = []
    for kind in ("psi1", "psi2"):
        for theta in lhv.TABLE_THETAS:
            g = sw["rows"][(kind, theta, "GEN")]
            n = sw["rows"][(kind, theta, "NG")]
            if abs(g - n) > 0.02 + 1e-9:
                bad.append((kind, theta, g, n))
    assert not bad, bad


# ---------------------------------------------------------------- 8

def _eberhard_grid():
    vals = []
    for beta in (2.1, 2.4, SQ8):
        m = lhv.build_M(beta)
        for k in range(1, 11):
            vals.append(ineq.eberhard(lhv.apply_efficiency(m, k / 10)).value)
    return min(vals), ineq.eberhard(lhv.build_crosstalk_M3()).value


def test_criterion_08_eberhard_properties():
    dt, (worst, m3) = timed(_eberhard_grid)
    assert worst >= -1e-12, worst
    assert m3 == -0.5
    assert dt < 1.0, f"runtime {dt:.2f} s"


# ---------------------------------------------------------------- 9

def _giustina_curves():
    state = q.make_giustina_state(3.0)
    s = q.giustina_settings()
    etas = np.linspace(0.5, 1.0, 501)
    preds = {p: q.scenario_prediction(state, s, p) for p in q.PERMUTATIONS}
    curves = {p: np.array([ineq.eberhard_qm(pred, e).value for e in etas])
              for p, pred in preds.items()}
    return etas, curves


def test_criterion_09_giustina_curve():
    dt, (etas, curves) = timed(_giustina_curves, 1)
    c = curves["labels"]
    window = (etas > 0.70) & (etas < 0.80)
    sub = c[window]
    assert sub.min() < 0 < sub.max(), "no sign change inside (0.70, 0.80)"
    assert np.max(np.abs(curves["none"] - curves["both"])) < 1e-12
    assert np.max(np.abs(curves["labels"] - curves["directions"])) < 1e-12
    assert dt < 1.0, f"runtime {dt:.2f} s"


# ---------------------------------------------------------------- 10

def _gamma_checks():
    g = analysis.gamma_report_value(-127000, 1e8)
    state = q.make_giustina_state(3.0)
    clean, perturbed = [], []
    for perm in ("labels", "directions"):
        pred = q.scenario_prediction(state, q.giustina_settings(), perm)
        for eta in (0.69, 0.70, 0.71, 0.72):
            rec = analysis.synthesize_record(pred, eta, 1e8)
            clean.append(analysis.consistency_flags(analysis.gamma_bounds(rec, pred)))
            bad = rec.with_coincidence_factor(2, 2, 2.0)
            perturbed.append(analysis.consistency_flags(analysis.gamma_bounds(bad, pred)))
    return g, clean, perturbed


def test_criterion_10_gamma_plumbing():
    dt, (g, clean, perturbed) = timed(_gamma_checks)
    assert g < 0.0013
    assert all(f == [] for f in clean)
    for flags in perturbed:
        assert flags, "perturbation not flagged"
        assert all("2,2" in pair for pair in flags), flags
    assert dt < 1.0, f"runtime {dt:.2f} s"


# ---------------------------------------------------------------- 11

def _random_integer_ensemble(rng):
    states = lhv.enumerate_states("full324")
    idx = rng.choice(len(states), size=12, replace=False)
    counts = rng.integers(1, 20, size=12)
    full = LhvState(1, 1, 1, 1, 1.0, 1.0)
    entries = [(states[k], int(c)) for k, c in zip(idx, counts)] + [(full, 3)]
    D = sum(c for _, c in entries)
    return Ensemble([(s, Fraction(c, D)) for s, c in entries]).canonical(), D


def _direct_values(e):
    """Every inequality straight from eval_event."""
    P = lambda ev: eval_event(e, ev)  # noqa: E731
    pm = (1, -1)
    corr = {}
    for i, j in ineq.SETTING_CONTEXTS:
        num = sum(a * b * P(joint(i, j, a, b)) for a in pm for b in pm)
        corr[(i, j)] = num / sum(P(joint(i, j, a, b)) for a in pm for b in pm)
    sgn = dict(zip(ineq.SETTING_CONTEXTS, (1, 1, 1, -1)))
    s = sum(v * P(joint(i, j, 1, 1)) for (i, j), v in sgn.items())
    pa, pb = P(outcome("A", 1, 1)), P(outcome("B", 1, 1))
    a1b, ab1 = P(outcome("A", 1, 1) & nopol("B")), P(nopol("A") & outcome("B", 1, 1))
    eta = 0.9
    two = sum(v * P(joint(i, j, 1, 1)) / sum(P(joint(i, j, a, b)) for a in pm for b in pm)
              for (i, j), v in sgn.items())
    two -= pa / P(lhv.detected("A", 1)) + pb / P(lhv.detected("B", 1))
    eb = (-P(joint(1, 1, 1, 1)) + P(joint(1, 2, 1, -1)) + P(joint(1, 2, 1, 0))
          + P(joint(2, 1, -1, 1)) + P(joint(2, 1, 0, 1)) + P(joint(2, 2, 1, 1)))
    return {
        "chsh": ineq.chsh(corr).value,
        "chsh_aspect": ineq.chsh(corr, "aspect").value,
        "ch_gen": s - pa - pb,
        "ch_gen_aspect": (P(joint(1, 1, 1, 1)) - P(joint(1, 2, 1, 1)) + P(joint(2, 1, 1, 1))
                          + P(joint(2, 2, 1, 1)) - P(outcome("A", 2, 1)) - pb),
        "ch_ng": (s - a1b - ab1) / eta**2,
        "ch_norm": (s - eta * pa - eta * pb) / eta**2,
        "ch_op": (s - a1b - ab1) / P(nopol("A") & nopol("B")),
        "ch_2ch": two,
        "eberhard": eb,
    }


def _count_values(tab, D):
    src = ineq.CountSource(tab)
    eta = 0.9
    corr = ineq.correlations(src)
    return {
        "chsh": ineq.chsh(corr).value,
        "chsh_aspect": ineq.chsh(corr, "aspect").value,
        "ch_gen": ineq.ch_genuine(src).value,
        "ch_gen_aspect": ineq.ch_genuine(src, "aspect").value,
        "ch_ng": ineq.ch_nongenuine(src, eta).value,
        "ch_norm": ineq.ch_normalized(src, eta).value,
        "ch_op": ineq.ch_operational(tab).value,
        "ch_2ch": ineq.ch_two_channel(tab).value,
        "eberhard": float(Fraction(ineq.eberhard_counts(tab), D)),
    }


def _oracle_equivalence():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        e, D = _random_integer_ensemble(rng)
        tab = ineq.synthesize_counts(e, D)
        assert all(isinstance(v, int) for v in tab.counts.values())
        direct, counted = _direct_values(e), _count_values(tab, D)
        for k in direct:
            worst = max(worst, abs(float(direct[k]) - float(counted[k])))
    return worst


def test_criterion_11_oracle_equivalence():
    dt, worst = timed(_oracle_equivalence, 1)
    assert worst < 1e-9, worst
    assert dt < 10.0, f"runtime {dt:.2f} s"


# ---------------------------------------------------------------- 12

def _bridge_ensemble(rng):
    """Random ensemble meeting no-enhancement and the averaging conditions.

    Every state with an instruction is fully detected without a polarizer;
    the all-zero state carries a common no-polarizer rate on both sides.
    """
    vals = (1, -1, 0)
    entries = []
    for _ in range(int(rng.integers(3, 10))):
        t = tuple(int(x) for x in rng.choice(vals, size=4))
        if t == (0, 0, 0, 0):
            p = float(rng.choice((0.0, 0.5, 1.0)))
            entries.append((LhvState(*t, p, p), float(rng.random())))
        else:
            entries.append((LhvState(*t, 1.0, 1.0), float(rng.random())))
    p0 = float(rng.choice((0.0, 0.5, 1.0)))
    entries.append((LhvState(0, 0, 0, 0, p0, p0), float(rng.random())))
    return Ensemble.normalized(entries).canonical()


def _averaging_ok(e) -> bool:
    p_a, p_b = eval_event(e, nopol("A")), eval_event(e, nopol("B"))
    if abs(p_a - p_b) > 1e-12 or p_a == 0:
        return False
    for i, v in itertools.product((1, 2), (1, -1, 0)):
        ga = eval_event(e, outcome("A", i, v) & nopol("B")) / p_b
        gb = eval_event(e, outcome("A", i, v) & nopol("A")) / p_a
        ha = eval_event(e, outcome("B", i, v) & nopol("A")) / p_a
        hb = eval_event(e, outcome("B", i, v) & nopol("B")) / p_b
        if abs(ga - gb) > 1e-12 or abs(ha - hb) > 1e-12:
            return False
    return True


def _bridge():
    rng = np.random.default_rng(12)
    gaps, n = [], 0
    while n < 20:
        e = _bridge_ensemble(rng)
        if lhv.check_no_enhancement(e) or not _averaging_ok(e):
            continue
        n += 1
        eta = eval_event(e, nopol("A"))
        gen = ineq.ch_genuine(e).value
        ng = ineq.ch_nongenuine(e, eta).value
        gaps.append(gen - eta**2 * ng)
    return gaps


def test_criterion_12_no_enhancement_bridge():
    dt, gaps = timed(_bridge, 1)
    assert len(gaps) == 20
    assert min(gaps) >= -1e-10, min(gaps)
    assert dt < 5.0, f"runtime {dt:.2f} s"


if __name__ == "__main__":
    import sys

    import pytest

    sys.exit(pytest.main([__file__, "-q"]))
