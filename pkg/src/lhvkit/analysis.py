"""Diagnostics for experimental count data: detection-rate estimates, Gamma
bounds on the Eberhard violation, ratio checks and the unfair-sampling table."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field, replace
from typing import Mapping

from .inequalities import CountTable, eberhard_qm
from .quantum import INDICES, PredictionSet, Setting

DEFAULT_WINDOW = (0.68, 0.73)
REPORT_BOUND = 0.0013


class AnalysisError(ValueError):
    """Raised for undefined estimators (zero denominators)."""


@dataclass(frozen=True)
class ExperimentRecord:
    """Published-style summary of an Eberhard experiment.

    ``singles[(side, i, code)]`` and ``coincidences[(i, j, codeA, codeB)]``
    are counted over one context's share of the trials.
    """

    singles: Mapping[tuple[str, int, str], float]
    coincidences: Mapping[tuple[int, int, str, str], float]
    j_value: float
    total_trials: float
    angles: tuple[Setting, ...] = ()
    r_param: float | None = None

    def __post_init__(self) -> None:
        for k, v in itertools.chain(self.singles.items(), self.coincidences.items()):
            if v < 0:
                raise AnalysisError(f"negative count at {k!r}")
        for (i, j, a, b), c in self.coincidences.items():
            sa = self.singles.get(("A", i, a))
            sb = self.singles.get(("B", j, b))
            for s in (sa, sb):
                if s is not None and c > s * (1 + 1e-12):
                    raise AnalysisError(f"coincidence ({i},{j},{a},{b}) exceeds a single count")

    def S(self, side: str, i: int, code: str = "o") -> float:
        return self.singles.get((side, i, code), 0)

    def C(self, i: int, j: int, a: str = "o", b: str = "o") -> float:
        return self.coincidences.get((i, j, a, b), 0)

    def scaled(self, k: int) -> "ExperimentRecord":
        return replace(self, singles={key: v * k for key, v in self.singles.items()},
                       coincidences={key: v * k for key, v in self.coincidences.items()},
                       j_value=self.j_value * k, total_trials=self.total_trials * k)

    def with_coincidence_factor(self, i: int, j: int, factor: float,
                                a: str = "o", b: str = "o") -> "ExperimentRecord":
        c = dict(self.coincidences)
        c[(i, j, a, b)] = c.get((i, j, a, b), 0) * factor
        return replace(self, coincidences=c)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "i", "j", "a", "b", "count"])
        w.writerow(["J", "", "", "", "", self.j_value])
        w.writerow(["N", "", "", "", "", self.total_trials])
        for (side, i, a), n in sorted(self.singles.items()):
            if side == "A":
                w.writerow(["single", i, "", a, "", n])
            else:
                w.writerow(["single", "", i, "", a, n])
        for (i, j, a, b), n in sorted(self.coincidences.items()):
            w.writerow(["coinc", i, j, a, b, n])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ExperimentRecord":
        def num(x):
            f = float(x)
            return int(f) if f.is_integer() else f

        singles, coinc, J, N = {}, {}, 0, 0
        for r in csv.DictReader(io.StringIO(text)):
            kind = r["kind"]
            if kind == "J":
                J = num(r["count"])
            elif kind == "N":
                N = num(r["count"])
            elif kind == "single":
                if r["i"]:
                    singles[("A", int(r["i"]), r["a"])] = num(r["count"])
                else:
                    singles[("B", int(r["j"]), r["b"])] = num(r["count"])
            elif kind == "coinc":
                coinc[(int(r["i"]), int(r["j"]), r["a"], r["b"])] = num(r["count"])
            else:
                raise AnalysisError(f"unknown row kind {kind!r}")
        return cls(singles, coinc, J, N)


def synthesize_record(pred: PredictionSet, eta_a: float, n_pairs: float,
                      eta_b: float | None = None) -> ExperimentRecord:
    """Expected singles and coincidences with independent detection rates.

    Each context receives ``n_pairs / 4`` trials; J follows from the quantum
    Eberhard expression (symmetric rates only).
    """
    eta_b = eta_a if eta_b is None else eta_b
    t = n_pairs / 4
    code = {1: "o", -1: "e"}
    singles = {("A", i, code[a]): t * eta_a * pred.q_a[(i, a)] for i in INDICES for a in (1, -1)}
    singles.update({("B", j, code[b]): t * eta_b * pred.q_b[(j, b)]
                    for j in INDICES for b in (1, -1)})
    coinc = {(i, j, code[a], code[b]): t * eta_a * eta_b * pred.q_joint[(i, j, a, b)]
             for i in INDICES for j in INDICES for a in (1, -1) for b in (1, -1)}
    J = eberhard_qm(pred, eta_a, n_pairs).value if eta_a == eta_b else 0.0
    return ExperimentRecord(singles, coinc, J, n_pairs)


def estimate_etas(rec: ExperimentRecord, pred: PredictionSet) -> tuple[float, float]:
    """Detection rates from coincidence-to-single ratios over quantum conditionals."""
    s_b, s_a = rec.S("B", 1), rec.S("A", 1)
    q_a2_b1 = pred.conditional_a_given_b(2, 1, 1, 1)
    q_b1_a1 = pred.conditional_b_given_a(1, 1, 1, 1)
    if not s_b or not s_a:
        raise AnalysisError("zero single count")
    if q_a2_b1 == 0 or q_b1_a1 == 0:
        raise AnalysisError("zero conditional prediction")
    eta_a = rec.C(2, 1) / s_b / q_a2_b1
    eta_b = rec.C(1, 1) / s_a / q_b1_a1
    return float(eta_a), float(eta_b)


@dataclass(frozen=True)
class GammaReport:
    """Gamma windows ``name -> (low, high)`` over the eta window."""

    gamma_a: tuple[float, float]
    gamma_b: tuple[float, float]
    gamma_ij: dict
    gamma_report: float
    gamma_report_bound: float
    eta_window: tuple[float, float]
    report_within_bound: bool = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "report_within_bound",
                           bool(self.gamma_report < self.gamma_report_bound))

    def windows(self) -> dict[str, tuple[float, float]]:
        out = {"A": self.gamma_a, "B": self.gamma_b}
        out.update({f"{i},{j}": w for (i, j), w in sorted(self.gamma_ij.items())})
        return out

    def to_dict(self) -> dict:
        return {"windows": {k: list(v) for k, v in self.windows().items()},
                "gammaReport": self.gamma_report, "gammaReportBound": self.gamma_report_bound,
                "reportWithinBound": self.report_within_bound,
                "etaWindow": list(self.eta_window)}


def _window(f, lo, hi) -> tuple[float, float]:
    a, b = f(lo), f(hi)
    return (min(a, b), max(a, b))


def gamma_report_value(j_value: float, n_ours: float) -> float:
    """|J| / N_ours."""
    if n_ours <= 0:
        raise AnalysisError("N_ours must be positive")
    return abs(j_value) / n_ours


def gamma_bounds(rec: ExperimentRecord, pred: PredictionSet,
                 eta_window: tuple[float, float] = DEFAULT_WINDOW,
                 background: float = 0.0) -> GammaReport:
    """Gamma estimates of the per-pair Eberhard value at both window ends.

    ``background`` lowers the window's lower end to allow for accidental counts.
    """
    lo, hi = eta_window[0] - background, eta_window[1]
    J = rec.j_value

    def single(side, q, s):
        if not s:
            return (0.0, 0.0) if J == 0 else (float("nan"),) * 2
        return _window(lambda e: e * q / (4 * s) * J, lo, hi)

    g_a = single("A", pred.q_a[(1, 1)], rec.S("A", 1))
    g_b = single("B", pred.q_b[(1, 1)], rec.S("B", 1))
    g_ij = {}
    for i, j in itertools.product(INDICES, INDICES):
        c = rec.C(i, j)
        q = pred.q_joint[(i, j, 1, 1)]
        if not c:
            g_ij[(i, j)] = (0.0, 0.0) if J == 0 else (float("nan"),) * 2
        else:
            g_ij[(i, j)] = _window(lambda e: e * e * q / (4 * c) * J, lo, hi)
    return GammaReport(g_a, g_b, g_ij, gamma_report_value(J, rec.total_trials),
                       REPORT_BOUND, (lo, hi))


def consistency_flags(report: GammaReport) -> list[tuple[str, str]]:
    """Pairs of Gamma windows with empty intersection."""
    w = report.windows()
    out = []
    for x, y in itertools.combinations(w, 2):
        (a0, a1), (b0, b1) = w[x], w[y]
        if max(a0, b0) > min(a1, b1):
            out.append((x, y))
    return out


def christensen_ratios(s2b: float, c_ab: float, c_apb: float) -> tuple[float, float]:
    """p1 = S2(b)/C(a,b) and p2 = S2(b)/C(a',b)."""
    if not c_ab or not c_apb:
        raise AnalysisError("zero coincidence count")
    return s2b / c_ab, s2b / c_apb


def unfair_sampling_table(counts: CountTable) -> dict[tuple, float | None]:
    """Conditional detection rates ``P(A_i detected | B_j = b)`` and the mirror.

    Keys are ``("A", i, b, j)`` and ``("B", j, a, i)``; undefined entries
    (empty conditioning subsample) are ``None``.
    """
    n = counts.n
    out: dict[tuple, float | None] = {}
    for i, j in itertools.product(INDICES, INDICES):
        for b in "oe":
            den = sum(n(i, j, a, b) for a in "oeu")
            out[("A", i, b, j)] = (float(sum(n(i, j, a, b) for a in "oe") / den)
                                   if den else None)
        for a in "oe":
            den = sum(n(i, j, a, b) for b in "oeu")
            out[("B", j, a, i)] = (float(sum(n(i, j, a, b) for b in "oe") / den)
                                   if den else None)
    return out


__all__ = ["ExperimentRecord", "GammaReport", "synthesize_record", "estimate_etas",
           "gamma_bounds", "gamma_report_value", "consistency_flags", "christensen_ratios",
           "unfair_sampling_table"]
