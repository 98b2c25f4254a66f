"""Genuine, non-genuine, operational and corrected Bell expressions.

Every expression reads probabilities through a *source*: an object whose
``dist(i, j)`` returns the outcome distribution of context ``(i, j)`` as a
map ``(codeA, codeB) -> probability``. Setting indices are 1, 2 or ``"inf"``
(polarizer removed). Outcome codes are ``o`` (+1), ``e`` (-1), ``u``
(undetected) and ``g`` (both channels fired); on a side without polarizer
``o`` means detected.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

import numpy as np

from .lhv import ContextualEnsemble, Ensemble, LhvState
from .quantum import INDICES, PredictionSet

INF = "inf"
CODES = ("o", "e", "u", "g")
SETTING_CONTEXTS = tuple(itertools.product(INDICES, INDICES))
ALL_CONTEXTS = tuple(itertools.product((1, 2, INF), (1, 2, INF)))
CODE_OF = {1: "o", -1: "e", 0: "u"}


class InequalityError(ValueError):
    """Raised for undefined expressions (zero denominators, bad input)."""


# ---------------------------------------------------------------- reports

ASSUMPTIONS = {
    "chsh": ("fair-sampling",),
    "ch_gen": ("genuine",),
    "ch_ng": ("no-enhancement",),
    "ch_op": ("no-enhancement",),
    "ch_2ch": ("fair-sampling",),
    "ch_norm": ("fair-sampling",),
    "eberhard_prob": ("genuine", "non-contextual"),
    "eberhard_counts": ("genuine", "non-contextual"),
    "eberhard_eta": ("independent-errors",),
}


@dataclass(frozen=True)
class BetaReport:
    """Value of an inequality with its local bounds.

    ``excess`` is the distance by which ``value`` lies outside the bounds.
    """

    value: float
    kind: str
    convention: str
    bounds: tuple[float, float]
    violated: bool = field(init=False)
    excess: float = field(init=False)
    assumptions: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        lo, hi = self.bounds
        v = float(self.value)
        object.__setattr__(self, "value", v)
        object.__setattr__(self, "violated", bool(v < lo or v > hi))
        object.__setattr__(self, "excess", max(lo - v, v - hi, 0.0))
        if not self.assumptions:
            object.__setattr__(self, "assumptions", ASSUMPTIONS.get(self.kind, ()))

    def to_dict(self) -> dict:
        return {"value": self.value, "kind": self.kind, "convention": self.convention,
                "bounds": list(self.bounds), "violated": self.violated,
                "excess": self.excess, "assumptions": list(self.assumptions)}


# ---------------------------------------------------------------- sources

def _state_side(s: LhvState, side: str, idx) -> dict[str, float]:
    if idx == INF:
        p = s.p_nopol(side)
        return {"o": p, "u": 1.0 - p}
    return {CODE_OF[s.instr(side, idx)]: 1.0}


class EnsembleSource:
    """Probabilities of an LHV ensemble (independent no-polarizer responses)."""

    def __init__(self, ensemble: Ensemble) -> None:
        self.ensemble = ensemble
        self._cache: dict = {}

    def dist(self, i, j) -> dict[tuple[str, str], float]:
        if (i, j) not in self._cache:
            out: dict[tuple[str, str], float] = {}
            for s, w in self.ensemble:
                for ca, pa in _state_side(s, "A", i).items():
                    for cb, pb in _state_side(s, "B", j).items():
                        out[(ca, cb)] = out.get((ca, cb), 0.0) + w * pa * pb
            self._cache[(i, j)] = out
        return self._cache[(i, j)]


class ContextualSource:
    """Probabilities of a contextual ensemble; removed-polarizer sides use setting 1."""

    def __init__(self, ensemble: ContextualEnsemble) -> None:
        self.ensemble = ensemble

    def dist(self, i, j):
        ci = 1 if i == INF else i
        cj = 1 if j == INF else j
        return EnsembleSource(self.ensemble.context(ci, cj)).dist(i, j)


class PredictionSource:
    """Quantum predictions with independent local detection rate eta."""

    def __init__(self, pred: PredictionSet, eta: float = 1.0) -> None:
        if not 0 <= eta <= 1:
            raise InequalityError("eta outside [0, 1]")
        self.pred = pred
        self.eta = eta

    def _side(self, side: str, idx) -> dict[str, float]:
        eta = self.eta
        if idx == INF:
            return {"o": eta, "u": 1 - eta}
        q = self.pred.q_a if side == "A" else self.pred.q_b
        return {"o": eta * q[(idx, 1)], "e": eta * q[(idx, -1)], "u": 1 - eta}

    def dist(self, i, j):
        eta = self.eta
        out = {}
        sa, sb = self._side("A", i), self._side("B", j)
        for ca, pa in sa.items():
            for cb, pb in sb.items():
                if i != INF and j != INF and ca in "oe" and cb in "oe":
                    a = 1 if ca == "o" else -1
                    b = 1 if cb == "o" else -1
                    out[(ca, cb)] = eta * eta * self.pred.q_joint[(i, j, a, b)]
                else:
                    out[(ca, cb)] = pa * pb
        return out


class CountSource:
    """Relative frequencies of a CountTable (count / trials per context)."""

    def __init__(self, table: "CountTable") -> None:
        self.table = table

    def dist(self, i, j):
        t = self.table.trials.get((i, j))
        if not t:
            raise InequalityError(f"no trials recorded for context ({i},{j})")
        out = {}
        for (ci, cj, ca, cb), n in self.table.counts.items():
            if (ci, cj) == (i, j):
                out[(ca, cb)] = _ratio(n, t)
        return out


def as_source(obj, eta: float | None = None):
    """Wrap an ensemble, contextual ensemble, prediction set or count table."""
    if hasattr(obj, "dist"):
        return obj
    if isinstance(obj, Ensemble):
        return EnsembleSource(obj)
    if isinstance(obj, ContextualEnsemble):
        return ContextualSource(obj)
    if isinstance(obj, PredictionSet):
        return PredictionSource(obj, 1.0 if eta is None else eta)
    if isinstance(obj, CountTable):
        return CountSource(obj)
    raise InequalityError(f"cannot read probabilities from {type(obj).__name__}")


def _ratio(n, d):
    if isinstance(n, int) and isinstance(d, int):
        return Fraction(n, d)
    return n / d


def prob(src, i, j, ca, cb) -> float:
    return src.dist(i, j).get((ca, cb), 0)


def prob_a(src, i, ca, j=1) -> float:
    """P(A_i = ca), read from context ``(i, j)``."""
    return sum(p for (a, _), p in src.dist(i, j).items() if a == ca)


def prob_b(src, j, cb, i=1) -> float:
    return sum(p for (_, b), p in src.dist(i, j).items() if b == cb)


def correlations(source, eta: float | None = None) -> dict[tuple[int, int], float]:
    """Correlations <A_i B_j> over coincident detections."""
    src = as_source(source, eta)
    out = {}
    for i, j in SETTING_CONTEXTS:
        d = src.dist(i, j)
        num = sum(sa * sb * d.get((ca, cb), 0.0)
                  for ca, sa in (("o", 1), ("e", -1)) for cb, sb in (("o", 1), ("e", -1)))
        den = sum(d.get((ca, cb), 0.0) for ca in "oe" for cb in "oe")
        if den == 0:
            raise InequalityError(f"no coincidences in context ({i},{j})")
        out[(i, j)] = float(num / den)
    return out


# ---------------------------------------------------------------- CHSH and CH

def chsh(corr: Mapping[tuple[int, int], float], convention: str = "paper") -> BetaReport:
    """|C11 + C12 + C21 - C22| (paper) or |C11 - C12 + C21 + C22| (aspect)."""
    c = corr
    if convention == "paper":
        v = c[(1, 1)] + c[(1, 2)] + c[(2, 1)] - c[(2, 2)]
    elif convention == "aspect":
        v = c[(1, 1)] - c[(1, 2)] + c[(2, 1)] + c[(2, 2)]
    else:
        raise InequalityError(f"unknown convention {convention!r}")
    return BetaReport(abs(v), "chsh", convention, (0.0, 2.0))


def _ch_terms(src, convention: str):
    p = lambda i, j: prob(src, i, j, "o", "o")  # noqa: E731
    if convention == "paper":
        return p(1, 1) + p(1, 2) + p(2, 1) - p(2, 2), 1, 1
    if convention == "aspect":
        return p(1, 1) - p(1, 2) + p(2, 1) + p(2, 2), 2, 1
    raise InequalityError(f"unknown convention {convention!r}")


def ch_genuine(source, convention: str = "paper", eta: float | None = None) -> BetaReport:
    """P11 + P12 + P21 - P22 - P(A1=1) - P(B1=1) with bounds (-1, 0).

    The ``aspect`` convention is P11 - P12 + P21 + P22 - P(A2=1) - P(B1=1).
    """
    src = as_source(source, eta)
    s, ia, jb = _ch_terms(src, convention)
    v = s - prob_a(src, ia, "o") - prob_b(src, jb, "o")
    return BetaReport(float(v), "ch_gen", convention, (-1.0, 0.0))


def ch_nongenuine(source, eta: float, convention: str = "paper") -> BetaReport:
    """(1/eta^2)[P11 + P12 + P21 - P22 - P(A1=1, B) - P(A, B1=1)], upper bound 0."""
    if eta == 0:
        raise InequalityError("eta must be positive")
    src = as_source(source, eta)
    s, ia, jb = _ch_terms(src, convention)
    v = s - prob(src, ia, INF, "o", "o") - prob(src, INF, jb, "o", "o")
    return BetaReport(float(v) / eta**2, "ch_ng", convention, (-math.inf, 0.0))


def ch_nongenuine_subsample(source, eta: float) -> BetaReport:
    """Same expression written with subsample conditionals P(A1=1 | B) and P(B1=1 | A)."""
    if eta == 0:
        raise InequalityError("eta must be positive")
    src = as_source(source, eta)
    s, _, _ = _ch_terms(src, "paper")
    p_b = prob_b(src, INF, "o", i=INF)
    p_a = prob_a(src, INF, "o", j=INF)
    if p_a == 0 or p_b == 0:
        raise InequalityError("empty no-polarizer subsample")
    cond_a = prob(src, 1, INF, "o", "o") / p_b
    cond_b = prob(src, INF, 1, "o", "o") / p_a
    v = s - eta * cond_a - eta * cond_b
    return BetaReport(float(v) / eta**2, "ch_ng", "paper", (-math.inf, 0.0))


def ch_normalized(source, eta: float) -> BetaReport:
    """(1/eta^2)[P11 + P12 + P21 - P22 - eta P(A1=1) - eta P(B1=1)]."""
    if eta == 0:
        raise InequalityError("eta must be positive")
    src = as_source(source, eta)
    s, _, _ = _ch_terms(src, "paper")
    v = s - eta * prob_a(src, 1, "o") - eta * prob_b(src, 1, "o")
    return BetaReport(float(v) / eta**2, "ch_norm", "paper", (-1.0, 0.0))


# ---------------------------------------------------------------- count tables

@dataclass(frozen=True)
class CountTable:
    """Counts ``(i, j, codeA, codeB) -> n`` and ``trials[(i, j)]``.

    Integer counts are required when read from CSV; synthesized expected
    counts may be fractional.
    """

    counts: Mapping[tuple, float]
    trials: Mapping[tuple, float]

    def __post_init__(self) -> None:
        per_ctx: dict = {}
        for key, n in self.counts.items():
            i, j, ca, cb = key
            if i not in (1, 2, INF) or j not in (1, 2, INF):
                raise InequalityError(f"bad context in {key!r}")
            if ca not in CODES or cb not in CODES:
                raise InequalityError(f"bad outcome code in {key!r}")
            if n < 0:
                raise InequalityError(f"negative count at {key!r}")
            per_ctx[(i, j)] = per_ctx.get((i, j), 0) + n
        for ctx, tot in per_ctx.items():
            t = self.trials.get(ctx)
            if t is None:
                raise InequalityError(f"missing trials for context {ctx}")
            if tot > t * (1 + 1e-12):
                raise InequalityError(f"counts in context {ctx} exceed trials")

    def n(self, i, j, ca, cb):
        return self.counts.get((i, j, ca, cb), 0)

    def scaled(self, k: int) -> "CountTable":
        return CountTable({key: v * k for key, v in self.counts.items()},
                          {key: v * k for key, v in self.trials.items()})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["context", "i", "j", "outcomeA", "outcomeB", "count"])
        for (i, j), t in sorted(self.trials.items(), key=lambda kv: str(kv[0])):
            w.writerow(["trials", i, j, "", "", t])
        for (i, j, ca, cb), n in sorted(self.counts.items(), key=lambda kv: str(kv[0])):
            w.writerow(["coinc", i, j, ca, cb, n])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CountTable":
        def idx(x):
            return INF if x == INF else int(x)

        counts, trials = {}, {}
        for r in csv.DictReader(io.StringIO(text)):
            n = int(r["count"])
            key = (idx(r["i"]), idx(r["j"]))
            if r["context"] == "trials":
                trials[key] = n
            else:
                full = key + (r["outcomeA"], r["outcomeB"])
                counts[full] = counts.get(full, 0) + n
        return cls(counts, trials)


def _integral(x: float):
    r = round(x)
    return int(r) if abs(x - r) <= 1e-9 * max(1.0, abs(x)) else x


def synthesize_counts(source, trials: int, contexts=ALL_CONTEXTS, eta: float | None = None,
                      rng: np.random.Generator | None = None) -> CountTable:
    """Expected counts (or multinomial samples with ``rng``) of every context."""
    src = as_source(source, eta)
    counts, tr = {}, {}
    for i, j in contexts:
        d = src.dist(i, j)
        keys = sorted(d)
        probs = np.array([float(d[k]) for k in keys])
        if rng is not None:
            draws = rng.multinomial(trials, np.clip(probs, 0, None) / probs.sum())
            vals = [int(x) for x in draws]
        else:
            vals = [_integral(trials * p) for p in probs]
        for k, v in zip(keys, vals):
            counts[(i, j) + k] = v
        tr[(i, j)] = trials
    return CountTable(counts, tr)


def ch_operational(counts: CountTable) -> BetaReport:
    """[N(a1,b1) + N(a1,b2) + N(a2,b1) - N(a2,b2) - N(a1,inf) - N(inf,b1)] / N(inf,inf)."""
    n = counts.n
    den = n(INF, INF, "o", "o")
    if not den:
        raise InequalityError("N(inf, inf) is zero")
    num = (n(1, 1, "o", "o") + n(1, 2, "o", "o") + n(2, 1, "o", "o") - n(2, 2, "o", "o")
           - n(1, INF, "o", "o") - n(INF, 1, "o", "o"))
    return BetaReport(float(_ratio(num, den)), "ch_op", "paper", (-math.inf, 0.0))


def ch_two_channel(counts: CountTable) -> BetaReport:
    """Coincidence terms over detected pairs of each context, singles over N(A), N(B).

    N(A) = N(A1=+1) + N(A1=-1) and N(B) likewise, both from context (1, 1).
    """
    n = counts.n
    total = 0
    for (i, j), sign in zip(SETTING_CONTEXTS, (1, 1, 1, -1)):
        nab = sum(n(i, j, a, b) for a in "oe" for b in "oe")
        if not nab:
            raise InequalityError(f"no coincidences in context ({i},{j})")
        total += sign * _ratio(n(i, j, "o", "o"), nab)
    na_o = sum(n(1, 1, "o", b) for b in CODES)
    na = na_o + sum(n(1, 1, "e", b) for b in CODES)
    nb_o = sum(n(1, 1, a, "o") for a in CODES)
    nb = nb_o + sum(n(1, 1, a, "e") for a in CODES)
    if not na or not nb:
        raise InequalityError("no singles in context (1,1)")
    total = total - _ratio(na_o, na) - _ratio(nb_o, nb)
    return BetaReport(float(total), "ch_2ch", "paper", (-1.0, 0.0))


@dataclass(frozen=True)
class CoincidenceCorrection:
    delta: dict
    delta_a: dict
    delta_b: dict
    M: float
    beta_ns: float
    beta_sel: float


def coincidence_correction(counts: CountTable, marginal_context: tuple[int, int] = (1, 1)
                           ) -> CoincidenceCorrection:
    """Local-coincidence terms and the shift M between no-selection and selection.

    No-selection (NS) counts a double-fire as outcome +1; selection (SEL)
    discards every event containing one.
    """
    src = CountSource(counts)
    f = lambda i, j, a, b: prob(src, i, j, a, b)  # noqa: E731
    im, jm = marginal_context
    delta = {(i, j, a, b): f(i, j, "g", b) + f(i, j, a, "g") + f(i, j, "g", "g")
             for i, j in SETTING_CONTEXTS for a in "oe" for b in "oe"}
    delta_a = {(i, a): sum(f(i, jm, "g", cb) for cb in CODES) + f(i, jm, a, "g")
               for i in INDICES for a in "oe"}
    delta_b = {(j, b): sum(f(im, j, ca, "g") for ca in CODES) + f(im, j, "g", b)
               for j in INDICES for b in "oe"}
    M = (delta[(1, 1, "o", "o")] + delta[(1, 2, "o", "o")] + delta[(2, 1, "o", "o")]
         - delta[(2, 2, "o", "o")] - delta_a[(1, "o")] - delta_b[(1, "o")])

    def sel_joint(i, j):
        return f(i, j, "o", "o")

    def ns_joint(i, j):
        return sum(f(i, j, a, b) for a in "og" for b in "og")

    sel_a = sum(f(1, jm, "o", cb) for cb in "oeu")
    sel_b = sum(f(im, 1, ca, "o") for ca in "oeu")
    ns_a = sum(f(1, jm, a, cb) for a in "og" for cb in CODES)
    ns_b = sum(f(im, 1, ca, b) for b in "og" for ca in CODES)
    sign = dict(zip(SETTING_CONTEXTS, (1, 1, 1, -1)))
    beta_sel = sum(s * sel_joint(*c) for c, s in sign.items()) - sel_a - sel_b
    beta_ns = sum(s * ns_joint(*c) for c, s in sign.items()) - ns_a - ns_b
    if abs(float(beta_ns - beta_sel - M)) > 1e-12:
        raise InequalityError("no-selection / selection identity failed")
    to_f = lambda d: {k: float(v) for k, v in d.items()}  # noqa: E731
    return CoincidenceCorrection(to_f(delta), to_f(delta_a), to_f(delta_b), float(M),
                                 float(beta_ns), float(beta_sel))


# ---------------------------------------------------------------- Eberhard

def eberhard(source, eta: float | None = None) -> BetaReport:
    """-P11(+,+) + P12(+,-) + P12(+,0) + P21(-,+) + P21(0,+) + P22(+,+), lower bound 0."""
    src = as_source(source, eta)
    v = (-prob(src, 1, 1, "o", "o") + prob(src, 1, 2, "o", "e") + prob(src, 1, 2, "o", "u")
         + prob(src, 2, 1, "e", "o") + prob(src, 2, 1, "u", "o") + prob(src, 2, 2, "o", "o"))
    return BetaReport(float(v), "eberhard_prob", "paper", (0.0, math.inf))


def eberhard_counts(counts: CountTable):
    """Raw J = -n_oo(11) + n_oe(12) + n_ou(12) + n_eo(21) + n_uo(21) + n_oo(22)."""
    n = counts.n
    return (-n(1, 1, "o", "o") + n(1, 2, "o", "e") + n(1, 2, "o", "u")
            + n(2, 1, "e", "o") + n(2, 1, "u", "o") + n(2, 2, "o", "o"))


def eberhard_qm(pred: PredictionSet, eta: float, n_pairs: float | None = None) -> BetaReport:
    """Quantum Eberhard value under independent errors.

    Returns ``(N/4)[-eta^2 Q11(o,o) + eta^2 Q12(o,e) + eta(1-eta) Q^A_1(o)
    + eta^2 Q21(e,o) + eta(1-eta) Q^B_1(o) + eta^2 Q22(o,o)]``; without
    ``n_pairs`` the bracket itself (per-context probability form).
    """
    if not 0 <= eta <= 1:
        raise InequalityError("eta outside [0, 1]")
    qj, qa, qb = pred.q_joint, pred.q_a, pred.q_b
    e2, e1 = eta * eta, eta * (1 - eta)
    v = (-e2 * qj[(1, 1, 1, 1)] + e2 * qj[(1, 2, 1, -1)] + e1 * qa[(1, 1)]
         + e2 * qj[(2, 1, -1, 1)] + e1 * qb[(1, 1)] + e2 * qj[(2, 2, 1, 1)])
    if n_pairs is not None:
        v *= n_pairs / 4
    return BetaReport(v, "eberhard_eta", "paper", (0.0, math.inf))
