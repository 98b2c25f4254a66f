"""Local-hidden-variable ensembles and the named constructions built from them."""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Sequence, Union

import numpy as np

from .quantum import INDICES, OUTCOMES, PredictionSet

WEIGHT_TOL = 1e-12
_ORDER = {1: 0, -1: 1, 0: 2}


class LhvError(ValueError):
    """Raised for malformed states, ensembles or events."""


@dataclass(frozen=True)
class LhvState:
    """Instructions ``(A1, A2; B1, B2)`` in {+1, -1, 0} plus no-polarizer
    detection probabilities ``pA``, ``pB``."""

    a1: int
    a2: int
    b1: int
    b2: int
    pA: float = 1.0
    pB: float = 1.0

    def __post_init__(self) -> None:
        for v in (self.a1, self.a2, self.b1, self.b2):
            if v not in (1, -1, 0):
                raise LhvError(f"instruction must be +1, -1 or 0, got {v!r}")
        for p in (self.pA, self.pB):
            if not 0.0 <= p <= 1.0:
                raise LhvError(f"no-polarizer probability {p} outside [0, 1]")

    @property
    def instructions(self) -> tuple[int, int, int, int]:
        return (self.a1, self.a2, self.b1, self.b2)

    def instr(self, side: str, index: int) -> int:
        if side == "A":
            return self.a1 if index == 1 else self.a2
        return self.b1 if index == 1 else self.b2

    def p_nopol(self, side: str) -> float:
        return self.pA if side == "A" else self.pB

    def sort_key(self) -> tuple:
        return tuple(_ORDER[v] for v in self.instructions) + (self.pA, self.pB)

    def flipped(self) -> "LhvState":
        """Global sign flip of every instruction."""
        return LhvState(-self.a1, -self.a2, -self.b1, -self.b2, self.pA, self.pB)

    def is_deterministic(self) -> bool:
        return self.pA in (0.0, 1.0) and self.pB in (0.0, 1.0)

    def substates(self) -> list[tuple["LhvState", float]]:
        """Deterministic decomposition assuming independent no-polarizer responses."""
        out = []
        for da, db in itertools.product((1.0, 0.0), repeat=2):
            w = (self.pA if da else 1 - self.pA) * (self.pB if db else 1 - self.pB)
            if w > 0:
                out.append((LhvState(self.a1, self.a2, self.b1, self.b2, da, db), w))
        return out


# ---------------------------------------------------------------- events

@dataclass(frozen=True)
class SettingOutcome:
    """Setting ``index`` on ``side`` yields ``outcome`` (+1, -1, or 0 for undetected)."""

    side: str
    index: int
    outcome: int

    def prob(self, s: LhvState) -> float:
        return 1.0 if s.instr(self.side, self.index) == self.outcome else 0.0


@dataclass(frozen=True)
class SettingDetected:
    """Setting ``index`` on ``side`` yields any detection."""

    side: str
    index: int

    def prob(self, s: LhvState) -> float:
        return 1.0 if s.instr(self.side, self.index) != 0 else 0.0


@dataclass(frozen=True)
class NoPolarizer:
    """Polarizer removed on ``side``; the particle is (un)detected."""

    side: str
    detected: bool = True

    def prob(self, s: LhvState) -> float:
        p = s.p_nopol(self.side)
        return p if self.detected else 1.0 - p


Atom = Union[SettingOutcome, SettingDetected, NoPolarizer]


@dataclass(frozen=True)
class Event:
    """Conjunction of atoms."""

    atoms: tuple[Atom, ...]

    def __post_init__(self) -> None:
        for side in ("A", "B"):
            setting_atoms = [a for a in self.atoms
                             if isinstance(a, (SettingOutcome, SettingDetected)) and a.side == side]
            if len({a.index for a in setting_atoms}) > 1:
                raise LhvError(f"two different settings on side {side} in one event")
            nopol = [a for a in self.atoms if isinstance(a, NoPolarizer) and a.side == side]
            if len({a.detected for a in nopol}) > 1:
                raise LhvError(f"contradictory no-polarizer atoms on side {side}")
        for a in self.atoms:
            if a.side not in ("A", "B"):
                raise LhvError(f"bad side {a.side!r}")
            if isinstance(a, (SettingOutcome, SettingDetected)) and a.index not in INDICES:
                raise LhvError(f"bad setting index {a.index!r}")
            if isinstance(a, SettingOutcome) and a.outcome not in (1, -1, 0):
                raise LhvError(f"bad outcome {a.outcome!r}")

    def __and__(self, other: "Event") -> "Event":
        return Event(self.atoms + other.atoms)

    def prob(self, s: LhvState) -> float:
        # Duplicate atoms are idempotent.
        p = 1.0
        for atom in dict.fromkeys(self.atoms):
            p *= atom.prob(s)
        return p

    def setting_index(self, side: str) -> int | None:
        for a in self.atoms:
            if isinstance(a, (SettingOutcome, SettingDetected)) and a.side == side:
                return a.index
        return None


def event(*atoms: Atom) -> Event:
    return Event(tuple(atoms))


def outcome(side: str, index: int, value: int) -> Event:
    return event(SettingOutcome(side, index, value))


def detected(side: str, index: int) -> Event:
    return event(SettingDetected(side, index))


def nopol(side: str, detected_: bool = True) -> Event:
    return event(NoPolarizer(side, detected_))


def joint(i: int, j: int, a: int, b: int) -> Event:
    return event(SettingOutcome("A", i, a), SettingOutcome("B", j, b))


# ---------------------------------------------------------------- ensembles

class Ensemble:
    """Weighted list of LhvStates with unit total weight.

    ``signed=True`` admits negative weights; it is used only for formal
    continuations of closed-form models outside their validity range.
    """

    def __init__(self, entries: Iterable[tuple[LhvState, float]], *, signed: bool = False,
                 tol: float = WEIGHT_TOL) -> None:
        states, weights = [], []
        for s, w in entries:
            w = float(w)
            if not signed and w < 0:
                if w < -tol:
                    raise LhvError(f"negative weight {w}")
                w = 0.0
            states.append(s)
            weights.append(w)
        if not states:
            raise LhvError("empty ensemble")
        total = math.fsum(weights)
        if abs(total - 1.0) > tol:
            raise LhvError(f"weights sum to {total!r}, not 1")
        self.states: tuple[LhvState, ...] = tuple(states)
        self.weights = np.array(weights, dtype=float)
        self.weights.setflags(write=False)
        self.signed = signed

    @classmethod
    def normalized(cls, entries: Iterable[tuple[LhvState, float]], **kw) -> "Ensemble":
        """Rescale weights to unit total before validation."""
        entries = list(entries)
        total = math.fsum(w for _, w in entries)
        if total <= 0:
            raise LhvError("weights must have positive total")
        return cls([(s, w / total) for s, w in entries], **kw)

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(zip(self.states, self.weights))

    def __repr__(self) -> str:
        return f"Ensemble({len(self)} states)"

    def canonical(self) -> "Ensemble":
        """Merge duplicate states and sort in canonical order."""
        merged: dict[LhvState, float] = {}
        for s, w in self:
            merged[s] = merged.get(s, 0.0) + float(w)
        items = sorted(merged.items(), key=lambda kv: kv[0].sort_key())
        return Ensemble(items, signed=self.signed)

    def expand_substates(self) -> "Ensemble":
        """Replace every state by its deterministic sub-states."""
        out = []
        for s, w in self:
            out.extend((sub, w * ws) for sub, ws in s.substates())
        return Ensemble(out, signed=self.signed)

    def map_states(self, fn) -> "Ensemble":
        return Ensemble([(fn(s), w) for s, w in self], signed=self.signed)

    def to_csv(self, path_or_buf=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["instrA1", "instrA2", "instrB1", "instrB2", "pA", "pB", "weight"])
        for s, wt in self:
            w.writerow([s.a1, s.a2, s.b1, s.b2, repr(float(s.pA)), repr(float(s.pB)),
                        f"{float(wt):.17g}"])
        text = buf.getvalue()
        if path_or_buf is not None:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text_or_path: str, **kw) -> "Ensemble":
        if "\n" not in text_or_path:
            with open(text_or_path, newline="") as fh:
                text_or_path = fh.read()
        rows = list(csv.DictReader(io.StringIO(text_or_path)))
        entries = [(LhvState(int(r["instrA1"]), int(r["instrA2"]), int(r["instrB1"]),
                             int(r["instrB2"]), float(r["pA"]), float(r["pB"])),
                    float(r["weight"])) for r in rows]
        return cls(entries, **kw)


@dataclass(frozen=True)
class ContextualEnsemble:
    """One ensemble per setting pair ``(i, j)``."""

    per_context: dict

    def __post_init__(self) -> None:
        for key, ens in self.per_context.items():
            if key not in itertools.product(INDICES, INDICES):
                raise LhvError(f"bad context {key!r}")
            if not isinstance(ens, Ensemble):
                raise LhvError("context entries must be Ensembles")

    def context(self, i: int, j: int) -> Ensemble:
        try:
            return self.per_context[(i, j)]
        except KeyError:
            raise LhvError(f"no ensemble for context ({i},{j})") from None


def eval_event(ensemble: Ensemble | ContextualEnsemble, ev: Event,
               context: tuple[int, int] | None = None) -> float:
    """Sum over states of weight times the in-state probability of ``ev``.

    For a contextual ensemble the context is read from the event's setting
    atoms; a side without a setting atom uses ``context`` (default index 1).
    """
    if isinstance(ensemble, ContextualEnsemble):
        ci, cj = context if context is not None else (1, 1)
        i = ev.setting_index("A") or ci
        j = ev.setting_index("B") or cj
        ensemble = ensemble.context(i, j)
    total = 0.0
    for s, w in ensemble:
        if w:
            total += w * ev.prob(s)
    return total


def conditional(ensemble, ev: Event, given: Event, context=None) -> float:
    """P(ev | given) as a ratio of two eval_event calls."""
    den = eval_event(ensemble, given, context)
    if den == 0:
        raise LhvError("conditioning on a zero-probability event")
    return eval_event(ensemble, ev & given, context) / den


# ---------------------------------------------------------------- model M family

def eta_crit_chsh(beta: float) -> float:
    """Critical detection rate 2/(1 + beta/2) of the canonical CHSH model."""
    if not 2.0 <= beta <= 2.0 * math.sqrt(2.0) + 1e-15:
        raise LhvError(f"beta={beta} outside [2, 2*sqrt(2)]")
    return 2.0 / (1.0 + beta / 2.0)


def frequencies(eta: float) -> tuple[float, float]:
    """Block frequencies ``p = eta(3 eta - 2)`` and ``q = 4 eta (1 - eta)``."""
    return eta * (3 * eta - 2), 4 * eta * (1 - eta)


# Sign patterns (s = +1 shown); each expands to s = +1 and s = -1.
M_P_PATTERNS = ((1, 1, 1, 1), (1, 1, 1, -1), (1, -1, 1, 1), (1, -1, -1, 1))
M_Q_PATTERNS = ((1, 1, 1, 0), (1, -1, 0, 1), (1, 0, 1, 1), (0, 1, 1, -1))
M_PRIME_NOPOL = ((1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (1.0, 1.0))
M_DOUBLE_PRIME_NOPOL = ((1.0, 0.5), (1.0, 0.5), (0.5, 1.0), (0.5, 1.0))
ZERO = (0, 0, 0, 0)


def _pair(pattern) -> list[tuple[int, int, int, int]]:
    return [tuple(s * v for v in pattern) for s in (1, -1)]


def _build_M_blocks(eta: float, q_nopol, p_nopol=(0.0, 0.0), zero_nopol=(0.0, 0.0),
                    signed: bool = False) -> Ensemble:
    p, q = frequencies(eta)
    if not signed and not (0 <= p <= 1 and 0 <= q <= 1 and 1 - p - q >= -WEIGHT_TOL):
        raise LhvError(f"frequencies p={p}, q={q} outside [0, 1]")
    entries = []
    for pat in M_P_PATTERNS:
        for t in _pair(pat):
            entries.append((LhvState(*t, *p_nopol), p / 8))
    for pat, nop in zip(M_Q_PATTERNS, q_nopol):
        for t in _pair(pat):
            entries.append((LhvState(*t, *nop), q / 8))
    entries.append((LhvState(*ZERO, *zero_nopol), 1 - p - q))
    return Ensemble(entries, signed=signed)


def build_M(beta: float) -> Ensemble:
    """Canonical CHSH model at ``eta = eta_crit_chsh(beta)``.

    No-polarizer probabilities are placeholders (0) until extended.
    """
    if not beta > 2.0:
        raise LhvError("build_M needs beta > 2")
    return _build_M_blocks(eta_crit_chsh(beta), ((0.0, 0.0),) * 4)


def build_M_eta(eta: float, variant: str = "M", signed: bool = False) -> Ensemble:
    """Model M, M' or M'' parameterized directly by eta.

    Weights are nonnegative only for eta in [2/3, 1]; ``signed=True`` gives the
    formal continuation below 2/3.
    """
    if variant == "M":
        return _build_M_blocks(eta, ((0.0, 0.0),) * 4, signed=signed)
    if variant == "M'":
        return _build_M_blocks(eta, M_PRIME_NOPOL, (1.0, 1.0), signed=signed)
    if variant == "M''":
        return _build_M_blocks(eta, M_DOUBLE_PRIME_NOPOL, (1.0, 1.0), signed=signed)
    raise LhvError(f"unknown variant {variant!r}")


def _block_of(s: LhvState) -> tuple[str, int]:
    t = s.instructions
    if t == ZERO:
        return "R", 0
    for k, pat in enumerate(M_P_PATTERNS):
        if t in _pair(pat):
            return "P", k
    for k, pat in enumerate(M_Q_PATTERNS):
        if t in _pair(pat):
            return "Q", k
    raise LhvError(f"state {t} is not part of model M")


def _extend(m: Ensemble, q_nopol) -> Ensemble:
    out = []
    for s, w in m:
        block, k = _block_of(s)
        if block == "P":
            nop = (1.0, 1.0)
        elif block == "Q":
            nop = q_nopol[k]
        else:
            nop = (0.0, 0.0)
        out.append((LhvState(*s.instructions, *nop), w))
    return Ensemble(out, signed=m.signed)


def extend_to_M_prime(m: Ensemble) -> Ensemble:
    """Attach no-polarizer instructions turning M into M'."""
    return _extend(m, M_PRIME_NOPOL)


def build_M_double_prime(beta: float) -> Ensemble:
    """M'' : as M' but with half-detection no-polarizer values on M_Q."""
    return _extend(build_M(beta), M_DOUBLE_PRIME_NOPOL)


def m_prime_quantities(eta: float) -> dict[str, float]:
    """Closed-form quantities A..F' of M' at detection rate eta."""
    p, q = frequencies(eta)
    abc = 3 * p / 8 + q / 4
    return {"A": abc, "B": abc, "C": abc, "D": p / 8,
            "E": p / 2 + 3 * q / 8, "F": p / 2 + 3 * q / 8,
            "E'": p / 2 + q / 4, "F'": p / 2 + q / 4}


def apply_efficiency(ens: Ensemble, eta: float) -> Ensemble:
    """Dress every state with independent local detection losses of rate eta.

    Each detected instruction (and each no-polarizer detection) survives with
    probability eta, independently per side.
    """
    if not 0 <= eta <= 1:
        raise LhvError("eta outside [0, 1]")
    out = []
    for s, w in ens:
        for keep_a, keep_b in itertools.product((True, False), repeat=2):
            wa = eta if keep_a else 1 - eta
            wb = eta if keep_b else 1 - eta
            if wa * wb == 0:
                continue
            a1, a2 = (s.a1, s.a2) if keep_a else (0, 0)
            b1, b2 = (s.b1, s.b2) if keep_b else (0, 0)
            pa = s.pA if keep_a else 0.0
            pb = s.pB if keep_b else 0.0
            out.append((LhvState(a1, a2, b1, b2, pa, pb), w * wa * wb))
    return Ensemble(out, signed=ens.signed).canonical()


# ---------------------------------------------------------------- closed-form model for eta <= 1/2

@dataclass(frozen=True)
class Infeasible:
    """Closed-form substitution produced a negative weight."""

    eta: float
    reason: str
    min_weight: float
    rho0: float
    weights: tuple[tuple[LhvState, float], ...]


def _single(side: str, index: int, value: int) -> tuple[int, int, int, int]:
    t = [0, 0, 0, 0]
    t[(0 if side == "A" else 2) + index - 1] = value
    return tuple(t)


def build_appD_model(pred: PredictionSet, eta: float) -> Ensemble | Infeasible:
    """Closed-form 25-state model reproducing ``pred`` at detection rate eta.

    Weights: ``eta^2 Q^AB`` on single-instruction-per-side states (pA = pB = 1/2),
    ``eta Q^A - sum_{j,b} eta^2 Q^AB`` on single-A-instruction states
    (pA = 1/2, pB = 0), likewise for B, and the remainder on the all-zero state.
    """
    if not 0 <= eta <= 1:
        raise LhvError("eta outside [0, 1]")
    entries: list[tuple[LhvState, float]] = []
    for i, j, a, b in itertools.product(INDICES, INDICES, OUTCOMES, OUTCOMES):
        ta, tb = _single("A", i, a), _single("B", j, b)
        t = tuple(x + y for x, y in zip(ta, tb))
        entries.append((LhvState(*t, 0.5, 0.5), eta**2 * pred.q_joint[(i, j, a, b)]))
    for i, a in itertools.product(INDICES, OUTCOMES):
        w = eta * pred.q_a[(i, a)] - sum(eta**2 * pred.q_joint[(i, j, a, b)]
                                         for j in INDICES for b in OUTCOMES)
        entries.append((LhvState(*_single("A", i, a), 0.5, 0.0), w))
    for j, b in itertools.product(INDICES, OUTCOMES):
        w = eta * pred.q_b[(j, b)] - sum(eta**2 * pred.q_joint[(i, j, a, b)]
                                         for i in INDICES for a in OUTCOMES)
        entries.append((LhvState(*_single("B", j, b), 0.0, 0.5), w))
    rho0 = 1.0 - math.fsum(w for _, w in entries)
    entries.append((LhvState(*ZERO, 0.0, 0.0), rho0))
    min_w = min(w for _, w in entries)
    if min_w < -WEIGHT_TOL:
        negatives = sorted({("S^AB" if s.pA == s.pB == 0.5 else
                             "S^A" if s.pB == 0 and s.pA else
                             "S^B" if s.pA == 0 and s.pB else "S^0")
                            for s, w in entries if w < -WEIGHT_TOL})
        return Infeasible(eta, "negative weight in class " + ", ".join(negatives),
                          min_w, rho0, tuple(entries))
    return Ensemble(entries)


# ---------------------------------------------------------------- checks and enumeration

def check_no_enhancement(ensemble: Ensemble) -> list[tuple[LhvState, str, int]]:
    """States where a detection instruction coexists with a smaller
    no-polarizer detection probability on the same side."""
    out = []
    for s, w in ensemble:
        for side in ("A", "B"):
            for idx in INDICES:
                if s.instr(side, idx) != 0 and s.p_nopol(side) < 1.0:
                    out.append((s, side, idx))
    return out


def enumerate_states(space: str = "reduced81") -> list[LhvState]:
    """State space in canonical order."""
    vals = (1, -1, 0)
    if space == "full324":
        out = [LhvState(*t, pa, pb)
               for t in itertools.product(vals, repeat=4)
               for pa, pb in itertools.product((0.0, 1.0), repeat=2)]
    elif space == "reduced81":
        out = [LhvState(*t, 1.0, 1.0) for t in itertools.product((1, -1), repeat=4)]
        for t in itertools.product(vals, repeat=4):
            zeros = [k for k, v in enumerate(t) if v == 0]
            if len(zeros) != 1:
                continue
            for pz in (0.0, 1.0):
                nop = (pz, 1.0) if zeros[0] < 2 else (1.0, pz)
                out.append(LhvState(*t, *nop))
        out.append(LhvState(*ZERO, 0.0, 0.0))
    else:
        raise LhvError(f"unknown state space {space!r}")
    return sorted(out, key=LhvState.sort_key)


def sign_pairs(states: Sequence[LhvState]) -> list[tuple[LhvState, ...]]:
    """Group states into global-sign-flip pairs (the all-zero state stays single)."""
    seen, groups = set(), []
    index = set(states)
    for s in states:
        if s in seen:
            continue
        f = s.flipped()
        if f != s and f in index:
            groups.append((s, f))
            seen.update((s, f))
        else:
            groups.append((s,))
            seen.add(s)
    return groups


# ---------------------------------------------------------------- cross-talk model

def build_crosstalk_M3() -> ContextualEnsemble:
    """Context-dependent model; the unspecified instruction is stored as 0."""
    e1 = Ensemble([(LhvState(1, 0, 1, 1, 1.0, 1.0), 1.0)])
    e2 = Ensemble([(LhvState(0, 1, 1, -1, 1.0, 1.0), 0.5),
                   (LhvState(0, -1, 1, -1, 1.0, 1.0), 0.5)])
    return ContextualEnsemble({(1, 1): e1, (1, 2): e1, (2, 1): e2, (2, 2): e2})


# ---------------------------------------------------------------- supplemental tables

TABLE_THETAS = tuple(round(0.1 * k, 1) for k in range(1, 12))
_TOKENS = {"+": 1, "-": -1, "0": 0}


@dataclass(frozen=True)
class TableColumn:
    theta: float
    eta: float
    ensemble: Ensemble
    raw_total: float


def load_table(kind: str) -> list[TableColumn]:
    """Ingest a printed weight table for ``psi1`` or ``psi2``.

    Each sign row expands into two states carrying the printed weight. The
    printed weights are rounded, so each column is renormalized to unit total.
    """
    if kind not in ("psi1", "psi2"):
        raise LhvError(f"no table for {kind!r}")
    text = resources.files("lhvkit.data").joinpath(f"table_{kind}.csv").read_text()
    rows = list(csv.reader(io.StringIO(text)))
    etas = [float(x) for x in rows[1][6:]]
    body = rows[2:]
    cols = []
    for c, (theta, eta) in enumerate(zip(TABLE_THETAS, etas)):
        entries = []
        for r in body:
            t = tuple(_TOKENS[x] for x in r[:4])
            st = LhvState(*t, float(r[4]), float(r[5]))
            w = float(r[6 + c])
            if t == ZERO:
                entries.append((st, w))
            else:
                entries.append((st, w))
                entries.append((st.flipped(), w))
        raw = math.fsum(w for _, w in entries)
        cols.append(TableColumn(theta, eta, Ensemble.normalized(entries), raw))
    return cols


def table_header_etas(kind: str) -> dict[float, float]:
    return {c.theta: c.eta for c in load_table(kind)}
