"""Norm hypotheses, the norm life-cycle state machine and per-sequence likelihoods."""

from __future__ import annotations

import enum
import math
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace

import numpy as np

from .symbols import (
    END,
    N_CODES,
    SANCTION_CODES,
    B,
    F,
    code_of,
    direction_of,
    opposite,
    symbols_for,
)
from .validation import ContractViolation, InvariantViolation, check_sequence

NEG_INF = -math.inf

SANCTION_DOI = "doi"
SANCTION_OPPOSITE = "opposite"
SANCTION_MODES = (SANCTION_DOI, SANCTION_OPPOSITE)


@dataclass(frozen=True, order=True)
class NormHypothesis:
    """One candidate norm.

    ``condition_code`` is ``None`` for unconditional norms; ``rel_dir`` is
    ``"+"`` or ``"-"`` exactly when the norm is conditional.
    """

    modality: str
    event_code: int
    condition_code: int | None = None
    rel_dir: str | None = None

    def __post_init__(self):
        if self.modality not in ("O", "P"):
            raise ContractViolation(f"modality must be O or P, got {self.modality!r}")
        for name, code in (("event code", self.event_code), ("condition code", self.condition_code)):
            if code is not None and not 1 <= code <= N_CODES:
                raise ContractViolation(f"{name} {code} outside 1..{N_CODES}")
        if (self.condition_code is None) != (self.rel_dir is None):
            raise ContractViolation("rel_dir is required exactly for conditional norms")
        if self.rel_dir not in (None, "+", "-"):
            raise ContractViolation(f"rel_dir must be + or -, got {self.rel_dir!r}")

    @property
    def conditional(self) -> bool:
        return self.condition_code is not None

    def __str__(self) -> str:
        if self.conditional:
            return f"{self.modality}({self.condition_code},{self.event_code},{self.rel_dir})"
        return f"{self.modality}({self.event_code})"

    def sort_key(self) -> tuple:
        return (
            self.modality,
            self.condition_code is not None,
            self.condition_code or 0,
            self.event_code,
            self.rel_dir or "",
        )


_NORM_RE = re.compile(r"^\s*([OP])\(\s*(\d+)\s*(?:,\s*(\d+)\s*,\s*([+\-−])\s*)?\)\s*$")

NORM_SYNTAX = "O(ec), P(ec), O(cec,ec,+|-) or P(cec,ec,+|-) with codes 1-20"


def parse_norm(text: str) -> NormHypothesis:
    m = _NORM_RE.match(text)
    if not m:
        raise ContractViolation(f"cannot parse norm {text!r}; expected {NORM_SYNTAX}")
    modality, first, second, rel = m.groups()
    if second is None:
        return NormHypothesis(modality, int(first))
    rel = "-" if rel == "−" else rel
    return NormHypothesis(modality, int(second), int(first), rel)


def enumerate_hypotheses() -> list[NormHypothesis]:
    """All 1640 single-norm hypotheses in canonical order."""
    out = []
    for modality in ("O", "P"):
        for ec in range(1, N_CODES + 1):
            out.append(NormHypothesis(modality, ec))
        for cec in range(1, N_CODES + 1):
            for ec in range(1, N_CODES + 1):
                for rel in ("+", "-"):
                    out.append(NormHypothesis(modality, ec, cec, rel))
    return out


# --- state machine --------------------------------------------------------


class State(enum.Enum):
    INACTIVE = "Inactive"
    ACTIVATING = "Activating"
    ACTIVE = "Active"
    FULFILLED = "Fulfilled"
    VIOL_NO_SANC = "ViolNoSanc"
    VIOL_SANC = "ViolSanc"


class Assumption(enum.Enum):
    COMP = "comp"
    SANC = "not comp, sanc"
    NO_SANC = "not comp, not sanc"


BRANCHES = (Assumption.COMP, Assumption.SANC, Assumption.NO_SANC)


@dataclass(frozen=True)
class NormStateMachine:
    norm: NormHypothesis
    state: State
    doi: frozenset = frozenset()
    assumption: Assumption | None = None
    sanction_mode: str = SANCTION_DOI
    drop_owed_end: bool = False

    @property
    def sanction_dirs(self) -> frozenset:
        if self.sanction_mode == SANCTION_OPPOSITE:
            return frozenset(opposite(d) for d in self.doi)
        return self.doi

    def is_target(self, symbol: int) -> bool:
        """``symbol`` is the obligated/prohibited event in a direction of interest."""
        return symbol != END and code_of(symbol) == self.norm.event_code and direction_of(symbol) in self.doi

    def is_sanction(self, symbol: int) -> bool:
        return (
            symbol != END and code_of(symbol) in SANCTION_CODES and direction_of(symbol) in self.sanction_dirs
        )

    @property
    def awaiting(self) -> bool:
        """The current assumption still needs a future event, so END is impossible."""
        if self.state == State.ACTIVE:
            if self.assumption == Assumption.COMP:
                return self.norm.modality == "O"
            return self.norm.modality == "P"
        if self.state == State.VIOL_NO_SANC:
            return self.assumption == Assumption.SANC
        return False

    @property
    def excludes_target(self) -> bool:
        """An obligation assumed violated: the obligated event never occurs."""
        return self.norm.modality == "O" and self.assumption in (Assumption.SANC, Assumption.NO_SANC)

    def forbidden_symbols(self) -> list[int]:
        """Symbols the current assumption rules out as the next head."""
        out = []
        if self.excludes_target:
            out.extend(sorted(symbols_for(self.doi, {self.norm.event_code})))
        if self.drop_owed_end and self.awaiting:
            out.append(END)
        return out

    def receive(self, symbol: int) -> NormStateMachine:
        state = self.state
        if state == State.ACTIVATING:
            raise ContractViolation("resolve the Activating machine before sending it events")
        if state == State.INACTIVE:
            if symbol != END and code_of(symbol) == self.norm.condition_code:
                d = direction_of(symbol)
                doi = frozenset({d if self.norm.rel_dir == "+" else opposite(d)})
                return replace(self, state=State.ACTIVATING, doi=doi)
            return self
        if state == State.ACTIVE:
            if self.assumption == Assumption.COMP:
                if self.norm.modality == "O" and self.is_target(symbol):
                    return replace(self, state=State.FULFILLED)
            elif self.norm.modality == "P" and self.is_target(symbol):
                return replace(self, state=State.VIOL_NO_SANC)
            return self
        if state == State.VIOL_NO_SANC:
            if self.assumption == Assumption.SANC and self.is_sanction(symbol):
                return replace(self, state=State.VIOL_SANC)
            return self
        return self

    def resolve(self, assumption: Assumption) -> NormStateMachine:
        if self.state != State.ACTIVATING:
            raise ContractViolation(f"cannot resolve a machine in state {self.state.value}")
        if assumption == Assumption.COMP or self.norm.modality == "P":
            return replace(self, state=State.ACTIVE, assumption=assumption)
        return replace(self, state=State.VIOL_NO_SANC, assumption=assumption)


def nsm_new(
    norm: NormHypothesis, sanction_mode: str = SANCTION_DOI, drop_owed_end: bool = False
) -> NormStateMachine:
    if sanction_mode not in SANCTION_MODES:
        raise ContractViolation(f"sanction_mode must be one of {SANCTION_MODES}")
    if norm.conditional:
        return NormStateMachine(
            norm, State.INACTIVE, sanction_mode=sanction_mode, drop_owed_end=drop_owed_end
        )
    return NormStateMachine(
        norm, State.ACTIVATING, frozenset({F, B}), sanction_mode=sanction_mode, drop_owed_end=drop_owed_end
    )


def nsm_receive(machine: NormStateMachine, symbol: int) -> NormStateMachine:
    return machine.receive(symbol)


def nsm_resolve(machine: NormStateMachine, assumption: Assumption) -> NormStateMachine:
    return machine.resolve(assumption)


# --- counting and estimation ---------------------------------------------


@dataclass
class NormCounts:
    triggers: int = 0
    fulfilments: int = 0
    violations: int = 0
    sanctioned_violations: int = 0

    @property
    def unsanctioned_violations(self) -> int:
        return self.violations - self.sanctioned_violations

    def __iadd__(self, other: NormCounts):
        self.triggers += other.triggers
        self.fulfilments += other.fulfilments
        self.violations += other.violations
        self.sanctioned_violations += other.sanctioned_violations
        return self


@dataclass(frozen=True)
class NormParams:
    p_comp: float
    p_sanc: float


def activation_point(norm: NormHypothesis, symbols: Sequence[int]) -> tuple[int, frozenset] | None:
    """Index of the first symbol seen by the Activating machine, and its doi.

    Returns ``None`` when the norm never triggers in ``symbols``.
    """
    if not norm.conditional:
        return 0, frozenset({F, B})
    for i, s in enumerate(symbols):
        if s != END and code_of(s) == norm.condition_code:
            d = direction_of(s)
            return i + 1, frozenset({d if norm.rel_dir == "+" else opposite(d)})
    return None


def sequence_outcome(norm: NormHypothesis, symbols: Sequence[int], sanction_mode: str = SANCTION_DOI):
    """Deterministic life-cycle outcome of one sequence.

    Returns ``None`` (not triggered) or a tuple ``(fulfilled, sanctioned)``.
    """
    found = activation_point(norm, symbols)
    if found is None:
        return None
    start, doi = found
    machine = NormStateMachine(norm, State.ACTIVE, doi, Assumption.COMP, sanction_mode)
    body = [s for s in symbols[start:] if s != END]
    target = next((i for i, s in enumerate(body) if machine.is_target(s)), None)
    if norm.modality == "O":
        if target is not None:
            return True, False
        after = 0
    else:
        if target is None:
            return True, False
        after = target + 1
    sanctioned = any(machine.is_sanction(s) for s in body[after:])
    return False, sanctioned


def count_norm_stats(norm: NormHypothesis, corpus, sanction_mode: str = SANCTION_DOI) -> NormCounts:
    counts = NormCounts()
    for seq in corpus:
        outcome = sequence_outcome(norm, check_sequence(seq), sanction_mode)
        if outcome is None:
            continue
        fulfilled, sanctioned = outcome
        counts.triggers += 1
        if fulfilled:
            counts.fulfilments += 1
        else:
            counts.violations += 1
            counts.sanctioned_violations += int(sanctioned)
    return counts


def estimate_params(counts: NormCounts) -> NormParams:
    """Add-one smoothed compliance and sanction probabilities."""
    t, v, s = counts.triggers, counts.violations, counts.sanctioned_violations
    if not (0 <= s <= v <= t):
        raise ContractViolation(f"inconsistent counts t={t}, v={v}, s={s}")
    return NormParams(p_comp=(t - v + 1) / (t + 2), p_sanc=(s + 1) / (v + 2))


def _log(x: float) -> float:
    return math.log(x) if x > 0.0 else NEG_INF


def _log1m(x: float) -> float:
    return math.log1p(-x) if x < 1.0 else NEG_INF


def branch_log_weights(params: NormParams, n_doi: int) -> dict[Assumption, float]:
    """Log mixture weights of the three Activating branches.

    Compliance is assumed independently per direction of interest, so an
    unconditional norm (two directions) complies with probability p_comp**2.
    """
    comp = params.p_comp**n_doi
    return {
        Assumption.COMP: _log(comp),
        Assumption.SANC: _log1m(comp) + _log(params.p_sanc),
        Assumption.NO_SANC: _log1m(comp) + _log1m(params.p_sanc),
    }


# --- likelihood -----------------------------------------------------------


def _without(dist: np.ndarray, dropped: Sequence[int]) -> np.ndarray:
    """``dist`` with ``dropped`` zeroed and the rest renormalised."""
    dropped = sorted(dropped)
    mass = 0.0
    for s in dropped:
        mass += dist[s]
    if mass >= 1.0:
        raise InvariantViolation(f"no probability mass left after dropping {dropped}")
    out = dist / (1.0 - mass)
    out[dropped] = 0.0
    return out


def head_distribution(bank, machine: NormStateMachine, history: Sequence[int]) -> np.ndarray:
    """Distribution of the next head under the machine's current assumption.

    Once an obligation is assumed violated the obligated event is dropped
    for the rest of the sequence. With ``machine.drop_owed_end`` END is also
    dropped while an event is still owed, which makes every branch a proper
    distribution over the sequences it admits; otherwise END keeps its model
    mass there and paths that take it are infeasible.
    """
    state = machine.state
    if state == State.ACTIVATING:
        raise ContractViolation("Activating machines have no single head distribution")
    if state == State.ACTIVE:
        codes = {machine.norm.event_code}
        incl = (machine.assumption == Assumption.COMP) == (machine.norm.modality == "O")
        if incl:
            dist = bank.incl_distribution(machine.doi, codes, history)
        else:
            dist = bank.excl_distribution(machine.doi, codes, history)
    elif state == State.VIOL_NO_SANC:
        if machine.assumption == Assumption.SANC:
            dist = bank.incl_distribution(machine.sanction_dirs, SANCTION_CODES, history)
        else:
            dist = bank.excl_distribution(machine.sanction_dirs, SANCTION_CODES, history)
    else:
        dist = bank.base_.predict_proba(history)
    dropped = machine.forbidden_symbols()
    if not dropped:
        return dist
    return _without(dist, dropped)


def head_factor(bank, machine: NormStateMachine, symbol: int, history: Sequence[int]) -> float:
    """Probability the likelihood assigns to ``symbol`` as the next head.

    ``history`` is everything before the head. Whole-remainder feasibility is
    checked separately by :func:`branch_feasible`.
    """
    return float(head_distribution(bank, machine, history)[symbol])


def branch_feasible(
    machine: NormStateMachine, remainder: Sequence[int], strict_sanction: bool = False
) -> bool:
    """Whole-remainder consistency of a freshly resolved machine."""
    norm = machine.norm
    body = [s for s in remainder if s != END]
    has_target = any(machine.is_target(s) for s in body)
    if machine.assumption == Assumption.COMP:
        return has_target if norm.modality == "O" else not has_target
    if norm.modality == "O":
        if has_target:
            return False
        after = 0
    else:
        target = next((i for i, s in enumerate(body) if machine.is_target(s)), None)
        if target is None:
            return False
        after = target + 1
    rest = body[after:]
    if machine.assumption == Assumption.SANC:
        if strict_sanction:
            return bool(rest) and machine.is_sanction(rest[0])
        return any(machine.is_sanction(s) for s in rest)
    return not any(machine.is_sanction(s) for s in rest)


def _walk(bank, machine: NormStateMachine, symbols: Sequence[int], start: int, total: float) -> float:
    for i in range(start, len(symbols)):
        sym = symbols[i]
        p = head_factor(bank, machine, sym, symbols[:i])
        if p <= 0.0:
            return NEG_INF
        total += math.log(p)
        if sym != END:
            machine = machine.receive(sym)
    return total


def logsumexp(values: Iterable[float]) -> float:
    values = [v for v in values if v != NEG_INF]
    if not values:
        return NEG_INF
    m = max(values)
    return m + math.log(sum(math.exp(v - m) for v in values))


def branch_logliks(
    norm: NormHypothesis,
    params: NormParams,
    sequence,
    bank,
    strict_sanction: bool = False,
    sanction_mode: str = SANCTION_DOI,
    drop_owed_end: bool = False,
) -> dict[Assumption, float] | None:
    """Weighted log-likelihood of each Activating branch, or ``None`` if never triggered."""
    symbols = check_sequence(sequence)
    machine = nsm_new(norm, sanction_mode, drop_owed_end)
    total = 0.0
    i = 0
    while machine.state != State.ACTIVATING:
        if i == len(symbols):
            return None
        sym = symbols[i]
        total += math.log(bank.base_.prob(sym, symbols[:i]))
        if sym != END:
            machine = machine.receive(sym)
        i += 1
    weights = branch_log_weights(params, len(machine.doi))
    out = {}
    for assumption in BRANCHES:
        resolved = machine.resolve(assumption)
        if not branch_feasible(resolved, symbols[i:], strict_sanction):
            out[assumption] = NEG_INF
            continue
        out[assumption] = weights[assumption] + _walk(bank, resolved, symbols, i, total)
    return out


def seq_loglik_norm(
    norm: NormHypothesis,
    params: NormParams,
    sequence,
    bank,
    strict_sanction: bool = False,
    sanction_mode: str = SANCTION_DOI,
    drop_owed_end: bool = False,
) -> float:
    """log p(sequence | norm), tracking the norm life cycle step by step.

    Until the norm triggers the walk is identical to the base-model
    log-likelihood, so an untriggered norm reproduces it bit for bit.
    """
    branches = branch_logliks(norm, params, sequence, bank, strict_sanction, sanction_mode, drop_owed_end)
    if branches is None:
        symbols = check_sequence(sequence)
        return bank.base_.sequence_log_likelihood(symbols)
    return logsumexp(branches.values())
