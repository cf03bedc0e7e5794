"""Bounded-depth Pitman-Yor context-trie models over the directed-event alphabet.

Predictive probabilities follow the interpolated back-off recursion with one
table per observed (context, symbol) pair::

    p(e|u) = (c(u,e) - d t(u,e)) / (c(u,.) + theta)
             + (theta + d t(u,.)) / (c(u,.) + theta) * p(e|suffix(u))

grounded in the uniform distribution over the 41 symbols.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .symbols import (
    ALPHABET_SIZE,
    END,
    N_CODES,
    SANCTION_CODES,
    B,
    F,
    code_of,
    reverse_symbol,
    reverse_symbols,
    symbols_for,
)
from .validation import (
    ContractViolation,
    InvariantViolation,
    check_context,
    check_corpus,
    check_random_state,
)

logger = logging.getLogger(__name__)

UNIFORM = 1.0 / ALPHABET_SIZE

#: The 21 code sets that get an inclusion-filtered model.
CODE_SETS: tuple[frozenset[int], ...] = tuple(
    [frozenset({c}) for c in range(1, N_CODES + 1)] + [SANCTION_CODES]
)

BANK_MAGIC = "NORMMINE-BANK"
BANK_VERSION = 1


class SamplingError(RuntimeError):
    pass


class BankFormatError(ValueError):
    pass


def _per_level(value, max_depth: int, name: str) -> tuple[float, ...]:
    if np.isscalar(value):
        levels = (float(value),) * (max_depth + 1)
    else:
        levels = tuple(float(v) for v in value)
        if len(levels) != max_depth + 1:
            raise ContractViolation(
                f"{name} needs one value per context length 0..{max_depth}, got {len(levels)}"
            )
    return levels


def dual_copies(corpus: Iterable[tuple[int, ...]]) -> list[tuple[int, ...]]:
    """Each sequence followed by its direction-reversed copy."""
    out = []
    for seq in corpus:
        out.append(seq)
        out.append(reverse_symbols(seq))
    return out


class SequenceModel(BaseEstimator):
    """Next-symbol model p(e | context) with bounded context length.

    Parameters
    ----------
    max_depth : int
        Longest context kept in the trie.
    discount : float or sequence of float
        Discount ``d`` in ``[0, 1)``; a sequence gives one value per context
        length ``0..max_depth``.
    strength : float or sequence of float
        Strength ``theta > -d``, scalar or per level.
    reverse_copies : bool
        Train on every sequence plus its direction-reversed copy.
    """

    def __init__(self, max_depth=8, discount=0.5, strength=1.0, reverse_copies=True):
        self.max_depth = max_depth
        self.discount = discount
        self.strength = strength
        self.reverse_copies = reverse_copies

    def _validate_params(self):
        if int(self.max_depth) < 1:
            raise ContractViolation("max_depth must be >= 1")
        self._depth = int(self.max_depth)
        self._d = _per_level(self.discount, self._depth, "discount")
        self._theta = _per_level(self.strength, self._depth, "strength")
        for d, th in zip(self._d, self._theta):
            if not 0.0 <= d < 1.0:
                raise ContractViolation(f"discount must lie in [0, 1), got {d}")
            if not th > -d:
                raise ContractViolation(f"strength must exceed -discount, got {th}")

    def fit(self, corpus, y=None):
        corpus = check_corpus(corpus)
        if self.reverse_copies:
            corpus = dual_copies(corpus)
        return self._fit_symbols(corpus)

    def _fit_symbols(self, training: list[tuple[int, ...]]):
        """Count contexts in already-prepared training sequences."""
        self._validate_params()
        depth = self._depth
        nodes: dict[tuple[int, ...], dict[int, int]] = {}
        for seq in training:
            for i, sym in enumerate(seq):
                for k in range(min(i, depth) + 1):
                    ctx = seq[i - k : i]
                    counts = nodes.get(ctx)
                    if counts is None:
                        counts = nodes[ctx] = {}
                    counts[sym] = counts.get(sym, 0) + 1
        self._set_nodes(nodes)
        self.n_training_sequences_ = len(training)
        return self

    def _set_nodes(self, nodes):
        # node -> (counts, total count, number of distinct successors)
        self.nodes_ = {ctx: (c, sum(c.values()), len(c)) for ctx, c in nodes.items()}
        self._cache = {}

    def _truncate(self, context) -> tuple[int, ...]:
        context = tuple(context)
        if len(context) > self._depth:
            context = context[len(context) - self._depth :]
        return context

    def prob(self, symbol: int, context: Sequence[int] = ()) -> float:
        """Scalar p(symbol | context); bitwise equal to ``predict_proba(context)[symbol]``."""
        check_is_fitted(self, "nodes_")
        ctx = self._truncate(context)
        nodes = self.nodes_
        p = UNIFORM
        n = len(ctx)
        for k in range(n + 1):
            node = nodes.get(ctx[n - k :])
            if node is None:
                break
            counts, total, types = node
            d = self._d[k]
            theta = self._theta[k]
            c = counts.get(symbol, 0)
            t = 1 if c > 0 else 0
            denom = total + theta
            p = (c - d * t) / denom + ((theta + d * types) / denom) * p
        return p

    def predict_proba(self, context: Sequence[int] = ()) -> np.ndarray:
        """Full next-symbol distribution over the 41 symbols (read-only array)."""
        check_is_fitted(self, "nodes_")
        ctx = self._truncate(context)
        cached = self._cache.get(ctx)
        if cached is not None:
            return cached
        nodes = self.nodes_
        p = np.full(ALPHABET_SIZE, UNIFORM)
        n = len(ctx)
        for k in range(n + 1):
            node = nodes.get(ctx[n - k :])
            if node is None:
                break
            counts, total, types = node
            d = self._d[k]
            theta = self._theta[k]
            c = np.zeros(ALPHABET_SIZE)
            c[list(counts)] = list(counts.values())
            t = (c > 0).astype(float)
            denom = total + theta
            p = (c - d * t) / denom + ((theta + d * types) / denom) * p
        p.setflags(write=False)
        self._cache[ctx] = p
        return p

    def predict(self, context: Sequence[int] = ()) -> int:
        """Most probable next symbol."""
        return int(np.argmax(self.predict_proba(context)))

    def sequence_log_likelihood(self, sequence: Sequence[int]) -> float:
        total = 0.0
        for i, sym in enumerate(sequence):
            total += math.log(self.prob(sym, sequence[:i]))
        return total

    def score(self, corpus, y=None) -> float:
        """Total log-likelihood of an END-terminated corpus."""
        return sum(self.sequence_log_likelihood(s) for s in check_corpus(corpus))

    def sample(self, random_state=None, max_length: int = 10_000) -> tuple[int, ...]:
        """Draw one END-terminated symbol sequence."""
        rng = check_random_state(random_state)
        seq: list[int] = []
        while True:
            p = self.predict_proba(seq)
            cdf = np.cumsum(p)
            sym = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
            sym = min(sym, ALPHABET_SIZE - 1)
            seq.append(sym)
            if sym == END:
                return tuple(seq)
            if len(seq) >= max_length:
                raise SamplingError(f"no END within {max_length} symbols")

    def __getstate__(self):
        state = self.__dict__.copy()
        state.pop("_cache", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._cache = {}

    def _to_payload(self) -> dict:
        check_is_fitted(self, "nodes_")
        nodes = [
            [list(ctx), sorted(counts.items())]
            for ctx, (counts, _, _) in sorted(self.nodes_.items(), key=lambda kv: (len(kv[0]), kv[0]))
        ]
        return {"n_training_sequences": self.n_training_sequences_, "nodes": nodes}

    def _from_payload(self, payload: dict):
        self._validate_params()
        nodes = {tuple(ctx): {int(s): int(c) for s, c in counts} for ctx, counts in payload["nodes"]}
        self._set_nodes(nodes)
        self.n_training_sequences_ = int(payload["n_training_sequences"])
        return self


def _contains_forward_code(seq: tuple[int, ...], codes: frozenset[int]) -> bool:
    return any(s < N_CODES and code_of(s) in codes for s in seq)


def _set_key(codes: Iterable[int]) -> str:
    return ",".join(str(c) for c in sorted(codes))


class ModelBank(BaseEstimator):
    """Base model plus the 21 inclusion-filtered models.

    ``base_`` is trained on all dual copies; ``incl_models_[codes]`` on the dual
    copies holding at least one forward event whose code is in ``codes``.
    """

    def __init__(self, max_depth=8, discount=0.5, strength=1.0):
        self.max_depth = max_depth
        self.discount = discount
        self.strength = strength

    def _new_model(self) -> SequenceModel:
        return SequenceModel(self.max_depth, self.discount, self.strength, reverse_copies=True)

    def fit(self, corpus, y=None):
        corpus = check_corpus(corpus)
        copies = dual_copies(corpus)
        self.base_ = self._new_model()._fit_symbols(copies)
        self.incl_models_ = {}
        self.empty_sets_ = []
        for codes in CODE_SETS:
            subset = [s for s in copies if _contains_forward_code(s, codes)]
            if not subset:
                self.empty_sets_.append(codes)
            self.incl_models_[codes] = self._new_model()._fit_symbols(subset)
        if self.empty_sets_:
            names = " ".join("{" + _set_key(c) + "}" for c in self.empty_sets_)
            warnings.warn(
                f"no training sequence has a forward event in {names}; those inclusion models are uniform",
                RuntimeWarning,
                stacklevel=2,
            )
        self.n_sequences_ = len(corpus)
        return self

    def incl_model(self, codes: Iterable[int]) -> SequenceModel:
        check_is_fitted(self, "incl_models_")
        key = frozenset(codes)
        try:
            return self.incl_models_[key]
        except KeyError:
            raise ContractViolation(f"no inclusion model for code set {{{_set_key(key)}}}") from None

    # --- queries -----------------------------------------------------

    def prob_incl(self, doi, codes, symbol: int, context: Sequence[int]) -> float:
        model = self.incl_model(codes)
        doi = frozenset(doi)
        if doi == {B}:
            return model.prob(reverse_symbol(symbol), reverse_symbols(context))
        if doi in ({F}, {F, B}):
            return model.prob(symbol, context)
        raise ContractViolation(f"invalid directions of interest {set(doi)}")

    def incl_distribution(self, doi, codes, context: Sequence[int]) -> np.ndarray:
        model = self.incl_model(codes)
        doi = frozenset(doi)
        if doi == {B}:
            p = model.predict_proba(reverse_symbols(context))
            return p[_REVERSAL]
        return model.predict_proba(context)

    def prob_excl(self, doi, codes, symbol: int, context: Sequence[int]) -> float:
        return prob_excl(self.base_, doi, codes, symbol, context)

    def excl_distribution(self, doi, codes, context: Sequence[int]) -> np.ndarray:
        return excl_distribution(self.base_, doi, codes, context)


_REVERSAL = np.array([reverse_symbol(s) for s in range(ALPHABET_SIZE)])


def excluded_mass(dist: np.ndarray, excluded: Iterable[int]) -> float:
    mass = 0.0
    for s in sorted(excluded):
        mass += float(dist[s])
    return mass


def prob_excl(model: SequenceModel, doi, codes, symbol: int, context: Sequence[int]) -> float:
    """p_SM renormalized after removing every ``<d, c>`` with d in doi, c in codes."""
    excluded = symbols_for(doi, codes)
    if symbol in excluded:
        return 0.0
    dist = model.predict_proba(context)
    mass = excluded_mass(dist, excluded)
    if mass >= 1.0:
        raise InvariantViolation(f"excluded mass {mass} >= 1 for context {tuple(context)}")
    return float(dist[symbol]) / (1.0 - mass)


def excl_distribution(model: SequenceModel, doi, codes, context: Sequence[int]) -> np.ndarray:
    excluded = symbols_for(doi, codes)
    dist = model.predict_proba(context)
    mass = excluded_mass(dist, excluded)
    if mass >= 1.0:
        raise InvariantViolation(f"excluded mass {mass} >= 1 for context {tuple(context)}")
    out = dist / (1.0 - mass)
    out[sorted(excluded)] = 0.0
    return out


# --- functional surface ---------------------------------------------------


def train_base(corpus, max_depth=8, discount=0.5, strength=1.0) -> SequenceModel:
    return SequenceModel(max_depth, discount, strength).fit(corpus)


def train_bank(corpus, max_depth=8, discount=0.5, strength=1.0) -> ModelBank:
    return ModelBank(max_depth, discount, strength).fit(corpus)


def predict(model: SequenceModel, context: Sequence[int]) -> np.ndarray:
    return model.predict_proba(check_context(context))


def seq_loglik_base(model: SequenceModel, sequence) -> float:
    from .validation import check_sequence

    return model.sequence_log_likelihood(check_sequence(sequence))


def prob_incl(bank: ModelBank, doi, codes, symbol: int, context: Sequence[int]) -> float:
    return bank.prob_incl(doi, codes, symbol, context)


def sample_sequence(model: SequenceModel, rng=None, max_length: int = 10_000) -> tuple[int, ...]:
    return model.sample(rng, max_length=max_length)


# --- persistence ----------------------------------------------------------


def save_bank(bank: ModelBank, path) -> None:
    check_is_fitted(bank, "incl_models_")
    payload = {
        "alphabet_size": ALPHABET_SIZE,
        "params": bank.get_params(),
        "n_sequences": bank.n_sequences_,
        "base": bank.base_._to_payload(),
        "incl": {_set_key(k): m._to_payload() for k, m in bank.incl_models_.items()},
        "empty_sets": [_set_key(k) for k in bank.empty_sets_],
    }
    body = json.dumps(payload, separators=(",", ":"), sort_keys=True).encode("utf-8")
    digest = hashlib.sha256(body).hexdigest()
    header = f"{BANK_MAGIC} {BANK_VERSION}\n{digest}\n".encode("ascii")
    Path(path).write_bytes(header + body)


def load_bank(path) -> ModelBank:
    raw = Path(path).read_bytes()
    expected = f"{BANK_MAGIC} {BANK_VERSION}"
    parts = raw.split(b"\n", 2)
    if len(parts) != 3 or not parts[0].startswith(BANK_MAGIC.encode()):
        raise BankFormatError(f"not a model bank file (expected header {expected!r})")
    if parts[0].decode("ascii", "replace") != expected:
        raise BankFormatError(
            f"unsupported bank version {parts[0].decode('ascii', 'replace')!r}; expected {expected!r}"
        )
    digest, body = parts[1].decode("ascii", "replace"), parts[2]
    if hashlib.sha256(body).hexdigest() != digest:
        raise BankFormatError(f"bank file is truncated or corrupt (expected {expected!r} payload)")
    payload = json.loads(body)
    if payload.get("alphabet_size") != ALPHABET_SIZE:
        raise BankFormatError(
            f"bank alphabet has {payload.get('alphabet_size')} symbols; expected {ALPHABET_SIZE}"
        )
    params = payload["params"]
    bank = ModelBank(**params)
    bank.base_ = bank._new_model()._from_payload(payload["base"])
    by_key = {_set_key(k): k for k in CODE_SETS}
    bank.incl_models_ = {
        by_key[key]: bank._new_model()._from_payload(model) for key, model in payload["incl"].items()
    }
    if len(bank.incl_models_) != len(CODE_SETS):
        raise BankFormatError("bank file does not hold all 21 inclusion models")
    bank.empty_sets_ = [by_key[k] for k in payload["empty_sets"]]
    bank.n_sequences_ = int(payload["n_sequences"])
    return bank
