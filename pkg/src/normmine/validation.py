"""Input validation helpers used by the estimators."""

from __future__ import annotations

from collections.abc import Iterable, Sequence

import numpy as np

from .symbols import ALPHABET_SIZE, END, EventSequence


class ContractViolation(ValueError):
    """A caller broke a documented precondition."""


class InvariantViolation(RuntimeError):
    """An internal invariant failed; results cannot be trusted."""


def check_sequence(seq, require_end: bool = True) -> tuple[int, ...]:
    """Normalize one sequence to a tuple of integer symbols.

    Accepts an :class:`EventSequence` or any iterable of ints.
    """
    if isinstance(seq, EventSequence):
        symbols = seq.symbols()
    else:
        symbols = tuple(int(s) for s in seq)
    for i, s in enumerate(symbols):
        if not 0 <= s < ALPHABET_SIZE:
            raise ContractViolation(f"symbol {s} at position {i} is outside the alphabet")
        if s == END and i != len(symbols) - 1:
            raise ContractViolation("END may only appear as the final symbol")
    if require_end and (not symbols or symbols[-1] != END):
        raise ContractViolation("sequence is not END-terminated")
    return symbols


def check_corpus(corpus: Iterable, require_end: bool = True) -> list[tuple[int, ...]]:
    return [check_sequence(s, require_end=require_end) for s in corpus]


def check_context(context: Sequence[int]) -> tuple[int, ...]:
    context = tuple(int(s) for s in context)
    for s in context:
        if not 0 <= s < ALPHABET_SIZE:
            raise ContractViolation(f"context symbol {s} is outside the alphabet")
    return context


def check_probability(value: float, name: str, open_interval: bool = False) -> float:
    value = float(value)
    if open_interval:
        ok = 0.0 < value < 1.0
    else:
        ok = 0.0 <= value <= 1.0
    if not ok or np.isnan(value):
        bounds = "(0, 1)" if open_interval else "[0, 1]"
        raise ContractViolation(f"{name} must lie in {bounds}, got {value}")
    return value


def check_random_state(seed) -> np.random.Generator:
    """Turn ``None``, an int, or a Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def pad_corpus(corpus: list[tuple[int, ...]]) -> tuple[np.ndarray, np.ndarray]:
    """Pack END-terminated sequences into a padded ``(n, max_len)`` array.

    Padding uses ``-1``. Returns the array and the per-row index of END.
    """
    n = len(corpus)
    width = max((len(s) for s in corpus), default=1)
    out = np.full((n, width), -1, dtype=np.int16)
    ends = np.empty(n, dtype=np.int64)
    for i, s in enumerate(corpus):
        out[i, : len(s)] = s
        ends[i] = len(s) - 1
    return out, ends
