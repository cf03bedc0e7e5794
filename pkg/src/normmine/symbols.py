"""Directed-event alphabet shared by every stage of the pipeline.

Symbols are small integers so that models and scorers can index arrays
directly:

* ``0..19``  -> forward events with root codes 1..20
* ``20..39`` -> backward events with root codes 1..20
* ``40``     -> the END marker
"""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

N_CODES = 20
END = 2 * N_CODES
ALPHABET_SIZE = 2 * N_CODES + 1
SANCTION_CODES = frozenset({11, 12, 16})

F = "F"
B = "B"
DIRECTIONS = (F, B)


def opposite(direction: str) -> str:
    if direction == F:
        return B
    if direction == B:
        return F
    raise ValueError(f"unknown direction {direction!r}")


def encode(direction: str, code: int) -> int:
    """Map a ``(direction, root_code)`` pair to its integer symbol."""
    if not 1 <= code <= N_CODES:
        raise ValueError(f"root code {code} outside 1..{N_CODES}")
    if direction == F:
        return code - 1
    if direction == B:
        return N_CODES + code - 1
    raise ValueError(f"unknown direction {direction!r}")


def decode(symbol: int) -> tuple[str, int] | None:
    """Inverse of :func:`encode`; returns ``None`` for END."""
    if symbol == END:
        return None
    if 0 <= symbol < N_CODES:
        return F, symbol + 1
    if N_CODES <= symbol < END:
        return B, symbol - N_CODES + 1
    raise ValueError(f"symbol {symbol} outside the alphabet")


def code_of(symbol: int) -> int:
    """Root code of a directed-event symbol (0 for END)."""
    if symbol == END:
        return 0
    return symbol % N_CODES + 1


def direction_of(symbol: int) -> str | None:
    if symbol == END:
        return None
    return F if symbol < N_CODES else B


def reverse_symbol(symbol: int) -> int:
    """Swap F and B; END is its own reverse."""
    if symbol == END:
        return END
    return symbol + N_CODES if symbol < N_CODES else symbol - N_CODES


def reverse_symbols(symbols: Iterable[int]) -> tuple[int, ...]:
    return tuple(reverse_symbol(s) for s in symbols)


def symbols_for(directions: Iterable[str], codes: Iterable[int]) -> frozenset[int]:
    """All symbols ``<d, c>`` with ``d`` in *directions* and ``c`` in *codes*."""
    codes = tuple(codes)
    return frozenset(encode(d, c) for d in directions for c in codes)


def token(symbol: int) -> str:
    if symbol == END:
        return "END"
    direction, code = decode(symbol)
    return f"{direction}{code:02d}"


def parse_token(text: str) -> int:
    if text == "END":
        return END
    if len(text) != 3 or text[0] not in DIRECTIONS or not text[1:].isdigit():
        raise ValueError(f"malformed symbol token {text!r}")
    return encode(text[0], int(text[1:]))


@dataclass(frozen=True)
class DirectedEvent:
    direction: str
    root_code: int

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be F or B, got {self.direction!r}")
        if not 1 <= self.root_code <= N_CODES:
            raise ValueError(f"root code {self.root_code} outside 1..{N_CODES}")

    @property
    def symbol(self) -> int:
        return encode(self.direction, self.root_code)


@dataclass
class EventSequence:
    """Ordered directed events between one unordered country pair."""

    id: str
    country_pair: tuple[str, str]
    events: list[DirectedEvent]
    terminated: bool = True
    provenance: list[str] = field(default_factory=list)
    days: list[str] = field(default_factory=list)

    def symbols(self) -> tuple[int, ...]:
        body = tuple(e.symbol for e in self.events)
        return body + (END,) if self.terminated else body

    def __len__(self) -> int:
        return len(self.events)

    @classmethod
    def from_symbols(cls, symbols: Sequence[int], id: str = "", country_pair=("", "")):
        symbols = list(symbols)
        terminated = bool(symbols) and symbols[-1] == END
        if terminated:
            symbols = symbols[:-1]
        if END in symbols:
            raise ValueError("END may only appear as the final symbol")
        events = [DirectedEvent(*decode(s)) for s in symbols]
        return cls(id=id, country_pair=tuple(country_pair), events=events, terminated=terminated)


def format_sequence(symbols: Iterable[int]) -> str:
    return " ".join(token(s) for s in symbols)


def parse_sequence(line: str) -> tuple[int, ...]:
    return tuple(parse_token(t) for t in line.split())
