import pytest
from hypothesis import given
from hypothesis import strategies as st

from normmine.symbols import (
    ALPHABET_SIZE,
    END,
    DirectedEvent,
    EventSequence,
    code_of,
    decode,
    direction_of,
    encode,
    format_sequence,
    parse_sequence,
    reverse_symbol,
    symbols_for,
)

symbols = st.integers(0, ALPHABET_SIZE - 1)


class TestEncoding:
    """Integer symbols for directed events."""

    def test_layout(self):
        assert encode("F", 1) == 0
        assert encode("F", 20) == 19
        assert encode("B", 1) == 20
        assert encode("B", 20) == 39
        assert END == 40 and ALPHABET_SIZE == 41

    @given(symbols)
    def test_decode_inverts_encode(self, s):
        if s == END:
            assert decode(s) is None
        else:
            assert encode(*decode(s)) == s
            assert (direction_of(s), code_of(s)) == decode(s)

    @given(symbols)
    def test_reverse_is_involution(self, s):
        assert reverse_symbol(reverse_symbol(s)) == s
        if s != END:
            assert code_of(reverse_symbol(s)) == code_of(s)
            assert direction_of(reverse_symbol(s)) != direction_of(s)

    def test_bad_codes_rejected(self):
        with pytest.raises(ValueError):
            encode("F", 21)
        with pytest.raises(ValueError):
            encode("X", 3)
        with pytest.raises(ValueError):
            DirectedEvent("F", 0)

    def test_symbols_for(self):
        assert symbols_for(["F", "B"], [11]) == {10, 30}
        assert symbols_for(["B"], [11, 12]) == {30, 31}


class TestSequences:
    """Text round trip and END handling."""

    @given(st.lists(st.integers(0, END - 1), max_size=20))
    def test_text_round_trip(self, body):
        seq = tuple(body) + (END,)
        assert parse_sequence(format_sequence(seq)) == seq

    def test_tokens(self):
        assert format_sequence((encode("F", 4), encode("B", 11), END)) == "F04 B11 END"

    def test_from_symbols(self):
        s = EventSequence.from_symbols((encode("F", 4), END))
        assert s.terminated and len(s) == 1
        assert s.symbols() == (encode("F", 4), END)

    def test_interior_end_rejected(self):
        with pytest.raises(ValueError):
            EventSequence.from_symbols((END, encode("F", 4), END))
