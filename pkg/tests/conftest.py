import warnings

import numpy as np
import pytest
from acceptance_report import RESULTS

from normmine.seqmodel import ModelBank
from normmine.symbols import ALPHABET_SIZE, END, encode, reverse_symbol

# --- acceptance report --------------------------------------------------------


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        title, passed, detail = RESULTS[number]
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d} {status}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


# --- corpora --------------------------------------------------------------------


def random_corpus(rng, n, codes, max_len=6, min_len=0):
    """END-terminated sequences over ``codes`` in both directions."""
    symbols = [encode(d, c) for c in codes for d in ("F", "B")]
    out = []
    for _ in range(n):
        length = int(rng.integers(min_len, max_len + 1))
        out.append(tuple(int(rng.choice(symbols)) for _ in range(length)) + (END,))
    return out


def fit_bank(corpus, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return ModelBank(**kw).fit(corpus)


@pytest.fixture(scope="session")
def toy_corpus():
    rng = np.random.default_rng(7)
    return random_corpus(rng, 300, (2, 4, 11, 12, 16), max_len=7)


@pytest.fixture(scope="session")
def toy_bank(toy_corpus):
    return fit_bank(toy_corpus, max_depth=3)


# --- uniform stub ---------------------------------------------------------------


class StubModel:
    """Every context predicts the same fixed distribution."""

    def __init__(self, dist):
        self.dist = np.asarray(dist, dtype=float)
        self.dist.setflags(write=False)

    def predict_proba(self, context=()):
        return self.dist

    def prob(self, symbol, context=()):
        return float(self.dist[symbol])

    def sequence_log_likelihood(self, sequence):
        import math

        return sum(math.log(self.prob(s)) for s in sequence)


class StubBank:
    """Bank whose base and inclusion models all share one stub model."""

    def __init__(self, model):
        self.base_ = model
        self.model = model

    def incl_distribution(self, doi, codes, context):
        if frozenset(doi) == {"B"}:
            p = self.model.predict_proba([reverse_symbol(s) for s in context])
            return p[[reverse_symbol(s) for s in range(ALPHABET_SIZE)]]
        return self.model.predict_proba(context)

    def excl_distribution(self, doi, codes, context):
        from normmine.seqmodel import excl_distribution

        return excl_distribution(self.model, doi, codes, context)

    def prob_incl(self, doi, codes, symbol, context):
        return float(self.incl_distribution(doi, codes, context)[symbol])

    def prob_excl(self, doi, codes, symbol, context):
        return float(self.excl_distribution(doi, codes, context)[symbol])


def five_symbol_stub() -> StubBank:
    """Uniform 1/5 over F01, B01, F02, B02 and END."""
    dist = np.zeros(ALPHABET_SIZE)
    for s in (encode("F", 1), encode("B", 1), encode("F", 2), encode("B", 2), END):
        dist[s] = 0.2
    return StubBank(StubModel(dist))


@pytest.fixture
def stub_bank():
    return five_symbol_stub()
