"""Bayesian norm mining over a whole corpus.

The per-sequence walk in :mod:`normmine.norms` is exact but slow in pure
Python. :class:`CorpusTables` precomputes every model lookup a hypothesis can
need, after which each hypothesis is scored for all sequences at once with
segment reductions over a flat position array.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .norms import (
    SANCTION_DOI,
    SANCTION_MODES,
    SANCTION_OPPOSITE,
    NormCounts,
    NormHypothesis,
    NormParams,
    enumerate_hypotheses,
    estimate_params,
)
from .seqmodel import _REVERSAL, CODE_SETS, ModelBank
from .symbols import ALPHABET_SIZE, END, N_CODES, SANCTION_CODES, reverse_symbol, reverse_symbols
from .validation import ContractViolation, InvariantViolation, check_corpus

logger = logging.getLogger(__name__)

CSV_HEADER = [
    "norm",
    "log_odds",
    "triggers",
    "fulfilled",
    "violations",
    "unsanctioned",
    "sanctioned",
    "p_comp",
    "p_sanc",
]

_BIG = np.iinfo(np.int64).max // 4
_SANCTION_KEY = CODE_SETS.index(SANCTION_CODES)
_SANCTION_SORTED = sorted(SANCTION_CODES)

# doi variants, encoded per sequence
DOI_F, DOI_B, DOI_FB = 0, 1, 2


@dataclass
class NormScore:
    norm: NormHypothesis
    prior_log_odds: float
    log_odds: float
    counts: NormCounts
    params: NormParams

    def row(self) -> list[str]:
        c = self.counts
        return [
            str(self.norm),
            repr(self.log_odds),
            str(c.triggers),
            str(c.fulfilments),
            str(c.violations),
            str(c.unsanctioned_violations),
            str(c.sanctioned_violations),
            repr(self.params.p_comp),
            repr(self.params.p_sanc),
        ]

    def as_dict(self) -> dict:
        out = asdict(self)
        out["norm"] = str(self.norm)
        return out


class CorpusTables:
    """Flat per-position lookup tables for one corpus under one bank."""

    def __init__(self, corpus: list[tuple[int, ...]], bank: ModelBank, code_sets=None):
        self.n_sequences = len(corpus)
        lengths = np.array([len(s) for s in corpus], dtype=np.int64)
        self.offsets = np.cumsum(lengths) - lengths
        self.ends = self.offsets + lengths - 1
        sym = np.fromiter((s for seq in corpus for s in seq), dtype=np.int64, count=int(lengths.sum()))
        self.sym = sym
        self.seg = np.repeat(np.arange(self.n_sequences), lengths)
        self.pos = np.arange(sym.size) - self.offsets[self.seg]
        self.is_end = sym == END
        self.code = np.where(self.is_end, 0, sym % N_CODES + 1)
        self.dir_f = sym < N_CODES
        self.dir_b = (sym >= N_CODES) & ~self.is_end

        base = bank.base_
        n = sym.size
        probs = np.empty((n, ALPHABET_SIZE))
        wanted = CODE_SETS if code_sets is None else {frozenset(c) for c in code_sets}
        models = [(k, bank.incl_models_[key]) for k, key in enumerate(CODE_SETS) if key in wanted]
        # incl-model probability of the observed symbol and of END, for the
        # forward context and the reversed one (doi = {B})
        inc = {DOI_F: np.full((len(CODE_SETS), n), np.nan), DOI_B: np.full((len(CODE_SETS), n), np.nan)}
        inc_end = {DOI_F: np.full((len(CODE_SETS), n), np.nan), DOI_B: np.full((len(CODE_SETS), n), np.nan)}
        # full sanction-model rows, needed to drop the obligated event from them
        self.sanc_rows = {
            DOI_F: np.full((n, ALPHABET_SIZE), np.nan),
            DOI_B: np.full((n, ALPHABET_SIZE), np.nan),
        }
        i = 0
        for seq in corpus:
            rev = reverse_symbols(seq)
            for j, s in enumerate(seq):
                probs[i] = base.predict_proba(seq[:j])
                rs = reverse_symbol(s)
                for k, model in models:
                    pf = model.predict_proba(seq[:j])
                    pr = model.predict_proba(rev[:j])
                    inc[DOI_F][k, i] = pf[s]
                    inc[DOI_B][k, i] = pr[rs]
                    inc_end[DOI_F][k, i] = pf[END]
                    inc_end[DOI_B][k, i] = pr[END]
                    if k == _SANCTION_KEY:
                        self.sanc_rows[DOI_F][i] = pf
                        self.sanc_rows[DOI_B][i] = pr[_REVERSAL]
                i += 1
        self.probs = probs
        self.base_p = probs[np.arange(n), sym]
        self.base_lp = np.log(self.base_p)
        self.base_total = np.add.reduceat(self.base_lp, self.offsets) if n else np.zeros(0)
        with np.errstate(divide="ignore"):
            self.inc_lp = {v: np.log(inc[v]) for v in inc}
            self.inc_log_keep = {v: np.log1p(-inc_end[v]) for v in inc_end}
        self.inc_lp[DOI_FB] = self.inc_lp[DOI_F]
        self.inc_log_keep[DOI_FB] = self.inc_log_keep[DOI_F]
        self.sanc_rows[DOI_FB] = self.sanc_rows[DOI_F]
        # excluded mass, summed in ascending symbol order
        self.mass = {}
        for k, codes in enumerate(CODE_SETS):
            codes = sorted(codes)
            f_cols = [c - 1 for c in codes]
            b_cols = [N_CODES + c - 1 for c in codes]
            for variant, cols in ((DOI_F, f_cols), (DOI_B, b_cols), (DOI_FB, f_cols + b_cols)):
                m = np.zeros(n)
                for col in cols:
                    m = m + probs[:, col]
                self.mass[k, variant] = m
        if n and np.any(np.stack(list(self.mass.values())) >= 1.0):
            raise InvariantViolation("excluded mass reached 1 in some context")

    def sanction_column(self, symbol: int) -> dict:
        """Oriented sanction-model probability of ``symbol`` at every position, per doi variant."""
        return {v: rows[:, symbol] for v, rows in self.sanc_rows.items()}

    def segment_first(self, mask: np.ndarray) -> np.ndarray:
        if self.n_sequences == 0:
            return np.zeros(0, dtype=np.int64)
        idx = np.where(mask, self.pos, _BIG)
        return np.minimum.reduceat(idx, self.offsets)


def _select(variant_per_seq: np.ndarray, tables: dict, seg: np.ndarray) -> np.ndarray:
    """Per-position values from per-variant arrays, choosing by each sequence's doi."""
    v = variant_per_seq[seg]
    out = np.where(v == DOI_F, tables[DOI_F], tables[DOI_B])
    return np.where(v == DOI_FB, tables[DOI_FB], out)


class HypothesisScorer:
    """Scores one hypothesis against precomputed :class:`CorpusTables`."""

    def __init__(
        self, tables: CorpusTables, strict_sanction=False, sanction_mode=SANCTION_DOI, drop_owed_end=False
    ):
        self.t = tables
        self.strict_sanction = strict_sanction
        self.sanction_mode = sanction_mode
        self.drop_owed_end = drop_owed_end

    def _activation(self, norm: NormHypothesis):
        t = self.t
        n = t.n_sequences
        if not norm.conditional:
            return np.ones(n, bool), np.zeros(n, np.int64), np.full(n, DOI_FB)
        first = t.segment_first((t.code == norm.condition_code) & ~t.is_end)
        triggered = first < _BIG
        trig_idx = np.where(triggered, t.offsets + np.where(triggered, first, 0), 0)
        trig_is_f = t.dir_f[trig_idx]
        same = norm.rel_dir == "+"
        doi = np.where(trig_is_f == same, DOI_F, DOI_B)
        return triggered, np.where(triggered, first + 1, _BIG), doi

    def outcomes(self, norm: NormHypothesis):
        """Trigger/target/sanction positions per sequence."""
        t = self.t
        triggered, start, doi = self._activation(norm)
        if self.sanction_mode == SANCTION_OPPOSITE:
            sdoi = np.where(doi == DOI_F, DOI_B, np.where(doi == DOI_B, DOI_F, DOI_FB))
        else:
            sdoi = doi
        seg = t.seg
        body = ~t.is_end & triggered[seg] & (t.pos >= start[seg])

        def in_dirs(variant):
            v = variant[seg]
            return np.where(v == DOI_F, t.dir_f, np.where(v == DOI_B, t.dir_b, t.dir_f | t.dir_b))

        target = body & (t.code == norm.event_code) & in_dirs(doi)
        first_target = t.segment_first(target)
        sanction_code = np.isin(t.code, _SANCTION_SORTED)
        if norm.modality == "O":
            after = start
        else:
            after = np.where(first_target < _BIG, first_target + 1, _BIG)
        sanction = body & sanction_code & in_dirs(sdoi) & (t.pos >= after[seg])
        first_sanction = t.segment_first(sanction)
        return triggered, start, doi, sdoi, first_target, first_sanction, after

    def counts(self, norm: NormHypothesis, outcomes=None) -> NormCounts:
        triggered, _, _, _, first_target, first_sanction, _ = outcomes or self.outcomes(norm)
        has_target = (first_target < _BIG) & triggered
        fulfilled = has_target if norm.modality == "O" else triggered & ~has_target
        violated = triggered & ~fulfilled
        sanctioned = violated & (first_sanction < _BIG)
        return NormCounts(
            triggers=int(triggered.sum()),
            fulfilments=int(fulfilled.sum()),
            violations=int(violated.sum()),
            sanctioned_violations=int(sanctioned.sum()),
        )

    def branch_log_likelihoods(self, norm: NormHypothesis, params: NormParams, outcomes=None):
        """Weighted log-likelihood of each Activating branch, shape ``(3, n)``.

        Rows follow :data:`normmine.norms.BRANCHES`; infeasible branches are
        ``-inf``. Returns the array and the per-sequence trigger mask; columns
        of untriggered sequences are meaningless.

        Mirrors :func:`normmine.norms.head_distribution` position by position:
        each branch is a run of segments, each scored from one head table.
        """
        t = self.t
        triggered, start, doi, sdoi, first_target, first_sanction, after = outcomes or self.outcomes(norm)
        seg, pos = t.seg, t.pos
        k_ec = norm.event_code - 1
        end_pos = t.ends - t.offsets

        def pick(tables):
            return _select(doi, tables, seg)

        def spick(tables):
            return _select(sdoi, tables, seg)

        with np.errstate(divide="ignore", invalid="ignore"):
            m_ec = pick({v: t.mass[k_ec, v] for v in (DOI_F, DOI_B, DOI_FB)})
            m_s = spick({v: t.mass[_SANCTION_KEY, v] for v in (DOI_F, DOI_B, DOI_FB)})
            log_p = t.base_lp
            # base without the target / without sanctions
            exc_ec = log_p - np.log1p(-m_ec)
            exc_s = log_p - np.log1p(-m_s)
            # incl models while an event is owed, optionally with END dropped
            keep = (
                t.inc_log_keep
                if self.drop_owed_end
                else {v: np.zeros_like(a) for v, a in t.inc_log_keep.items()}
            )
            owe_ec = pick({v: t.inc_lp[v][k_ec] - keep[v][k_ec] for v in t.inc_lp})
            owe_s = spick({v: t.inc_lp[v][_SANCTION_KEY] - keep[v][_SANCTION_KEY] for v in t.inc_lp})
            if norm.modality == "O":
                # obligation violated: the target never occurs either
                tgt_f = spick(t.sanction_column(norm.event_code - 1))
                tgt_b = spick(t.sanction_column(N_CODES + norm.event_code - 1))
                end_s = spick(t.sanction_column(END))
                v = doi[seg]
                drop = np.where(v == DOI_B, 0.0, tgt_f)
                drop = np.where(v == DOI_F, drop, drop + tgt_b)
                if self.drop_owed_end:
                    drop = drop + end_s
                owe_s_no_t = spick({k: t.inc_lp[k][_SANCTION_KEY] for k in t.inc_lp}) - np.log1p(-drop)
                # targets already removed as sanctions leave nothing further to drop
                if norm.event_code in SANCTION_CODES:
                    m_t_left = np.where((doi == sdoi)[seg], 0.0, m_ec)
                else:
                    m_t_left = m_ec
                exc_s_t = exc_s - np.log1p(-(m_t_left / (1.0 - m_s)))

        def run(parts):
            # parts: (table, last position inclusive) in order, starting at activation
            s = log_p
            lo = start[seg]
            for table, last in parts:
                hi = last[seg]
                s = np.where((pos >= lo) & (pos <= hi), table, s)
                lo = hi + 1
            if t.n_sequences == 0:
                return np.zeros(0)
            return np.add.reduceat(s, t.offsets)

        has_target = first_target < _BIG
        has_sanction = first_sanction < _BIG
        sanc_ok = has_sanction & (first_sanction == after) if self.strict_sanction else has_sanction
        neg = np.full(t.n_sequences, -np.inf)
        if norm.modality == "O":
            no_target = ~has_target
            comp = np.where(has_target, run([(owe_ec, first_target)]), neg)
            sanc = np.where(no_target & sanc_ok, run([(owe_s_no_t, first_sanction), (exc_ec, end_pos)]), neg)
            nosanc = np.where(no_target & ~has_sanction, run([(exc_s_t, end_pos)]), neg)
        else:
            comp = np.where(~has_target, run([(exc_ec, end_pos)]), neg)
            sanc = np.where(has_target & sanc_ok, run([(owe_ec, first_target), (owe_s, first_sanction)]), neg)
            nosanc = np.where(
                has_target & ~has_sanction, run([(owe_ec, first_target), (exc_s, end_pos)]), neg
            )

        n_doi = np.where(doi == DOI_FB, 2, 1)
        p_c = params.p_comp**n_doi
        with np.errstate(divide="ignore"):
            w_comp = np.log(p_c)
            w_nc = np.log1p(-p_c)
            w_sanc = w_nc + _safe_log(params.p_sanc)
            w_nosanc = w_nc + _safe_log1m(params.p_sanc)
        return np.stack([w_comp + comp, w_sanc + sanc, w_nosanc + nosanc]), triggered

    def log_ratios(self, norm: NormHypothesis, params: NormParams, outcomes=None) -> np.ndarray:
        """Per-sequence ``log p(s|norm) - log p(s|no norm)``; exactly 0 when untriggered."""
        branches, triggered = self.branch_log_likelihoods(norm, params, outcomes)
        t = self.t
        with np.errstate(invalid="ignore", divide="ignore"):
            mx = branches.max(axis=0)
            safe_mx = np.where(np.isfinite(mx), mx, 0.0)
            norm_ll = safe_mx + np.log(np.exp(branches - safe_mx).sum(axis=0))
        norm_ll = np.where(np.isfinite(mx), norm_ll, -np.inf)
        return np.where(triggered, norm_ll - t.base_total, 0.0)


def _safe_log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


def _safe_log1m(x: float) -> float:
    return math.log1p(-x) if x < 1 else -math.inf


def _score_one(scorer, norm, prior, params_override=None) -> NormScore:
    outcomes = scorer.outcomes(norm)
    counts = scorer.counts(norm, outcomes)
    params = params_override or estimate_params(counts)
    ratios = scorer.log_ratios(norm, params, outcomes)
    log_odds = prior + math.fsum(ratios.tolist())
    return NormScore(norm, prior, log_odds, counts, params)


def rank_scores(scores: list[NormScore]) -> list[NormScore]:
    order = {h: i for i, h in enumerate(enumerate_hypotheses())}
    return sorted(scores, key=lambda s: (-s.log_odds, order.get(s.norm, len(order)), str(s.norm)))


class NormMiner(BaseEstimator):
    """Rank norm hypotheses by posterior log odds against the no-norm model.

    Parameters
    ----------
    bank : ModelBank, optional
        A fitted bank. When omitted, ``fit`` trains one on the corpus with
        ``max_depth``, ``discount`` and ``strength``.
    hypotheses : sequence of NormHypothesis, optional
        Defaults to all 1640.
    prior_log_odds : float
        Shared prior log odds (0 means odds of 1).
    n_jobs : int
        Worker threads over hypotheses; output does not depend on it.
    strict_sanction : bool
        Require the sanction to be the very next event after a violation.
    sanction_mode : {"doi", "opposite"}
        Directions in which sanctions are recognised.
    drop_owed_end : bool
        Drop END from the head distribution while an event is still owed.
    verbose : int
        Log progress every ``verbose`` hypotheses (0 disables).
    """

    def __init__(
        self,
        bank=None,
        hypotheses=None,
        prior_log_odds=0.0,
        n_jobs=1,
        strict_sanction=False,
        sanction_mode=SANCTION_DOI,
        drop_owed_end=False,
        max_depth=8,
        discount=0.5,
        strength=1.0,
        verbose=0,
    ):
        self.bank = bank
        self.hypotheses = hypotheses
        self.prior_log_odds = prior_log_odds
        self.n_jobs = n_jobs
        self.strict_sanction = strict_sanction
        self.sanction_mode = sanction_mode
        self.drop_owed_end = drop_owed_end
        self.max_depth = max_depth
        self.discount = discount
        self.strength = strength
        self.verbose = verbose

    def _check(self):
        if self.sanction_mode not in SANCTION_MODES:
            raise ContractViolation(f"sanction_mode must be one of {SANCTION_MODES}")
        if int(self.n_jobs) < 1:
            raise ContractViolation("n_jobs must be >= 1")

    def fit(self, corpus, y=None):
        self._check()
        corpus = check_corpus(corpus)
        bank = self.bank
        if bank is None:
            bank = ModelBank(self.max_depth, self.discount, self.strength).fit(corpus)
        check_is_fitted(bank, "incl_models_")
        self.bank_ = bank
        hyps = list(self.hypotheses) if self.hypotheses is not None else enumerate_hypotheses()
        tables = CorpusTables(corpus, bank)
        scorer = HypothesisScorer(tables, self.strict_sanction, self.sanction_mode, self.drop_owed_end)
        prior = float(self.prior_log_odds)

        def work(h):
            return _score_one(scorer, h, prior)

        every = int(self.verbose)
        scores = []
        if every > 0:
            logger.info("scoring %d hypotheses on %d sequences", len(hyps), len(corpus))
        with ThreadPoolExecutor(max_workers=int(self.n_jobs)) as pool:
            results = map(work, hyps) if int(self.n_jobs) == 1 else pool.map(work, hyps)
            for i, score in enumerate(results, start=1):
                scores.append(score)
                if every > 0 and (i % every == 0 or i == len(hyps)):
                    logger.info("scored %d/%d hypotheses", i, len(hyps))
        self.scores_ = rank_scores(scores)
        self.params_ = {s.norm: s.params for s in scores}
        self.n_positive_ = sum(1 for s in scores if s.log_odds > 0)
        return self

    def transform(self, corpus) -> np.ndarray:
        """Per-sequence log likelihood ratios, one column per ranked hypothesis."""
        check_is_fitted(self, "scores_")
        corpus = check_corpus(corpus)
        scorer = HypothesisScorer(
            CorpusTables(corpus, self.bank_), self.strict_sanction, self.sanction_mode, self.drop_owed_end
        )
        cols = [scorer.log_ratios(s.norm, s.params) for s in self.scores_]
        return np.stack(cols, axis=1) if cols else np.zeros((len(corpus), 0))

    def to_csv(self) -> str:
        check_is_fitted(self, "scores_")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for s in self.scores_:
            writer.writerow(s.row())
        return buf.getvalue()

    def report(self) -> str:
        check_is_fitted(self, "scores_")
        payload = {
            "n_hypotheses": len(self.scores_),
            "n_positive": self.n_positive_,
            "prior_log_odds": float(self.prior_log_odds),
            "strict_sanction": bool(self.strict_sanction),
            "sanction_mode": self.sanction_mode,
            "drop_owed_end": bool(self.drop_owed_end),
            "scores": [s.as_dict() for s in self.scores_],
        }
        return json.dumps(payload, indent=1, sort_keys=True) + "\n"


def mine(
    corpus,
    hypotheses: Sequence[NormHypothesis] | None,
    bank: ModelBank,
    prior_log_odds: float = 0.0,
    n_jobs: int = 1,
    strict_sanction: bool = False,
    sanction_mode: str = SANCTION_DOI,
    drop_owed_end: bool = False,
) -> list[NormScore]:
    miner = NormMiner(
        bank=bank,
        hypotheses=hypotheses,
        prior_log_odds=prior_log_odds,
        n_jobs=n_jobs,
        strict_sanction=strict_sanction,
        sanction_mode=sanction_mode,
        drop_owed_end=drop_owed_end,
    )
    return miner.fit(corpus).scores_


def corpus_log_likelihoods(
    corpus,
    bank: ModelBank,
    norm: NormHypothesis,
    params: NormParams | None = None,
    strict_sanction: bool = False,
    sanction_mode: str = SANCTION_DOI,
    drop_owed_end: bool = False,
):
    """Total base and norm log-likelihoods of a corpus, plus the counts and params used."""
    corpus = check_corpus(corpus)
    tables = CorpusTables(corpus, bank, code_sets=[{norm.event_code}, SANCTION_CODES])
    scorer = HypothesisScorer(tables, strict_sanction, sanction_mode, drop_owed_end)
    outcomes = scorer.outcomes(norm)
    counts = scorer.counts(norm, outcomes)
    if params is None:
        params = estimate_params(counts)
    ratios = scorer.log_ratios(norm, params, outcomes)
    l0 = math.fsum(tables.base_total.tolist())
    l1 = math.fsum(tables.base_total.tolist() + ratios.tolist())
    return l0, l1, counts, params
