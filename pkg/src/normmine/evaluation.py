"""Likelihood-ratio evaluation of a mined norm against the background model."""

from __future__ import annotations

import io
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .mining import corpus_log_likelihoods
from .norms import (
    BRANCHES,
    SANCTION_DOI,
    NormHypothesis,
    NormParams,
    State,
    branch_feasible,
    head_distribution,
    nsm_new,
)
from .seqmodel import ModelBank, SamplingError, SequenceModel
from .symbols import ALPHABET_SIZE, END
from .validation import ContractViolation, check_probability, check_random_state

MAX_CONSECUTIVE_FAILURES = 100


class InfeasiblePlantError(RuntimeError):
    pass


def lrt_statistic(l0: float, l1: float) -> float:
    return 2.0 * (l1 - l0)


def empirical_pvalue(observed: float, samples: Sequence[float]) -> float:
    """Add-one upper-bound estimate of P(LRT(null) >= observed)."""
    samples = list(samples)
    if not samples:
        raise ContractViolation("empirical_pvalue needs at least one null sample")
    k = sum(1 for s in samples if s >= observed)
    return (k + 1) / (len(samples) + 1)


def generate_null_corpus(
    model: SequenceModel, n: int, rng=None, max_length: int = 10_000, stats: dict | None = None
) -> list[tuple[int, ...]]:
    """``n`` sequences sampled independently from ``model``.

    Draws hitting ``max_length`` are discarded and redrawn; more than 100 in a
    row aborts.
    """
    rng = check_random_state(rng)
    out = []
    failures = consecutive = 0
    while len(out) < n:
        try:
            out.append(model.sample(rng, max_length=max_length))
            consecutive = 0
        except SamplingError:
            failures += 1
            consecutive += 1
            if consecutive > MAX_CONSECUTIVE_FAILURES:
                raise SamplingError(
                    f"{consecutive} consecutive draws exceeded {max_length} symbols"
                ) from None
    if stats is not None:
        stats["sampling_failures"] = stats.get("sampling_failures", 0) + failures
    return out


# --- planted norms --------------------------------------------------------


@dataclass(frozen=True)
class PlantedNormSpec:
    norm: NormHypothesis
    p_comp: float
    p_sanc: float
    n_sequences: int
    seed: int = 0

    def __post_init__(self):
        check_probability(self.p_comp, "p_comp")
        check_probability(self.p_sanc, "p_sanc")
        if self.n_sequences < 1:
            raise ContractViolation("n_sequences must be >= 1")


@dataclass
class PlantReport:
    drafts: int = 0
    rejections: int = 0
    triggered: int = 0
    branches: dict = field(default_factory=lambda: {a.value: 0 for a in BRANCHES})


def _draw(p: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(p)
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), ALPHABET_SIZE - 1)


def _branch_weights(spec: PlantedNormSpec, n_doi: int) -> np.ndarray:
    comp = spec.p_comp**n_doi
    return np.array([comp, (1 - comp) * spec.p_sanc, (1 - comp) * (1 - spec.p_sanc)])


def plant_norm_corpus(
    bank: ModelBank,
    spec: PlantedNormSpec,
    max_length: int = 10_000,
    strict_sanction: bool = False,
    sanction_mode: str = SANCTION_DOI,
    report: PlantReport | None = None,
    drop_owed_end: bool = False,
) -> list[tuple[int, ...]]:
    """Sample a corpus in which ``spec.norm`` operates as the likelihood assumes.

    Symbols before activation come from the base model. At activation a branch
    is drawn from the mixture weights, and the rest of the sequence is drawn
    step by step from the distribution the likelihood scores with. A draft
    that breaks its branch (END while an event is still owed, a forbidden
    event, a length overrun) is discarded and the post-activation part redrawn
    under the same branch, so branch frequencies follow the weights exactly.
    """
    rng = check_random_state(spec.seed)
    report = report if report is not None else PlantReport()
    corpus = []
    for _ in range(spec.n_sequences):
        machine = nsm_new(spec.norm, sanction_mode, drop_owed_end)
        prefix: list[int] = []
        while machine.state == State.INACTIVE:
            sym = _draw(bank.base_.predict_proba(prefix), rng)
            prefix.append(sym)
            if sym == END:
                break
            machine = machine.receive(sym)
            if len(prefix) >= max_length:
                raise SamplingError(f"no END within {max_length} symbols")
        if machine.state != State.ACTIVATING:
            corpus.append(tuple(prefix))
            continue
        report.triggered += 1
        weights = _branch_weights(spec, len(machine.doi))
        assumption = BRANCHES[_draw(weights, rng)]
        report.branches[assumption.value] += 1
        resolved = machine.resolve(assumption)
        while True:
            report.drafts += 1
            suffix = _draft(bank, resolved, prefix, rng, max_length)
            if suffix is not None and branch_feasible(resolved, suffix, strict_sanction):
                break
            report.rejections += 1
            if report.drafts >= 10_000 and report.rejections > 0.99 * report.drafts:
                raise InfeasiblePlantError(
                    f"{report.rejections} of {report.drafts} drafts rejected; "
                    "the planted norm is infeasible under this bank"
                )
        corpus.append(tuple(prefix) + suffix)
    return corpus


def _draft(bank, machine, prefix, rng, max_length):
    history = list(prefix)
    start = len(history)
    while len(history) < max_length:
        sym = _draw(head_distribution(bank, machine, history), rng)
        if sym == END:
            if machine.awaiting:
                return None
            history.append(END)
            return tuple(history[start:])
        history.append(sym)
        machine = machine.receive(sym)
    return None


# --- LRT protocol ---------------------------------------------------------


@dataclass
class LrtReport:
    norm: NormHypothesis
    params: NormParams
    l0: float
    l1: float
    lrt_observed: float
    lrt_samples: list[float]
    p_value_upper: float
    frozen_params: bool = False
    seed: int = 0

    def to_text(self) -> str:
        lines = [
            f"norm = {self.norm}",
            f"p_comp = {self.params.p_comp!r}",
            f"p_sanc = {self.params.p_sanc!r}",
            f"L0 = {self.l0!r}",
            f"L1 = {self.l1!r}",
            f"L1_minus_L0 = {self.l1 - self.l0!r}",
            f"lrt_observed = {self.lrt_observed!r}",
            f"n_synthetic = {len(self.lrt_samples)}",
            f"frozen_params = {str(self.frozen_params).lower()}",
            f"seed = {self.seed}",
            f"p_value_upper = {self.p_value_upper!r}",
            "lrt_samples = " + ",".join(repr(x) for x in self.lrt_samples),
        ]
        return "\n".join(lines) + "\n"


def sturges_bins(n: int) -> int:
    return math.ceil(math.log2(n) + 1) if n > 0 else 1


def lrt_histogram(samples: Sequence[float], bins: int | None = None) -> list[tuple[float, float, int]]:
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        return []
    counts, edges = np.histogram(samples, bins=bins or sturges_bins(samples.size))
    return [(float(edges[i]), float(edges[i + 1]), int(c)) for i, c in enumerate(counts)]


def histogram_csv(rows) -> str:
    buf = io.StringIO()
    buf.write("bin_left,bin_right,count\n")
    for left, right, count in rows:
        buf.write(f"{left!r},{right!r},{count}\n")
    return buf.getvalue()


def evaluate_top_norm(
    corpus,
    bank: ModelBank,
    norm: NormHypothesis,
    params: NormParams | None = None,
    n_synth: int = 58,
    synth_size: int | None = None,
    seed: int = 0,
    frozen_params: bool = False,
    strict_sanction: bool = False,
    sanction_mode: str = SANCTION_DOI,
    drop_owed_end: bool = False,
    n_jobs: int = 1,
    bins: int | None = None,
) -> tuple[LrtReport, list[tuple[float, float, int]]]:
    """Compare the norm-augmented and background likelihoods of ``corpus``.

    The null distribution of the statistic comes from ``n_synth`` corpora
    sampled from the base model; corpus ``i`` uses seed ``seed + i``. Unless
    ``frozen_params`` is set, p_comp and p_sanc are re-estimated on each
    synthetic corpus.
    """
    corpus = list(corpus)
    l0, l1, _, params = corpus_log_likelihoods(
        corpus, bank, norm, params, strict_sanction, sanction_mode, drop_owed_end
    )
    observed = lrt_statistic(l0, l1)
    size = len(corpus) if synth_size is None else int(synth_size)

    def one(i: int) -> float:
        synthetic = generate_null_corpus(bank.base_, size, np.random.default_rng(seed + i))
        s0, s1, _, _ = corpus_log_likelihoods(
            synthetic,
            bank,
            norm,
            params if frozen_params else None,
            strict_sanction,
            sanction_mode,
            drop_owed_end,
        )
        return lrt_statistic(s0, s1)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            samples = list(pool.map(one, range(n_synth)))
    else:
        samples = [one(i) for i in range(n_synth)]
    p_value = empirical_pvalue(observed, samples) if samples else 1.0
    report = LrtReport(norm, params, l0, l1, observed, samples, p_value, frozen_params, seed)
    return report, lrt_histogram(samples, bins)
