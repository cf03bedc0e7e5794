"""Norm mining from bilateral international event sequences."""

from .evaluation import (
    LrtReport,
    PlantedNormSpec,
    empirical_pvalue,
    evaluate_top_norm,
    generate_null_corpus,
    lrt_statistic,
    plant_norm_corpus,
)
from .ingest import (
    build_relevance_groups,
    build_sequences,
    corpus_stats,
    filter_events,
    ingest,
    parse_events,
    parse_mentions,
    read_corpus,
    write_corpus,
)
from .mining import NormMiner, NormScore, mine
from .norms import (
    NormCounts,
    NormHypothesis,
    NormParams,
    NormStateMachine,
    count_norm_stats,
    enumerate_hypotheses,
    estimate_params,
    nsm_new,
    nsm_receive,
    nsm_resolve,
    parse_norm,
    seq_loglik_norm,
)
from .seqmodel import (
    ModelBank,
    SequenceModel,
    load_bank,
    predict,
    prob_excl,
    prob_incl,
    sample_sequence,
    save_bank,
    seq_loglik_base,
    train_bank,
    train_base,
)
from .symbols import END, DirectedEvent, EventSequence

__version__ = "0.1.0"

__all__ = [
    "END",
    "DirectedEvent",
    "EventSequence",
    "LrtReport",
    "ModelBank",
    "NormCounts",
    "NormHypothesis",
    "NormMiner",
    "NormParams",
    "NormScore",
    "NormStateMachine",
    "PlantedNormSpec",
    "SequenceModel",
    "build_relevance_groups",
    "build_sequences",
    "corpus_stats",
    "count_norm_stats",
    "empirical_pvalue",
    "enumerate_hypotheses",
    "estimate_params",
    "evaluate_top_norm",
    "filter_events",
    "generate_null_corpus",
    "ingest",
    "load_bank",
    "lrt_statistic",
    "mine",
    "nsm_new",
    "nsm_receive",
    "nsm_resolve",
    "parse_events",
    "parse_mentions",
    "parse_norm",
    "plant_norm_corpus",
    "predict",
    "prob_excl",
    "prob_incl",
    "read_corpus",
    "sample_sequence",
    "save_bank",
    "seq_loglik_base",
    "seq_loglik_norm",
    "train_bank",
    "train_base",
    "write_corpus",
]
