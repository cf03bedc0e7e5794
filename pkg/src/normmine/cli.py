"""Command-line pipeline: ``normmine {ingest,train,mine,evaluate,synth}``.

Every option can also come from a JSON config file (``--config``) whose keys
are the option names with underscores, e.g. ``{"clone_threshold": 250}``.
Flags given on the command line override the file. Machine-readable output
goes to files or stdout; progress goes to stderr.

Exit codes: 0 success, 2 usage or input error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import asdict, dataclass, field, fields
from datetime import date, datetime
from pathlib import Path

from .evaluation import (
    InfeasiblePlantError,
    PlantedNormSpec,
    PlantReport,
    evaluate_top_norm,
    histogram_csv,
    plant_norm_corpus,
)
from .ingest import (
    DEFAULT_CLONE_THRESHOLD,
    DEFAULT_SOURCE_FILTERS,
    STUDY_WINDOW,
    IngestError,
    corpus_stats,
    ingest,
    read_corpus,
    write_corpus,
)
from .mining import NormMiner
from .norms import NORM_SYNTAX, SANCTION_DOI, SANCTION_MODES, parse_norm
from .seqmodel import BankFormatError, ModelBank, SamplingError, load_bank, save_bank
from .symbols import EventSequence
from .validation import ContractViolation, InvariantViolation

logger = logging.getLogger("normmine")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


@dataclass
class PipelineConfig:
    # paths
    events: str | None = None
    mentions: str | None = None
    corpus: str | None = None
    meta: str | None = None
    diagnostics: str | None = None
    bank: str | None = None
    out_dir: str = "."
    # ingest
    clone_threshold: int = DEFAULT_CLONE_THRESHOLD
    source_filters: list[str] = field(default_factory=lambda: list(DEFAULT_SOURCE_FILTERS))
    start: str | None = None
    end: str | None = None
    study_window: bool = False
    seed: int = 0
    # model
    max_depth: int = 8
    discount: float = 0.5
    strength: float = 1.0
    # mining
    prior_log_odds: float = 0.0
    workers: int = 1
    hypotheses: str | None = None
    progress_every: int = 100
    # scoring
    strict_sanction: bool = False
    sanction_mode: str = SANCTION_DOI
    drop_owed_end: bool = False
    # evaluation
    norm: str | None = None
    n_synth: int = 58
    synth_size: int | None = None
    frozen_params: bool = False
    bins: int | None = None
    # synth
    p_comp: float | None = None
    p_sanc: float | None = None
    n_sequences: int = 5000
    max_length: int = 10_000

    @classmethod
    def load(cls, path: str | None, overrides: dict) -> PipelineConfig:
        values: dict = {}
        if path is not None:
            try:
                loaded = json.loads(Path(path).read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                raise UsageError(f"cannot read config {path}: {exc}") from exc
            if not isinstance(loaded, dict):
                raise UsageError(f"config {path} must hold a JSON object")
            known = {f.name for f in fields(cls)}
            unknown = sorted(set(loaded) - known)
            if unknown:
                raise UsageError(f"unknown config keys: {', '.join(unknown)}")
            values.update(loaded)
        values.update(overrides)
        defaults = cls()
        for name, value in values.items():
            _check_type(name, value, getattr(defaults, name))
        return cls(**values)

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            flags = ", ".join("--" + n.replace("_", "-") for n in missing)
            raise UsageError(f"missing required option(s): {flags}")


def _check_type(name: str, value, default) -> None:
    if default is None or value is None:
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif isinstance(default, list):
        ok = isinstance(value, list) and all(isinstance(v, str) for v in value)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise UsageError(f"option {name} has the wrong type: {value!r}")


def _parse_date(text: str | None) -> date | None:
    if text is None:
        return None
    for fmt in ("%Y%m%d", "%Y-%m-%d"):
        try:
            return datetime.strptime(text, fmt).date()
        except ValueError:
            pass
    raise UsageError(f"bad date {text!r}; use YYYYMMDD or YYYY-MM-DD")


def _out(cfg: PipelineConfig, name: str) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _load_corpus(cfg: PipelineConfig) -> list[tuple[int, ...]]:
    cfg.require("corpus")
    try:
        sequences = read_corpus(cfg.corpus)
    except OSError as exc:
        raise IngestError(f"cannot read corpus {cfg.corpus}: {exc}") from exc
    return [s.symbols() for s in sequences]


def _load_bank(cfg: PipelineConfig) -> ModelBank:
    cfg.require("bank")
    try:
        return load_bank(cfg.bank)
    except OSError as exc:
        raise IngestError(f"cannot read bank {cfg.bank}: {exc}") from exc


def _norm(cfg: PipelineConfig):
    cfg.require("norm")
    try:
        return parse_norm(cfg.norm)
    except ContractViolation as exc:
        raise UsageError(f"{exc} (syntax: {NORM_SYNTAX})") from exc


# --- subcommands ----------------------------------------------------------


def cmd_ingest(cfg: PipelineConfig) -> int:
    cfg.require("events", "mentions", "corpus")
    start, end = _parse_date(cfg.start), _parse_date(cfg.end)
    if cfg.study_window:
        start, end = start or STUDY_WINDOW[0], end or STUDY_WINDOW[1]
    logger.info("ingesting events from %s, mentions from %s", cfg.events, cfg.mentions)
    sequences, diag = ingest(
        cfg.events,
        cfg.mentions,
        clone_threshold=cfg.clone_threshold,
        source_filters=tuple(cfg.source_filters),
        start=start,
        end=end,
        rng_seed=cfg.seed,
    )
    if not sequences:
        logger.warning("ingest produced an empty corpus")
    corpus_path = Path(cfg.corpus)
    meta = Path(cfg.meta) if cfg.meta else corpus_path.with_name(corpus_path.name + ".meta.tsv")
    diag_path = (
        Path(cfg.diagnostics) if cfg.diagnostics else corpus_path.with_name(corpus_path.name + ".diag.txt")
    )
    for path in (corpus_path, meta, diag_path):
        path.parent.mkdir(parents=True, exist_ok=True)
    write_corpus(sequences, corpus_path, meta)
    _write(diag_path, diag.to_text())
    logger.info("wrote %d sequences to %s", len(sequences), corpus_path)
    sys.stdout.write(corpus_stats(s.symbols() for s in sequences).to_text())
    return EXIT_OK


def cmd_train(cfg: PipelineConfig) -> int:
    corpus = _load_corpus(cfg)
    cfg.require("bank")
    logger.info("training bank on %d sequences (max_depth=%d)", len(corpus), cfg.max_depth)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        bank = ModelBank(cfg.max_depth, cfg.discount, cfg.strength).fit(corpus)
    for w in caught:
        logger.warning("%s", w.message)
    save_bank(bank, cfg.bank)
    logger.info("saved bank with %d inclusion models to %s", len(bank.incl_models_), cfg.bank)
    return EXIT_OK


def _read_hypotheses(path: str):
    out = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IngestError(f"cannot read hypotheses file {path}: {exc}") from exc
    for i, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(parse_norm(line))
        except ContractViolation as exc:
            raise UsageError(f"{path}:{i}: {exc} (syntax: {NORM_SYNTAX})") from exc
    return out


def cmd_mine(cfg: PipelineConfig) -> int:
    corpus = _load_corpus(cfg)
    bank = _load_bank(cfg)
    hyps = _read_hypotheses(cfg.hypotheses) if cfg.hypotheses else None
    miner = NormMiner(
        bank=bank,
        hypotheses=hyps,
        prior_log_odds=cfg.prior_log_odds,
        n_jobs=cfg.workers,
        strict_sanction=cfg.strict_sanction,
        sanction_mode=cfg.sanction_mode,
        drop_owed_end=cfg.drop_owed_end,
        verbose=cfg.progress_every,
    ).fit(corpus)
    _write(_out(cfg, "norms.csv"), miner.to_csv())
    _write(_out(cfg, "mine_report.json"), miner.report())
    sys.stdout.write(f"positive_norms = {miner.n_positive_}\n")
    return EXIT_OK


def cmd_evaluate(cfg: PipelineConfig) -> int:
    norm = _norm(cfg)
    corpus = _load_corpus(cfg)
    bank = _load_bank(cfg)
    logger.info("evaluating %s against %d null corpora", norm, cfg.n_synth)
    report, hist = evaluate_top_norm(
        corpus,
        bank,
        norm,
        n_synth=cfg.n_synth,
        synth_size=cfg.synth_size,
        seed=cfg.seed,
        frozen_params=cfg.frozen_params,
        strict_sanction=cfg.strict_sanction,
        sanction_mode=cfg.sanction_mode,
        drop_owed_end=cfg.drop_owed_end,
        n_jobs=cfg.workers,
        bins=cfg.bins,
    )
    _write(_out(cfg, "lrt_report.txt"), report.to_text())
    _write(_out(cfg, "lrt_hist.csv"), histogram_csv(hist))
    sys.stdout.write(f"lrt_observed = {report.lrt_observed!r}\np_value_upper = {report.p_value_upper!r}\n")
    return EXIT_OK


def cmd_synth(cfg: PipelineConfig) -> int:
    norm = _norm(cfg)
    cfg.require("p_comp", "p_sanc", "corpus")
    bank = _load_bank(cfg)
    spec = PlantedNormSpec(norm, cfg.p_comp, cfg.p_sanc, cfg.n_sequences, cfg.seed)
    report = PlantReport()
    corpus = plant_norm_corpus(
        bank,
        spec,
        max_length=cfg.max_length,
        strict_sanction=cfg.strict_sanction,
        sanction_mode=cfg.sanction_mode,
        report=report,
        drop_owed_end=cfg.drop_owed_end,
    )
    Path(cfg.corpus).parent.mkdir(parents=True, exist_ok=True)
    write_corpus(
        (EventSequence.from_symbols(s, id=str(i)) for i, s in enumerate(corpus, start=1)), cfg.corpus
    )
    lines = [
        f"norm = {norm}",
        f"sequences = {len(corpus)}",
        f"triggered = {report.triggered}",
        f"drafts = {report.drafts}",
        f"rejections = {report.rejections}",
    ]
    lines += [f"branch[{k}] = {v}" for k, v in report.branches.items()]
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "mine": cmd_mine,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
}


# --- argument parsing -----------------------------------------------------


def _flag(parser, name: str, **kw):
    parser.add_argument("--" + name.replace("_", "-"), dest=name, default=argparse.SUPPRESS, **kw)


def _switch(parser, name: str, help: str):
    parser.add_argument(
        "--" + name.replace("_", "-"),
        dest=name,
        action=argparse.BooleanOptionalAction,
        default=argparse.SUPPRESS,
        help=help,
    )


def _scoring_flags(p):
    _switch(p, "strict_sanction", "a sanction must be the very next event")
    _flag(p, "sanction_mode", choices=SANCTION_MODES, help="directions in which sanctions count")
    _switch(p, "drop_owed_end", "drop END while an event is still owed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="normmine", description="Mine sanctioned norms from event sequences."
    )
    parser.add_argument("--config", help="JSON file of option defaults")
    parser.add_argument("-q", "--quiet", action="store_true", help="only warnings on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="GDELT export + mentions -> corpus")
    _flag(p, "events", help="events file or directory")
    _flag(p, "mentions", help="mentions file or directory")
    _flag(p, "corpus", help="output corpus file")
    _flag(p, "meta", help="output metadata TSV (default CORPUS.meta.tsv)")
    _flag(p, "diagnostics", help="output diagnostics (default CORPUS.diag.txt)")
    _flag(p, "clone_threshold", type=int, help="mention count above which an event is cloned")
    _flag(
        p,
        "source_filters",
        nargs="+",
        metavar="SUBSTRING",
        help="drop mentions whose identifier contains any of these",
    )
    _flag(p, "start", help="first day kept (YYYYMMDD)")
    _flag(p, "end", help="last day kept (YYYYMMDD)")
    _switch(p, "study_window", "restrict to 2018-06-19..2019-06-20")
    _flag(p, "seed", type=int, help="seed for same-day tie shuffling")

    p = sub.add_parser("train", help="corpus -> model bank")
    _flag(p, "corpus", help="corpus file")
    _flag(p, "bank", help="output bank file")
    _flag(p, "max_depth", type=int, help="maximum context length")
    _flag(p, "discount", type=float, help="Pitman-Yor discount")
    _flag(p, "strength", type=float, help="Pitman-Yor strength")

    p = sub.add_parser("mine", help="rank all norm hypotheses")
    _flag(p, "corpus", help="corpus file")
    _flag(p, "bank", help="bank file")
    _flag(p, "out_dir", help="directory for norms.csv and mine_report.json")
    _flag(p, "prior_log_odds", type=float, help="shared prior log odds")
    _flag(p, "workers", type=int, help="worker threads")
    _flag(p, "hypotheses", help="file with one norm per line")
    _flag(p, "progress_every", type=int, help="log every N hypotheses (0 = off)")
    _scoring_flags(p)

    p = sub.add_parser("evaluate", help="likelihood-ratio test of one norm")
    _flag(p, "corpus", help="corpus file")
    _flag(p, "bank", help="bank file trained on the corpus")
    _flag(p, "norm", help="norm, e.g. O(4) or O(4,4,-)")
    _flag(p, "out_dir", help="directory for lrt_report.txt and lrt_hist.csv")
    _flag(p, "n_synth", type=int, help="number of null corpora")
    _flag(p, "synth_size", type=int, help="sequences per null corpus (default: corpus size)")
    _flag(p, "seed", type=int, help="null corpus i uses seed + i")
    _switch(p, "frozen_params", "reuse the real-corpus parameters on null corpora")
    _flag(p, "bins", type=int, help="histogram bins (default: Sturges)")
    _flag(p, "workers", type=int, help="worker threads")
    _scoring_flags(p)

    p = sub.add_parser("synth", help="sample a corpus with a planted norm")
    _flag(p, "bank", help="bank to sample the background from")
    _flag(p, "norm", help="norm to plant")
    _flag(p, "p_comp", type=float, help="compliance probability")
    _flag(p, "p_sanc", type=float, help="sanction probability")
    _flag(p, "n_sequences", type=int, help="corpus size")
    _flag(p, "seed", type=int, help="random seed")
    _flag(p, "max_length", type=int, help="length cap per sequence")
    _flag(p, "corpus", help="output corpus file")
    _scoring_flags(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config")
    quiet = args.pop("quiet")
    logging.basicConfig(
        level=logging.WARNING if quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = PipelineConfig.load(config_path, args)
        logger.debug("config: %s", asdict(cfg))
        return COMMANDS[command](cfg)
    except (
        UsageError,
        ContractViolation,
        IngestError,
        BankFormatError,
        InfeasiblePlantError,
        OSError,
    ) as exc:
        print(f"normmine {command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InvariantViolation, SamplingError) as exc:
        print(f"normmine {command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
