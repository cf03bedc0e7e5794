"""GDELT 2.0 events/mentions ingest: filtering, mutual-relevance grouping and
bilateral sequence emission."""

from __future__ import annotations

import gzip
import io
import logging
import random
from collections import Counter, defaultdict
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field, fields
from datetime import date, datetime
from pathlib import Path

from .symbols import B, DirectedEvent, EventSequence, F, format_sequence, parse_sequence
from .unionfind import UnionFind

logger = logging.getLogger(__name__)

# GDELT 2.0 events table, zero-based columns
EV_ID = 0
EV_DAY = 1
EV_ACTOR1_COUNTRY = 7
EV_ACTOR1_TYPE = 12
EV_ACTOR2_COUNTRY = 17
EV_ACTOR2_TYPE = 22
EV_CODE = 26
EVENTS_COLUMNS = 61

# GDELT 2.0 mentions table
MEN_ID = 0
MEN_IDENTIFIER = 5
MENTIONS_COLUMNS = 16

GOVERNMENT = "GOV"
DEFAULT_CLONE_THRESHOLD = 250
DEFAULT_SOURCE_FILTERS = ("BBC",)
STUDY_WINDOW = (date(2018, 6, 19), date(2019, 6, 20))


class IngestError(RuntimeError):
    pass


@dataclass
class Diagnostics:
    event_rows: int = 0
    event_rows_skipped: int = 0
    events_retained: int = 0
    mention_rows: int = 0
    mention_rows_skipped: int = 0
    mentions_unknown_event: int = 0
    mentions_filtered: int = 0
    mentions_duplicate: int = 0
    events_cloned: int = 0
    clones_created: int = 0
    groups: int = 0
    sequences_emitted: int = 0

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


@dataclass(frozen=True)
class RawEvent:
    global_event_id: int
    day: date
    actor1_country: str | None
    actor2_country: str | None
    actor1_type: str | None
    actor2_type: str | None
    root_code: int


@dataclass(frozen=True)
class MentionRecord:
    global_event_id: int
    mention_identifier: str


@dataclass(frozen=True)
class RelevanceGroup:
    # keys are (global_event_id, clone ordinal); ordinal 0 marks an uncloned event
    event_ids: tuple[tuple[int, int], ...]


def _opt(value: str) -> str | None:
    value = value.strip()
    return value or None


def root_code(event_code: str) -> int:
    """Leading two digits of a CAMEO event code, e.g. ``"111" -> 11``."""
    event_code = event_code.strip()
    if len(event_code) < 2 or not event_code[:2].isdigit():
        raise ValueError(f"bad event code {event_code!r}")
    code = int(event_code[:2])
    if not 1 <= code <= 20:
        raise ValueError(f"root code {code} outside 1..20")
    return code


def parse_day(text: str) -> date:
    return datetime.strptime(text.strip(), "%Y%m%d").date()


def iter_events(lines: Iterable[str], diagnostics: Diagnostics | None = None) -> Iterator[RawEvent]:
    diag = diagnostics if diagnostics is not None else Diagnostics()
    for line in lines:
        line = line.rstrip("\r\n")
        if not line:
            continue
        diag.event_rows += 1
        cols = line.split("\t")
        try:
            if len(cols) <= EV_CODE:
                raise ValueError("too few columns")
            yield RawEvent(
                global_event_id=int(cols[EV_ID]),
                day=parse_day(cols[EV_DAY]),
                actor1_country=_opt(cols[EV_ACTOR1_COUNTRY]),
                actor2_country=_opt(cols[EV_ACTOR2_COUNTRY]),
                actor1_type=_opt(cols[EV_ACTOR1_TYPE]),
                actor2_type=_opt(cols[EV_ACTOR2_TYPE]),
                root_code=root_code(cols[EV_CODE]),
            )
        except ValueError:
            diag.event_rows_skipped += 1


def parse_events(stream, diagnostics: Diagnostics | None = None) -> list[RawEvent]:
    """Parse tab-separated GDELT 2.0 event rows, skipping (and counting) bad rows."""
    return list(iter_events(stream, diagnostics))


def iter_mentions(lines: Iterable[str], diagnostics: Diagnostics | None = None) -> Iterator[MentionRecord]:
    diag = diagnostics if diagnostics is not None else Diagnostics()
    for line in lines:
        line = line.rstrip("\r\n")
        if not line:
            continue
        diag.mention_rows += 1
        cols = line.split("\t")
        try:
            if len(cols) <= MEN_IDENTIFIER:
                raise ValueError("too few columns")
            ident = cols[MEN_IDENTIFIER].strip()
            if not ident:
                raise ValueError("empty mention identifier")
            yield MentionRecord(int(cols[MEN_ID]), ident)
        except ValueError:
            diag.mention_rows_skipped += 1


def parse_mentions(stream, diagnostics: Diagnostics | None = None) -> list[MentionRecord]:
    return list(iter_mentions(stream, diagnostics))


def filter_events(
    events: Iterable[RawEvent], start: date | None = None, end: date | None = None
) -> list[RawEvent]:
    """Keep bilateral government-to-government events, optionally inside a date window."""
    out = []
    for e in events:
        if not e.actor1_country or not e.actor2_country:
            continue
        if e.actor1_country == e.actor2_country:
            continue
        if e.actor1_type != GOVERNMENT or e.actor2_type != GOVERNMENT:
            continue
        if start is not None and e.day < start:
            continue
        if end is not None and e.day > end:
            continue
        out.append(e)
    return out


def build_relevance_groups(
    events: Sequence[RawEvent],
    mentions: Iterable[MentionRecord],
    clone_threshold: int = DEFAULT_CLONE_THRESHOLD,
    source_filters: Sequence[str] = DEFAULT_SOURCE_FILTERS,
    diagnostics: Diagnostics | None = None,
) -> list[RelevanceGroup]:
    """Partition events into connected components of the co-mention graph.

    Source filters are applied before counting mentions against
    ``clone_threshold``; an event with more mentions than the threshold is
    replaced by one clone per mention.
    """
    if clone_threshold < 1:
        raise ValueError("clone_threshold must be >= 1")
    diag = diagnostics if diagnostics is not None else Diagnostics()
    known = {e.global_event_id for e in events}
    seen = set()
    by_event: dict[int, list[str]] = defaultdict(list)
    for m in mentions:
        if m.global_event_id not in known:
            diag.mentions_unknown_event += 1
            continue
        if any(f in m.mention_identifier for f in source_filters):
            diag.mentions_filtered += 1
            continue
        pair = (m.global_event_id, m.mention_identifier)
        if pair in seen:
            diag.mentions_duplicate += 1
            continue
        seen.add(pair)
        by_event[m.global_event_id].append(m.mention_identifier)

    uf = UnionFind()
    docs: dict[str, list] = defaultdict(list)
    for gid in sorted(known):
        idents = sorted(by_event.get(gid, ()))
        if len(idents) > clone_threshold:
            diag.events_cloned += 1
            diag.clones_created += len(idents)
            for ordinal, ident in enumerate(idents, start=1):
                key = (gid, ordinal)
                uf.add(key)
                docs[ident].append(key)
        else:
            key = (gid, 0)
            uf.add(key)
            for ident in idents:
                docs[ident].append(key)
    for keys in docs.values():
        first = keys[0]
        for other in keys[1:]:
            uf.union(first, other)
    groups = [RelevanceGroup(tuple(c)) for c in uf.components()]
    diag.groups = len(groups)
    return groups


def _pair(e: RawEvent) -> tuple[str, str]:
    return tuple(sorted((e.actor1_country, e.actor2_country)))


def orient(events: Sequence[RawEvent], orientation: tuple[str, str] | None = None) -> list[DirectedEvent]:
    """Directed events relative to ``orientation`` (default: the first event's)."""
    if not events:
        return []
    if orientation is None:
        orientation = (events[0].actor1_country, events[0].actor2_country)
    return [
        DirectedEvent(F if (e.actor1_country, e.actor2_country) == orientation else B, e.root_code)
        for e in events
    ]


def event_key_text(key: tuple[int, int]) -> str:
    gid, ordinal = key
    return str(gid) if ordinal == 0 else f"{gid}#{ordinal}"


def build_sequences(
    groups: Iterable[RelevanceGroup],
    events: dict[int, RawEvent],
    rng_seed: int = 0,
    diagnostics: Diagnostics | None = None,
) -> list[EventSequence]:
    """Split each group by country pair and order each part by day.

    Same-day ties are shuffled with a generator seeded from ``rng_seed`` and the
    sub-partition's identity, so output is reproducible and local edits do not
    reshuffle unrelated sequences.
    """
    diag = diagnostics if diagnostics is not None else Diagnostics()
    out = []
    for group in groups:
        parts: dict[tuple[str, str], list] = defaultdict(list)
        for key in group.event_ids:
            parts[_pair(events[key[0]])].append(key)
        for pair in sorted(parts):
            keys = sorted(parts[pair])
            if not keys:
                continue
            rng = random.Random(f"{rng_seed}:{pair[0]}:{pair[1]}:{keys[0][0]}:{keys[0][1]}")
            tagged = [(events[k[0]].day, rng.random(), k) for k in keys]
            tagged.sort()
            ordered = [events[k[0]] for _, _, k in tagged]
            out.append(
                EventSequence(
                    id=str(len(out) + 1),
                    country_pair=pair,
                    events=orient(ordered),
                    terminated=True,
                    provenance=[event_key_text(k) for _, _, k in tagged],
                    days=[d.strftime("%Y%m%d") for d, _, _ in tagged],
                )
            )
    diag.sequences_emitted = len(out)
    return out


@dataclass
class CorpusStats:
    count: int
    max_length: int
    length_histogram: dict[int, int] = field(default_factory=dict)
    symbol_frequencies: dict[str, int] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"sequences = {self.count}", f"max_length = {self.max_length}"]
        lines += [f"length[{k}] = {v}" for k, v in sorted(self.length_histogram.items())]
        lines += [f"symbol[{k}] = {v}" for k, v in sorted(self.symbol_frequencies.items())]
        return "\n".join(lines) + "\n"


def corpus_stats(corpus: Iterable) -> CorpusStats:
    from .symbols import token
    from .validation import check_sequence

    lengths = Counter()
    symbols = Counter()
    n = 0
    for seq in corpus:
        syms = check_sequence(seq)
        n += 1
        lengths[len(syms) - 1] += 1
        symbols.update(token(s) for s in syms)
    return CorpusStats(
        count=n,
        max_length=max(lengths, default=0),
        length_histogram=dict(lengths),
        symbol_frequencies=dict(symbols),
    )


# --- files -----------------------------------------------------------------


def open_text(path) -> io.TextIOBase:
    path = Path(path)
    try:
        if path.suffix == ".gz":
            return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", errors="replace")
        return open(path, encoding="utf-8", errors="replace")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc


def list_inputs(path) -> list[Path]:
    """A file, or every regular file in a directory, in lexicographic name order."""
    path = Path(path)
    if not path.exists():
        raise IngestError(f"input path {path} does not exist")
    if path.is_file():
        return [path]
    return sorted((p for p in path.iterdir() if p.is_file()), key=lambda p: p.name)


def _stream(paths: Iterable[Path]) -> Iterator[str]:
    for p in paths:
        with open_text(p) as fh:
            try:
                yield from fh
            except OSError as exc:
                raise IngestError(f"cannot read {p}: {exc}") from exc


def ingest(
    events_path,
    mentions_path,
    clone_threshold: int = DEFAULT_CLONE_THRESHOLD,
    source_filters: Sequence[str] = DEFAULT_SOURCE_FILTERS,
    start: date | None = None,
    end: date | None = None,
    rng_seed: int = 0,
) -> tuple[list[EventSequence], Diagnostics]:
    """Run the full ingest over event and mention files.

    Only retained events and the mentions that reference them are held in
    memory; raw rows are streamed.
    """
    diag = Diagnostics()
    retained = filter_events(iter_events(_stream(list_inputs(events_path)), diag), start, end)
    by_id: dict[int, RawEvent] = {}
    for e in retained:
        by_id.setdefault(e.global_event_id, e)
    diag.events_retained = len(by_id)
    events = list(by_id.values())
    mentions = iter_mentions(_stream(list_inputs(mentions_path)), diag)
    groups = build_relevance_groups(events, mentions, clone_threshold, source_filters, diag)
    sequences = build_sequences(groups, by_id, rng_seed, diag)
    return sequences, diag


def write_corpus(sequences: Iterable[EventSequence], corpus_path, meta_path=None) -> None:
    sequences = list(sequences)
    with open(corpus_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(format_sequence(s.symbols()) + "\n" for s in sequences)
    if meta_path is not None:
        with open(meta_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(
                "\t".join([s.id, "-".join(s.country_pair), ",".join(s.provenance), ",".join(s.days)]) + "\n"
                for s in sequences
            )


def read_corpus(path) -> list[EventSequence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                symbols = parse_sequence(line)
                out.append(EventSequence.from_symbols(symbols, id=str(i)))
            except ValueError as exc:
                raise IngestError(f"{path}:{i}: {exc}") from exc
    return out
