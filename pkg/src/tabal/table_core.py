"""Canonical data model: tables, cells, labels, spans and the labeled/unlabeled pool."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Iterator, Mapping, Optional, Sequence


class ValidationError(ValueError):
    """Raised when a table, span or pool invariant is violated."""


class LabelClass(IntEnum):
    """Per-token IO label: outside, or inside one of the four entity classes."""

    O = 0
    TAG = 1
    EQ = 2
    QUANT = 3
    UOM = 4


ENTITY_CLASSES = (LabelClass.TAG, LabelClass.EQ, LabelClass.QUANT, LabelClass.UOM)

#: A per-token label sequence for one cell (length == token count).
TagSequence = tuple

_LABEL_NAMES = {"TAG": LabelClass.TAG, "EQ": LabelClass.EQ, "QUANT": LabelClass.QUANT,
                "UoM": LabelClass.UOM, "UOM": LabelClass.UOM, "O": LabelClass.O}
_LABEL_WIRE = {LabelClass.TAG: "TAG", LabelClass.EQ: "EQ",
               LabelClass.QUANT: "QUANT", LabelClass.UOM: "UoM"}


def label_from_name(name: str) -> LabelClass:
    try:
        return _LABEL_NAMES[name]
    except KeyError:
        raise ValidationError(f"unknown label class {name!r}") from None


def label_wire_name(cls: LabelClass) -> str:
    return _LABEL_WIRE[cls]


@dataclass(frozen=True)
class Cell:
    """A cell: raw text plus its display tokens. Empty cells (no tokens) are legal."""

    text: str
    tokens: tuple = ()

    def __post_init__(self):
        for tok in self.tokens:
            if any(ch.isspace() for ch in tok):
                raise ValidationError(f"token {tok!r} contains whitespace")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Table:
    """A single-header grid: m header cells above an n x m body."""

    table_id: str
    header: tuple
    body: tuple  # tuple of rows, each a tuple of m Cells

    def __post_init__(self):
        m = len(self.header)
        if m < 1:
            raise ValidationError(f"table {self.table_id}: needs at least one column")
        if len(self.body) < 1:
            raise ValidationError(f"table {self.table_id}: needs at least one body row")
        for i, row in enumerate(self.body):
            if len(row) != m:
                raise ValidationError(
                    f"table {self.table_id}: row {i} has {len(row)} cells, expected {m}")

    @property
    def n_rows(self) -> int:
        return len(self.body)

    @property
    def n_cols(self) -> int:
        return len(self.header)

    def cell(self, ref: "CellRef") -> Cell:
        if ref.table_id != self.table_id:
            raise ValidationError(f"ref {ref} does not belong to table {self.table_id}")
        if ref.row is None:
            return self.header[ref.col]
        return self.body[ref.row][ref.col]

    def cell_refs(self) -> Iterator["CellRef"]:
        """All refs of this table in canonical order (header first, then row-major)."""
        for j in range(self.n_cols):
            yield CellRef(self.table_id, None, j)
        for i in range(self.n_rows):
            for j in range(self.n_cols):
                yield CellRef(self.table_id, i, j)


@dataclass(frozen=True, order=False)
class CellRef:
    """Address of one cell. ``row is None`` addresses the header cell of ``col``."""

    table_id: str
    row: Optional[int]
    col: int

    def sort_key(self):
        # headers sort before body rows of the same table
        return (self.table_id, 0 if self.row is None else 1, self.row or 0, self.col)

    def __lt__(self, other: "CellRef") -> bool:
        return self.sort_key() < other.sort_key()

    def validate_for(self, table: Table) -> None:
        if self.table_id != table.table_id:
            raise ValidationError(f"{self} does not reference table {table.table_id}")
        if not (0 <= self.col < table.n_cols):
            raise ValidationError(f"{self}: column out of range")
        if self.row is not None and not (0 <= self.row < table.n_rows):
            raise ValidationError(f"{self}: row out of range")

    def to_json(self) -> dict:
        return {"table_id": self.table_id,
                "row": "header" if self.row is None else self.row,
                "col": self.col}

    @classmethod
    def from_json(cls, obj: Mapping) -> "CellRef":
        row = obj["row"]
        return cls(obj["table_id"], None if row == "header" else int(row), int(obj["col"]))


@dataclass(frozen=True)
class Span:
    """Half-open token range [start, end) carrying one entity class (never O)."""

    start: int
    end: int
    label: LabelClass

    def __post_init__(self):
        if self.label == LabelClass.O:
            raise ValidationError("spans cannot carry the O class")
        if not (0 <= self.start < self.end):
            raise ValidationError(f"bad span bounds [{self.start}, {self.end})")


def spans_to_io(cell: Cell, spans: Iterable[Span]) -> TagSequence:
    """Convert non-overlapping spans over a cell into a per-token IO tag sequence."""
    labels = [LabelClass.O] * len(cell)
    for span in sorted(spans, key=lambda s: s.start):
        if span.end > len(cell):
            raise ValidationError(
                f"span [{span.start}, {span.end}) out of range for {len(cell)}-token cell")
        for z in range(span.start, span.end):
            if labels[z] != LabelClass.O:
                raise ValidationError(f"overlapping spans at token {z}")
            labels[z] = span.label
    return tuple(labels)


def io_to_spans(tags: Sequence[LabelClass]) -> frozenset:
    """Maximal runs of one non-O class become spans; inverse of spans_to_io."""
    spans = []
    start = None
    current = LabelClass.O
    for z, label in enumerate(tags):
        if label != current:
            if current != LabelClass.O:
                spans.append(Span(start, z, current))
            start, current = z, label
    if current != LabelClass.O:
        spans.append(Span(start, len(tags), current))
    return frozenset(spans)


@dataclass
class Corpus:
    """Tables plus (possibly partial) gold tag sequences keyed by cell ref."""

    tables: list
    gold: dict = field(default_factory=dict)

    def __post_init__(self):
        self._by_id = {t.table_id: t for t in self.tables}
        if len(self._by_id) != len(self.tables):
            raise ValidationError("duplicate table_id in corpus")
        for ref, tags in self.gold.items():
            cell = self.cell(ref)
            if len(tags) != len(cell):
                raise ValidationError(
                    f"{ref}: gold length {len(tags)} != cell token count {len(cell)}")

    def table(self, table_id: str) -> Table:
        try:
            return self._by_id[table_id]
        except KeyError:
            raise ValidationError(f"unknown table {table_id!r}") from None

    def cell(self, ref: CellRef) -> Cell:
        table = self.table(ref.table_id)
        ref.validate_for(table)
        return table.cell(ref)

    def all_cell_refs(self) -> list:
        refs = []
        for table in self.tables:
            refs.extend(table.cell_refs())
        return refs


@dataclass
class CorpusStats:
    n_tables: int
    n_cells: int
    n_header_cells: int
    n_body_cells: int
    n_span_labels: int
    labels_per_cell: float
    o_only_cell_fraction: float
    per_class_spans: dict

    def to_json(self) -> dict:
        return {
            "n_tables": self.n_tables,
            "n_cells": self.n_cells,
            "n_header_cells": self.n_header_cells,
            "n_body_cells": self.n_body_cells,
            "n_span_labels": self.n_span_labels,
            "labels_per_cell": self.labels_per_cell,
            "o_only_cell_fraction": self.o_only_cell_fraction,
            "per_class_spans": {label_wire_name(k): v for k, v in self.per_class_spans.items()},
        }


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Count tables, cells and span labels; header and body cells reported separately."""
    n_header = sum(t.n_cols for t in corpus.tables)
    n_body = sum(t.n_rows * t.n_cols for t in corpus.tables)
    n_cells = n_header + n_body
    per_class = {cls: 0 for cls in ENTITY_CLASSES}
    n_spans = 0
    labeled_cells = 0
    for tags in corpus.gold.values():
        spans = io_to_spans(tags)
        if spans:
            labeled_cells += 1
        n_spans += len(spans)
        for span in spans:
            per_class[span.label] += 1
    return CorpusStats(
        n_tables=len(corpus.tables),
        n_cells=n_cells,
        n_header_cells=n_header,
        n_body_cells=n_body,
        n_span_labels=n_spans,
        labels_per_cell=n_spans / n_cells if n_cells else 0.0,
        o_only_cell_fraction=1.0 - labeled_cells / n_cells if n_cells else 1.0,
        per_class_spans=per_class,
    )


class PoolState:
    """Partition of a corpus's cells into labeled (with tags) and unlabeled.

    Cells only ever move unlabeled -> labeled; mutation is serialized by the
    owning experiment or session.
    """

    def __init__(self, corpus: Corpus):
        self._corpus = corpus
        self.labeled: dict = {}
        self.unlabeled: set = set(corpus.all_cell_refs())

    def reveal(self, ref: CellRef, tags: TagSequence) -> None:
        if ref not in self.unlabeled:
            raise ValidationError(f"{ref} is not in the unlabeled pool")
        cell = self._corpus.cell(ref)
        if len(tags) != len(cell):
            raise ValidationError(
                f"{ref}: tag length {len(tags)} != cell token count {len(cell)}")
        self.unlabeled.discard(ref)
        self.labeled[ref] = tuple(tags)

    def reveal_from_gold(self, refs: Iterable[CellRef]) -> None:
        for ref in refs:
            self.reveal(ref, self._corpus.gold[ref])

    def unlabeled_nonempty(self) -> list:
        """Selectable cells: unlabeled and at least one token, in canonical order."""
        refs = [r for r in self.unlabeled if len(self._corpus.cell(r)) > 0]
        refs.sort(key=CellRef.sort_key)
        return refs

    def check_partition(self) -> None:
        all_refs = set(self._corpus.all_cell_refs())
        labeled = set(self.labeled)
        if labeled & self.unlabeled:
            raise ValidationError("labeled and unlabeled pools overlap")
        if labeled | self.unlabeled != all_refs:
            raise ValidationError("pool does not cover the corpus cell set")
