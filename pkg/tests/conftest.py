import logging

import numpy as np
import pytest

from tabal.corpus_synth import GeneratorConfig, generate_corpus
from tabal.table_core import Cell, CellRef, Corpus, LabelClass, Table
from tabal.talm import ModelConfig, TaggerModel, build_vocab, display_tokens

logging.getLogger("tabal").setLevel(logging.ERROR)


def make_cell(text: str) -> Cell:
    return Cell(text=text, tokens=display_tokens(text))


def grid_table(table_id, header_texts, body_texts):
    """Table from raw strings; body_texts is a list of rows."""
    return Table(
        table_id=table_id,
        header=tuple(make_cell(t) for t in header_texts),
        body=tuple(tuple(make_cell(t) for t in row) for row in body_texts),
    )


def labeled_corpus(cells, width=4, table_id="t0"):
    """Corpus of one table built from (text, per-token labels) cells, padded
    to a rectangle with empty cells."""
    while len(cells) % width:
        cells = cells + [("", ())]
    header = [("h", (LabelClass.O,))] * width
    rows = [cells[i:i + width] for i in range(0, len(cells), width)]
    table = grid_table(table_id, [t for t, _ in header], [[t for t, _ in row] for row in rows])
    gold = {}
    for j, (_, tags) in enumerate(header):
        gold[CellRef(table_id, None, j)] = tuple(tags)
    for i, row in enumerate(rows):
        for j, (_, tags) in enumerate(row):
            gold[CellRef(table_id, i, j)] = tuple(tags)
    return Corpus(tables=[table], gold=gold)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(GeneratorConfig(n_tables=6, rng_seed=42))


@pytest.fixture(scope="session")
def small_model(small_corpus):
    vocab = build_vocab(small_corpus)
    return TaggerModel(ModelConfig(), vocab, seed=1)


@pytest.fixture
def tiny_config():
    return ModelConfig(embed_dim=8, layers=2, heads=2, ffn_dim=8, max_tokens_per_cell=4)


def random_tiny_table(rng, table_id="rt", max_rows=3, max_cols=3, max_tokens=4):
    words = ["pump", "3.5", "bar", "P-101A", "flow", "temp", "x", "42", "m3/h", "-"]
    n = int(rng.integers(1, max_rows + 1))
    m = int(rng.integers(1, max_cols + 1))

    def text():
        k = int(rng.integers(1, max_tokens + 1))
        return " ".join(str(rng.choice(words)) for _ in range(k))

    return grid_table(table_id, [text() for _ in range(m)],
                      [[text() for _ in range(m)] for _ in range(n)])


def random_supervision(rng, table):
    """Random gold tags for every cell of a table."""
    sup = {}
    for ref in table.cell_refs():
        cell = table.cell(ref)
        if len(cell):
            sup[ref] = tuple(LabelClass(int(rng.integers(0, 5))) for _ in cell.tokens)
    return sup
