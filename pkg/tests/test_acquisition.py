import numpy as np
import pytest

import tabal.acquisition as acq
from tabal.acquisition import (AcquisitionKind, BatchSelection, badge_embedding,
                               kmeans_pp, mnlp_score, select_badge, select_mnlp,
                               select_mnlp_plus, select_random)
from tabal.corpus_synth import GeneratorConfig, generate_corpus
from tabal.table_core import CellRef, PoolState, ValidationError
from tabal.talm import ModelConfig, TaggerModel, build_vocab

from conftest import labeled_corpus


def rng_of(seed):
    return np.random.Generator(np.random.PCG64(seed))


class TestMnlpScore:
    def test_certain_tokens(self):
        probs = np.array([[1.0, 0, 0, 0, 0], [0, 1.0, 0, 0, 0]])
        assert mnlp_score(probs) == 0.0

    def test_two_half_tokens(self):
        probs = np.array([[0.5, 0.5, 0, 0, 0], [0.5, 0.25, 0.25, 0, 0]])
        assert mnlp_score(probs) == pytest.approx(np.log(0.5), abs=1e-12)

    def test_three_token_mean(self):
        probs = np.array([[0.9, 0.1, 0, 0, 0],
                          [0.8, 0.2, 0, 0, 0],
                          [0.6, 0.4, 0, 0, 0]])
        expected = (np.log(0.9) + np.log(0.8) + np.log(0.6)) / 3
        assert mnlp_score(probs) == pytest.approx(expected, abs=1e-9)

    def test_uniform_is_minus_ln5(self):
        probs = np.full((4, 5), 0.2)
        assert mnlp_score(probs) == pytest.approx(-np.log(5), abs=1e-12)

    def test_never_positive(self):
        rng = rng_of(0)
        for _ in range(50):
            p = rng.dirichlet(np.ones(5), size=3)
            assert mnlp_score(p) <= 0.0

    def test_empty_cell_rejected(self):
        with pytest.raises(ValidationError):
            mnlp_score(np.zeros((0, 5)))


def fake_scores(monkeypatch, scores):
    monkeypatch.setattr(acq, "_scored_cells", lambda model, pool, tables: dict(scores))


class _Stub:
    pass


class TestSelectMnlp:
    def test_ascending_order(self, monkeypatch):
        refs = {CellRef("t", 0, 0): -0.1, CellRef("t", 0, 1): -0.9, CellRef("t", 0, 2): -0.5}
        fake_scores(monkeypatch, refs)
        batch = select_mnlp(_Stub(), _Stub(), [], budget=2)
        assert batch.refs() == [CellRef("t", 0, 1), CellRef("t", 0, 2)]

    def test_budget_exceeds_pool(self, monkeypatch):
        refs = {CellRef("t", 0, 0): -0.1, CellRef("t", 0, 1): -0.9}
        fake_scores(monkeypatch, refs)
        batch = select_mnlp(_Stub(), _Stub(), [], budget=10)
        assert len(batch) == 2

    def test_tie_broken_by_cell_order(self, monkeypatch):
        refs = {CellRef("t", 1, 0): -0.5, CellRef("t", 0, 0): -0.5}
        fake_scores(monkeypatch, refs)
        batch = select_mnlp(_Stub(), _Stub(), [], budget=1)
        assert batch.refs() == [CellRef("t", 0, 0)]


class TestSelectMnlpPlus:
    def test_worked_round_robin(self, monkeypatch):
        a, b = CellRef("T1", 0, 0), CellRef("T1", 0, 1)
        c = CellRef("T2", 0, 0)
        d, e = CellRef("T3", 0, 0), CellRef("T3", 0, 1)
        fake_scores(monkeypatch, {a: -0.9, b: -0.2, c: -0.8, d: -0.4, e: -0.3})
        batch = select_mnlp_plus(_Stub(), _Stub(), [], budget=4)
        assert batch.refs() == [a, c, d, b]

    def test_distinct_tables_when_budget_small(self, monkeypatch):
        scores = {CellRef(f"T{i}", r, 0): -0.1 * (i + r)
                  for i in range(5) for r in range(3)}
        fake_scores(monkeypatch, scores)
        batch = select_mnlp_plus(_Stub(), _Stub(), [], budget=5)
        tables = [r.table_id for r in batch.refs()]
        assert len(set(tables)) == 5

    def test_single_table_equals_mnlp(self, monkeypatch):
        scores = {CellRef("T", 0, j): -0.1 * (j + 1) for j in range(4)}
        fake_scores(monkeypatch, scores)
        plus = select_mnlp_plus(_Stub(), _Stub(), [], budget=3)
        plain = select_mnlp(_Stub(), _Stub(), [], budget=3)
        assert plus.refs() == plain.refs()

    def test_corpus_order_variant(self, monkeypatch):
        a = CellRef("T1", 0, 0)
        c = CellRef("T2", 0, 0)
        fake_scores(monkeypatch, {a: -0.1, c: -0.9})

        class T:
            def __init__(self, tid):
                self.table_id = tid

        batch = select_mnlp_plus(_Stub(), _Stub(), [T("T1"), T("T2")], budget=2,
                                 corpus_order=True)
        assert batch.refs() == [a, c]  # corpus order, not score order


class TestKmeansPP:
    def test_k_equals_n_selects_all(self):
        pts = np.array([[0.0], [1.0], [2.0], [5.0]])
        idx = kmeans_pp(pts, 4, rng_of(0))
        assert sorted(idx) == [0, 1, 2, 3]

    def test_duplicate_of_center_never_chosen_while_distinct_remain(self):
        pts = np.array([[0.0, 0.0], [0.0, 0.0], [10.0, 0.0]])
        for seed in range(50):
            idx = kmeans_pp(pts, 2, rng_of(seed))
            if idx[0] in (0, 1):
                assert idx[1] == 2

    def test_d2_probability_law(self):
        # points 0, 1, 10 on a line; conditioned on first center 0,
        # P(second = 10) = 100/101
        pts = np.array([[0.0], [1.0], [10.0]])
        hits = trials = 0
        for seed in range(20000):
            idx = kmeans_pp(pts, 2, rng_of(seed))
            if idx[0] == 0:
                trials += 1
                hits += idx[1] == 2
        assert trials > 5000
        assert hits / trials == pytest.approx(100 / 101, abs=0.02)

    def test_never_repeats_an_index(self):
        rng = rng_of(1)
        pts = rng.normal(size=(20, 3))
        idx = kmeans_pp(pts, 20, rng_of(2))
        assert len(set(idx)) == 20

    def test_all_duplicates_filled_uniformly(self):
        pts = np.zeros((5, 2))
        idx = kmeans_pp(pts, 3, rng_of(3))
        assert len(set(idx)) == 3

    def test_k_too_large_rejected(self):
        with pytest.raises(ValidationError):
            kmeans_pp(np.zeros((2, 2)), 3, rng_of(0))


@pytest.fixture(scope="module")
def scoring_setup():
    corpus = generate_corpus(GeneratorConfig(n_tables=4, rng_seed=9))
    vocab = build_vocab(corpus)
    model = TaggerModel(ModelConfig(embed_dim=8, layers=1, heads=2, ffn_dim=8),
                        vocab, seed=0)
    return corpus, model


class TestSelectBadge:
    def test_budget_covers_pool(self, scoring_setup):
        corpus, model = scoring_setup
        pool = PoolState(corpus)
        n = len(pool.unlabeled_nonempty())
        batch = select_badge(model, pool, corpus.tables, n + 10, rng_of(0))
        assert len(batch) == n

    def test_deterministic(self, scoring_setup):
        corpus, model = scoring_setup
        pool = PoolState(corpus)
        b1 = select_badge(model, pool, corpus.tables, 10, rng_of(5))
        b2 = select_badge(model, pool, corpus.tables, 10, rng_of(5))
        assert b1.refs() == b2.refs()

    def test_zero_embeddings_uniform_fallback(self, scoring_setup):
        corpus, model = scoring_setup
        model = TaggerModel(model.config, model.vocab,
                            params={k: v.copy() for k, v in model.params.items()})
        model.params["w_out"] = np.zeros_like(model.params["w_out"])
        model.params["b_out"] = np.array([500.0, 0, 0, 0, 0])
        pool = PoolState(corpus)
        batch = select_badge(model, pool, corpus.tables, 5, rng_of(1))
        assert len(batch) == 5
        assert len(set(batch.refs())) == 5

    def test_mean_of_token_gradients(self, scoring_setup):
        corpus, model = scoring_setup
        table = corpus.tables[0]
        ref = next(r for r in table.cell_refs() if len(table.cell(r)) >= 2)
        grads = model.last_layer_token_gradients(table, ref)
        np.testing.assert_allclose(badge_embedding(model, table, ref),
                                   grads.mean(axis=0), rtol=1e-12)


class TestSelectRandom:
    def test_uniform_frequencies(self):
        corpus = labeled_corpus([("a", ("O",)), ("b", ("O",)), ("c", ("O",)),
                                 ("d", ("O",))], width=4)
        # ignore the header cells: restrict the pool to the four body cells
        pool = PoolState(corpus)
        for ref in list(pool.unlabeled):
            if ref.row is None:
                pool.reveal(ref, corpus.gold[ref])
        counts = {}
        for seed in range(10000):
            batch = select_random(pool, 1, rng_of(seed))
            counts[batch.refs()[0]] = counts.get(batch.refs()[0], 0) + 1
        for ref, count in counts.items():
            assert abs(count / 10000 - 0.25) < 0.02

    def test_same_seed_same_batch(self, scoring_setup):
        corpus, _ = scoring_setup
        pool = PoolState(corpus)
        assert (select_random(pool, 7, rng_of(3)).refs()
                == select_random(pool, 7, rng_of(3)).refs())

    def test_all_selected_when_budget_large(self, scoring_setup):
        corpus, _ = scoring_setup
        pool = PoolState(corpus)
        n = len(pool.unlabeled_nonempty())
        assert len(select_random(pool, n + 5, rng_of(0))) == n


class TestBatchInvariants:
    @pytest.mark.parametrize("kind", list(AcquisitionKind))
    def test_refs_distinct_unlabeled_nonempty(self, scoring_setup, kind):
        corpus, model = scoring_setup
        pool = PoolState(corpus)
        # label a few cells first
        for ref in pool.unlabeled_nonempty()[:5]:
            pool.reveal(ref, corpus.gold[ref])
        batch = acq.select_batch(kind, model, pool, corpus.tables, 12, rng_of(2))
        refs = batch.refs()
        assert len(refs) == len(set(refs)) == min(12, len(pool.unlabeled_nonempty()))
        for ref in refs:
            assert ref in pool.unlabeled
            assert len(corpus.cell(ref)) > 0

    def test_json_round_trip(self, scoring_setup):
        corpus, model = scoring_setup
        pool = PoolState(corpus)
        batch = acq.select_batch(AcquisitionKind.MNLP, model, pool,
                                 corpus.tables, 4, rng_of(0), seed=17)
        restored = BatchSelection.from_json(batch.to_json())
        assert restored.refs() == batch.refs()
        assert restored.kind == batch.kind and restored.seed == 17
