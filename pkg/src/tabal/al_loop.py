"""Iterative active-learning protocol: stratified seeding, acquire-label-retrain
cycles, evaluation and multi-seed aggregation."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .acquisition import AcquisitionKind, BatchSelection, select_batch
from .metrics import evaluate_micro_f1, micro_f1_from_labels
from .table_core import (ENTITY_CLASSES, CellRef, Corpus, LabelClass, PoolState,
                         ValidationError, io_to_spans, label_wire_name)
from .talm import ModelConfig, TaggerModel, TrainConfig, build_vocab, fit


@dataclass(frozen=True)
class ExperimentConfig:
    seed_size: int = 100
    batch_budget: int = 50
    n_iterations: int = 10
    acquisition: AcquisitionKind = AcquisitionKind.RAND
    n_repeats: int = 5
    base_seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    validation_fraction: float = 0.25
    mnlp_plus_corpus_order: bool = False

    def __post_init__(self):
        if self.n_repeats < 1:
            raise ValidationError("n_repeats must be >= 1")
        if self.seed_size < 1 or self.batch_budget < 1 or self.n_iterations < 0:
            raise ValidationError("seed_size/batch_budget/n_iterations out of range")

    def to_json(self) -> dict:
        from dataclasses import asdict
        obj = asdict(self)
        obj["acquisition"] = self.acquisition.value
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        if "acquisition" in obj:
            obj["acquisition"] = AcquisitionKind.parse(obj["acquisition"])
        if "model" in obj:
            obj["model"] = ModelConfig(**obj["model"])
        if "train" in obj:
            obj["train"] = TrainConfig(**obj["train"])
        return cls(**obj)


@dataclass
class IterationRecord:
    iteration: int
    cumulative_labels: int
    micro_f1: Optional[float]
    per_class_f1: dict
    batch_tables: int         # distinct tables in this iteration's batch (0 at seed)
    eligible_tables: int      # tables that still had selectable cells
    seconds: float

    def to_json(self) -> dict:
        return {
            "iteration": self.iteration,
            "cumulative_labels": self.cumulative_labels,
            "micro_f1": self.micro_f1,
            "per_class_f1": {label_wire_name(k): v for k, v in self.per_class_f1.items()},
            "batch_tables": self.batch_tables,
            "eligible_tables": self.eligible_tables,
            "seconds": self.seconds,
        }


@dataclass
class LearningCurve:
    acquisition: AcquisitionKind
    repeats: list  # list of per-repeat lists of IterationRecord
    truncated: bool = False

    def to_json(self) -> dict:
        return {"acquisition": self.acquisition.value,
                "truncated": self.truncated,
                "repeats": [[r.to_json() for r in rep] for rep in self.repeats]}


def _derive_seed(*key) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1)[0])


def _rng(*key) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(key))))


def stratified_seed(corpus: Corpus, seed_size: int, rng: np.random.Generator) -> list:
    """Seed cells stratified by entity-class span share, rest filled with
    O-only cells to mirror the corpus's O-only fraction."""
    cells = [r for r in sorted(corpus.all_cell_refs(), key=CellRef.sort_key)
             if len(corpus.cell(r)) > 0]
    if seed_size > len(cells):
        raise ValidationError(f"seed_size {seed_size} exceeds {len(cells)} non-empty cells")
    classes_of: Dict[CellRef, frozenset] = {}
    span_counts = {cls: 0 for cls in ENTITY_CLASSES}
    for ref in cells:
        tags = corpus.gold.get(ref, ())
        spans = io_to_spans(tags)
        classes_of[ref] = frozenset(s.label for s in spans)
        for span in spans:
            span_counts[span.label] += 1
    present = [cls for cls in ENTITY_CLASSES if span_counts[cls] > 0]
    if seed_size < len(present):
        raise ValidationError(
            f"seed_size {seed_size} cannot cover the {len(present)} entity classes present")

    o_only = [r for r in cells if not classes_of[r]]
    o_fraction = len(o_only) / len(cells)
    o_quota = int(round(seed_size * o_fraction))
    entity_quota = seed_size - o_quota
    entity_quota = max(entity_quota, len(present))
    o_quota = seed_size - entity_quota

    total_spans = sum(span_counts[c] for c in present)
    quotas = {}
    if present and entity_quota > 0:
        raw = {c: entity_quota * span_counts[c] / total_spans for c in present}
        quotas = {c: int(math.floor(raw[c])) for c in present}
        leftovers = sorted(present, key=lambda c: (raw[c] - quotas[c], -int(c)), reverse=True)
        for c in leftovers[: entity_quota - sum(quotas.values())]:
            quotas[c] += 1
        # every present class gets at least one seed cell
        for c in present:
            if quotas[c] == 0:
                donor = max(quotas, key=quotas.get)
                quotas[donor] -= 1
                quotas[c] = 1

    chosen: List[CellRef] = []
    chosen_set = set()
    for cls in present:
        candidates = [r for r in cells if cls in classes_of[r] and r not in chosen_set]
        take = min(quotas.get(cls, 0), len(candidates))
        idx = rng.choice(len(candidates), size=take, replace=False)
        for i in sorted(int(x) for x in idx):
            chosen.append(candidates[i])
            chosen_set.add(candidates[i])
    # O-only quota, then any remaining cells to reach seed_size
    for pool_cells in (o_only, cells):
        if len(chosen) >= seed_size:
            break
        candidates = [r for r in pool_cells if r not in chosen_set]
        take = min(seed_size - len(chosen), len(candidates))
        idx = rng.choice(len(candidates), size=take, replace=False)
        for i in sorted(int(x) for x in idx):
            chosen.append(candidates[i])
            chosen_set.add(candidates[i])
    return chosen


def micro_f1(pred_labels: Sequence[LabelClass], gold_labels: Sequence[LabelClass]):
    return micro_f1_from_labels(pred_labels, gold_labels)


def split_validation(test_corpus: Corpus, fraction: float):
    """Fixed table-level validation slice of the test set (excluded from
    reported F1). Deterministic: first tables in table_id order."""
    tables = sorted(test_corpus.tables, key=lambda t: t.table_id)
    n_val = int(round(len(tables) * fraction))
    n_val = min(max(n_val, 0), len(tables) - 1) if len(tables) > 1 else 0
    val_ids = {t.table_id for t in tables[:n_val]}
    val_tables = [t for t in test_corpus.tables if t.table_id in val_ids]
    report_tables = [t for t in test_corpus.tables if t.table_id not in val_ids]
    return val_tables, report_tables


class ActiveLearningRun:
    """One repeat of the iterative protocol; drives both headless runs and
    simulated-oracle service sessions so the two stay byte-identical."""

    def __init__(self, config: ExperimentConfig, train_corpus: Corpus,
                 test_corpus: Optional[Corpus], repeat: int = 0):
        self.config = config
        self.train_corpus = train_corpus
        self.test_corpus = test_corpus
        self.repeat = repeat
        self.vocab = build_vocab(train_corpus)
        self.init_seed = _derive_seed(config.base_seed, repeat, 1)
        self.model = TaggerModel(config.model, self.vocab, seed=self.init_seed)
        self.pool = PoolState(train_corpus)
        self.records: List[IterationRecord] = []
        self.batches: List[BatchSelection] = []
        self.iteration = 0
        if test_corpus is not None:
            self.val_tables, self.report_tables = split_validation(
                test_corpus, config.validation_fraction)
        else:
            self.val_tables, self.report_tables = [], []

    # -- protocol steps -------------------------------------------------

    def seed_refs(self) -> list:
        rng = _rng(self.config.base_seed, self.repeat, 0)
        return stratified_seed(self.train_corpus, self.config.seed_size, rng)

    def eligible_table_count(self) -> int:
        return len({r.table_id for r in self.pool.unlabeled_nonempty()})

    def select_batch(self) -> BatchSelection:
        seed = _derive_seed(self.config.base_seed, self.repeat, 3, self.iteration)
        rng = _rng(self.config.base_seed, self.repeat, 3, self.iteration)
        return select_batch_for(self, rng, seed)

    def train_and_record(self, batch: Optional[BatchSelection],
                         eligible_before: int, started: float) -> IterationRecord:
        """Reinitialize, retrain on all labeled cells, evaluate, append record."""
        self.model.reinitialize(self.init_seed)
        tconfig = replace(self.config.train,
                          rng_seed=_derive_seed(self.config.base_seed, self.repeat,
                                                2, self.iteration))
        gold = self.test_corpus.gold if self.test_corpus is not None else {}
        fit(self.model, self.train_corpus.tables, self.pool.labeled,
            self.val_tables, gold, tconfig)
        if self.report_tables:
            f1, per_class = evaluate_micro_f1(self.model, self.report_tables, gold)
        else:
            f1, per_class = None, {}
        record = IterationRecord(
            iteration=self.iteration,
            cumulative_labels=len(self.pool.labeled),
            micro_f1=f1,
            per_class_f1=per_class,
            batch_tables=len({r.table_id for r in batch.refs()}) if batch else 0,
            eligible_tables=eligible_before,
            seconds=time.perf_counter() - started,
        )
        self.records.append(record)
        self.iteration += 1
        return record

    # -- simulated oracle -----------------------------------------------

    def run_iteration_simulated(self) -> IterationRecord:
        started = time.perf_counter()
        if self.iteration == 0:
            self.pool.reveal_from_gold(self.seed_refs())
            return self.train_and_record(None, self.eligible_table_count(), started)
        eligible = self.eligible_table_count()
        batch = self.select_batch()
        self.batches.append(batch)
        self.pool.reveal_from_gold(batch.refs())
        return self.train_and_record(batch, eligible, started)

    def run_simulated(self) -> list:
        self.run_iteration_simulated()
        for _ in range(self.config.n_iterations):
            if not self.pool.unlabeled_nonempty():
                break
            self.run_iteration_simulated()
        return self.records


def select_batch_for(run: ActiveLearningRun, rng: np.random.Generator,
                     seed: int) -> BatchSelection:
    return select_batch(run.config.acquisition, run.model, run.pool,
                        run.train_corpus.tables, run.config.batch_budget, rng,
                        seed=seed,
                        mnlp_plus_corpus_order=run.config.mnlp_plus_corpus_order)


def table_diversity(batch: BatchSelection) -> int:
    """Number of distinct tables the batch draws from."""
    return len({ref.table_id for ref in batch.refs()})


def run_experiment(config: ExperimentConfig, train_corpus: Corpus,
                   test_corpus: Corpus, on_batch=None) -> LearningCurve:
    """Full multi-repeat experiment for one acquisition function."""
    repeats = []
    truncated = False
    for repeat in range(config.n_repeats):
        run = ActiveLearningRun(config, train_corpus, test_corpus, repeat=repeat)
        records = run.run_simulated()
        if len(records) != config.n_iterations + 1:
            truncated = True
        if on_batch is not None:
            for batch in run.batches:
                on_batch(config.acquisition, repeat, batch)
        repeats.append(records)
    return LearningCurve(config.acquisition, repeats, truncated=truncated)


def full_training_ceiling(config: ExperimentConfig, train_corpus: Corpus,
                          test_corpus: Corpus) -> dict:
    """Train on every labeled cell; the upper reference line for the curves."""
    f1s = []
    for repeat in range(config.n_repeats):
        run = ActiveLearningRun(config, train_corpus, test_corpus, repeat=repeat)
        for ref, tags in train_corpus.gold.items():
            if ref in run.pool.unlabeled:
                run.pool.reveal(ref, tags)
        record = run.train_and_record(None, 0, time.perf_counter())
        f1s.append(record.micro_f1)
    return {"micro_f1_mean": float(np.mean(f1s)),
            "micro_f1_std": float(np.std(f1s, ddof=1)) if len(f1s) > 1 else 0.0,
            "per_repeat": f1s}


def aggregate(curves: Sequence[LearningCurve]) -> list:
    """Per-iteration mean/std rows across repeats, one row per (kind, iteration)."""
    rows = []
    for curve in curves:
        lengths = {len(rep) for rep in curve.repeats}
        if len(lengths) != 1:
            raise ValidationError("ragged repeats cannot be aggregated")
        n_iter = lengths.pop()
        for i in range(n_iter):
            f1s = [rep[i].micro_f1 for rep in curve.repeats]
            tabs = [rep[i].batch_tables for rep in curve.repeats]
            labels = curve.repeats[0][i].cumulative_labels
            rows.append({
                "acquisition": curve.acquisition.value,
                "iteration": i,
                "labels": labels,
                "f1_mean": float(np.mean(f1s)),
                "f1_std": float(np.std(f1s, ddof=1)) if len(f1s) > 1 else 0.0,
                "tables_mean": float(np.mean(tabs)),
                "tables_std": float(np.std(tabs, ddof=1)) if len(tabs) > 1 else 0.0,
            })
    return rows


CSV_FIELDS = ["acquisition", "iteration", "labels", "f1_mean", "f1_std",
              "tables_mean", "tables_std"]


def write_curves_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        writer.writerows(rows)


def read_curves_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = []
        for row in csv.DictReader(fh):
            rows.append({
                "acquisition": row["acquisition"],
                "iteration": int(row["iteration"]),
                "labels": int(row["labels"]),
                "f1_mean": float(row["f1_mean"]),
                "f1_std": float(row["f1_std"]),
                "tables_mean": float(row["tables_mean"]),
                "tables_std": float(row["tables_std"]),
            })
        return rows
