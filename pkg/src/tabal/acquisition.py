"""Batch acquisition over unlabeled cells: Rand, MNLP, MNLP+ and BADGE."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .table_core import CellRef, PoolState, Table, ValidationError
from .talm import TaggerModel

logger = logging.getLogger(__name__)


class AcquisitionKind(Enum):
    RAND = "rand"
    MNLP = "mnlp"
    MNLP_PLUS = "mnlp+"
    BADGE = "badge"

    @classmethod
    def parse(cls, name: str) -> "AcquisitionKind":
        for kind in cls:
            if kind.value == name.lower():
                return kind
        raise ValidationError(f"unknown acquisition kind {name!r}")


@dataclass
class BatchSelection:
    kind: AcquisitionKind
    seed: Optional[int]
    cells: list  # list of (CellRef, score or None), selection order

    def refs(self) -> list:
        return [ref for ref, _ in self.cells]

    def __len__(self) -> int:
        return len(self.cells)

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "seed": self.seed,
            "cells": [{**ref.to_json(), "score": score} for ref, score in self.cells],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "BatchSelection":
        return cls(
            kind=AcquisitionKind.parse(obj["kind"]),
            seed=obj["seed"],
            cells=[(CellRef.from_json(c), c.get("score")) for c in obj["cells"]],
        )


def mnlp_score(cell_probs: np.ndarray) -> float:
    """Mean log of each token's maximum class probability; always <= 0."""
    if len(cell_probs) == 0:
        raise ValidationError("MNLP is undefined for an empty cell")
    return float(np.log(cell_probs.max(axis=1)).mean())


def _scored_cells(model: TaggerModel, pool: PoolState, tables: Sequence[Table]) -> dict:
    """MNLP score for every non-empty unlabeled cell, one predict pass per table."""
    eligible = set(pool.unlabeled_nonempty())
    by_table = {t.table_id: t for t in tables}
    scores: Dict[CellRef, float] = {}
    wanted_tables = {r.table_id for r in eligible}
    for table_id in sorted(wanted_tables):
        table = by_table[table_id]
        dists = model.predict(table)
        max_log = np.log(dists.probs.max(axis=1))
        sums: Dict[CellRef, list] = {}
        for i, (ref, _) in enumerate(dists.index_map):
            if ref in eligible:
                sums.setdefault(ref, []).append(max_log[i])
        for ref, logs in sums.items():
            scores[ref] = float(np.mean(logs))
    return scores


def select_mnlp(model: TaggerModel, pool: PoolState, tables: Sequence[Table],
                budget: int, rng=None, seed: Optional[int] = None) -> BatchSelection:
    """Lowest-MNLP cells first; ties broken by canonical cell order."""
    if budget < 1:
        raise ValidationError("budget must be >= 1")
    scores = _scored_cells(model, pool, tables)
    ordered = sorted(scores.items(), key=lambda kv: (kv[1], kv[0].sort_key()))
    return BatchSelection(AcquisitionKind.MNLP, seed, ordered[:budget])


def select_mnlp_plus(model: TaggerModel, pool: PoolState, tables: Sequence[Table],
                     budget: int, rng=None, seed: Optional[int] = None,
                     corpus_order: bool = False) -> BatchSelection:
    """Round-robin across tables, taking each table's most uncertain cell.

    Tables cycle in ascending order of their best candidate's score by
    default; ``corpus_order`` switches to corpus table order instead.
    """
    if budget < 1:
        raise ValidationError("budget must be >= 1")
    scores = _scored_cells(model, pool, tables)
    per_table: Dict[str, list] = {}
    for ref, score in scores.items():
        per_table.setdefault(ref.table_id, []).append((score, ref))
    for queue in per_table.values():
        queue.sort(key=lambda sr: (sr[0], sr[1].sort_key()))
    if corpus_order:
        order = [t.table_id for t in tables if t.table_id in per_table]
    else:
        order = sorted(per_table, key=lambda tid: (per_table[tid][0][0], tid))
    chosen = []
    cursors = {tid: 0 for tid in order}
    while len(chosen) < budget:
        progressed = False
        for tid in order:
            if len(chosen) >= budget:
                break
            cursor = cursors[tid]
            if cursor < len(per_table[tid]):
                score, ref = per_table[tid][cursor]
                chosen.append((ref, score))
                cursors[tid] = cursor + 1
                progressed = True
        if not progressed:
            break
    return BatchSelection(AcquisitionKind.MNLP_PLUS, seed, chosen)


def badge_embedding(model: TaggerModel, table: Table, ref: CellRef,
                    prep=None) -> np.ndarray:
    """Mean of the cell's per-token last-layer gradient embeddings."""
    grads = model.last_layer_token_gradients(table, ref, prep=prep)
    return grads.mean(axis=0)


def kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> list:
    """k-means++ seeding over row vectors; returns k distinct row indices.

    Exact duplicates of already-chosen centers have zero selection
    probability; if every remaining point is such a duplicate, the rest of
    the quota is filled uniformly from them.
    """
    n = len(points)
    if k > n:
        raise ValidationError(f"k={k} exceeds {n} points")
    chosen = [int(rng.integers(0, n))]
    d2 = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        d2[chosen] = 0.0
        total = d2.sum()
        if total > 0.0:
            probs = d2 / total
            idx = int(rng.choice(n, p=probs))
        else:
            remaining = np.array([i for i in range(n) if i not in set(chosen)])
            logger.info("k-means++: all remaining points duplicate chosen centers; "
                        "filling uniformly")
            idx = int(remaining[rng.integers(0, len(remaining))])
        chosen.append(idx)
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return chosen


def select_badge(model: TaggerModel, pool: PoolState, tables: Sequence[Table],
                 budget: int, rng: np.random.Generator,
                 seed: Optional[int] = None) -> BatchSelection:
    """k-means++ seeding over mean last-layer gradient embeddings."""
    if budget < 1:
        raise ValidationError("budget must be >= 1")
    eligible = pool.unlabeled_nonempty()
    if not eligible:
        return BatchSelection(AcquisitionKind.BADGE, seed, [])
    by_table = {t.table_id: t for t in tables}
    preps = {}
    embeddings = []
    for ref in eligible:
        table = by_table[ref.table_id]
        if ref.table_id not in preps:
            preps[ref.table_id] = model.prepare(table)
        embeddings.append(badge_embedding(model, table, ref, prep=preps[ref.table_id]))
    points = np.stack(embeddings)
    k = min(budget, len(eligible))
    idx = kmeans_pp(points, k, rng)
    cells = [(eligible[i], float(np.linalg.norm(points[i]))) for i in idx]
    return BatchSelection(AcquisitionKind.BADGE, seed, cells)


def select_random(pool: PoolState, budget: int, rng: np.random.Generator,
                  seed: Optional[int] = None) -> BatchSelection:
    """Uniform sample without replacement over non-empty unlabeled cells."""
    if budget < 1:
        raise ValidationError("budget must be >= 1")
    eligible = pool.unlabeled_nonempty()
    k = min(budget, len(eligible))
    idx = rng.choice(len(eligible), size=k, replace=False) if eligible else []
    cells = [(eligible[int(i)], None) for i in idx]
    return BatchSelection(AcquisitionKind.RAND, seed, cells)


def select_batch(kind: AcquisitionKind, model: TaggerModel, pool: PoolState,
                 tables: Sequence[Table], budget: int, rng: np.random.Generator,
                 seed: Optional[int] = None,
                 mnlp_plus_corpus_order: bool = False) -> BatchSelection:
    if kind == AcquisitionKind.RAND:
        return select_random(pool, budget, rng, seed=seed)
    if kind == AcquisitionKind.MNLP:
        return select_mnlp(model, pool, tables, budget, seed=seed)
    if kind == AcquisitionKind.MNLP_PLUS:
        return select_mnlp_plus(model, pool, tables, budget, seed=seed,
                                corpus_order=mnlp_plus_corpus_order)
    if kind == AcquisitionKind.BADGE:
        return select_badge(model, pool, tables, budget, rng, seed=seed)
    raise ValidationError(f"unsupported acquisition kind {kind}")
