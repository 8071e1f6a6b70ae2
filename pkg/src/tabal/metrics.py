"""Token-level micro-averaged F1 over the four entity classes (O excluded)."""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

import numpy as np

from .table_core import ENTITY_CLASSES, LabelClass, Table, ValidationError


def micro_f1_from_labels(pred: Sequence[LabelClass], gold: Sequence[LabelClass]):
    """F1 from aligned token label sequences; returns (micro_f1, per_class_f1)."""
    if len(pred) != len(gold):
        raise ValidationError(f"prediction/gold length mismatch: {len(pred)} vs {len(gold)}")
    counts = {cls: [0, 0, 0] for cls in ENTITY_CLASSES}  # tp, fp, fn
    for p, g in zip(pred, gold):
        if p == g:
            if p != LabelClass.O:
                counts[p][0] += 1
        else:
            if p != LabelClass.O:
                counts[p][1] += 1
            if g != LabelClass.O:
                counts[g][2] += 1
    per_class = {}
    for cls, (tp, fp, fn) in counts.items():
        per_class[cls] = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    tp = sum(c[0] for c in counts.values())
    fp = sum(c[1] for c in counts.values())
    fn = sum(c[2] for c in counts.values())
    micro = 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    return micro, per_class


def evaluate_micro_f1(model, tables: Sequence[Table], gold: Mapping,
                      preps: Optional[list] = None):
    """Predict every table and score argmax labels against gold-labeled cells.

    Tokens truncated away by the encoder are skipped (unscored by contract).
    """
    pred_labels = []
    gold_labels = []
    preps = preps or [model.prepare(t) for t in tables]
    for table, prep in zip(tables, preps):
        dists = model.predict(table, prep=prep)
        argmax = dists.probs.argmax(axis=1)
        for i, (ref, z) in enumerate(prep.index_map):
            tags = gold.get(ref)
            if tags is not None and z < len(tags):
                pred_labels.append(LabelClass(int(argmax[i])))
                gold_labels.append(tags[z])
    return micro_f1_from_labels(pred_labels, gold_labels)


def token_accuracy(model, tables: Sequence[Table], gold: Mapping) -> float:
    correct = 0
    total = 0
    for table in tables:
        prep = model.prepare(table)
        argmax = model.predict(table, prep=prep).probs.argmax(axis=1)
        for i, (ref, z) in enumerate(prep.index_map):
            tags = gold.get(ref)
            if tags is not None and z < len(tags):
                total += 1
                correct += int(argmax[i]) == int(tags[z])
    return correct / total if total else 0.0
