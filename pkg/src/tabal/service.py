"""HTTP service hosting live AL sessions with a simulated or human oracle.

Single-node, in-memory sessions; every state change is persisted to disk
(write-to-temp + rename) so a crashed process restarts from the last
consistent state.
"""

from __future__ import annotations

import json
import os
import uuid
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .acquisition import AcquisitionKind, BatchSelection
from .al_loop import ActiveLearningRun, ExperimentConfig, IterationRecord
from .corpus_synth import load_corpus
from .table_core import (CellRef, Corpus, Cell, LabelClass, Span, Table,
                         ValidationError, io_to_spans, label_from_name,
                         label_wire_name, spans_to_io)
from .talm import display_tokens


def _table_from_json(obj: dict) -> Table:
    return Table(
        table_id=obj["table_id"],
        header=tuple(Cell(text=t, tokens=display_tokens(t)) for t in obj["header"]),
        body=tuple(tuple(Cell(text=t, tokens=display_tokens(t)) for t in row)
                   for row in obj["rows"]),
    )


def _corpus_from_json(tables: list) -> Corpus:
    parsed = []
    gold = {}
    for obj in tables:
        table = _table_from_json(obj)
        parsed.append(table)
        for ann in obj.get("annotations", []):
            row = ann["row"]
            ref = CellRef(table.table_id, None if row == "header" else int(row),
                          int(ann["col"]))
            ref.validate_for(table)
            spans = [Span(int(s["start"]), int(s["end"]), label_from_name(s["label"]))
                     for s in ann["spans"]]
            gold[ref] = spans_to_io(table.cell(ref), spans)
    return Corpus(tables=parsed, gold=gold)


def _corpus_to_json(corpus: Corpus) -> list:
    out = []
    for table in corpus.tables:
        annotations = []
        for ref in table.cell_refs():
            tags = corpus.gold.get(ref)
            if tags is None:
                continue
            spans = sorted(io_to_spans(tags), key=lambda s: s.start)
            annotations.append({"row": "header" if ref.row is None else ref.row,
                                "col": ref.col,
                                "spans": [{"start": s.start, "end": s.end,
                                           "label": label_wire_name(s.label)}
                                          for s in spans]})
        out.append({"table_id": table.table_id,
                    "header": [c.text for c in table.header],
                    "rows": [[c.text for c in row] for row in table.body],
                    "annotations": annotations})
    return out


class CreateSessionRequest(BaseModel):
    tables: list
    test_tables: list = []
    config: dict = {}
    oracle: str = "simulated"


class SubmitLabelsRequest(BaseModel):
    spans: list


class Session:
    """State machine: idle -> batch-open -> training -> idle."""

    def __init__(self, session_id: str, config: ExperimentConfig,
                 train_corpus: Corpus, test_corpus: Optional[Corpus], oracle: str,
                 data_dir: Path):
        if oracle not in ("simulated", "human"):
            raise ValidationError(f"unknown oracle mode {oracle!r}")
        self.id = session_id
        self.oracle = oracle
        self.config = config
        self.data_dir = data_dir
        self.run = ActiveLearningRun(config, train_corpus, test_corpus, repeat=0)
        self.pending: Optional[BatchSelection] = None
        self.pending_labels: dict = {}
        self.pending_is_seed = False
        self.training = False

    # -- lifecycle -------------------------------------------------------

    def start(self) -> None:
        if self.oracle == "simulated":
            self.run.run_iteration_simulated()
        else:
            refs = self.run.seed_refs()
            self.pending = BatchSelection(self.config.acquisition, None,
                                          [(r, None) for r in refs])
            self.pending_is_seed = True
        self.persist()

    def status(self) -> str:
        if self.training:
            return "training"
        return "batch-open" if self.pending is not None else "idle"

    def open_batch(self) -> BatchSelection:
        if self.oracle == "simulated":
            raise HTTPException(409, "simulated-oracle sessions label batches "
                                     "automatically; call train instead")
        if self.pending is not None:
            raise HTTPException(409, "a batch is already open")
        if self.training:
            raise HTTPException(409, "training is running")
        eligible = self.run.eligible_table_count()
        if eligible == 0:
            raise HTTPException(409, "unlabeled pool is exhausted")
        self.pending = self.run.select_batch()
        self.run.batches.append(self.pending)
        self.persist()
        return self.pending

    def submit_labels(self, ref: CellRef, spans: list) -> None:
        if self.pending is None:
            raise HTTPException(409, "no batch is open")
        if ref not in set(self.pending.refs()):
            raise HTTPException(422, f"{ref.to_json()} is not in the pending batch")
        cell = self.run.train_corpus.cell(ref)
        try:
            parsed = [Span(int(s["start"]), int(s["end"]), label_from_name(s["label"]))
                      for s in spans]
            tags = spans_to_io(cell, parsed)
        except ValidationError as exc:
            raise HTTPException(422, f"{exc} (cell has {len(cell)} tokens)")
        # resubmission before training overwrites
        self.pending_labels[ref] = tags
        self.persist()

    def train_iteration(self, force: bool = False) -> IterationRecord:
        import time
        if self.training:
            raise HTTPException(409, "training already running")
        if self.oracle == "simulated":
            if self.run.pool.unlabeled_nonempty() or self.run.iteration == 0:
                self.training = True
                try:
                    record = self.run.run_iteration_simulated()
                finally:
                    self.training = False
                self.persist()
                return record
            raise HTTPException(409, "unlabeled pool is exhausted")
        if self.pending is None:
            raise HTTPException(409, "no batch is open")
        missing = [r for r in self.pending.refs() if r not in self.pending_labels]
        if missing and not force:
            raise HTTPException(409, f"{len(missing)} cells still unlabeled; "
                                     "use force=true to train on a partial batch")
        started = time.perf_counter()
        labeled_refs = [r for r in self.pending.refs() if r in self.pending_labels]
        eligible = self.run.eligible_table_count()
        self.training = True
        try:
            for ref in labeled_refs:
                self.run.pool.reveal(ref, self.pending_labels[ref])
            batch = None
            if not self.pending_is_seed:
                batch = BatchSelection(self.pending.kind, self.pending.seed,
                                       [(r, s) for r, s in self.pending.cells
                                        if r in self.pending_labels])
            record = self.run.train_and_record(batch, eligible, started)
        finally:
            self.training = False
        # unlabeled remainder stays in the pool automatically
        self.pending = None
        self.pending_labels = {}
        self.pending_is_seed = False
        self.persist()
        return record

    # -- payloads ----------------------------------------------------------

    def batch_payload(self) -> dict:
        assert self.pending is not None
        by_table = {}
        suggestions_cache = {}
        items = []
        for ref, score in self.pending.cells:
            table = self.run.train_corpus.table(ref.table_id)
            if ref.table_id not in by_table:
                by_table[ref.table_id] = {
                    "table_id": table.table_id,
                    "header": [list(c.tokens) for c in table.header],
                    "rows": [[list(c.tokens) for c in row] for row in table.body],
                }
                dists = self.run.model.predict(table)
                argmax = dists.probs.argmax(axis=1)
                per_cell = {}
                for i, (r, z) in enumerate(dists.index_map):
                    per_cell.setdefault(r, []).append(LabelClass(int(argmax[i])))
                suggestions_cache[ref.table_id] = per_cell
            cell = table.cell(ref)
            predicted = suggestions_cache[ref.table_id].get(ref, [])
            # truncated tail tokens get no suggestion
            predicted = predicted + [LabelClass.O] * (len(cell) - len(predicted))
            spans = sorted(io_to_spans(predicted), key=lambda s: s.start)
            items.append({
                "cell": ref.to_json(),
                "score": score,
                "tokens": list(cell.tokens),
                "labeled": ref in self.pending_labels,
                "suggested_spans": [{"start": s.start, "end": s.end,
                                     "label": label_wire_name(s.label)} for s in spans],
                "table": by_table[ref.table_id],
            })
        return {"session_id": self.id, "iteration": self.run.iteration,
                "kind": self.pending.kind.value, "is_seed": self.pending_is_seed,
                "size": len(items), "items": items}

    def summary(self) -> dict:
        return {
            "session_id": self.id,
            "oracle": self.oracle,
            "status": self.status(),
            "iteration": self.run.iteration,
            "labeled_cells": len(self.run.pool.labeled),
            "unlabeled_cells": len(self.run.pool.unlabeled),
            "pending_batch_size": len(self.pending) if self.pending else 0,
            "pending_labeled": len(self.pending_labels),
            "pending_is_seed": self.pending_is_seed,
            "has_test_set": bool(self.run.report_tables),
        }

    def curve_json(self) -> dict:
        return {"session_id": self.id,
                "acquisition": self.config.acquisition.value,
                "records": [r.to_json() for r in self.run.records]}

    # -- persistence -------------------------------------------------------

    def _dir(self) -> Path:
        return self.data_dir / "sessions" / self.id

    def persist(self) -> None:
        d = self._dir()
        d.mkdir(parents=True, exist_ok=True)
        state = {
            "id": self.id,
            "oracle": self.oracle,
            "config": self.config.to_json(),
            "train_corpus": _corpus_to_json(self.run.train_corpus),
            "test_corpus": (_corpus_to_json(self.run.test_corpus)
                            if self.run.test_corpus else None),
            "labeled": [{**ref.to_json(),
                         "tags": [label_wire_name(t) if t else "O" for t in tags]}
                        for ref, tags in sorted(self.run.pool.labeled.items(),
                                                key=lambda kv: kv[0].sort_key())],
            "records": [r.to_json() for r in self.run.records],
            "iteration": self.run.iteration,
            "pending": self.pending.to_json() if self.pending else None,
            "pending_is_seed": self.pending_is_seed,
            "pending_labels": [{**ref.to_json(),
                                "tags": [label_wire_name(t) if t else "O" for t in tags]}
                               for ref, tags in self.pending_labels.items()],
        }
        tmp = d / "state.json.tmp"
        with open(tmp, "w") as fh:
            json.dump(state, fh)
        os.replace(tmp, d / "state.json")
        tmp_model = d / "model.json.tmp"
        self.run.model.save(tmp_model)
        os.replace(tmp_model, d / "model.json")

    @classmethod
    def restore(cls, data_dir: Path, session_id: str) -> "Session":
        from .talm import TaggerModel
        d = data_dir / "sessions" / session_id
        with open(d / "state.json") as fh:
            state = json.load(fh)
        config = ExperimentConfig.from_json(state["config"])
        train = _corpus_from_json(state["train_corpus"])
        test = _corpus_from_json(state["test_corpus"]) if state["test_corpus"] else None
        session = cls(session_id, config, train, test, state["oracle"], data_dir)
        for entry in state["labeled"]:
            ref = CellRef.from_json(entry)
            session.run.pool.reveal(ref, tuple(label_from_name(t) for t in entry["tags"]))
        session.run.records = [
            IterationRecord(
                iteration=r["iteration"], cumulative_labels=r["cumulative_labels"],
                micro_f1=r["micro_f1"],
                per_class_f1={label_from_name(k): v for k, v in r["per_class_f1"].items()},
                batch_tables=r["batch_tables"], eligible_tables=r["eligible_tables"],
                seconds=r["seconds"])
            for r in state["records"]]
        session.run.iteration = state["iteration"]
        if state["pending"]:
            session.pending = BatchSelection.from_json(state["pending"])
        session.pending_is_seed = state["pending_is_seed"]
        for entry in state["pending_labels"]:
            ref = CellRef.from_json(entry)
            session.pending_labels[ref] = tuple(label_from_name(t) for t in entry["tags"])
        session.run.model = TaggerModel.load(d / "model.json")
        return session


def create_app(data_dir="tabal_data", static_dir: Optional[str] = None) -> FastAPI:
    data_path = Path(data_dir)
    app = FastAPI(title="tabal annotation service")
    sessions: dict = {}

    sessions_root = data_path / "sessions"
    if sessions_root.is_dir():
        for entry in sorted(sessions_root.iterdir()):
            if (entry / "state.json").is_file():
                sessions[entry.name] = Session.restore(data_path, entry.name)

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id}")
        return session

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "sessions": len(sessions)}

    @app.post("/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        try:
            config = ExperimentConfig.from_json(req.config)
            train = _corpus_from_json(req.tables)
            test = _corpus_from_json(req.test_tables) if req.test_tables else None
            if not train.tables:
                raise ValidationError("corpus has no tables")
            session = Session(str(uuid.uuid4()), config, train, test, req.oracle,
                              data_path)
            session.start()
        except (ValidationError, TypeError, KeyError) as exc:
            raise HTTPException(400, str(exc))
        sessions[session.id] = session
        info = session.summary() | {"curve": session.curve_json()}
        if session.pending is not None:
            info["pending_batch"] = session.batch_payload()
        return info

    @app.get("/sessions/{session_id}")
    def session_info(session_id: str):
        session = get_session(session_id)
        info = session.summary()
        if session.pending is not None:
            info["pending_batch"] = session.batch_payload()
        return info

    @app.get("/sessions/{session_id}/batch")
    def next_batch(session_id: str):
        session = get_session(session_id)
        session.open_batch()
        return session.batch_payload()

    @app.post("/sessions/{session_id}/cells/{table_id}/{row}/{col}/labels")
    def submit_labels(session_id: str, table_id: str, row: str, col: int,
                      req: SubmitLabelsRequest):
        session = get_session(session_id)
        ref = CellRef(table_id, None if row == "header" else int(row), col)
        session.submit_labels(ref, req.spans)
        return {"ok": True, "pending_labeled": len(session.pending_labels),
                "pending_batch_size": len(session.pending)}

    @app.post("/sessions/{session_id}/train")
    def train(session_id: str, force: bool = False):
        session = get_session(session_id)
        record = session.train_iteration(force=force)
        return {"record": record.to_json(), "status": session.status()}

    @app.get("/sessions/{session_id}/curve")
    def curve(session_id: str):
        return get_session(session_id).curve_json()

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
