"""Annotation service: assignment, durable recording, and export.

State is an append-only JSONL ledger replayed at startup; every mutation
is validated, appended, flushed, and fsynced before it is acknowledged, so
a crash-restart loses nothing that a client saw confirmed. Each annotator
walks the same comparison set in their own seeded order and can never be
handed an item they have already answered or skipped.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

from .arena import Comparison
from .records import UsageError, derive_seed, read_records
from .stats import WinMatrix

import random


class UnknownEntityError(KeyError):
    """Annotator or comparison key not known to the service (404-class)."""


class ConflictError(ValueError):
    """Duplicate submission with a different choice (409-class)."""


@dataclass(frozen=True)
class Annotation:
    comparison_key: str
    annotator_id: str
    role: str
    choice: str
    resolved_choice: str
    timestamp: str

    def to_obj(self) -> dict:
        return {
            "comparison_key": self.comparison_key,
            "annotator_id": self.annotator_id,
            "role": self.role,
            "choice": self.choice,
            "resolved_choice": self.resolved_choice,
            "timestamp": self.timestamp,
        }


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class AnnotationStore:
    """In-memory view over the append-only ledger; one writer at a time."""

    def __init__(self, comparisons: Iterable[Comparison], ledger_path: str | Path,
                 seed: int = 0):
        self.comparisons: dict[str, Comparison] = {}
        for comp in comparisons:
            if comp.key in self.comparisons:
                raise UsageError(f"duplicate comparison key {comp.key}")
            self.comparisons[comp.key] = comp
        if not self.comparisons:
            raise UsageError("no comparisons loaded")
        self.seed = seed
        self.ledger_path = Path(ledger_path)
        self.annotators: dict[str, str] = {}
        self.annotations: dict[tuple[str, str], Annotation] = {}
        self.skips: set[tuple[str, str]] = set()
        self._write_lock = threading.Lock()
        self._order_cache: dict[str, list[str]] = {}
        if self.ledger_path.exists():
            self._replay()
        self._ledger = open(self.ledger_path, "a", encoding="utf-8", newline="\n")

    # -- ledger -------------------------------------------------------------

    def _replay(self) -> None:
        with open(self.ledger_path, "r", encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                kind = event.get("event")
                if kind == "register":
                    self.annotators[event["annotator"]] = event["role"]
                elif kind == "annotate":
                    ann = Annotation(
                        comparison_key=event["key"],
                        annotator_id=event["annotator"],
                        role=event["role"],
                        choice=event["choice"],
                        resolved_choice=event["resolved"],
                        timestamp=event["ts"],
                    )
                    self.annotations[(ann.comparison_key, ann.annotator_id)] = ann
                elif kind == "skip":
                    self.skips.add((event["key"], event["annotator"]))

    def _append(self, event: dict) -> None:
        with self._write_lock:
            self._ledger.write(json.dumps(event, ensure_ascii=False) + "\n")
            self._ledger.flush()
            os.fsync(self._ledger.fileno())

    def close(self) -> None:
        self._ledger.close()

    # -- protocol -----------------------------------------------------------

    def register(self, annotator_id: str, role: str) -> None:
        if not annotator_id or not role:
            raise UsageError("annotator id and role must be non-empty")
        existing = self.annotators.get(annotator_id)
        if existing is not None:
            if existing != role:
                raise ConflictError(
                    f"annotator '{annotator_id}' already registered with role '{existing}'"
                )
            return
        self._append({"event": "register", "annotator": annotator_id, "role": role,
                      "ts": _utc_now()})
        self.annotators[annotator_id] = role

    def _require_annotator(self, annotator_id: str) -> str:
        role = self.annotators.get(annotator_id)
        if role is None:
            raise UnknownEntityError(f"unknown annotator '{annotator_id}'")
        return role

    def _order_for(self, annotator_id: str) -> list[str]:
        order = self._order_cache.get(annotator_id)
        if order is None:
            order = sorted(self.comparisons)
            random.Random(derive_seed(self.seed, f"order:{annotator_id}")).shuffle(order)
            self._order_cache[annotator_id] = order
        return order

    def next_for(self, annotator_id: str) -> Comparison | None:
        """First unanswered, unskipped comparison in this annotator's order."""
        self._require_annotator(annotator_id)
        for key in self._order_for(annotator_id):
            handle = (key, annotator_id)
            if handle not in self.annotations and handle not in self.skips:
                return self.comparisons[key]
        return None

    def submit(self, annotator_id: str, comparison_key: str, choice: str) -> Annotation:
        role = self._require_annotator(annotator_id)
        comp = self.comparisons.get(comparison_key)
        if comp is None:
            raise UnknownEntityError(f"unknown comparison key '{comparison_key}'")
        if choice not in ("A", "B"):
            raise UsageError("choice must be 'A' or 'B'")
        existing = self.annotations.get((comparison_key, annotator_id))
        if existing is not None:
            if existing.choice == choice:
                return existing  # idempotent duplicate
            raise ConflictError(
                f"comparison {comparison_key} already answered '{existing.choice}' "
                f"by '{annotator_id}'"
            )
        annotation = Annotation(
            comparison_key=comparison_key,
            annotator_id=annotator_id,
            role=role,
            choice=choice,
            resolved_choice=comp.resolve_choice(choice),
            timestamp=_utc_now(),
        )
        self._append(
            {
                "event": "annotate",
                "key": comparison_key,
                "annotator": annotator_id,
                "role": role,
                "choice": choice,
                "resolved": annotation.resolved_choice,
                "ts": annotation.timestamp,
            }
        )
        self.annotations[(comparison_key, annotator_id)] = annotation
        return annotation

    def skip(self, annotator_id: str, comparison_key: str) -> None:
        self._require_annotator(annotator_id)
        if comparison_key not in self.comparisons:
            raise UnknownEntityError(f"unknown comparison key '{comparison_key}'")
        handle = (comparison_key, annotator_id)
        if handle in self.skips:
            return
        self._append({"event": "skip", "key": comparison_key, "annotator": annotator_id,
                      "ts": _utc_now()})
        self.skips.add(handle)

    def progress(self, annotator_id: str) -> dict:
        self._require_annotator(annotator_id)
        answered = sum(1 for (_, a) in self.annotations if a == annotator_id)
        skipped = sum(1 for (_, a) in self.skips if a == annotator_id)
        return {"answered": answered, "skipped": skipped, "total": len(self.comparisons)}

    # -- export -------------------------------------------------------------

    def export(self, role: str | None = None, mode: str | None = None
               ) -> tuple[list[Annotation], WinMatrix]:
        """Annotations (skips excluded) plus the aggregated win matrix."""
        selected = []
        for annotation in self.annotations.values():
            comp = self.comparisons[annotation.comparison_key]
            if role is not None and annotation.role != role:
                continue
            if mode is not None and comp.mode != mode:
                continue
            selected.append(annotation)
        selected.sort(key=lambda a: (a.comparison_key, a.annotator_id))

        models: set[str] = set()
        for comp in self.comparisons.values():
            if mode is not None and comp.mode != mode:
                continue
            models.add(comp.model_a)
            models.add(comp.model_b)
        matrix = WinMatrix.zeros(sorted(models))
        for annotation in selected:
            comp = self.comparisons[annotation.comparison_key]
            winner = annotation.resolved_choice
            loser = comp.model_b if winner == comp.model_a else comp.model_a
            matrix.add_win(winner, loser)
        return selected, matrix


def load_store(comparisons_path: str | Path, ledger_path: str | Path,
               seed: int = 0) -> AnnotationStore:
    comparisons = list(read_records(comparisons_path, Comparison))
    return AnnotationStore(comparisons, ledger_path, seed=seed)


# ---------------------------------------------------------------------------
# HTTP layer

from pydantic import BaseModel


class SubmitBody(BaseModel):
    annotator: str
    key: str
    choice: str


class SkipBody(BaseModel):
    annotator: str
    key: str


class RegisterBody(BaseModel):
    annotator: str
    role: str


def create_app(store: AnnotationStore, ui_dir: str | Path | None = None):
    from fastapi import FastAPI, HTTPException
    from fastapi.responses import JSONResponse

    app = FastAPI(title="annotation service")

    def guard(fn):
        try:
            return fn()
        except UnknownEntityError as err:
            raise HTTPException(status_code=404, detail=str(err)) from err
        except ConflictError as err:
            raise HTTPException(status_code=409, detail=str(err)) from err
        except UsageError as err:
            raise HTTPException(status_code=400, detail=str(err)) from err

    @app.post("/api/register")
    def register(body: RegisterBody):
        guard(lambda: store.register(body.annotator, body.role))
        return {"ok": True, "annotator": body.annotator, "role": body.role}

    @app.get("/api/next")
    def next_comparison(annotator: str):
        comp = guard(lambda: store.next_for(annotator))
        if comp is None:
            progress = store.progress(annotator)
            return {"done": True, **progress}
        return {"done": False, **comp.visible_payload()}

    @app.post("/api/submit")
    def submit(body: SubmitBody):
        annotation = guard(lambda: store.submit(body.annotator, body.key, body.choice))
        progress = store.progress(body.annotator)
        return {"ok": True, "key": annotation.comparison_key, **progress}

    @app.post("/api/skip")
    def skip(body: SkipBody):
        guard(lambda: store.skip(body.annotator, body.key))
        progress = store.progress(body.annotator)
        return {"ok": True, "key": body.key, **progress}

    @app.get("/api/progress")
    def progress(annotator: str):
        return guard(lambda: store.progress(annotator))

    @app.get("/api/export")
    def export(role: str | None = None, mode: str | None = None):
        annotations, matrix = store.export(role=role, mode=mode)
        return JSONResponse(
            {
                "annotations": [a.to_obj() for a in annotations],
                "win_matrix": matrix.to_obj(),
                "total": len(annotations),
            }
        )

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(comparisons_path: str | Path, ledger_path: str | Path, port: int = 8000,
          seed: int = 0, ui_dir: str | Path | None = None, host: str = "127.0.0.1"):
    import uvicorn

    store = load_store(comparisons_path, ledger_path, seed=seed)
    app = create_app(store, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)
