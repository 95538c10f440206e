"""Annotation service: serves trajectory archives, persists expert judgments.

Storage is an append-only JSONL log, fsynced before each acknowledgment, so
an acknowledged write survives a hard kill. Reads see the compacted view:
the latest score per (trajectory, annotator) wins, full history retained in
the log. Trajectory ids are positional: "<archive stem>-<line index>".
"""

from __future__ import annotations

import csv
import io
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import PlainTextResponse, Response
from pydantic import BaseModel, Field

from .errors import BindFailure, CorruptStore
from .metrics import Judgment
from .trajectory import deserialize, serialize

PAGE_SIZE = 20


@dataclass(frozen=True)
class Annotation:
    trajectory_id: str
    annotator_id: str
    score: int
    noted_at: float
    comment: Optional[str] = None


@dataclass(frozen=True)
class Preference:
    case_id: str
    annotator_id: str
    verdict: Judgment
    left_system: str
    right_system: str
    noted_at: float


class AnnotationStore:
    """Durable append-only log of annotations and preferences."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._annotations: dict[tuple[str, str], Annotation] = {}
        self._preferences: list[Preference] = []
        self._seq = 0
        if self.path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self.path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    self._apply(rec)
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise CorruptStore(f"{self.path}:{lineno}: {exc}") from exc

    def _apply(self, rec: dict) -> None:
        self._seq = max(self._seq, int(rec["seq"]))
        if rec["kind"] == "annotation":
            ann = Annotation(
                trajectory_id=rec["trajectory_id"],
                annotator_id=rec["annotator_id"],
                score=int(rec["score"]),
                noted_at=float(rec["noted_at"]),
                comment=rec.get("comment"),
            )
            if not 0 <= ann.score <= 5:
                raise ValueError(f"score {ann.score} out of range")
            self._annotations[(ann.trajectory_id, ann.annotator_id)] = ann
        elif rec["kind"] == "preference":
            self._preferences.append(
                Preference(
                    case_id=rec["case_id"],
                    annotator_id=rec["annotator_id"],
                    verdict=Judgment(rec["verdict"]),
                    left_system=rec["left_system"],
                    right_system=rec["right_system"],
                    noted_at=float(rec["noted_at"]),
                )
            )
        else:
            raise ValueError(f"unknown record kind {rec['kind']!r}")

    def _append(self, rec: dict) -> int:
        with self._lock:
            self._seq += 1
            rec["seq"] = self._seq
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self._apply(rec)
            return self._seq

    def add_annotation(self, trajectory_id: str, annotator_id: str, score: int,
                       comment: Optional[str] = None) -> int:
        return self._append(
            {
                "kind": "annotation",
                "trajectory_id": trajectory_id,
                "annotator_id": annotator_id,
                "score": score,
                "comment": comment,
                "noted_at": time.time(),
            }
        )

    def add_preference(self, case_id: str, annotator_id: str, verdict: Judgment,
                       left_system: str, right_system: str) -> int:
        return self._append(
            {
                "kind": "preference",
                "case_id": case_id,
                "annotator_id": annotator_id,
                "verdict": verdict.value,
                "left_system": left_system,
                "right_system": right_system,
                "noted_at": time.time(),
            }
        )

    def annotations(self, trajectory_id: Optional[str] = None) -> list[Annotation]:
        with self._lock:
            rows = list(self._annotations.values())
        if trajectory_id is not None:
            rows = [a for a in rows if a.trajectory_id == trajectory_id]
        return sorted(rows, key=lambda a: (a.trajectory_id, a.annotator_id))

    def preferences(self) -> list[Preference]:
        with self._lock:
            return list(self._preferences)


def export_scores(store: AnnotationStore) -> list[tuple[str, str, int]]:
    """(trajectory_id, annotator_id, score) rows, one per live annotation."""
    return [(a.trajectory_id, a.annotator_id, a.score) for a in store.annotations()]


# --- archive access ----------------------------------------------------------


class TrajectoryArchive:
    """Read-only view over the .traj.jsonl files under a directory."""

    def __init__(self, archive_dir: str | Path):
        self.archive_dir = Path(archive_dir)
        self._docs: dict[str, dict] = {}
        self._order: list[str] = []
        for path in sorted(self.archive_dir.glob("*.traj.jsonl")):
            stem = path.name[: -len(".traj.jsonl")]
            with open(path, "r", encoding="utf-8") as fh:
                for i, line in enumerate(fh):
                    if not line.strip():
                        continue
                    tid = f"{stem}-{i:05d}"
                    record = serialize(deserialize(json.loads(line)))  # validate + normalize
                    record["id"] = tid
                    self._docs[tid] = record
                    self._order.append(tid)

    def ids(self) -> list[str]:
        return list(self._order)

    def get(self, tid: str) -> Optional[dict]:
        return self._docs.get(tid)

    def summary(self, tid: str) -> dict:
        doc = self._docs[tid]
        return {
            "id": tid,
            "prediction": doc["prediction"],
            "tool_call_count": doc["tool_call_count"],
            "format_ok": doc["format_ok"],
            "n_steps": len(doc["steps"]),
        }


class AnnotationIn(BaseModel):
    trajectory_id: str
    annotator_id: str = Field(min_length=1)
    score: int = Field(ge=0, le=5)
    comment: Optional[str] = None


class PreferenceIn(BaseModel):
    case_id: str
    annotator_id: str = Field(min_length=1)
    verdict: Judgment
    left_system: str
    right_system: str


def create_app(
    archive_dir: str | Path,
    store: AnnotationStore,
    reveal_gold: bool = False,
) -> FastAPI:
    """Wire the HTTP API over an archive directory and an annotation store.

    Gold labels are hidden from trajectory documents unless reveal_gold is
    set (blind review by default).
    """
    archive = TrajectoryArchive(archive_dir)
    app = FastAPI(title="trajectory-annotation-service", version="1.0.0")

    @app.get("/trajectories")
    def list_trajectories(page: int = Query(0, ge=0), page_size: int = Query(PAGE_SIZE, ge=1, le=200)):
        ids = archive.ids()
        start = page * page_size
        chunk = ids[start : start + page_size]
        return {
            "page": page,
            "page_size": page_size,
            "total": len(ids),
            "items": [archive.summary(tid) for tid in chunk],
        }

    @app.get("/trajectories/{tid}")
    def get_trajectory(tid: str):
        doc = archive.get(tid)
        if doc is None:
            raise HTTPException(status_code=404, detail=f"no trajectory {tid!r}")
        if not reveal_gold:
            doc = {k: v for k, v in doc.items() if k != "gold"}
        return doc

    @app.get("/assets/{path:path}")
    def get_asset(path: str):
        full = (archive.archive_dir / "assets" / path).resolve()
        root = (archive.archive_dir / "assets").resolve()
        if root not in full.parents and full != root:
            raise HTTPException(status_code=404, detail="not found")
        if not full.is_file():
            raise HTTPException(status_code=404, detail="not found")
        return Response(
            content=full.read_bytes(),
            media_type="image/png",
            headers={"Cache-Control": "public, max-age=86400, immutable"},
        )

    @app.post("/annotations")
    def post_annotation(body: AnnotationIn):
        if archive.get(body.trajectory_id) is None:
            raise HTTPException(status_code=404, detail=f"no trajectory {body.trajectory_id!r}")
        seq = store.add_annotation(body.trajectory_id, body.annotator_id, body.score, body.comment)
        return {"ok": True, "seq": seq}

    @app.get("/annotations")
    def get_annotations(trajectory_id: Optional[str] = None):
        return [
            {
                "trajectory_id": a.trajectory_id,
                "annotator_id": a.annotator_id,
                "score": a.score,
                "comment": a.comment,
                "noted_at": a.noted_at,
            }
            for a in store.annotations(trajectory_id)
        ]

    @app.post("/preferences")
    def post_preference(body: PreferenceIn):
        seq = store.add_preference(
            body.case_id, body.annotator_id, body.verdict, body.left_system, body.right_system
        )
        return {"ok": True, "seq": seq}

    @app.get("/export/scores.csv")
    def export_csv():
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["trajectory_id", "annotator_id", "score"])
        for row in export_scores(store):
            w.writerow(row)
        return PlainTextResponse(buf.getvalue(), media_type="text/csv")

    return app


def serve(archive_dir: str | Path, store_path: str | Path, bind_addr: str = "127.0.0.1:8600",
          reveal_gold: bool = False) -> None:
    """Run the service until interrupted."""
    import uvicorn

    try:
        host, port_s = bind_addr.rsplit(":", 1)
        port = int(port_s)
    except ValueError as exc:
        raise BindFailure(f"bad bind address {bind_addr!r}") from exc
    app = create_app(archive_dir, AnnotationStore(store_path), reveal_gold=reveal_gold)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except OSError as exc:
        raise BindFailure(f"cannot bind {bind_addr!r}: {exc}") from exc
