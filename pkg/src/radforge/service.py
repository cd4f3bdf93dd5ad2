"""Local curation API over a tree file: read the tree and leaf evidence,
accept manual edits under optimistic versioning, persist write-through.

Endpoints: GET /health, GET /tree, GET /leaves/{id}/sentences,
POST /edits, GET /edits. Edits carry the version they were based on;
stale versions get 409, invalid edits 422.
"""
from __future__ import annotations

import json
import threading
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles

from .errors import SchemaError
from .tree import PerceptionTree, TreeEdit, apply_edit, load_tree, save_tree, serialize_tree


class StaleVersion(Exception):
    def __init__(self, current_version: int):
        super().__init__(f"tree has moved on to version {current_version}")
        self.current_version = current_version


class TreeStore:
    """Shared mutable holder for the served tree with write-through
    persistence and an append-only standalone edit log."""

    def __init__(self, tree_path: str | Path):
        self.tree_path = Path(tree_path)
        self._tree = load_tree(self.tree_path)
        self._lock = threading.Lock()
        self.edit_log_path = self.tree_path.with_suffix(".edits.jsonl")

    @property
    def tree(self) -> PerceptionTree:
        with self._lock:
            return self._tree

    def apply(self, edit: TreeEdit, base_version: int) -> int:
        with self._lock:
            if base_version != self._tree.version:
                raise StaleVersion(self._tree.version)
            new_tree = apply_edit(self._tree, edit)
            save_tree(new_tree, self.tree_path)
            with open(self.edit_log_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(edit.as_dict(), ensure_ascii=False, sort_keys=True) + "\n")
            self._tree = new_tree
            return new_tree.version


def create_app(store: TreeStore, frontend_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="radforge curation service")

    @app.get("/health")
    def health():
        return {"status": "ok", "version": store.tree.version}

    @app.get("/tree")
    def get_tree():
        return Response(serialize_tree(store.tree), media_type="application/json")

    @app.get("/leaves/{node_id}/sentences")
    def leaf_sentences(node_id: str):
        tree = store.tree
        if node_id not in tree.nodes:
            raise HTTPException(status_code=404, detail=f"unknown node {node_id!r}")
        node = tree.nodes[node_id]
        return [
            {"report_id": s.report_id, "index": s.index, "text": s.text}
            for s in node.sentences
        ]

    @app.get("/edits")
    def get_edits():
        return [edit.as_dict() for edit in store.tree.edit_log]

    @app.post("/edits")
    async def post_edit(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError:
            raise HTTPException(status_code=422, detail="request body is not JSON") from None
        if not isinstance(body, dict) or "base_version" not in body:
            raise HTTPException(status_code=422, detail="edit must carry base_version")
        base_version = body["base_version"]
        if not isinstance(base_version, int):
            raise HTTPException(status_code=422, detail="base_version must be an integer")
        edit_fields = {k: v for k, v in body.items() if k != "base_version"}
        if not edit_fields.get("timestamp"):
            edit_fields["timestamp"] = datetime.now(timezone.utc).isoformat()
        try:
            edit = TreeEdit.from_dict(edit_fields)
            version = store.apply(edit, base_version)
        except StaleVersion as e:
            return JSONResponse(
                status_code=409,
                content={"detail": str(e), "current_version": e.current_version},
            )
        except SchemaError as e:
            raise HTTPException(status_code=422, detail=str(e)) from None
        return {"version": version}

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
