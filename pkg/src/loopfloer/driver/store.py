"""Append-only run store: one directory per run, written atomically.

Layout of a run directory::

    record.json          RunRecord (scenario snapshot, options, timestamps, digests, summary)
    artifacts/<name>     rendered JSON/CSV/text artifacts
    data/<name>          binary payloads the artifacts are rendered from
"""

from __future__ import annotations

import json
import os
import re
import shutil
import tempfile
from pathlib import Path

import jsonschema

from ..errors import UnknownRun
from .config import load_schema
from .formats import canonical_json, digest

_RUN_RE = re.compile(r"^(?P<scenario>[A-Za-z0-9_.-]+)\.(?P<command>[a-z-]+)\.(?P<n>\d{4})$")


class RunStore:
    def __init__(self, root):
        self.root = Path(root)

    def runs(self) -> list:
        if not self.root.is_dir():
            return []
        return sorted(p.name for p in self.root.iterdir() if p.is_dir() and _RUN_RE.match(p.name))

    def next_run_id(self, scenario_id: str, command: str) -> str:
        taken = [int(_RUN_RE.match(r)["n"]) for r in self.runs()
                 if _RUN_RE.match(r)["scenario"] == scenario_id and _RUN_RE.match(r)["command"] == command]
        return f"{scenario_id}.{command}.{(max(taken) + 1 if taken else 1):04d}"

    def path(self, run_id: str) -> Path:
        p = self.root / run_id
        if not _RUN_RE.match(run_id) or not (p / "record.json").is_file():
            raise UnknownRun(f"no run {run_id!r} in {self.root}")
        return p

    def write(self, record: dict, artifacts: dict, data: dict) -> Path:
        """Write a complete run directory; the directory appears only once everything is on disk."""
        record = dict(record)
        record["artifacts"] = {k: digest(v) for k, v in sorted(artifacts.items())}
        record["data"] = {k: digest(v) for k, v in sorted(data.items())}
        jsonschema.validate(json.loads(canonical_json(record)), load_schema("run_record"))
        self.root.mkdir(parents=True, exist_ok=True)
        final = self.root / record["run_id"]
        if final.exists():
            raise FileExistsError(f"run {record['run_id']} already exists")
        tmp = Path(tempfile.mkdtemp(prefix=".tmp-", dir=self.root))
        try:
            for sub, blobs in (("artifacts", artifacts), ("data", data)):
                for name, blob in blobs.items():
                    target = tmp / sub / name
                    target.parent.mkdir(parents=True, exist_ok=True)
                    target.write_bytes(blob)
            (tmp / "record.json").write_bytes(canonical_json(record))
            os.rename(tmp, final)
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        return final

    def load(self, run_id: str) -> dict:
        return json.loads((self.path(run_id) / "record.json").read_text())

    def load_data(self, run_id: str) -> dict:
        base = self.path(run_id) / "data"
        if not base.is_dir():
            return {}
        return {p.relative_to(base).as_posix(): p.read_bytes() for p in sorted(base.rglob("*")) if p.is_file()}

    def artifact(self, run_id: str, name: str) -> bytes:
        return (self.path(run_id) / "artifacts" / name).read_bytes()
