"""Run orchestration: execute a stage, persist the record, re-emit reports."""

from __future__ import annotations

import json
import logging
from datetime import datetime, timezone
from pathlib import Path

import jsonschema

from ..errors import AcceptanceFailed, UnknownRun
from .config import load_schema
from .formats import canonical_json, digest, plain
from .render import FORMATS, render, render_all
from .stages import STAGES, Context
from .store import RunStore

log = logging.getLogger("loopfloer.driver")


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run(command: str, scenario, out_dir, options=None, workers: int = 1):
    """Execute ``command`` on ``scenario``; returns (run_id, record).

    The run directory is written even when a verdict fails; AcceptanceFailed
    is raised afterwards so the caller exits with status 4.
    """
    if command not in STAGES:
        raise ValueError(f"unknown command {command!r}")
    options = plain(dict(options or {}))
    store = RunStore(out_dir)
    ctx = Context(scenario, workers=workers)
    started = _now()
    log.info("running %s on scenario %s", command, scenario.id)
    summary, data = STAGES[command](ctx, options)
    summary = json.loads(canonical_json(summary))
    verdicts = summary["verdicts"]
    status = "ok" if all(verdicts.values()) else "acceptance_failed"
    record = {
        "format_version": 1,
        "run_id": store.next_run_id(scenario.id, command),
        "command": command,
        "scenario": scenario.snapshot(),
        "options": options,
        "started": started,
        "finished": _now(),
        "status": status,
        "summary": summary,
    }
    artifacts = render_all(record, data)
    store.write(record, artifacts, data)
    record = store.load(record["run_id"])
    for name, ok in sorted(verdicts.items()):
        log.info("%s %s", "PASS" if ok else "FAIL", name)
    if status != "ok":
        failed = ", ".join(k for k, v in sorted(verdicts.items()) if not v)
        raise AcceptanceFailed(f"run {record['run_id']}: failed verdicts: {failed}")
    return record["run_id"], record


def emit_report(run_id: str, fmt: str, out_dir, target=None) -> dict:
    """Regenerate the artifacts of one format from the stored record and check them byte for byte.

    Returns {name: digest}.  Files are written below ``target`` when given.
    """
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {', '.join(FORMATS)}")
    store = RunStore(out_dir)
    record = store.load(run_id)
    data = store.load_data(run_id)
    for name, dig in record.get("data", {}).items():
        if digest(data.get(name, b"")) != dig:
            raise UnknownRun(f"data file {name} of run {run_id} is damaged")
    files = render(record, data, fmt)
    if fmt == "json":
        jsonschema.validate(json.loads(files["report.json"]), load_schema("report"))
    digests = {}
    for name, blob in files.items():
        dig = digest(blob)
        stored = store.path(run_id) / "artifacts" / name
        if record["artifacts"].get(name) != dig or not stored.is_file() or stored.read_bytes() != blob:
            raise AcceptanceFailed(f"re-emitted {name} differs from the stored artifact")
        digests[name] = dig
        if target is not None:
            path = Path(target) / name
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(blob)
    return digests
