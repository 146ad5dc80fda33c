"""File-backed session store: JSONL audit logs and snapshot caches.

One directory per session.  Mutations go through a per-session lock
(single writer); the audit log is append-only and the snapshot is the
fold of the log, persisted as a cache.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional

from radstruct.errors import IntegrityError, SessionConflict, SessionNotFound
from radstruct.model.jsonio import dumps_canonical, loads_decimal
from radstruct.workflow.session import reduce_event, replay


class SessionStore:
    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "sessions").mkdir(exist_ok=True)
        self._locks: dict[str, threading.RLock] = {}
        self._registry_lock = threading.RLock()

    # -- index -------------------------------------------------------------

    def _index_path(self) -> Path:
        return self.root / "index.json"

    def _read_index(self) -> dict:
        path = self._index_path()
        if not path.exists():
            return {"next": 1, "by_study_uid": {}}
        return json.loads(path.read_text(encoding="utf-8"))

    def _write_index(self, index: dict) -> None:
        self._index_path().write_text(dumps_canonical(index) + "\n", encoding="utf-8")

    def allocate_session(self, study_uid: str) -> str:
        """Reserve a session id for a study; one open session per study."""
        with self._registry_lock:
            index = self._read_index()
            if study_uid in index["by_study_uid"]:
                raise SessionConflict(
                    f"study {study_uid} already has session {index['by_study_uid'][study_uid]}",
                    target=study_uid,
                )
            session_id = f"RS-{index['next']:04d}"
            index["next"] += 1
            index["by_study_uid"][study_uid] = session_id
            self._write_index(index)
            (self.session_dir(session_id)).mkdir(parents=True)
            return session_id

    def session_ids(self) -> list[str]:
        return sorted(p.name for p in (self.root / "sessions").iterdir() if p.is_dir())

    # -- paths ---------------------------------------------------------------

    def session_dir(self, session_id: str) -> Path:
        return self.root / "sessions" / session_id

    def _events_path(self, session_id: str) -> Path:
        return self.session_dir(session_id) / "events.jsonl"

    def _snapshot_path(self, session_id: str) -> Path:
        return self.session_dir(session_id) / "snapshot.json"

    def exports_dir(self, session_id: str) -> Path:
        path = self.session_dir(session_id) / "exports"
        path.mkdir(exist_ok=True)
        return path

    def registry_path(self, session_id: str) -> Path:
        return self.session_dir(session_id) / "registry.json"

    # -- locking -------------------------------------------------------------

    def lock(self, session_id: str) -> threading.RLock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.RLock())

    # -- events & snapshots ----------------------------------------------------

    def events(self, session_id: str) -> list[dict]:
        path = self._events_path(session_id)
        if not path.exists():
            if not self.session_dir(session_id).exists():
                raise SessionNotFound(f"no session {session_id}", target=session_id)
            return []
        return [loads_decimal(line) for line in path.read_text(encoding="utf-8").splitlines() if line]

    def next_seq(self, session_id: str) -> int:
        events = self.events(session_id)
        return events[-1]["seq"] + 1 if events else 1

    def snapshot(self, session_id: str) -> dict:
        path = self._snapshot_path(session_id)
        if not path.exists():
            raise SessionNotFound(f"no session {session_id}", target=session_id)
        return loads_decimal(path.read_text(encoding="utf-8"))

    def append(self, session_id: str, events: list[dict]) -> dict:
        """Append events atomically and roll the snapshot forward."""
        with self.lock(session_id):
            existing = self.events(session_id)
            expected = existing[-1]["seq"] + 1 if existing else 1
            snapshot = replay(existing) if existing else None
            for i, event in enumerate(events):
                if event["seq"] != expected + i:
                    raise IntegrityError(
                        f"append out of order: got seq {event['seq']}, expected {expected + i}"
                    )
            with self._events_path(session_id).open("a", encoding="utf-8") as handle:
                for event in events:
                    handle.write(dumps_canonical(event, indent=None) + "\n")
                handle.flush()
            for event in events:
                snapshot = reduce_event(snapshot, event)
            self._snapshot_path(session_id).write_text(
                dumps_canonical(snapshot) + "\n", encoding="utf-8"
            )
            return snapshot

    def replay(self, session_id: str) -> Optional[dict]:
        return replay(self.events(session_id))
