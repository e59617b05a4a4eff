import json
import sqlite3
from typing import Any, Dict, List, Optional


def connect(db_path: str) -> sqlite3.Connection:
    conn = sqlite3.connect(db_path)
    conn.row_factory = sqlite3.Row
    return conn


def init_db(conn: sqlite3.Connection) -> None:
    cur = conn.cursor()

    cur.execute(
        """
        CREATE TABLE IF NOT EXISTS runs (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            kind TEXT NOT NULL,
            config_hash TEXT NOT NULL,
            config_json TEXT NOT NULL,
            version TEXT NOT NULL,
            seed INTEGER,
            wall_time REAL,
            summary_json TEXT,
            artifacts_json TEXT,
            created_at TEXT NOT NULL DEFAULT (datetime('now'))
        )
        """
    )

    cur.execute(
        """
        CREATE UNIQUE INDEX IF NOT EXISTS idx_runs_hash
        ON runs(config_hash)
        """
    )

    cur.execute(
        """
        CREATE INDEX IF NOT EXISTS idx_runs_kind
        ON runs(kind)
        """
    )

    conn.commit()


def insert_run(conn: sqlite3.Connection, run: Dict[str, Any]) -> bool:
    """
    Returns True if inserted, False if a run with the same config hash exists (deduped).
    """
    cur = conn.cursor()
    try:
        cur.execute(
            """
            INSERT INTO runs (kind, config_hash, config_json, version, seed, wall_time, summary_json, artifacts_json)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?)
            """,
            (
                run.get("kind"),
                run.get("config_hash"),
                json.dumps(run.get("config", {}), sort_keys=True),
                run.get("version"),
                run.get("seed"),
                run.get("wall_time"),
                json.dumps(run.get("summary", {}), sort_keys=True),
                json.dumps(run.get("artifacts", [])),
            ),
        )
        conn.commit()
        return True
    except sqlite3.IntegrityError:
        return False


def _decode(row: sqlite3.Row) -> Dict[str, Any]:
    out = dict(row)
    out["config"] = json.loads(out.pop("config_json"))
    out["summary"] = json.loads(out.pop("summary_json") or "{}")
    out["artifacts"] = json.loads(out.pop("artifacts_json") or "[]")
    return out


def get_run(conn: sqlite3.Connection, config_hash: str) -> Optional[Dict[str, Any]]:
    cur = conn.cursor()
    cur.execute(
        """
        SELECT id, kind, config_hash, config_json, version, seed, wall_time, summary_json, artifacts_json, created_at
        FROM runs
        WHERE config_hash = ?
        """,
        (config_hash,),
    )
    row = cur.fetchone()
    return _decode(row) if row else None


def get_runs(conn: sqlite3.Connection, kind: Optional[str] = None) -> List[Dict[str, Any]]:
    cur = conn.cursor()
    if kind is None:
        cur.execute(
            """
            SELECT id, kind, config_hash, config_json, version, seed, wall_time, summary_json, artifacts_json, created_at
            FROM runs
            ORDER BY id ASC
            """
        )
    else:
        cur.execute(
            """
            SELECT id, kind, config_hash, config_json, version, seed, wall_time, summary_json, artifacts_json, created_at
            FROM runs
            WHERE kind = ?
            ORDER BY id ASC
            """,
            (kind,),
        )
    rows = cur.fetchall()
    return [_decode(r) for r in rows]
