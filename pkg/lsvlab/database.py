from __future__ import annotations

"""SQLite run ledger for lsvlab."""

import json
from datetime import datetime, timedelta
from pathlib import Path
from typing import Optional

from sqlalchemy import Column, DateTime, Float, Integer, String, Text, create_engine, desc
from sqlalchemy.orm import declarative_base, sessionmaker

from .models import RunManifest

Base = declarative_base()


class RunRecord(Base):
    """SQLAlchemy model for one experiment run."""
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, autoincrement=True)
    kind = Column(String(20), nullable=False)
    config_hash = Column(String(64), nullable=False)
    master_seed = Column(String(24), nullable=False)  # up to 2**64, beyond SQLite INTEGER
    law = Column(String(100))
    status = Column(String(30), nullable=False)
    exit_code = Column(Integer, default=0)
    wall_clock_seconds = Column(Float, default=0.0)
    output_dir = Column(String(500))
    version = Column(String(20))
    summary_json = Column(Text)
    started_at = Column(DateTime, default=datetime.now)


class RunLedger:
    """Append-only record of runs."""

    def __init__(self, db_path: Optional[Path] = None):
        """Open (and create) the ledger.

        Args:
            db_path: Path to SQLite database. Defaults to ~/.lsvlab/runs.db
        """
        if db_path is None:
            db_path = Path.home() / ".lsvlab" / "runs.db"

        db_path = Path(db_path)
        db_path.parent.mkdir(parents=True, exist_ok=True)
        self.db_path = db_path
        self.engine = create_engine(f"sqlite:///{db_path}")
        Base.metadata.create_all(self.engine)
        self.Session = sessionmaker(bind=self.engine)

    def record_run(self, manifest: RunManifest, config_hash: str, output_dir: Path) -> int:
        """Store a finished run.

        Returns:
            The ID of the new row.
        """
        session = self.Session()
        try:
            law = manifest.config.get("law")
            record = RunRecord(
                kind=manifest.kind.value,
                config_hash=config_hash,
                master_seed=str(manifest.config.get("master_seed", 0)),
                law=law if isinstance(law, str) else json.dumps(law),
                status=manifest.status,
                exit_code=manifest.exit_code,
                wall_clock_seconds=manifest.wall_clock_seconds,
                output_dir=str(output_dir),
                version=manifest.version,
                summary_json=json.dumps(manifest.summary, default=str),
                started_at=manifest.started_at,
            )
            session.add(record)
            session.commit()
            return record.id
        finally:
            session.close()

    def recent_runs(self, limit: int = 20, kind: Optional[str] = None) -> list[dict]:
        """Newest runs first."""
        session = self.Session()
        try:
            query = session.query(RunRecord)
            if kind:
                query = query.filter(RunRecord.kind == kind)
            records = query.order_by(desc(RunRecord.started_at), desc(RunRecord.id)).limit(limit).all()
            return [
                {
                    "id": r.id,
                    "kind": r.kind,
                    "config_hash": r.config_hash,
                    "master_seed": int(r.master_seed),
                    "law": r.law,
                    "status": r.status,
                    "exit_code": r.exit_code,
                    "wall_clock_seconds": r.wall_clock_seconds,
                    "output_dir": r.output_dir,
                    "version": r.version,
                    "summary": json.loads(r.summary_json) if r.summary_json else {},
                    "started_at": r.started_at,
                }
                for r in records
            ]
        finally:
            session.close()

    def runs_with_hash(self, config_hash: str) -> list[int]:
        """IDs of earlier runs of an identical config."""
        session = self.Session()
        try:
            rows = session.query(RunRecord.id).filter(RunRecord.config_hash == config_hash).order_by(RunRecord.id)
            return [row.id for row in rows]
        finally:
            session.close()

    def clear_old_runs(self, days: int = 90) -> int:
        """Delete runs older than ``days``; returns the number removed."""
        session = self.Session()
        try:
            cutoff = datetime.now() - timedelta(days=days)
            count = session.query(RunRecord).filter(RunRecord.started_at < cutoff).delete()
            session.commit()
            return count
        finally:
            session.close()
