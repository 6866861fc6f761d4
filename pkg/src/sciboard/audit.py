"""Run-level audit log.

Every object the pipeline drops (unparseable tuple, discarded duplicate,
non-numeric board value, unmatched entity) lands here with a reason, so a run
can always account for its inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AuditEntry:
    stage: str
    reason: str
    detail: str
    paper_id: str | None = None

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"stage": self.stage, "reason": self.reason, "detail": self.detail}
        if self.paper_id is not None:
            out["paper_id"] = self.paper_id
        return out


@dataclass
class AuditLog:
    entries: list[AuditEntry] = field(default_factory=list)

    def add(self, stage: str, reason: str, detail: str, paper_id: str | None = None) -> None:
        entry = AuditEntry(stage=stage, reason=reason, detail=detail, paper_id=paper_id)
        self.entries.append(entry)
        logger.warning("%s: %s (%s)%s", stage, reason, detail, f" [{paper_id}]" if paper_id else "")

    def to_json(self) -> list[dict[str, Any]]:
        return [entry.to_json() for entry in self.entries]

    def __len__(self) -> int:
        return len(self.entries)
