from __future__ import annotations

from pydantic import BaseModel, ConfigDict


class StrictModel(BaseModel):
    """Frozen config record; unknown fields are rejected."""

    model_config = ConfigDict(frozen=True, extra="forbid")
