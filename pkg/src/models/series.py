"""
Gridded sea-state record models.

Business Context:
- Input rows carry one (Hs, T1) pair per grid cell and time stamp
- Rows are validated one by one so errors can name their line numbers
"""

from datetime import datetime

from pydantic import BaseModel, ConfigDict, Field, field_validator


class SeaStateRecord(BaseModel):
    """One observation of a grid cell at one time."""

    model_config = ConfigDict(frozen=True)

    time: datetime
    lon: float = Field(ge=-360, le=360)
    lat: float = Field(ge=-90, le=90)
    hs: float = Field(gt=0, description="Significant wave height in meters")
    t1: float = Field(gt=0, description="Mean wave period in seconds")

    @field_validator("time", mode="before")
    @classmethod
    def parse_time(cls, v: object) -> object:
        """Accept ISO strings with a trailing Z."""
        if isinstance(v, str) and v.endswith("Z"):
            return v[:-1] + "+00:00"
        return v
