from pydantic import BaseModel, Field


class PartitionStatsDto(BaseModel):
    category_group: str = Field(..., examples=["clothing"])
    vertical: str = Field(..., examples=["shirt"])
    gender: str = Field(..., examples=["female"])
    items: int = Field(..., examples=[412])


class StatsResponse(BaseModel):
    generation: int = Field(..., examples=[3])
    items: int = Field(..., examples=[1000])
    partitions: list[PartitionStatsDto] = Field(...)
    uptime_seconds: float = Field(..., examples=[3600.5])
    requests: dict[str, int] = Field(..., examples=[{"similar": 10, "extract": 2, "stats": 1}])


class HealthResponse(BaseModel):
    status: str = Field("ok")
    generation: int = Field(..., examples=[3])
