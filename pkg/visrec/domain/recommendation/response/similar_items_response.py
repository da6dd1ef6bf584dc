from typing import Literal

from pydantic import BaseModel, Field


class ItemMetadataDto(BaseModel):
    category_group: str = Field(..., examples=["clothing"])
    vertical: str = Field(..., examples=["shirt"])
    gender: str = Field(..., examples=["female"])


class SimilarItemDto(BaseModel):
    id: str = Field(..., examples=["c4-0012"])
    distance: float = Field(..., examples=[0.1832])
    metadata: ItemMetadataDto = Field(...)


class SimilarItemsResponse(BaseModel):
    query_id: str = Field(..., examples=["c4-0007"])
    items: list[SimilarItemDto] = Field(...)
    generation: int = Field(..., examples=[3])
    # live k-NN over an uploaded image is the index query command, never a service response
    served_from: Literal["cache"] = Field("cache")
