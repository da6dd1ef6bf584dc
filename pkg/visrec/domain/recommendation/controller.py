from fastapi import APIRouter, Query, Request, Response, status
from starlette.concurrency import run_in_threadpool

from visrec.domain.recommendation.dependency import RecommendationServiceDep
from visrec.domain.recommendation.response.similar_items_response import SimilarItemsResponse
from visrec.domain.recommendation.response.stats_response import HealthResponse, StatsResponse

router = APIRouter(tags=["Recommendation"])


@router.get("/similar/{item_id}", status_code=status.HTTP_200_OK, response_model=SimilarItemsResponse)
def get_similar_items(
    item_id: str, recommendation_service: RecommendationServiceDep, k: int | None = Query(None, ge=0)
):
    return recommendation_service.handle_similar(item_id, k)


@router.post("/extract", status_code=status.HTTP_200_OK)
async def extract_embedding(
    request: Request, recommendation_service: RecommendationServiceDep, group: str | None = None
):
    payload = await request.body()
    body = await run_in_threadpool(recommendation_service.handle_extract, payload, group)
    return Response(content=body, media_type="application/json")


@router.get("/stats", status_code=status.HTTP_200_OK, response_model=StatsResponse)
def get_stats(recommendation_service: RecommendationServiceDep):
    return recommendation_service.handle_stats()


@router.get("/health", status_code=status.HTTP_200_OK, response_model=HealthResponse)
def health_check(recommendation_service: RecommendationServiceDep):
    return recommendation_service.handle_health()
