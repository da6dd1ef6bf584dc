from typing import Annotated

from fastapi import Depends, Request

from visrec.domain.recommendation.service import RecommendationService


def get_recommendation_service(request: Request) -> RecommendationService:
    return request.app.state.container.recommendation_service


RecommendationServiceDep = Annotated[RecommendationService, Depends(get_recommendation_service)]
