from fastapi import status

from visrec.core.exception.base import BaseCustomException


class UnknownBissError(BaseCustomException):
    def __init__(self, name: str):
        super().__init__(
            status_code=status.HTTP_400_BAD_REQUEST,
            code="UNKNOWN_BISS",
            detail=f"Unknown BISS {name!r}; expected 'colorhist' or 'embed:<model path>'",
        )


class RankSizeError(BaseCustomException):
    def __init__(self, k: int, corpus_size: int):
        super().__init__(
            status_code=status.HTTP_400_BAD_REQUEST,
            code="BAD_K",
            detail=f"K={k} must be at most corpus size - 1 = {corpus_size - 1}",
        )


class RankingMismatchError(BaseCustomException):
    def __init__(self, reason: str):
        super().__init__(status_code=status.HTTP_400_BAD_REQUEST, code="RANKING_MISMATCH", detail=reason)


class EmptyPositivePoolError(BaseCustomException):
    def __init__(self, query_id: str):
        super().__init__(
            status_code=status.HTTP_400_BAD_REQUEST,
            code="EMPTY_POOL",
            detail=f"Positive pool of query {query_id} is empty",
        )


class StaleVettingError(BaseCustomException):
    def __init__(self, key: tuple[str, str, str]):
        super().__init__(
            status_code=status.HTTP_400_BAD_REQUEST,
            code="STALE_VETTING",
            detail=f"Vetting record {list(key)} matches no candidate triplet",
        )
