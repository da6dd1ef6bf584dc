from fastapi import status

from visrec.core.exception.base import BaseCustomException


class OutOfOrderEventError(BaseCustomException):
    def __init__(self, seq: int, last_seq: int):
        super().__init__(
            status_code=status.HTTP_409_CONFLICT,
            code="OUT_OF_ORDER",
            detail=f"Event seq {seq} arrived after seq {last_seq} and was never consumed",
        )


class InvalidEventError(BaseCustomException):
    def __init__(self, reason: str):
        super().__init__(status_code=status.HTTP_400_BAD_REQUEST, code="BAD_EVENT", detail=f"Invalid event: {reason}")


class RefreshFailedError(BaseCustomException):
    def __init__(self, generation: int, reason: str):
        super().__init__(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            code="REFRESH_FAILED",
            detail=f"Refresh on top of generation {generation} failed, previous generation keeps serving: {reason}",
        )
