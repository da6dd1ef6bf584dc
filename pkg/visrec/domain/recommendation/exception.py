from fastapi import status

from visrec.core.exception.base import BaseCustomException


class KTooLargeError(BaseCustomException):
    def __init__(self, k: int, index_k: int):
        super().__init__(
            status_code=status.HTTP_400_BAD_REQUEST,
            code="K_TOO_LARGE",
            detail=f"k={k} exceeds the neighbor lists of the index (k={index_k})",
        )


class RequestTimeoutError(BaseCustomException):
    def __init__(self, timeout: float):
        super().__init__(
            status_code=status.HTTP_504_GATEWAY_TIMEOUT,
            code="TIMEOUT",
            detail=f"Request did not finish within {timeout:g}s",
        )
