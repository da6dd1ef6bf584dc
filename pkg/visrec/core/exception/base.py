from abc import ABC

from fastapi import status


class BaseCustomException(ABC, Exception):
    status_code: int
    code: str
    detail: str

    def __init__(self, status_code: int, code: str, detail: str) -> None:
        super().__init__(detail)
        self.status_code = status_code
        self.code = code
        self.detail = detail

    def to_body(self) -> dict[str, str]:
        return {"code": self.code, "message": self.detail}

    def __str__(self) -> str:
        return f"{self.status_code} {self.code}: {self.detail}"


class ConfigError(BaseCustomException):
    def __init__(self, detail: str):
        super().__init__(status_code=status.HTTP_400_BAD_REQUEST, code="CONFIG", detail=detail)


class DimensionMismatchError(BaseCustomException):
    def __init__(self, expected: int, actual: int, what: str = "embedding"):
        super().__init__(
            status_code=status.HTTP_400_BAD_REQUEST,
            code="DIM_MISMATCH",
            detail=f"{what} dimension mismatch: expected {expected}, got {actual}",
        )


class CorruptFileError(BaseCustomException):
    def __init__(self, path: str, reason: str):
        super().__init__(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, code="CORRUPT_FILE", detail=f"{path}: {reason}"
        )
