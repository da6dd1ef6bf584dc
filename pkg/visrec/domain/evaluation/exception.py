from fastapi import status

from visrec.core.exception.base import BaseCustomException


class MissingIdsError(BaseCustomException):
    def __init__(self, missing: list[str]):
        shown = ", ".join(missing[:20]) + (" ..." if len(missing) > 20 else "")
        super().__init__(
            status_code=status.HTTP_400_BAD_REQUEST,
            code="MISSING_IDS",
            detail=f"{len(missing)} ground-truth id(s) are not in the catalog: {shown}",
        )


class TripletOverlapError(BaseCustomException):
    def __init__(self, count: int):
        super().__init__(
            status_code=status.HTTP_400_BAD_REQUEST,
            code="TRIPLET_OVERLAP",
            detail=f"{count} evaluation triplet(s) also appear in the training set",
        )


class InvalidGroundTruthError(BaseCustomException):
    def __init__(self, reason: str):
        super().__init__(status_code=status.HTTP_400_BAD_REQUEST, code="BAD_GROUND_TRUTH", detail=reason)


class ReportWriteError(BaseCustomException):
    def __init__(self, path: str, reason: str):
        super().__init__(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            code="REPORT_WRITE",
            detail=f"Cannot write report to {path}: {reason}",
        )
