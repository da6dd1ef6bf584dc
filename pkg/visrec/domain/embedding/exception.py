from fastapi import status

from visrec.core.exception.base import BaseCustomException


class ImageDimensionError(BaseCustomException):
    def __init__(self, expected: tuple[int, int], actual: tuple[int, int]):
        super().__init__(
            status_code=status.HTTP_400_BAD_REQUEST,
            code="IMG_DIM",
            detail=f"Image must be {expected[0]}x{expected[1]} (WxH), got {actual[0]}x{actual[1]}",
        )


class NumericError(BaseCustomException):
    batch_index: int

    def __init__(self, batch_index: int, where: str):
        self.batch_index = batch_index
        super().__init__(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            code="NUMERIC",
            detail=f"Non-finite {where} at batch index {batch_index}",
        )


class TrainingDivergedError(BaseCustomException):
    def __init__(self, epoch: int, batch: int, lr: float, loss: float):
        super().__init__(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            code="DIVERGED",
            detail=f"Training diverged at epoch {epoch}, batch {batch} (lr={lr:g}, loss={loss})",
        )


class EmptyBatchError(BaseCustomException):
    def __init__(self) -> None:
        super().__init__(status_code=status.HTTP_400_BAD_REQUEST, code="EMPTY_BATCH", detail="Triplet batch is empty")


class ModelFileError(BaseCustomException):
    def __init__(self, path: str, reason: str):
        super().__init__(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, code="MODEL_FILE", detail=f"{path}: {reason}"
        )


class ModelNotFoundError(BaseCustomException):
    def __init__(self, group: str | None):
        super().__init__(
            status_code=status.HTTP_404_NOT_FOUND,
            code="MODEL_NOT_FOUND",
            detail=f"No model for category group {group!r} and no default model",
        )
