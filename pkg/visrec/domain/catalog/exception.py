from fastapi import status

from visrec.core.exception.base import BaseCustomException


class DuplicateItemError(BaseCustomException):
    def __init__(self, item_id: str):
        super().__init__(
            status_code=status.HTTP_400_BAD_REQUEST, code="DUPLICATE_ID", detail=f"Duplicate item id {item_id}"
        )


class ItemNotFoundError(BaseCustomException):
    def __init__(self, item_id: str):
        super().__init__(
            status_code=status.HTTP_404_NOT_FOUND, code="ITEM_NOT_FOUND", detail=f"Item {item_id} is not found"
        )


class InvalidFilterError(BaseCustomException):
    def __init__(self, key: str):
        super().__init__(
            status_code=status.HTTP_400_BAD_REQUEST,
            code="BAD_FILTER",
            detail=f"Unknown filter key {key!r}; expected one of category_group, vertical, gender",
        )
