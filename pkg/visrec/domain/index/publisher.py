import logging
import threading
from collections.abc import Callable

from visrec.domain.index.knn import KnnIndex

logger = logging.getLogger(__name__)


class GenerationPublisher:
    """Holds the serving generation. Readers take one reference and keep it for the whole request."""

    def __init__(self, index: KnnIndex):
        self._current = index
        self._lock = threading.Lock()
        self._listeners: list[Callable[[KnnIndex], None]] = []

    def current(self) -> KnnIndex:
        # a single attribute read, so a reader sees either the old or the new generation
        return self._current

    def publish(self, index: KnnIndex) -> None:
        with self._lock:
            if index.generation <= self._current.generation and index is not self._current:
                raise ValueError(
                    f"generation {index.generation} is not newer than the published {self._current.generation}"
                )
            self._current = index
            listeners = list(self._listeners)
        logger.info(f"Published generation {index.generation} ({len(index)} items)")
        for listener in listeners:
            listener(index)

    def subscribe(self, listener: Callable[[KnnIndex], None]) -> None:
        with self._lock:
            self._listeners.append(listener)
