import json
import logging
import threading
from pathlib import Path

from visrec.core.exception.base import BaseCustomException
from visrec.domain.ingest.constant import TAIL_POLL_SECONDS
from visrec.domain.ingest.entity import IngestionEvent, RefreshPolicy
from visrec.domain.ingest.enum import ApplyOutcome
from visrec.domain.ingest.exception import InvalidEventError, OutOfOrderEventError
from visrec.domain.ingest.service import IngestService, dead_letter

logger = logging.getLogger(__name__)


class EventLogTailer:
    """Follows a JSONL event log; only newline-terminated lines are consumed."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.offset = 0
        self._line_ends: list[int] = []

    def poll(self, max_lines: int) -> list[str]:
        self._line_ends = [self.offset]
        if not self.path.exists():
            return []
        with open(self.path, "rb") as f:
            f.seek(self.offset)
            lines = []
            while len(lines) < max_lines:
                line = f.readline()
                if not line.endswith(b"\n"):
                    break
                self.offset += len(line)
                if line.strip():
                    lines.append(line.decode("utf-8"))
                    self._line_ends.append(self.offset)
        return lines

    def rewind(self, kept: int) -> None:
        """Moves the offset back so only the first ``kept`` lines of the last poll count as read."""
        self.offset = self._line_ends[kept]
        self._line_ends = self._line_ends[: kept + 1]


class IngestionWorker:
    """Consumes the event log and refreshes the index on its own thread.

    Refresh snapshots the store when it starts, so every event applied before
    that moment is in the generation it publishes.
    """

    def __init__(self, tailer: EventLogTailer, ingest_service: IngestService, policy: RefreshPolicy):
        self.tailer = tailer
        self.ingest_service = ingest_service
        self.policy = policy
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    def _parse(self, line: str) -> IngestionEvent | BaseCustomException:
        try:
            row = json.loads(line)
            if not isinstance(row, dict):
                raise InvalidEventError("expected a JSON object")
            return IngestionEvent.from_row(row)
        except json.JSONDecodeError as e:
            return InvalidEventError(str(e))
        except InvalidEventError as e:
            return e

    def _dead_letter_lines(self, lines: list[str], parsed: list[IngestionEvent | BaseCustomException]) -> None:
        for line, result in zip(lines, parsed):
            if isinstance(result, BaseCustomException):
                logger.warning(f"Dead-lettering unparseable event line: {result.detail}")
                dead_letter(self.ingest_service.dead_letter_path, {"line": line.rstrip("\n")}, result)

    def run_once(self) -> dict[ApplyOutcome, int]:
        lines = self.tailer.poll(self.policy.max_batch)
        parsed = [self._parse(line) for line in lines]
        events = [result for result in parsed if isinstance(result, IngestionEvent)]
        try:
            counts = self.ingest_service.consume(events)
        except OutOfOrderEventError:
            # everything before the offending line is committed; the lines after it stay unread
            store = self.ingest_service.store
            kept = len(lines)
            for i, result in enumerate(parsed):
                if isinstance(result, IngestionEvent) and not store.is_consumed(result.seq):
                    kept = i + 1
                    break
            self._dead_letter_lines(lines[:kept], parsed[:kept])
            self.tailer.rewind(kept)
            raise
        self._dead_letter_lines(lines, parsed)
        if events:
            logger.info(
                f"Consumed {len(events)} events: "
                + ", ".join(f"{outcome.value}={count}" for outcome, count in counts.items())
            )
        return counts

    def _consume_loop(self) -> None:
        while not self._stop.is_set():
            try:
                counts = self.run_once()
            except BaseCustomException as e:
                logger.error(f"Ingestion stopped: {e}")
                self._stop.set()
                return
            if not any(counts.values()):
                self._stop.wait(TAIL_POLL_SECONDS)

    def _refresh_loop(self) -> None:
        while not self._stop.wait(self.policy.interval):
            try:
                self.ingest_service.refresh()
            except BaseCustomException as e:
                logger.error(f"Refresh skipped: {e}")

    def start(self) -> None:
        self._stop.clear()
        self._threads = [
            threading.Thread(target=self._consume_loop, name="visrec-ingest", daemon=True),
            threading.Thread(target=self._refresh_loop, name="visrec-refresh", daemon=True),
        ]
        for thread in self._threads:
            thread.start()

    def stop(self, timeout: float | None = None) -> None:
        self._stop.set()
        for thread in self._threads:
            thread.join(timeout)
        self._threads = []

    def is_running(self) -> bool:
        return any(thread.is_alive() for thread in self._threads)

    def run_forever(self) -> None:
        self.start()
        try:
            while self.is_running():
                self._stop.wait(1.0)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()
