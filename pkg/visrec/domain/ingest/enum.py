import enum


class EventOp(enum.Enum):
    INSERT = "insert"
    DELETE = "delete"
    UPDATE = "update"


class RecordKind(enum.Enum):
    PUT = "put"
    TOMBSTONE = "tombstone"
    # a dead-lettered event; keeps its seq consumed on replay
    DEAD = "dead"
    # compaction watermark: every seq at or below it is consumed
    CHECKPOINT = "checkpoint"


class ApplyOutcome(enum.Enum):
    APPLIED = "applied"
    SKIPPED = "skipped"
    DEAD_LETTERED = "dead-lettered"
