STORE_MAGIC = b"VRFS001"

DEFAULT_REFRESH_INTERVAL_SECONDS = 30 * 60
DEFAULT_MAX_BATCH = 10_000

# how often the worker polls the event log for new lines
TAIL_POLL_SECONDS = 0.05
