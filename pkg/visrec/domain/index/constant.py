INDEX_MAGIC = b"VRIDX01"
INDEX_FORMAT_VERSION = 1

# matches the recall@20 evaluation
DEFAULT_K = 20
