FULL_SCALE_K = 1000
FULL_SCALE_POSITIVE = 200
FULL_SCALE_RANK_LO = 500
FULL_SCALE_RANK_HI = 1000

# below this many same-group items the pool sizes are scaled down
SMALL_CORPUS_LIMIT = 1250

DEFAULT_IN_CLASS_MIX = 0.3

# LAB histogram: 8 bins per axis over L in [0, 100] and a, b in [-110, 110]
HIST_BINS = 8
L_RANGE = (0.0, 100.0)
AB_RANGE = (-110.0, 110.0)

# per-channel tolerance of the border-seeded background flood fill
BACKGROUND_TOLERANCE = 12

# resampling attempts per requested triplet before giving up on a pool
MAX_ATTEMPTS_PER_TRIPLET = 20
