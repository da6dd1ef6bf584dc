MODEL_MAGIC = b"VRNET01"
MODEL_FORMAT_VERSION = 1

DEFAULT_MARGIN = 0.2
DEFAULT_INPUT_SIZE = 32
DEFAULT_REDUCED_DIM = 64

# unit-norm tolerance for emitted embeddings
NORM_TOLERANCE = 1e-5
# below this norm a vector is treated as zero and left unnormalized
MIN_NORM = 1e-12

PROJECTION_WEIGHT = "projection.w"
PROJECTION_BIAS = "projection.b"

FORWARD_BATCH_SIZE = 64
