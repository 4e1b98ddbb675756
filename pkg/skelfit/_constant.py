import torch

DTYPE = torch.float64

UNIT_TOLERANCE = 1e-9
SIMPLEX_TOLERANCE = 1e-6
MIN_POSITIVE = 1e-6
DEPTH_EPSILON = 1e-9

# soft rasterizer: pairs with d^2 / sigma above this contribute < 1e-13
SOFT_CUTOFF = 30.0

# Middlebury flow files
FLO_MAGIC = 202021.25
FLO_UNKNOWN = 1e10
FLO_UNKNOWN_THRESHOLD = 1e9

EMBEDDING_MAGIC = b"EMB1"
SHAPE_SCHEMA_VERSION = 1

METRIC_HEADER = "miou,mcham,joint,skinning,reanim"
HISTORY_HEADER = "epoch,total,mask,flow,smooth,symm"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
