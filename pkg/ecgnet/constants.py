"""Constants used throughout the package."""

# Label schemes: class mnemonics in ClassId index order
LABEL_SCHEMES = {
    "mitbih": ("N", "V", "L", "R", "A"),
    "pccd": ("N", "A"),
}

# Sampling rates of the supported databases (Hz)
SAMPLING_RATES = {
    "mitbih": 360,
    "pccd": 300,
}

DEFAULT_WINDOW_SECONDS = 10.0

# (layer_count, channels) per convolutional part; every part ends in a max-pool
CONV_PRESETS = {
    "vgg11": ((1, 64), (1, 128), (2, 256), (2, 512), (2, 512)),
    "vgg13": ((2, 64), (2, 128), (2, 256), (2, 512), (2, 512)),
    "vgg16": ((2, 64), (2, 128), (3, 256), (3, 512), (3, 512)),
}
DEFAULT_SE_POSITIONS = (4, 5)
DEFAULT_SE_REDUCTION = 16
DEFAULT_KERNEL_LEN = 3
DEFAULT_LSTM_HIDDEN = 128
DEFAULT_FC_HIDDEN = (256, 64)
POOL_WINDOW = 2
POOL_STRIDE = 2

# Adam defaults
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Binary formats
CHECKPOINT_MAGIC = b"SEVL"
CHECKPOINT_VERSION = 1
STORE_MAGIC = b"SEGS"
STORE_VERSION = 1

# File names inside output directories
STORE_FILE = "segments.seg"
NORM_STATS_FILE = "norm_stats.txt"
RUN_MANIFEST_FILE = "manifest.txt"
LOSS_FILE = "loss.csv"
SUMMARY_METRICS_FILE = "summary.metrics.csv"
REPORT_COLUMNS = ("class", "acc", "sen", "pre", "f1")
