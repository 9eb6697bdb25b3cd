import os

from deskstyle import __version__

VERSION_STR = __version__.replace(".", "_")  # type: ignore[has-type]

# Noise schedule (scaled-linear betas over a virtual 1000-step ladder)
VIRTUAL_STEPS = 1000
BETA_START = 0.00085
BETA_END = 0.012

# Sampling / inversion defaults
DEFAULT_T = 20
DEFAULT_SPI_N = 5
DEFAULT_ALPHA_C = 0.4
DEFAULT_ALPHA_S = 0.6
DEFAULT_GUIDANCE_SCALE = 3.0
DEFAULT_INJECTION_BLOCKS = ("up-5", "up-6")

# Numerical floor added under every square root that ends up in a denominator
EPS = 1e-8
ALPHA_SUM_TOLERANCE = 1e-9

# Latent codec
PATCH_SIZE = 4
IMAGE_CHANNELS = 3
DEFAULT_IMAGE_SIZE = 32

# Toy denoiser architecture
DOWN_BLOCKS = 2
MID_BLOCKS = 1
UP_BLOCKS = 6
MODEL_WIDTH = 64
NUM_HEADS = 4
CONTEXT_DIM = 32
MLP_RATIO = 2
BRANCH_SCALE = 0.3
OUTPUT_SCALE = 0.5
MAX_TIMESTEP = 1000

# Context stand-ins
TEXT_TOKENS = 8
IMAGE_TOKENS = 4
EMBED_POOL = 8

# Linear oracle denoiser
LINEAR_RHO = 0.5
POWER_ITERATIONS = 500

# Default seeds
WEIGHTS_SEED = 0
CODEC_SEED = 1
EMBEDDER_SEED = 2

# Metrics CSV layout
CSV_COLUMNS = [
    "variant",
    "alpha_c",
    "alpha_s",
    "spi_n",
    "blocks",
    "guidance",
    "recon_error",
    "style_moment_distance",
    "fid",
    "lpips",
    "artfid",
]
CSV_FLOAT_FORMAT = "%.6f"

# Logging
LOG_LEVEL = os.environ.get("DESKSTYLE_LOG_LEVEL", "INFO")
