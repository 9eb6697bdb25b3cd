from loguru import logger
from tqdm import tqdm

from deskstyle.constants import LOG_LEVEL

# Make loguru inter-operable with tqdm
logger.remove()
logger.add(lambda msg: tqdm.write(msg, end=""), colorize=True, level=LOG_LEVEL)

__all__ = ["logger"]
