import logging

from .cli import *
from .config import *
from .dcvs import *
from .events import *
from .exceptions import *
from .experiment import *
from .fileio import *
from .image import *
from .metrics import *
from .nlm import *
from .operators import *
from .patches import *
from .refine import *
from .sensing import *
from .trace import *
from .tv import *
from .util import *

__all__ = ["STYLE", "FORMAT", "DATE_FORMAT", "FORMATTER", "enable_logging"]

__all__ += cli.__all__
__all__ += config.__all__
__all__ += dcvs.__all__
__all__ += events.__all__
__all__ += exceptions.__all__
__all__ += experiment.__all__
__all__ += fileio.__all__
__all__ += image.__all__
__all__ += metrics.__all__
__all__ += nlm.__all__
__all__ += operators.__all__
__all__ += patches.__all__
__all__ += refine.__all__
__all__ += sensing.__all__
__all__ += trace.__all__
__all__ += tv.__all__
__all__ += util.__all__

STYLE = "{"
FORMAT = "{asctime} [{levelname:<7}] <{name}>: {message}"
DATE_FORMAT = "%F %T"

FORMATTER = logging.Formatter(
        fmt=FORMAT,
        datefmt=DATE_FORMAT,
        style=STYLE
)

def enable_logging(name: str = "blocs", level: int = logging.INFO) -> None:
    handler = logging.StreamHandler()
    handler.setFormatter(FORMATTER)

    logger = logging.getLogger(name)
    logger.setLevel(level)
    logger.addHandler(handler)
