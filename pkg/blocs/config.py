import configparser
import logging
from typing import Callable, List, Optional, TypeVar

from .dcvs import DcvsConfig
from .exceptions import *
from .nlm import NlmParams
from .patches import PatchConfig
from .refine import REFINE_MODES, STILL_METHODS, RefineParams
from .tv import TvParams

logger = logging.getLogger(__name__)

__all__ = ["METHODS", "ExperimentConfig", "load_config", "parse_list"]

METHODS = STILL_METHODS + ["dcvs"]

class ExperimentConfig:
    """
    Everything an experiment needs, usually loaded from an INI file by
    load_config().

    The file has the following structure:

    A "general" section which contains:
    - method - one of METHODS (default: cst)
    - block_side - side of the sensing blocks (default: 32)
    - block_sides (optional) - comma separated block sides to sweep over,
      overriding block_side
    - subrates - comma separated subrates (default: 0.1, 0.2, 0.3, 0.4)
    - seed - seed of the sensing operators (default: 0)
    - out - output directory (default: the current directory)
    - workers - number of cells recovered concurrently (default: 1)
    - save_images - write every recovered image to out (default: yes)
    - record_runtime - fill the runtime column of the results (default: yes)

    An "inputs" section listing one image path per line.

    The "tv", "nlm", "patches", "refine" and "dcvs" sections hold the solver
    parameters; all of them are optional.
    """

    GENERAL_SECTION = "general"
    INPUTS_SECTION = "inputs"
    TV_SECTION = "tv"
    NLM_SECTION = "nlm"
    PATCHES_SECTION = "patches"
    REFINE_SECTION = "refine"
    DCVS_SECTION = "dcvs"

    SECTIONS = [GENERAL_SECTION, INPUTS_SECTION, TV_SECTION, NLM_SECTION,
            PATCHES_SECTION, REFINE_SECTION, DCVS_SECTION]

    def __init__(self,
            inputs: Optional[List[str]] = None,
            method: str = "cst",
            block_side: int = 32,
            subrates: Optional[List[float]] = None,
            seed: int = 0,
            out: str = ".",
            workers: int = 1,
            block_sides: Optional[List[int]] = None,
            save_images: bool = True,
            record_runtime: bool = True,
            tv: Optional[TvParams] = None,
            patches: Optional[PatchConfig] = None,
            refine: Optional[RefineParams] = None,
            dcvs: Optional[DcvsConfig] = None,
            ) -> None:
        self.inputs = inputs if inputs is not None else []
        self.method = method
        self.block_side = block_side
        self.subrates = subrates if subrates is not None else [0.1, 0.2, 0.3, 0.4]
        self.seed = seed
        self.out = out
        self.workers = workers
        self.block_sides = block_sides
        self.save_images = save_images
        self.record_runtime = record_runtime
        self.tv = tv if tv is not None else TvParams()
        self.patches = patches if patches is not None else PatchConfig()
        self.refine = refine if refine is not None else RefineParams(patches=self.patches)
        self.dcvs = dcvs if dcvs is not None else DcvsConfig()

        self.validate()

    def validate(self) -> None:
        self.method = self.method.lower()
        if self.method not in METHODS:
            raise ConfigError((f"unknown method {self.method!r}, expected one"
                    f" of {', '.join(METHODS)}"))
        for subrate in self.subrates:
            if not 0 < subrate <= 1:
                raise ConfigError(f"subrate must be in (0, 1], got {subrate}")
        if not self.subrates:
            raise ConfigError("at least one subrate is needed")
        for side in self.sides:
            if side < 1:
                raise ConfigError(f"block side must be positive, got {side}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    @property
    def sides(self) -> List[int]:
        """
        The block sides an experiment sweeps over.
        """

        if self.block_sides:
            return self.block_sides
        return [self.block_side]

    @property
    def refine_mode(self) -> Optional[str]:
        return self.method if self.method in REFINE_MODES else None

    @classmethod
    def from_config(cls, config: configparser.ConfigParser) -> "ExperimentConfig":
        for name in cls.SECTIONS:
            if not config.has_section(name):
                config.add_section(name)

        general = config[cls.GENERAL_SECTION]
        try:
            nlm = NlmParams.from_section(config[cls.NLM_SECTION])
            tv = TvParams.from_section(config[cls.TV_SECTION], nlm)
            patches = PatchConfig.from_section(config[cls.PATCHES_SECTION])
            refine = RefineParams.from_section(config[cls.REFINE_SECTION], patches)
            dcvs = DcvsConfig.from_section(config[cls.DCVS_SECTION], tv, refine,
                    patches)

            return cls(
                    inputs=list(config[cls.INPUTS_SECTION].keys()),
                    method=_get(general, "method", "cst"),
                    block_side=int(_get(general, "block_side", "32")),
                    subrates=parse_list(_get(general, "subrates", "0.1, 0.2, 0.3, 0.4"), float),
                    seed=int(_get(general, "seed", "0")),
                    out=_get(general, "out", "."),
                    workers=general.getint("workers", 1),
                    block_sides=parse_list(general.get("block_sides", ""), int) or None,
                    save_images=general.getboolean("save_images", True),
                    record_runtime=general.getboolean("record_runtime", True),
                    tv=tv,
                    patches=patches,
                    refine=refine,
                    dcvs=dcvs,
            )
        except ValueError as e:
            raise ConfigError(f"invalid value in config file: {e}")

def _get(section: configparser.SectionProxy, key: str, default: str) -> str:
    value = section.get(key)
    if value is None:
        logger.warning((f"{key!r} not set in config file. Defaulting to"
                f" {default!r}"))
        return default
    return value

T = TypeVar("T")

def parse_list(text: str, convert: Callable[[str], T]) -> List[T]:
    return [convert(item) for item in text.split(",") if item.strip()]

def load_config(path: Optional[str] = None) -> ExperimentConfig:
    """
    Load an ExperimentConfig from an INI file, or the defaults if path is
    None.
    """

    if path is None:
        return ExperimentConfig()

    config = configparser.ConfigParser(allow_no_value=True)
    # Input paths are case sensitive
    config.optionxform = str  # type: ignore
    try:
        read = config.read(path)
    except configparser.Error as e:
        raise ConfigError(f"malformed config file {path!r}: {e}")
    if not read:
        raise ConfigError(f"could not read config file {path!r}")

    logger.info(f"Loaded config from {path!r}")
    return ExperimentConfig.from_config(config)
