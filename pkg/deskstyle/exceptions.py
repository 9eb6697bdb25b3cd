class DeskstyleError(Exception):
    """Base class for every error raised by deskstyle"""


class DimensionError(DeskstyleError, ValueError):
    """Tensor shapes do not fit the operation"""


class ParameterError(DeskstyleError, ValueError):
    """A scalar argument is outside its valid range"""


class HookContractError(DeskstyleError, ValueError):
    """An attention hook returned keys or values of the wrong shape"""


class CaptureConflictError(DeskstyleError, KeyError):
    """A snapshot was written twice for the same (block, timestep), or after freezing"""


class InjectionMissError(DeskstyleError, KeyError):
    """Injection needed a snapshot that was never captured"""


class ImageFormatError(DeskstyleError, ValueError):
    """The image file is well formed but uses an unsupported variant"""


class ImageParseError(DeskstyleError, ValueError):
    """The image file is malformed

    Attributes:
        offset (int): Byte offset at which parsing failed
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class StageError(DeskstyleError):
    """A pipeline stage failed

    Attributes:
        stage (str): Name of the failing stage
    """

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"Stage '{stage}' failed: {cause}")
        self.stage = stage


def shape_mismatch(what: str, a, b) -> DimensionError:
    """Build a DimensionError naming both offending shapes"""
    return DimensionError(f"{what}: shape {tuple(a)} does not fit shape {tuple(b)}")
