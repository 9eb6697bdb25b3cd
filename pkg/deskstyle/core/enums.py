from enum import Enum


class BlockPath(str, Enum):
    """Enumeration for the three stages of the toy UNet.

    Attributes:
        down (str): Downsampling path
        mid (str): Bottleneck
        up (str): Upsampling path
    """

    down = "down"
    mid = "mid"
    up = "up"

    def __format__(self, fmt):
        # Python 3.11 treatment of StrEnum requires overwriting formatting
        return self.value


class DenoiserKind(str, Enum):
    """Which noise predictor the pipeline runs.

    Attributes:
        toy (str): Seeded transformer-UNet with attention hook points
        linear (str): Analytic linear oracle, eps = A x
    """

    toy = "toy"
    linear = "linear"


class AblationVariant(str, Enum):
    """The variants run by an ablation suite, in reporting order.

    Attributes:
        full (str): Every mechanism on
        no_sgsa (str): Style-guided self-attention removed
        no_spi (str): Fixed-point refinement removed (naive inversion)
        no_ca_adain (str): Content-aware AdaIN replaced by plain AdaIN
        no_dfca (str): Image streams dropped from cross-attention
    """

    full = "full"
    no_sgsa = "-SG-SA"
    no_spi = "-SPI"
    no_ca_adain = "-CA-AdaIN"
    no_dfca = "-DF-CA"

    @property
    def switch(self) -> str | None:
        """Name of the StyleTransferConfig switch this variant turns off"""
        return {
            AblationVariant.full: None,
            AblationVariant.no_sgsa: "sgsa",
            AblationVariant.no_spi: "spi",
            AblationVariant.no_ca_adain: "ca_adain",
            AblationVariant.no_dfca: "dfca",
        }[self]

    @property
    def file_stem(self) -> str:
        return "full" if self is AblationVariant.full else self.value.lstrip("-").lower()


class SweepAxis(str, Enum):
    """Axes a parameter sweep can vary.

    Attributes:
        alpha (str): Content weight alpha_c (alpha_s = 1 - alpha_c)
        spi_n (str): Number of fixed-point refinements per inversion step
        blocks (str): Set of up-path blocks receiving style keys/values
        guidance (str): Classifier-free guidance scale
    """

    alpha = "alpha"
    spi_n = "spi_n"
    blocks = "blocks"
    guidance = "guidance"

    def __format__(self, fmt):
        return self.value


class InjectionPreset(str, Enum):
    """Named block sets for style injection.

    Attributes:
        late (str): 5th and 6th up blocks (default)
        up (str): All up blocks
        down (str): All down blocks
        all (str): Every block of the network
    """

    late = "late"
    up = "up"
    down = "down"
    all = "all"
