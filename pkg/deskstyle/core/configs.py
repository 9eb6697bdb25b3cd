from pathlib import Path
from typing import Any, Dict, FrozenSet

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing_extensions import Annotated

from deskstyle import constants
from deskstyle.core.attention import BlockId
from deskstyle.core.diffusion import SpiConfig
from deskstyle.core.enums import AblationVariant, DenoiserKind, InjectionPreset
from deskstyle.core.style import CaAdainParams, InjectionConfig, parse_blocks
from deskstyle.utils import read_key_value_file

Seed = Annotated[int, Field(ge=0, le=2**64 - 1)]


def _fill_alpha_pair(data: Dict[str, Any]) -> Dict[str, Any]:
    has_c, has_s = data.get("alpha_c") is not None, data.get("alpha_s") is not None
    if has_c and not has_s:
        data["alpha_s"] = 1.0 - float(data["alpha_c"])
    elif has_s and not has_c:
        data["alpha_c"] = 1.0 - float(data["alpha_s"])
    return data


class StyleTransferConfig(BaseModel):
    """Every user-tunable knob of a style transfer.

    The model handles validation by ensuring:

    - alpha_c and alpha_s sum to one (giving only one of them fills in the other)
    - injection blocks exist in the network (presets, labels like `[5,6]` and lists all work)
    - a single `seed` expands to the weights, codec and embedder seeds
    """

    model_config = ConfigDict(extra="forbid", use_attribute_docstrings=True)

    T: Annotated[int, Field(ge=1, le=constants.VIRTUAL_STEPS)] = constants.DEFAULT_T
    """Number of diffusion steps"""

    spi_n: Annotated[int, Field(ge=0)] = constants.DEFAULT_SPI_N
    """Fixed-point refinements per inversion step"""

    alpha_c: Annotated[float, Field(ge=0.0, le=1.0)] = constants.DEFAULT_ALPHA_C
    """Content weight of CA-AdaIN"""

    alpha_s: Annotated[float, Field(ge=0.0, le=1.0)] = constants.DEFAULT_ALPHA_S
    """Style weight of CA-AdaIN"""

    injection_blocks: FrozenSet[BlockId] = Field(
        default_factory=lambda: InjectionConfig.from_preset(InjectionPreset.late).blocks
    )
    """Blocks receiving the style image's self-attention keys and values (default: up-5, up-6)"""

    guidance_scale: Annotated[float, Field(ge=0.0)] = constants.DEFAULT_GUIDANCE_SCALE
    """Classifier-free guidance scale used while sampling"""

    prompt_content: str = ""
    """Prompt describing the content image"""

    prompt_style: str = ""
    """Prompt describing the style image"""

    weights_seed: Seed = constants.WEIGHTS_SEED
    """Seed of the denoiser weights"""

    codec_seed: Seed = constants.CODEC_SEED
    """Seed of the latent codec"""

    embedder_seed: Seed = constants.EMBEDDER_SEED
    """Seed of the image embedder"""

    sgsa: bool = True
    """Inject style keys/values into self-attention while sampling"""

    spi: bool = True
    """Refine inversion steps (off means plain DDIM inversion)"""

    ca_adain: bool = True
    """Initialize with content-aware AdaIN (off means plain AdaIN)"""

    dfca: bool = True
    """Attach content and style image streams to cross-attention"""

    denoiser: DenoiserKind = DenoiserKind.toy
    """Noise predictor to run"""

    patch_size: Annotated[int, Field(ge=1)] = constants.PATCH_SIZE
    """Patch edge length of the latent codec"""

    linear_rho: Annotated[float, Field(gt=0.0)] = constants.LINEAR_RHO
    """Spectral norm of the linear denoiser"""

    diagnostics: bool = True
    """Also reconstruct the content image and report its round-trip error"""

    @model_validator(mode="before")
    @classmethod
    def expand_seed_and_alpha(cls, data: Any):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        seed = data.pop("seed", None)
        if seed is not None:
            seed = int(seed)
            data.setdefault("weights_seed", seed)
            data.setdefault("codec_seed", seed + 1)
            data.setdefault("embedder_seed", seed + 2)
        return _fill_alpha_pair(data)

    @field_validator("injection_blocks", mode="before")
    @classmethod
    def blocks_valid(cls, v: Any):
        # Accept presets, labels and lists, turn into a set of BlockIds
        return parse_blocks(v)

    @model_validator(mode="after")
    def check_alpha_sum(self):
        if abs(self.alpha_c + self.alpha_s - 1.0) > constants.ALPHA_SUM_TOLERANCE:
            raise ValueError(
                f"alpha_c + alpha_s must equal 1, got {self.alpha_c} + {self.alpha_s}"
            )
        return self

    @classmethod
    def from_file(cls, path: Path, **overrides: Any) -> "StyleTransferConfig":
        """Read a `key=value` config file; overrides that are not None win

        Args:
            path (Path): Config file
            **overrides: Field values taking precedence over the file

        Raises:
            ValueError: Malformed line or duplicate key
            pydantic.ValidationError: Unknown key or invalid value

        Returns:
            StyleTransferConfig: Validated config
        """
        data: Dict[str, Any] = dict(read_key_value_file(path))
        return cls.from_dict(data, **overrides)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], **overrides: Any) -> "StyleTransferConfig":
        data = dict(data)
        overrides = {k: v for k, v in overrides.items() if v is not None}
        # an explicit alpha on one side re-derives the other
        if "alpha_c" in overrides and "alpha_s" not in overrides:
            data.pop("alpha_s", None)
        if "alpha_s" in overrides and "alpha_c" not in overrides:
            data.pop("alpha_c", None)
        if "seed" in overrides:
            for key in ("weights_seed", "codec_seed", "embedder_seed"):
                data.pop(key, None)
        data.update(overrides)
        return cls.model_validate(data)

    def with_overrides(self, **overrides: Any) -> "StyleTransferConfig":
        """Re-validated copy with some fields replaced"""
        return self.from_dict(
            {name: getattr(self, name) for name in type(self).model_fields}, **overrides
        )

    def ablated(self, variant: AblationVariant) -> "StyleTransferConfig":
        """Copy with the mechanism removed by `variant` switched off"""
        if variant.switch is None:
            return self.model_copy()
        return self.model_copy(update={variant.switch: False})

    @property
    def injection(self) -> InjectionConfig:
        return InjectionConfig(blocks=self.injection_blocks)

    @property
    def ca_adain_params(self) -> CaAdainParams:
        return CaAdainParams(alpha_c=self.alpha_c, alpha_s=self.alpha_s)

    @property
    def spi_config(self) -> SpiConfig:
        """Refinement actually used: `spi_n`, or 0 when the spi switch is off"""
        return SpiConfig(n=self.spi_n if self.spi else 0)
