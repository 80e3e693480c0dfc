"""
Run Configuration
=================
Per-run settings loaded from a flat text file of `section.key = value` lines
(`#` starts a comment), overridden by `--set section.key=value` flags.

Precedence: --set / --seed / --out  >  config file  >  defaults.

All randomness in a run derives from `seed`:

    noise seed   noise.seed if given, else seed
    train seed   train.seed if given, else derive(seed, "train")
    split seed   derive(seed, "split")
    init seed    derive(seed, "init")
"""
import logging
import os
from typing import Any, Dict, Iterable, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from data_utils.ecg_loader import LABEL_MODES
from data_utils.dataset_store import FORMATS
from data_utils.windowing import ALIGNMENTS
from dsp.noise_synth import NoiseSpec
from dsp.spectral_eval import PsdSettings
from neural.model import ModelArch
from neural.trainer import TrainConfig
from utils.error_handler import ConfigError
from utils.seeding import derive_seed

logger = logging.getLogger(__name__)

EFFECTIVE_CONFIG_NAME = "effective_config.txt"

_NONE_WORDS = ("none", "null", "")


def _none_if_word(v):
    if isinstance(v, str) and v.strip().lower() in _NONE_WORDS:
        return None
    return v


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class DataSection(_Section):
    ecg_csv: Optional[str] = None
    dataset_dir: Optional[str] = None
    model_path: Optional[str] = None
    cycle_id: Optional[str] = None

    @field_validator('*', mode='before')
    @classmethod
    def parse_blank(cls, v):
        return _none_if_word(v)


class IngestSection(_Section):
    input_rate: float = Field(default=125.0, gt=0)
    cycle_length: int = Field(default=3008, ge=2)
    sample_rate: float = Field(default=2000.0, gt=0)
    label_column: str = "auto"
    limit: Optional[int] = Field(default=None, ge=1)

    @field_validator('limit', mode='before')
    @classmethod
    def parse_limit(cls, v):
        return _none_if_word(v)

    @field_validator('label_column')
    @classmethod
    def validate_label_column(cls, v: str) -> str:
        if v not in LABEL_MODES:
            raise ValueError(f"label_column must be one of {LABEL_MODES}")
        return v


class SynthSection(_Section):
    realizations: int = Field(default=100, ge=1)
    format: str = "binary"
    workers: int = Field(default=1, ge=1)

    @field_validator('format')
    @classmethod
    def validate_format(cls, v: str) -> str:
        if v not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}")
        return v


class WindowSection(_Section):
    size: int = Field(default=50, ge=1)
    stride: int = Field(default=1, ge=1)
    alignment: str = "causal"

    @field_validator('alignment')
    @classmethod
    def validate_alignment(cls, v: str) -> str:
        if v not in ALIGNMENTS:
            raise ValueError(f"alignment must be one of {ALIGNMENTS}")
        return v


class ModelSection(_Section):
    filters: int = Field(default=300, ge=1)
    taps: int = Field(default=20, ge=1)
    hidden: int = Field(default=100, ge=1)
    conv_bias: bool = True


class EvalSection(_Section):
    segment_length: int = Field(default=512, ge=8)
    overlap: float = Field(default=0.5, ge=0, lt=1)
    window: str = "hann"
    band_lo: float = Field(default=0.02, ge=0)
    band_hi: float = Field(default=0.05, gt=0)
    ma_window: int = Field(default=50, ge=1)
    split: str = "test"
    max_cycles: Optional[int] = Field(default=None, ge=1)
    slope_lo: float = Field(default=2.5, gt=0)
    slope_hi: float = Field(default=25.0, gt=0)
    knee_plateau: float = Field(default=0.25, gt=0, lt=0.5, description="f/fs above which the PSD is treated as flat")
    knee_tolerance: float = Field(default=0.1, gt=0)
    self_compare: bool = False

    @field_validator('max_cycles', mode='before')
    @classmethod
    def parse_max_cycles(cls, v):
        return _none_if_word(v)

    @field_validator('split')
    @classmethod
    def validate_split(cls, v: str) -> str:
        if v not in ("train", "val", "test", "all"):
            raise ValueError("split must be one of train, val, test, all")
        return v

    @model_validator(mode='after')
    def check_band(self):
        if not self.band_lo < self.band_hi:
            raise ValueError("band_lo must be below band_hi")
        if not self.slope_lo < self.slope_hi:
            raise ValueError("slope_lo must be below slope_hi")
        return self

    def psd_settings(self) -> PsdSettings:
        return PsdSettings(segment_length=self.segment_length, overlap=self.overlap, window=self.window)


class SplitSection(_Section):
    train: float = Field(default=0.8, ge=0)
    val: float = Field(default=0.1, ge=0)
    test: float = Field(default=0.1, ge=0)

    @model_validator(mode='after')
    def check_total(self):
        if self.train + self.val + self.test <= 0:
            raise ValueError("split fractions must sum to a positive value")
        return self

    @property
    def fractions(self) -> Tuple[float, float, float]:
        return (self.train, self.val, self.test)


class RunConfig(BaseModel):
    """Everything one command needs, with defaults at the full-scale values"""
    model_config = ConfigDict(extra='forbid')

    seed: int = Field(default=0, ge=0, lt=2**64)
    out: str = "runs/latest"
    data: DataSection = Field(default_factory=DataSection)
    ingest: IngestSection = Field(default_factory=IngestSection)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    synth: SynthSection = Field(default_factory=SynthSection)
    window: WindowSection = Field(default_factory=WindowSection)
    model: ModelSection = Field(default_factory=ModelSection)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalSection = Field(default_factory=EvalSection)
    split: SplitSection = Field(default_factory=SplitSection)

    @model_validator(mode='after')
    def check_dimensions(self):
        if self.model.taps > self.window.size:
            raise ValueError(f"model.taps ({self.model.taps}) must not exceed window.size ({self.window.size})")
        return self

    # ---- derived settings ----

    def noise_spec(self) -> NoiseSpec:
        if "seed" in self.noise.model_fields_set:
            return self.noise
        return self.noise.model_copy(update={"seed": self.seed})

    def train_config(self) -> TrainConfig:
        if "seed" in self.train.model_fields_set:
            return self.train
        return self.train.model_copy(update={"seed": derive_seed(self.seed, "train")})

    def model_arch(self) -> ModelArch:
        return ModelArch(window=self.window.size, taps=self.model.taps, filters=self.model.filters,
                         hidden=self.model.hidden, conv_bias=self.model.conv_bias,
                         label_alignment=self.window.alignment)

    @property
    def split_seed(self) -> int:
        return derive_seed(self.seed, "split")

    @property
    def init_seed(self) -> int:
        return derive_seed(self.seed, "init")


# ============== Parsing ==============

def parse_config_lines(lines: Iterable[str], source: str = "<config>") -> Dict[str, str]:
    """Flat {key: raw value} from `key = value` lines; later lines win"""
    values = {}
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"Expected 'key = value' at {source}:{number}", details={"line": number})
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"Empty key at {source}:{number}", details={"line": number})
        values[key] = value
    return values


def parse_overrides(pairs: Iterable[str]) -> Dict[str, str]:
    """--set key=value flags"""
    values = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, value = (part.strip() for part in pair.split("=", 1))
        values[key] = value
    return values


def _nest(flat: Dict[str, str]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        parts = key.split(".")
        if len(parts) == 1:
            nested[key] = value
        elif len(parts) == 2:
            section = nested.setdefault(parts[0], {})
            if not isinstance(section, dict):
                raise ConfigError(f"{parts[0]} is not a section", details={"key": key})
            section[parts[1]] = value
        else:
            raise ConfigError(f"Keys have the form section.key, got {key!r}", details={"key": key})
    return nested


def _format_errors(exc: ValidationError) -> List[Dict[str, str]]:
    return [{"key": ".".join(str(p) for p in err["loc"]), "error": err["msg"]} for err in exc.errors()]


def build_run_config(
    config_path: Optional[str] = None,
    overrides: Optional[Iterable[str]] = None,
    seed: Optional[int] = None,
    out: Optional[str] = None,
) -> RunConfig:
    flat: Dict[str, str] = {}
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                flat.update(parse_config_lines(fh, source=config_path))
        except OSError as e:
            raise ConfigError(f"Cannot read config file: {e}", details={"path": config_path})
    flat.update(parse_overrides(overrides))
    if seed is not None:
        flat["seed"] = str(seed)
    if out is not None:
        flat["out"] = out

    try:
        config = RunConfig.model_validate(_nest(flat))
    except ValidationError as e:
        errors = _format_errors(e)
        raise ConfigError(f"Invalid configuration: {errors[0]['key']}: {errors[0]['error']}",
                          details={"errors": errors})
    logger.debug("Built run configuration", extra={"keys_set": sorted(flat)})
    return config


# ============== Effective config dump ==============

def _render(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def flatten_config(config: RunConfig) -> Dict[str, str]:
    """Flat `section.key` view of the effective values, seeds resolved"""
    dumped = config.model_dump()
    dumped["noise"] = config.noise_spec().model_dump()
    dumped["train"] = config.train_config().model_dump()
    flat = {}
    for key, value in dumped.items():
        if isinstance(value, dict):
            for sub, sub_value in value.items():
                flat[f"{key}.{sub}"] = _render(sub_value)
        else:
            flat[key] = _render(value)
    return flat


def dump_effective_config(config: RunConfig, out_dir: str) -> str:
    path = os.path.join(out_dir, EFFECTIVE_CONFIG_NAME)
    flat = flatten_config(config)
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(flat):
            fh.write(f"{key} = {flat[key]}\n")
    return path
