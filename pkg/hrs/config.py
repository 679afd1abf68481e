"""
Experiment configuration. Files are dotenv-style `KEY=value` lines; values
are Python literals where they parse as one. Keys are sectioned by prefix
(DATA_, SYNTH_, RENDER_, MODEL_, TRAIN_, SAL_, SIM_) plus SEED, OUT_DIR and
LOG_LEVEL. Environment variables prefixed HRS_ override file values.
"""
import ast
import hashlib
import os
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Mapping, Optional

from dotenv import dotenv_values

from hrs.data import DataConfig, SynthConfig
from hrs.errors import ConfigError
from hrs.loss import SalParams
from hrs.model import HrsConfig
from hrs.render import RenderConfig
from hrs.scheduler import ScenarioConfig
from hrs.training import TrainConfig

ENV_PREFIX = "HRS_"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def env(key, default=None, required=True, source: Optional[Mapping[str, str]] = None):
    """
    Retrieves a configuration value and returns Python natives. The (optional)
    default will be returned if the key does not exist.
    """
    source = os.environ if source is None else source
    try:
        value = source[key]
        return ast.literal_eval(value)
    except (SyntaxError, ValueError):
        return value
    except KeyError:
        if default is not None or not required:
            return default
        raise ConfigError(f"Missing required configuration key '{key}'")


def _section(prefix: str, cfg) -> Dict[str, object]:
    return {f"{prefix}{f.name.upper()}": getattr(cfg, f.name) for f in fields(cfg)}


def _build(prefix: str, cls, flat: Mapping[str, object], **extra):
    names = {f.name for f in fields(cls)}
    kwargs = {
        key[len(prefix) :].lower(): value
        for key, value in flat.items()
        if key.startswith(prefix)
    }
    kwargs = {name: value for name, value in kwargs.items() if name in names}
    try:
        return cls(**kwargs, **extra)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {prefix}* setting: {e}") from e


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    model: HrsConfig = field(default_factory=HrsConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    seed: int = 42
    out_dir: str = "runs"
    log_level: str = "INFO"

    @property
    def sal(self) -> SalParams:
        return self.train.sal

    @classmethod
    def from_config(cls, flat: Mapping[str, object]) -> "ExperimentConfig":
        known = set(cls().to_flat())
        unknown = sorted(set(flat) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")

        render = _build("RENDER_", RenderConfig, flat)
        model_flat = {k: v for k, v in flat.items() if k != "MODEL_RENDER"}
        model = _build("MODEL_", HrsConfig, model_flat, render=render)
        sal = _build("SAL_", SalParams, flat)
        train_flat = {k: v for k, v in flat.items() if k != "TRAIN_SAL"}
        train = _build("TRAIN_", TrainConfig, train_flat, sal=sal)
        log_level = str(flat.get("LOG_LEVEL", "INFO")).upper()
        if log_level not in LOG_LEVELS:
            raise ConfigError(
                f"LOG_LEVEL must be one of {LOG_LEVELS}, got {log_level!r}"
            )
        return cls(
            data=_build("DATA_", DataConfig, flat),
            synth=_build("SYNTH_", SynthConfig, flat),
            model=model,
            train=train,
            scenario=_build("SIM_", ScenarioConfig, flat),
            seed=int(flat.get("SEED", 42)),
            out_dir=str(flat.get("OUT_DIR", "runs")),
            log_level=log_level,
        )

    def to_flat(self) -> Dict[str, object]:
        flat: Dict[str, object] = {}
        flat.update(_section("DATA_", self.data))
        flat.update(_section("SYNTH_", self.synth))
        flat.update(_section("RENDER_", self.model.render))
        model = _section("MODEL_", self.model)
        flat.update({k: v for k, v in model.items() if k != "MODEL_RENDER"})
        train = _section("TRAIN_", self.train)
        flat.update({k: v for k, v in train.items() if k != "TRAIN_SAL"})
        flat.update(_section("SAL_", self.train.sal))
        flat.update(_section("SIM_", self.scenario))
        flat.update(
            {"SEED": self.seed, "OUT_DIR": self.out_dir, "LOG_LEVEL": self.log_level}
        )
        return flat

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """One seed for data generation, initialization, shuffling and the fleet."""
        return replace(
            self,
            seed=seed,
            synth=replace(self.synth, seed=seed),
            train=replace(self.train, seed=seed),
            scenario=replace(self.scenario, seed=seed),
        )


def dump_config(flat: Mapping[str, object]) -> str:
    return "".join(f"{key}={flat[key]!r}\n" for key in sorted(flat))


def config_hash(flat: Mapping[str, object]) -> str:
    return hashlib.sha256(dump_config(flat).encode("utf-8")).hexdigest()


def load_config(
    path=None, environ: Optional[Mapping[str, str]] = None
) -> Dict[str, object]:
    """Defaults, then the file at `path`, then HRS_* environment overrides."""
    config = ExperimentConfig().to_flat()
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file {path} does not exist")
        values = dotenv_values(path)
        for key, raw in values.items():
            if raw is None:
                raise ConfigError(f"{path}: key {key} has no value")
            config[key] = env(key, source=values)

    environ = os.environ if environ is None else environ
    overrides = {
        k[len(ENV_PREFIX) :]: v for k, v in environ.items() if k.startswith(ENV_PREFIX)
    }
    for key in overrides:
        config[key] = env(key, source=overrides)
    return config


def load_experiment(
    path=None, environ: Optional[Mapping[str, str]] = None, **overrides
) -> ExperimentConfig:
    return ExperimentConfig.from_config({**load_config(path, environ), **overrides})


def write_config(path, cfg: ExperimentConfig) -> None:
    with open(path, "w") as f:
        f.write(dump_config(cfg.to_flat()))
