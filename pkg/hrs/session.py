import logging
import os
from typing import Dict, Mapping, Optional, Tuple

from hrs.config import ExperimentConfig, config_hash, load_experiment, write_config
from hrs.data import ForecastDataset, build_dataset, load_sources
from hrs.errors import DataError
from hrs.loss import SalParams
from hrs.model import HrsConfig, ModelParams
from hrs.render import RenderCache
from hrs.storage import CheckpointStore, RecordStore, file_digest

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
CONFIG_FILE = "config.env"


def configure_logging(level: str, verbose: bool = False) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, level), format=LOG_FORMAT
    )
    # matplotlib's font manager is chatty at DEBUG
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


class Session:
    """Configuration and stores shared by every command of one invocation."""

    def __init__(self, cfg: ExperimentConfig):
        self.use(cfg)
        self.cache = RenderCache()

    def use(self, cfg: ExperimentConfig) -> None:
        self.cfg = cfg
        self.flat = cfg.to_flat()
        self.records = RecordStore(self.flat)
        self.checkpoints = CheckpointStore(self.flat)
        self.inputs: Dict[str, dict] = {}

    @classmethod
    def open(
        cls,
        config_path=None,
        seed: Optional[int] = None,
        out_dir: Optional[str] = None,
        verbose: bool = False,
    ) -> "Session":
        overrides = {} if out_dir is None else {"OUT_DIR": out_dir}
        cfg = load_experiment(config_path, **overrides)
        if seed is not None:
            cfg = cfg.with_seed(seed)
        configure_logging(cfg.log_level, verbose)
        logger.debug(f"Configuration hash {config_hash(cfg.to_flat())}")
        return cls(cfg)

    def replay(self, flat: Mapping[str, object]) -> None:
        """Adopt a recorded configuration but keep this invocation's OUT_DIR."""
        cfg = ExperimentConfig.from_config({**flat, "OUT_DIR": self.cfg.out_dir})
        self.use(cfg)

    def _input(self, ref: str, path: str) -> str:
        self.inputs[ref] = {"path": path, "sha256": file_digest(path)}
        return path

    def load_checkpoint(
        self, ref: str
    ) -> Tuple[ModelParams, HrsConfig, Optional[SalParams]]:
        return self.checkpoints.load(self._input(ref, self.checkpoints.resolve(ref)))

    def read_records(self, ref: str):
        return self.records.read(self._input(ref, self.records.resolve(ref)))

    def dataset(self, model_cfg: Optional[HrsConfig] = None) -> ForecastDataset:
        model_cfg = model_cfg or self.cfg.model
        data = self.cfg.data
        return build_dataset(
            load_sources(data, self.cfg.synth),
            model_cfg.lookback,
            model_cfg.horizon,
            model_cfg.render,
            data.ratios,
            data.stride,
            self.cache,
        )

    def finish(self, command: str, params: Mapping) -> str:
        os.makedirs(self.cfg.out_dir, exist_ok=True)
        config_path = self.records.path(CONFIG_FILE)
        write_config(config_path, self.cfg)
        self.records.track(config_path)
        return self.records.write_manifest(
            command,
            params,
            self.flat,
            config_hash({k: v for k, v in self.flat.items() if k != "OUT_DIR"}),
            self.cfg.seed,
            extra={"inputs": self.inputs},
        )


def pin_inputs(value, inputs: Mapping[str, dict]):
    """
    Replace input references recorded in a manifest by the absolute paths they
    resolved to, after checking that the files still hold the same bytes.
    """
    if isinstance(value, dict):
        return {k: pin_inputs(v, inputs) for k, v in value.items()}
    if isinstance(value, list):
        return [pin_inputs(v, inputs) for v in value]
    if not isinstance(value, str) or value not in inputs:
        return value
    path, digest = inputs[value]["path"], inputs[value]["sha256"]
    if not os.path.isfile(path):
        raise DataError(f"recorded input {path} no longer exists")
    if file_digest(path) != digest:
        raise DataError(f"recorded input {path} changed since the manifest was written")
    return path
