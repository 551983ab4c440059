from .config import ConfigError, ExperimentConfig, dump_config, parse_config
from .dataio import DatasetError, load_dataset_csv, save_dataset_csv
from .main import main, run
from .report import emit_report

__all__ = [
    "ConfigError",
    "DatasetError",
    "ExperimentConfig",
    "dump_config",
    "emit_report",
    "load_dataset_csv",
    "main",
    "parse_config",
    "run",
    "save_dataset_csv",
]
