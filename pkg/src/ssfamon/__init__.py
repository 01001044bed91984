"""Distributed monitoring of closed-loop processes with sparse slow feature analysis."""

from .config import RunConfig, load_config, parse_config
from .data import RawDataset, load_csv, write_csv
from .errors import (DataError, DegenerateLoadingError, DegenerateSplitError, NumericalError,
                     SsfamonError)
from .monitor import (TwoLevelModel, build_model, classify_status, load_model, monitor_sample,
                      run_monitoring, save_model)
from .partition import partition_variables
from .sfa import fit_sfa
from .ssfa import fit_ssfa

__all__ = [
    "RunConfig", "load_config", "parse_config", "RawDataset", "load_csv", "write_csv",
    "DataError", "DegenerateLoadingError", "DegenerateSplitError", "NumericalError",
    "SsfamonError", "TwoLevelModel", "build_model", "classify_status", "load_model",
    "monitor_sample", "run_monitoring", "save_model", "partition_variables", "fit_sfa",
    "fit_ssfa",
]

__version__ = "0.1.0"
