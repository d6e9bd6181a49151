"""Bayesian spatial prediction from repeated small subsamples of a large dataset."""
from .covariogram import Covariogram
from .dataset import SpatialDataset, read_csv, write_csv
from .designs import DesignKind, DesignSpec, draw, draw_srs, draw_stratified, equal_allocation
from .errors import SDSMError
from .metrics import ScoreReport, score_report
from .params import Theta
from .properties import TrueModelSpec, design_data_moments, sill_nugget_range, srs_moments, strat_moments
from .sampler import ChainOutput, ModelConfig, PredictionTarget, run_chains, run_composite
from .simulator import SimConfig, synthesize

__version__ = "0.1.0"

__all__ = [
    "ChainOutput",
    "Covariogram",
    "DesignKind",
    "DesignSpec",
    "ModelConfig",
    "PredictionTarget",
    "SDSMError",
    "ScoreReport",
    "SimConfig",
    "SpatialDataset",
    "Theta",
    "TrueModelSpec",
    "design_data_moments",
    "draw",
    "draw_srs",
    "draw_stratified",
    "equal_allocation",
    "read_csv",
    "run_chains",
    "run_composite",
    "score_report",
    "sill_nugget_range",
    "srs_moments",
    "strat_moments",
    "synthesize",
    "write_csv",
]
