"""Cell-level downlink quality estimation: KPI labels, spatial context, features and boosted trees."""

__version__ = "0.1.0"

from .data_model import CellRecord, Dataset, filter_eligible, parse_cells, parse_split_manifest
from .evaluation import EvalReport, TargetBins, coverage, mape, random_search, report, stratified_kfold
from .features import MISSING, FeatureConfig, FeatureMatrix, assemble_matrix, build_feature_matrix
from .kpi import ThroughputDistribution, TimeSlotSeries, tmler_x
from .regressor import Ensemble, TrainConfig, fit, predict
from .spatial import CellLayout, SpatialIndex, interferers, neighbors
from .weighting import LdsConfig, lds_weights

__all__ = [
    "CellLayout", "CellRecord", "Dataset", "Ensemble", "EvalReport", "FeatureConfig", "FeatureMatrix",
    "LdsConfig", "MISSING", "SpatialIndex", "TargetBins", "ThroughputDistribution", "TimeSlotSeries",
    "TrainConfig", "assemble_matrix", "build_feature_matrix", "coverage", "filter_eligible", "fit",
    "interferers", "lds_weights", "mape", "neighbors", "parse_cells", "parse_split_manifest", "predict",
    "random_search", "report", "stratified_kfold", "tmler_x",
]
