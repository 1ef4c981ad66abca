"""Training-sample generation, feature selection and the regressor zoo."""
from .oracle import SampleSet, TrainingSample, generate_training_data, optimize_blend_weight
from .selection import (
    RegionModels,
    best_first_feature_count,
    cross_validate,
    mrmr_select,
    train_region_models,
)
from .storage import load_models, read_model, read_samples, save_models, write_model, write_samples
from .zoo import ZOO, Regressor, predict

__all__ = [
    "SampleSet", "TrainingSample", "generate_training_data", "optimize_blend_weight",
    "RegionModels", "best_first_feature_count", "cross_validate", "mrmr_select",
    "train_region_models", "load_models", "read_model", "read_samples", "save_models",
    "write_model", "write_samples", "ZOO", "Regressor", "predict",
]
