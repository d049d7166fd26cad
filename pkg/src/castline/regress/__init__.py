"""Forward dynamics regressors mapping a casting action to its final endpoint."""
from .data import CapacityError, ForwardModel, ModelStateError, Normalizer, RegressionDataset, combine_datasets
from .gp import GPNumericError, GPRegressor, gp_fit
from .nn import MLP, PRESETS, NNConfig, TrainingDiverged, nn_train, weighted_loss


def predict(model: ForwardModel, a):
    """Predicted final endpoint of action ``a``."""
    return model.predict(a)


__all__ = [
    "CapacityError",
    "ForwardModel",
    "GPNumericError",
    "GPRegressor",
    "MLP",
    "ModelStateError",
    "NNConfig",
    "Normalizer",
    "PRESETS",
    "RegressionDataset",
    "TrainingDiverged",
    "combine_datasets",
    "gp_fit",
    "nn_train",
    "predict",
    "weighted_loss",
]
