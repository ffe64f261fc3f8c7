"""Estimator families: ridge regression, MLP and LSTM."""
from .gradcheck import grad_check
from .losses import LOSSES, loss, loss_grad
from .lstm import LstmModel
from .mlp import MlpModel
from .network import Network
from .optim import Adam
from .ridge import RidgeModel, ridge_fit, ridge_gradient, ridge_objective
from .serialize import dumps, load_model, loads, save_model
from .train import TrainHistory, TrainSpec, train

__all__ = [
    "Adam",
    "LOSSES",
    "LstmModel",
    "MlpModel",
    "Network",
    "RidgeModel",
    "TrainHistory",
    "TrainSpec",
    "dumps",
    "grad_check",
    "load_model",
    "loads",
    "loss",
    "loss_grad",
    "ridge_fit",
    "ridge_gradient",
    "ridge_objective",
    "save_model",
    "train",
]
