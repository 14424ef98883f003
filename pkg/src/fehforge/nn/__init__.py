"""From-scratch differentiable layers, losses and the Adam optimizer.

All math is double precision; every layer implements an exact backward pass
verified against central finite differences in the test suite.
"""
from .layers import (BatchNorm1D, Conv1D, Dense, Dropout, GlobalAveragePool,
                     Layer, MaxPool1D, ReLU)
from .recurrent import GRU, LSTM, Bidirectional
from .model import (Model, ResidualBlock, InceptionModule,
                    InceptionResidualBlock, Sequential, iter_leaves)
from .losses import weighted_mse
from .optim import Adam

__all__ = [
    "Layer", "Dense", "Conv1D", "BatchNorm1D", "ReLU", "Dropout",
    "MaxPool1D", "GlobalAveragePool", "GRU", "LSTM", "Bidirectional",
    "Sequential", "ResidualBlock", "InceptionModule",
    "InceptionResidualBlock", "Model", "iter_leaves",
    "weighted_mse", "Adam",
]
