from .tensor import ParamTensor, log_softmax, parameter
from .pointops import ball_query_group, farthest_point_sample, three_nn_interpolate
from .layers import (FeaturePropagation, Linear, SASpec, SetAbstraction,
                     SharedMLP, ShapeMismatchError)
from .optim import Adam
from .checkpoint import CheckpointError, load_arrays, save_arrays

__all__ = [
    "ParamTensor", "log_softmax", "parameter",
    "ball_query_group", "farthest_point_sample", "three_nn_interpolate",
    "FeaturePropagation", "Linear", "SASpec", "SetAbstraction", "SharedMLP",
    "ShapeMismatchError", "Adam", "CheckpointError", "load_arrays", "save_arrays",
]
