"""Minimal reverse-mode autodiff over float32 numpy, plus a counter PRNG."""

from .engine import Array, Gradients, Tape, TapeError, as_f32, backward, find_tape, stop_gradient
from .gradcheck import central_diff, check_gradients
from .ops import (
    abs_,
    add,
    concat,
    conv2d,
    embedding_gather,
    exp,
    gelu,
    l1_distance,
    layernorm,
    leaky_relu,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    relu,
    reshape,
    scale,
    slice_axis,
    softmax,
    square,
    squared_distance,
    straight_through,
    sub,
    sum_,
    take_along_last,
    tanh,
    transpose,
    upsample2x,
)
from .prng import PrngState, categorical, normal, permutation, randint, substream, uniform

__all__ = [
    "Array", "Gradients", "Tape", "TapeError", "as_f32", "backward", "find_tape",
    "stop_gradient", "central_diff", "check_gradients",
    "abs_", "add", "concat", "conv2d", "embedding_gather", "exp", "gelu",
    "l1_distance", "layernorm", "leaky_relu", "log", "log_softmax", "matmul",
    "mean", "mul", "neg", "relu", "reshape", "scale", "slice_axis", "softmax",
    "square", "squared_distance", "straight_through", "sub", "sum_",
    "take_along_last", "tanh", "transpose", "upsample2x",
    "PrngState", "categorical", "normal", "permutation", "randint", "substream", "uniform",
]
