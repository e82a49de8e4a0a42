"""Minimal numeric core: tensors with reverse-mode gradients, layers, Adam."""
from .layers import (
    GRU,
    MLP,
    Attention,
    BiGRU,
    attend,
    cross_entropy_loss,
    encode_sequence,
    gru_step,
    mlp_bridge,
)
from .params import ParamSet, adam_update
from .tensor import Tensor, no_grad, precision

__all__ = [
    "GRU",
    "MLP",
    "Attention",
    "BiGRU",
    "ParamSet",
    "Tensor",
    "adam_update",
    "attend",
    "cross_entropy_loss",
    "encode_sequence",
    "gru_step",
    "mlp_bridge",
    "no_grad",
    "precision",
]
