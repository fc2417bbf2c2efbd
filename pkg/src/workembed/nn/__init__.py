from .gradcheck import grad_check
from .layers import MLP, Dense, activate, activation_derivative, dense_init
from .optim import Adam
from .serialize import dumps, load_into, params_from_json, params_to_json
from .tensor import Tensor, concat, masked_logsumexp, param

__all__ = [
    "Adam", "Dense", "MLP", "Tensor", "activate", "activation_derivative", "concat",
    "dense_init", "dumps", "grad_check", "load_into", "masked_logsumexp", "param",
    "params_from_json", "params_to_json",
]
