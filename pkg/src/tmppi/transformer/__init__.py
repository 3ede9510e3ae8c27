from .autodiff import Tensor, no_grad
from .model import (
    TransformerConfig,
    attention,
    decoder_forward,
    encoder_forward,
    forward,
    huber_loss_value,
    init_params,
    positional_encoding,
    predict_autoregressive,
)
from .serialize import load_model, model_summary, save_model
from .train import Adam, TrainConfig, train_model

__all__ = [
    "Tensor",
    "no_grad",
    "TransformerConfig",
    "attention",
    "decoder_forward",
    "encoder_forward",
    "forward",
    "huber_loss_value",
    "init_params",
    "positional_encoding",
    "predict_autoregressive",
    "load_model",
    "model_summary",
    "save_model",
    "Adam",
    "TrainConfig",
    "train_model",
]
