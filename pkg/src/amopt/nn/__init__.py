from .layers import (
    DenseLayer,
    GruLayer,
    LstmLayer,
    SelfAttentionLayer,
    dense_forward,
    gru_cell_forward,
    lstm_cell_forward,
    self_attention_forward,
)
from .model import (
    ARCHITECTURES,
    ModelParameters,
    NetworkConfig,
    attention_weights,
    backward,
    forward,
    init_model,
    loss_and_gradients,
    mse_loss,
)
from .serialize import load_model, model_from_dict, model_to_dict, save_model

__all__ = [
    "ARCHITECTURES", "DenseLayer", "GruLayer", "LstmLayer", "ModelParameters", "NetworkConfig",
    "SelfAttentionLayer", "attention_weights", "backward", "dense_forward", "forward",
    "gru_cell_forward", "init_model", "load_model", "loss_and_gradients", "lstm_cell_forward",
    "model_from_dict", "model_to_dict", "mse_loss", "save_model", "self_attention_forward",
]
