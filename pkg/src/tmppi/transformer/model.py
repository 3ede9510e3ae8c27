"""Encoder-decoder sequence model mapping recent states plus an environment
context to a horizon of future controls.

The encoder consumes ``k_past`` state tokens followed by one context token;
the decoder consumes the target control sequence shifted right behind a zero
start token (teacher forcing) or its own predictions one step at a time
(autoregressive inference).  Post-norm residual blocks throughout, matching
the classic layout: sublayer, dropout, add, layer norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

_NEG_INF = -1.0e30  # exp() underflows to exactly 0.0, so masked slots drop out


@dataclass(frozen=True)
class TransformerConfig:
    state_dim: int
    control_dim: int
    context_dim: int
    d_model: int = 256
    num_layers: int = 3
    num_heads: int = 8
    dropout: float = 0.1
    k_past: int = 5
    horizon: int = 20
    d_ff: int = 0  # 0 means 4 * d_model

    def __post_init__(self) -> None:
        if self.d_model % 2 != 0:
            raise ValueError("d_model must be even for the positional encoding")
        if self.d_model % self.num_heads != 0:
            raise ValueError("d_model must be divisible by num_heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if min(self.state_dim, self.control_dim, self.context_dim) < 1:
            raise ValueError("all dimensions must be positive")
        if min(self.k_past, self.horizon, self.num_layers) < 1:
            raise ValueError("k_past, horizon and num_layers must be positive")
        if self.d_ff == 0:
            object.__setattr__(self, "d_ff", 4 * self.d_model)

    @property
    def head_dim(self) -> int:
        return self.d_model // self.num_heads


def positional_encoding(length: int, d_model: int) -> np.ndarray:
    """Sinusoidal table: even dims sin(pos / 10000^(2i/d)), odd dims cos."""
    if d_model % 2 != 0:
        raise ValueError("d_model must be even")
    if length < 1 or d_model < 1:
        raise ValueError("length and d_model must be positive")
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(d_model // 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * i / d_model)
    table = np.empty((length, d_model))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return table


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_in, fan_out))


def init_params(cfg: TransformerConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Fresh parameter set: uniform Glorot weights, zero biases, unit LN gains."""
    d, ff = cfg.d_model, cfg.d_ff
    params: dict[str, np.ndarray] = {
        "enc.embed.state": _glorot(rng, cfg.state_dim, d),
        "enc.embed.context": _glorot(rng, cfg.context_dim, d),
        "dec.embed.control": _glorot(rng, cfg.control_dim, d),
        "head.weight": _glorot(rng, d, cfg.control_dim),
        "head.bias": np.zeros(cfg.control_dim),
    }

    def attention_block(prefix: str) -> None:
        for name in ("wq", "wk", "wv", "wo"):
            params[f"{prefix}.{name}"] = _glorot(rng, d, d)

    def ffn_and_norms(prefix: str, norms: int) -> None:
        params[f"{prefix}.ffn.w1"] = _glorot(rng, d, ff)
        params[f"{prefix}.ffn.b1"] = np.zeros(ff)
        params[f"{prefix}.ffn.w2"] = _glorot(rng, ff, d)
        params[f"{prefix}.ffn.b2"] = np.zeros(d)
        for j in range(norms):
            params[f"{prefix}.norm{j}.gain"] = np.ones(d)
            params[f"{prefix}.norm{j}.bias"] = np.zeros(d)

    for i in range(cfg.num_layers):
        attention_block(f"enc.{i}.self")
        ffn_and_norms(f"enc.{i}", norms=2)
        attention_block(f"dec.{i}.self")
        attention_block(f"dec.{i}.cross")
        ffn_and_norms(f"dec.{i}", norms=3)
    return {name: Tensor(value, requires_grad=True) for name, value in params.items()}


def attention(q, k, v, mask: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product attention: softmax(q k^T / sqrt(d_k)) v.

    Works on plain arrays or Tensors of shape (..., L, d); masked positions
    (additive -inf entries) contribute exactly zero weight.
    """
    q = q if isinstance(q, Tensor) else Tensor(q)
    k = k if isinstance(k, Tensor) else Tensor(k)
    v = v if isinstance(v, Tensor) else Tensor(v)
    d_k = q.shape[-1]
    axes = tuple(range(k.data.ndim - 2)) + (k.data.ndim - 1, k.data.ndim - 2)
    scores = ad.scale(q @ ad.transpose(k, axes), 1.0 / np.sqrt(d_k))
    if mask is not None:
        scores = scores + mask
    return ad.softmax_last(scores) @ v


def _multi_head(
    x_q: Tensor,
    x_kv: Tensor,
    params: dict[str, Tensor],
    prefix: str,
    cfg: TransformerConfig,
    mask: np.ndarray | None,
) -> Tensor:
    """h parallel scaled dot-product attention heads, concatenated and projected."""
    batch, len_q = x_q.shape[0], x_q.shape[1]
    len_k = x_kv.shape[1]
    h, dk = cfg.num_heads, cfg.head_dim

    def split_heads(x: Tensor, length: int) -> Tensor:
        x = ad.reshape(x, (batch, length, h, dk))
        return ad.transpose(x, (0, 2, 1, 3))

    q = split_heads(x_q @ params[f"{prefix}.wq"], len_q)
    k = split_heads(x_kv @ params[f"{prefix}.wk"], len_k)
    v = split_heads(x_kv @ params[f"{prefix}.wv"], len_k)

    mixed = ad.transpose(attention(q, k, v, mask), (0, 2, 1, 3))
    mixed = ad.reshape(mixed, (batch, len_q, cfg.d_model))
    return mixed @ params[f"{prefix}.wo"]


def _ffn(x: Tensor, params: dict[str, Tensor], prefix: str) -> Tensor:
    hidden = ad.relu(x @ params[f"{prefix}.ffn.w1"] + params[f"{prefix}.ffn.b1"])
    return hidden @ params[f"{prefix}.ffn.w2"] + params[f"{prefix}.ffn.b2"]


def _sublayer(
    x: Tensor,
    out: Tensor,
    params: dict[str, Tensor],
    norm: str,
    cfg: TransformerConfig,
    rng: np.random.Generator | None,
) -> Tensor:
    dropped = ad.dropout(out, cfg.dropout, rng)
    return ad.layer_norm(x + dropped, params[f"{norm}.gain"], params[f"{norm}.bias"])


def causal_mask(length: int) -> np.ndarray:
    """(L, L) additive mask: position j may attend to positions <= j."""
    mask = np.zeros((length, length))
    mask[np.triu_indices(length, k=1)] = _NEG_INF
    return mask


def encoder_forward(
    states: np.ndarray,
    context: np.ndarray,
    params: dict[str, Tensor],
    cfg: TransformerConfig,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """(B, k_past, n) states + (B, p) context -> (B, k_past + 1, d_model) memory.

    Pass a generator to enable dropout (training); None keeps the pass pure.
    """
    states = np.asarray(states, dtype=np.float64)
    context = np.asarray(context, dtype=np.float64)
    if states.ndim == 2:
        states = states[None]
    if context.ndim == 1:
        context = context[None]
    batch = states.shape[0]
    if states.shape[1:] != (cfg.k_past, cfg.state_dim) or context.shape != (batch, cfg.context_dim):
        raise ValueError("encoder input shapes do not match the configuration")

    state_tokens = Tensor(states) @ params["enc.embed.state"]
    context_token = ad.reshape(Tensor(context) @ params["enc.embed.context"], (batch, 1, cfg.d_model))
    x = ad.concat([state_tokens, context_token], axis=1)
    x = x + positional_encoding(cfg.k_past + 1, cfg.d_model)
    x = ad.dropout(x, cfg.dropout, rng)
    for i in range(cfg.num_layers):
        attn = _multi_head(x, x, params, f"enc.{i}.self", cfg, mask=None)
        x = _sublayer(x, attn, params, f"enc.{i}.norm0", cfg, rng)
        x = _sublayer(x, _ffn(x, params, f"enc.{i}"), params, f"enc.{i}.norm1", cfg, rng)
    return x


def decoder_forward(
    dec_in: np.ndarray,
    memory: Tensor,
    params: dict[str, Tensor],
    cfg: TransformerConfig,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """(B, L, m) shifted targets + memory -> (B, L, m) control predictions."""
    dec_in = np.asarray(dec_in, dtype=np.float64)
    if dec_in.ndim == 2:
        dec_in = dec_in[None]
    batch, length = dec_in.shape[:2]
    if dec_in.shape[2] != cfg.control_dim:
        raise ValueError("decoder input control dimension mismatch")

    x = Tensor(dec_in) @ params["dec.embed.control"]
    x = x + positional_encoding(length, cfg.d_model)
    x = ad.dropout(x, cfg.dropout, rng)
    mask = causal_mask(length)
    for i in range(cfg.num_layers):
        self_attn = _multi_head(x, x, params, f"dec.{i}.self", cfg, mask=mask)
        x = _sublayer(x, self_attn, params, f"dec.{i}.norm0", cfg, rng)
        cross = _multi_head(x, memory, params, f"dec.{i}.cross", cfg, mask=None)
        x = _sublayer(x, cross, params, f"dec.{i}.norm1", cfg, rng)
        x = _sublayer(x, _ffn(x, params, f"dec.{i}"), params, f"dec.{i}.norm2", cfg, rng)
    return x @ params["head.weight"] + params["head.bias"]


def forward(
    states: np.ndarray,
    context: np.ndarray,
    dec_in: np.ndarray,
    params: dict[str, Tensor],
    cfg: TransformerConfig,
    rng: np.random.Generator | None = None,
) -> Tensor:
    memory = encoder_forward(states, context, params, cfg, rng)
    return decoder_forward(dec_in, memory, params, cfg, rng)


def shifted_decoder_input(targets: np.ndarray) -> np.ndarray:
    """[0, u_0, ..., u_{H-2}]: zero start token, last target dropped."""
    targets = np.asarray(targets, dtype=np.float64)
    zero = np.zeros_like(targets[..., :1, :])
    return np.concatenate([zero, targets[..., :-1, :]], axis=-2)


def predict_autoregressive(
    states: np.ndarray,
    context: np.ndarray,
    params: dict[str, Tensor],
    cfg: TransformerConfig,
    horizon: int | None = None,
) -> np.ndarray:
    """Decode one control at a time, feeding each prediction back in.

    Returns an (H, control_dim) array in the model's normalised space.
    """
    horizon = cfg.horizon if horizon is None else horizon
    with ad.no_grad():
        memory = encoder_forward(states, context, params, cfg, rng=None)
        prefix = np.zeros((1, 1, cfg.control_dim))
        outputs = []
        for _ in range(horizon):
            pred = decoder_forward(prefix, memory, params, cfg, rng=None)
            nxt = pred.data[0, -1]
            outputs.append(nxt)
            prefix = np.concatenate([prefix, nxt[None, None, :]], axis=1)
        return np.stack(outputs)


def huber_loss_value(pred: np.ndarray, target: np.ndarray, delta: float = 1.0) -> float:
    """Plain-number Huber loss (mean over all elements)."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    err = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    abs_err = np.abs(err)
    return float(
        np.mean(np.where(abs_err <= delta, 0.5 * err**2, delta * (abs_err - 0.5 * delta)))
    )
