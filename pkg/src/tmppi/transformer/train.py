"""Teacher-forced training with Adam, validation-based early stopping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rng import SeededRng
from . import autodiff as ad
from .autodiff import Tensor
from .model import TransformerConfig, forward, init_params, shifted_decoder_input


class Adam:
    """First/second-moment adaptive steps with bias correction."""

    def __init__(self, lr: float = 5e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Tensor]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name in sorted(params):
            p = params[name]
            g = p.grad
            if g is None:
                continue
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self, params: dict[str, Tensor]) -> None:
        for p in params.values():
            p.zero_grad()


@dataclass
class TrainConfig:
    batch_size: int = 256
    max_epochs: int = 2000
    patience: int = 50
    lr: float = 5e-4
    huber_delta: float = 1.0
    seed: int = 0
    log_every: int = 10


@dataclass
class TrainHistory:
    epochs: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = np.inf


def _epoch_loss(
    params: dict[str, Tensor],
    cfg: TransformerConfig,
    states: np.ndarray,
    contexts: np.ndarray,
    targets: np.ndarray,
    batch_size: int,
    delta: float,
) -> float:
    """Teacher-forced loss without dropout or gradients (validation pass)."""
    total, count = 0.0, 0
    with ad.no_grad():
        for lo in range(0, states.shape[0], batch_size):
            hi = min(lo + batch_size, states.shape[0])
            pred = forward(
                states[lo:hi], contexts[lo:hi], shifted_decoder_input(targets[lo:hi]),
                params, cfg, rng=None,
            )
            loss = ad.huber_loss(pred, targets[lo:hi], delta)
            total += float(loss.data) * (hi - lo)
            count += hi - lo
    return total / max(count, 1)


def train_model(
    cfg: TransformerConfig,
    train_data: tuple[np.ndarray, np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray, np.ndarray],
    train_cfg: TrainConfig,
    params: dict[str, Tensor] | None = None,
    progress=None,
) -> tuple[dict[str, Tensor], TrainHistory]:
    """Mini-batch teacher forcing; returns the parameters of the best
    validation epoch.  ``train_data``/``val_data`` are (states, contexts,
    targets) triples already in normalised space.
    """
    tr_states, tr_contexts, tr_targets = train_data
    if tr_states.shape[0] == 0:
        raise ValueError("training dataset is empty")
    root = SeededRng(train_cfg.seed, 0x7247)
    if params is None:
        params = init_params(cfg, root.derive(0).generator)
    optimizer = Adam(lr=train_cfg.lr)
    history = TrainHistory()
    best_params = {name: p.data.copy() for name, p in params.items()}
    strikes = 0

    for epoch in range(1, train_cfg.max_epochs + 1):
        order = root.derive(1, epoch).permutation(tr_states.shape[0])
        epoch_total, seen = 0.0, 0
        for batch_idx, lo in enumerate(range(0, len(order), train_cfg.batch_size)):
            take = order[lo : lo + train_cfg.batch_size]
            drop_rng = root.derive(2, epoch, batch_idx).generator
            optimizer.zero_grad(params)
            pred = forward(
                tr_states[take], tr_contexts[take],
                shifted_decoder_input(tr_targets[take]),
                params, cfg, rng=drop_rng if cfg.dropout > 0 else None,
            )
            loss = ad.huber_loss(pred, tr_targets[take], train_cfg.huber_delta)
            loss.backward()
            optimizer.step(params)
            epoch_total += float(loss.data) * len(take)
            seen += len(take)

        val = _epoch_loss(
            params, cfg, *val_data, train_cfg.batch_size, train_cfg.huber_delta
        )
        history.epochs.append(epoch)
        history.train_loss.append(epoch_total / seen)
        history.val_loss.append(val)
        if val < history.best_val:
            history.best_val = val
            history.best_epoch = epoch
            best_params = {name: p.data.copy() for name, p in params.items()}
            strikes = 0
        else:
            strikes += 1
        if progress is not None and (epoch % train_cfg.log_every == 0 or strikes >= train_cfg.patience):
            progress(epoch, epoch_total / seen, val)
        if strikes >= train_cfg.patience:
            break

    for name, p in params.items():
        p.data = best_params[name]
        p.zero_grad()
    return params, history
