"""Adam and the mini-batch training loop for pair heads and triplet models."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .exceptions import ConfigError, InputError, NumericError, ShapeError
from .fusion import FusionKind, fuse
from .heads import SiameseHead, TripletModel, head_scores_tensor
from .losses import LossKind

logger = logging.getLogger(__name__)

TRIPLET_OBJECTIVES = ("joint", "independent")


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
    """One bias-corrected Adam update, applied in place to ``params``."""
    if set(params) != set(grads):
        raise ShapeError(f"gradient blocks {sorted(grads)} do not match parameters {sorted(params)}")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter block {name!r}")
    if not state.m:
        state.m = {k: np.zeros_like(p) for k, p in params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.items()}

    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 60
    lr: float = 0.001
    seed: int = 0
    loss: LossKind = field(default_factory=LossKind)
    fusion: FusionKind = FusionKind.SQDIFF_MUL
    shuffle: bool = True
    triplet_objective: str = "joint"

    def __post_init__(self):
        if isinstance(self.loss, str):
            self.loss = LossKind(self.loss)
        self.fusion = FusionKind.parse(self.fusion)
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not (self.lr > 0 and math.isfinite(self.lr)):
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.triplet_objective not in TRIPLET_OBJECTIVES:
            raise ConfigError(f"triplet_objective must be one of {TRIPLET_OBJECTIVES}")


@dataclass
class TrainResult:
    model: SiameseHead | TripletModel
    loss_curve: list[float]


def _check_labels(y: np.ndarray, n: int) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise InputError(f"expected {n} labels, got shape {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise InputError("labels must be 0 or 1")
    if n == 0:
        raise InputError("training set is empty")
    if y.min() == y.max():
        raise InputError("training set needs both positive and negative samples")
    return y.astype(np.float64)


def _batches(n: int, config: TrainConfig, epoch: int):
    order = np.arange(n)
    if config.shuffle:
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
    for start in range(0, n, config.batch_size):
        yield order[start:start + config.batch_size]


def _run(
    param_groups: list[dict[str, np.ndarray]],
    features: list[np.ndarray],
    weights: list[float],
    y: np.ndarray,
    config: TrainConfig,
) -> list[float]:
    """Shared loop: each group is a head scored on its own fused features.

    The batch objective is ``sum_i weights[i] * mean(loss(head_i))``.
    """
    flat = {f"{g}.{k}": arr for g, grp in enumerate(param_groups) for k, arr in grp.items()}
    tensors = {k: ad.Tensor(arr, requires_grad=True, name=k) for k, arr in flat.items()}
    group_tensors = [
        {k: tensors[f"{g}.{k}"] for k in grp} for g, grp in enumerate(param_groups)
    ]
    state = AdamState(lr=config.lr)
    loss = config.loss
    n = y.shape[0]
    curve: list[float] = []

    for epoch in range(config.epochs):
        total = 0.0
        for b, idx in enumerate(_batches(n, config, epoch)):
            for t in tensors.values():
                t.zero_grad()
            tape = ad.Tape()
            yb = y[idx]
            parts = []
            try:
                for params, feats, w in zip(group_tensors, features, weights):
                    p = head_scores_tensor(params, ad.Tensor(feats[idx]), tape)
                    per = ad.binary_loss(p, yb, loss.tag, loss.alpha, loss.gamma, tape)
                    parts.append((w, ad.mean(per, tape)))
                objective = parts[0][1]
                if len(parts) > 1 or parts[0][0] != 1.0:
                    objective = _weighted_sum(parts, tape)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch + 1}, batch {b + 1}: {exc}") from None
            tape.backward(objective)
            grads = {k: t.grad if t.grad is not None else np.zeros_like(t.data) for k, t in tensors.items()}
            try:
                adam_step(state, flat, grads)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch + 1}, batch {b + 1}: {exc}") from None
            total += objective.item() * len(idx)
        epoch_loss = total / n
        if not math.isfinite(epoch_loss):
            raise NumericError(f"epoch {epoch + 1}: mean loss is {epoch_loss}")
        curve.append(epoch_loss)
        logger.debug("epoch %d loss %.6f", epoch + 1, epoch_loss)
    return curve


def _weighted_sum(parts, tape):
    acc = None
    for w, term in parts:
        scaled = ad.mul(term, ad.Tensor([[w]]), tape)
        acc = scaled if acc is None else ad.add(acc, scaled, tape)
    return acc


def _as_stack(X, width: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[1] != width:
        raise ShapeError(f"expected an array of shape (n, {width}, D), got {X.shape}")
    return X


def train(model, X, y, config: TrainConfig | None = None) -> TrainResult:
    """Fit ``model`` in place with Adam and return it with its per-epoch loss.

    ``X`` is (n, 2, D) for a :class:`SiameseHead` and (n, 3, D) rows of
    (father, mother, child) for a :class:`TripletModel`.
    """
    config = config or TrainConfig()
    if isinstance(model, SiameseHead):
        X = _as_stack(X, 2)
        y = _check_labels(y, X.shape[0])
        _check_dim(model, X)
        feats = fuse(model.fusion, X[:, 0], X[:, 1])
        curve = _run([model.parameters()], [feats], [1.0], y, config)
        return TrainResult(model, curve)

    if isinstance(model, TripletModel):
        X = _as_stack(X, 3)
        y = _check_labels(y, X.shape[0])
        _check_dim(model.fc_head, X)
        fc = fuse(model.fusion, X[:, 0], X[:, 2])
        mc = fuse(model.fusion, X[:, 1], X[:, 2])
        if config.triplet_objective == "joint":
            curve = _run(
                [model.fc_head.parameters(), model.mc_head.parameters()],
                [fc, mc], [0.5, 0.5], y, config,
            )
        else:
            c1 = _run([model.fc_head.parameters()], [fc], [1.0], y, config)
            c2 = _run([model.mc_head.parameters()], [mc], [1.0], y, config)
            curve = [0.5 * (a + b) for a, b in zip(c1, c2)]
        return TrainResult(model, curve)

    raise TypeError(f"cannot train {type(model).__name__}")


def _check_dim(head: SiameseHead, X: np.ndarray) -> None:
    if X.shape[2] != head.dim:
        raise ShapeError(f"embeddings have dim {X.shape[2]}, head expects {head.dim}")
