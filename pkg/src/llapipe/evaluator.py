"""Downstream model and reward: multinomial logistic regression trained by
deterministic full-batch gradient descent, plus the step-reward rule.

Training uses zero initialization, a fixed learning rate with step-halving
whenever a step would increase the loss, and no stochastic elements, so
identical inputs give bit-identical accuracies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import CATEGORICAL, NUMERIC, Dataset
from .errors import DegenerateOutput, SingleClassTrain
from .operators import _mode_categorical

# Reward handed out when the agent picks an operator that cannot run.
INVALID_ACTION_PENALTY = -0.05


@dataclass(frozen=True)
class ModelConfig:
    l2_penalty: float = 1e-4
    max_iterations: int = 300
    learning_rate: float = 0.1


def coerce_for_model(d: Dataset) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    """Turn any dataset into a dense numeric matrix plus label vector.

    Categorical columns become lexicographic ordinal codes (missing cells take
    the column mode), numeric missing cells take the column mean, and an
    all-missing numeric column becomes zeros. Returns (X, labels, names).
    """
    if d.n_cols == 0:
        raise DegenerateOutput("dataset has zero feature columns")
    mat = np.empty((d.n_rows, d.n_cols), dtype=np.float64)
    for j, c in enumerate(d.columns):
        if c.kind == NUMERIC:
            col = c.values.copy()
            mask = np.isnan(col)
            if mask.all():
                col[:] = 0.0
            elif mask.any():
                col[mask] = col[~mask].mean()
        else:
            mode = _mode_categorical(c.values)
            cats = sorted(set(v for v in c.values if v is not None))
            code = {v: float(i) for i, v in enumerate(cats)}
            fill = code[mode] if mode is not None else 0.0
            col = np.array(
                [code[v] if v is not None else fill for v in c.values],
                dtype=np.float64,
            )
        mat[:, j] = col
    return mat, d.target.copy(), d.column_names


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_gradient(
    w: np.ndarray, x_bias: np.ndarray, y_onehot: np.ndarray, l2: float
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy plus (l2/2)*||weights||^2; the bias row of `w` is
    not penalized. Returns (loss, gradient of the same shape as w)."""
    n = x_bias.shape[0]
    probs = _softmax(x_bias @ w)
    eps = 1e-15
    ce = -np.sum(y_onehot * np.log(probs + eps)) / n
    penalty = w.copy()
    penalty[0, :] = 0.0
    loss = ce + 0.5 * l2 * float((penalty**2).sum())
    grad = x_bias.T @ (probs - y_onehot) / n + l2 * penalty
    return float(loss), grad


def fit_logistic(
    x: np.ndarray, y_index: np.ndarray, n_classes: int, cfg: ModelConfig
) -> tuple[np.ndarray, list[float]]:
    """Gradient descent from zeros; halves the step on any loss increase.
    Returns the weight matrix (bias row first) and the loss trace."""
    n, d = x.shape
    x_bias = np.hstack([np.ones((n, 1)), x])
    y_onehot = np.zeros((n, n_classes))
    y_onehot[np.arange(n), y_index] = 1.0
    w = np.zeros((d + 1, n_classes))
    lr = cfg.learning_rate
    losses: list[float] = []
    loss, grad = loss_and_gradient(w, x_bias, y_onehot, cfg.l2_penalty)
    for _ in range(cfg.max_iterations):
        losses.append(loss)
        while True:
            w_next = w - lr * grad
            loss_next, grad_next = loss_and_gradient(
                w_next, x_bias, y_onehot, cfg.l2_penalty
            )
            if (np.isfinite(loss_next) and loss_next <= loss) or lr < 1e-12:
                break
            lr *= 0.5
        if not np.isfinite(loss_next) or loss_next > loss:
            break
        if loss - loss_next < 1e-12:
            w, loss = w_next, loss_next
            losses.append(loss)
            break
        w, loss, grad = w_next, loss_next, grad_next
    if not losses or losses[-1] != loss:
        losses.append(loss)
    return w, losses


def _align_features(
    train_names: tuple[str, ...],
    val_names: tuple[str, ...],
    val_x: np.ndarray,
) -> np.ndarray:
    """Project validation features onto the training column space by name;
    training columns absent from validation are zero-filled."""
    lookup = {name: j for j, name in enumerate(val_names)}
    out = np.zeros((val_x.shape[0], len(train_names)), dtype=np.float64)
    for j, name in enumerate(train_names):
        if name in lookup:
            out[:, j] = val_x[:, lookup[name]]
    return out


def train_and_eval(
    train: Dataset, val: Dataset, cfg: ModelConfig | None = None
) -> float:
    """Accuracy on `val` of a logistic model fitted on `train`.

    Prediction ties break toward the lower class index (classes are in
    lexicographic label order); validation labels unseen in training never
    match.
    """
    cfg = cfg or ModelConfig()
    x_train, labels_train, names_train = coerce_for_model(train)
    x_val, labels_val, names_val = coerce_for_model(val)
    classes = sorted(set(labels_train.tolist()))
    if len(classes) < 2:
        raise SingleClassTrain("training split has fewer than 2 classes")
    class_index = {c: i for i, c in enumerate(classes)}
    y_train = np.array([class_index[v] for v in labels_train], dtype=np.intp)
    w, _ = fit_logistic(x_train, y_train, len(classes), cfg)
    x_val_aligned = _align_features(names_train, names_val, x_val)
    x_bias = np.hstack([np.ones((x_val_aligned.shape[0], 1)), x_val_aligned])
    pred = np.argmax(x_bias @ w, axis=1)
    y_val = np.array([class_index.get(v, -1) for v in labels_val], dtype=np.intp)
    return float(np.mean(pred == y_val))


def compute_reward(
    acc_prev: float, acc_next: float, is_terminal: bool, final_acc: float = 0.0
) -> float:
    """Per-step accuracy delta, plus the final accuracy on the closing step."""
    delta = acc_next - acc_prev
    return delta + final_acc if is_terminal else delta
