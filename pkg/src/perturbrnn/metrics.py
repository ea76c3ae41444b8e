"""Losses, decorrelation measurement and run-stability checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

NAN = "NaN"
WEIGHT_EXPLOSION = "WeightExplosion"
DEFAULT_NORM_THRESHOLD = 1e6


@dataclass(frozen=True)
class RunStatus:
    stable: bool = True
    epoch: int | None = None
    cause: str | None = None

    @classmethod
    def unstable(cls, epoch: int | None, cause: str) -> RunStatus:
        return cls(False, epoch, cause)

    def label(self) -> str:
        return "Stable" if self.stable else f"Unstable({self.cause}@{self.epoch})"


def step_loss(y, y_star) -> float:
    """Squared error ``||y - y*||^2`` of one output vector (summed, not averaged)."""
    y = np.asarray(y, dtype=float)
    y_star = np.asarray(y_star, dtype=float)
    if y.shape != y_star.shape:
        raise ContractError(f"output shape {y.shape} != target shape {y_star.shape}")
    return float(np.sum((y - y_star) ** 2))


def step_losses(y, targets, mask=None) -> np.ndarray:
    """Per-step losses over the last axis; shape ``(T,)`` or ``(T, n)``."""
    y = np.asarray(y)
    targets = np.asarray(targets)
    if y.shape != targets.shape:
        raise ContractError(f"output shape {y.shape} != target shape {targets.shape}")
    ell = np.sum((y - targets) ** 2, axis=-1)
    if mask is not None:
        ell = ell * _expand_mask(mask, ell)
    return ell


def _expand_mask(mask, ell):
    mask = np.asarray(mask, dtype=ell.dtype)
    if mask.ndim == 1 and ell.ndim == 2:
        mask = mask[:, None]
    if mask.shape[0] != ell.shape[0]:
        raise ContractError(f"mask length {mask.shape[0]} != sequence length {ell.shape[0]}")
    return mask


def sequence_loss(outputs, targets, mask=None, per_sequence: bool = False):
    """Mean over time of the step losses.

    ``outputs`` may be a :class:`~perturbrnn.rnn_core.PassTrace` or an array.
    For batched input the result is averaged over sequences unless
    ``per_sequence`` is set.
    """
    y = getattr(outputs, "y", outputs)
    if np.shape(y)[0] != np.shape(targets)[0]:
        raise ContractError("outputs and targets differ in length")
    ell = step_losses(y, targets, mask)
    per_seq = ell.mean(axis=0)
    if per_sequence:
        return per_seq
    return float(np.mean(per_seq))


def decorrelation_loss(x_star, correlation: bool = False) -> float:
    """Mean squared strictly-lower-triangular entry of the state covariance.

    Every timestep of every sequence is one sample. ``correlation=True``
    normalizes the covariance to a correlation matrix first.
    """
    x = np.asarray(x_star, dtype=float)
    x = x.reshape(-1, x.shape[-1])
    if x.shape[0] < 2:
        raise ContractError("decorrelation loss needs at least two samples")
    H = x.shape[1]
    if H < 2:
        return 0.0
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / x.shape[0]
    if correlation:
        sd = np.sqrt(np.diag(cov))
        sd = np.where(sd > 0, sd, 1.0)
        cov = cov / np.outer(sd, sd)
    rows, cols = np.tril_indices(H, k=-1)
    return float(np.mean(cov[rows, cols] ** 2))


def detect_instability(params, loss, threshold: float = DEFAULT_NORM_THRESHOLD,
                       epoch: int | None = None) -> RunStatus:
    """Flag non-finite weights or loss, or any weight matrix with Frobenius norm above ``threshold``."""
    if loss is not None and not np.isfinite(loss):
        return RunStatus.unstable(epoch, NAN)
    mats = params.matrices()
    if not all(np.isfinite(m).all() for m in mats.values()):
        return RunStatus.unstable(epoch, NAN)
    if any(np.linalg.norm(m) > threshold for m in mats.values()):
        return RunStatus.unstable(epoch, WEIGHT_EXPLOSION)
    return RunStatus()
