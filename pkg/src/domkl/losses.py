"""Convex per-sample losses over RF parameter vectors.

Every loss is a function of ``(theta, z, y)`` where ``z`` is the feature
vector of the sample. Only regularized least squares ships; anything
exposing ``loss`` and ``gradient`` with the same signature can be handed to
:func:`domkl.learner.local_update_generic`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .errors import ConfigurationError, InputError

DEFAULT_REG = 0.01


class ConvexLoss(Protocol):
    def loss(self, theta, z, y) -> float: ...

    def gradient(self, theta, z, y) -> np.ndarray: ...


def _check(theta, z):
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    if theta.shape[-1:] != z.shape[-1:]:
        raise InputError(f"theta has dimension {theta.shape[-1:]} but features have {z.shape[-1:]}")
    return theta, z


@dataclass(frozen=True)
class QuadraticLoss:
    """``(y - theta.z)^2 + reg * |theta|^2``.

    Both methods broadcast over leading axes, so a ``(P, 2D)`` stack of
    per-kernel parameters gives ``P`` losses in one call.
    """

    reg: float = DEFAULT_REG

    def __post_init__(self):
        if not np.isfinite(self.reg) or self.reg < 0:
            raise ConfigurationError(f"regularization weight must be >= 0, got {self.reg!r}", key="reg")

    def loss(self, theta, z, y):
        theta, z = _check(theta, z)
        resid = y - np.sum(theta * z, axis=-1)
        out = resid * resid + self.reg * np.sum(theta * theta, axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def gradient(self, theta, z, y) -> np.ndarray:
        theta, z = _check(theta, z)
        resid = np.sum(theta * z, axis=-1, keepdims=True) - y
        return 2.0 * resid * z + 2.0 * self.reg * theta


def loss(ql: QuadraticLoss, theta, z, y):
    return ql.loss(theta, z, y)


def gradient(ql: QuadraticLoss, theta, z, y):
    return ql.gradient(theta, z, y)
