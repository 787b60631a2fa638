"""Per-learner state and update rules.

One learner keeps, for each of the ``P`` kernels, a primal vector, a dual
vector and the running sum of its own per-kernel losses. Per-kernel
quantities are stored stacked as ``(P, 2D)`` / ``(P,)`` arrays so that the
``P`` independent consensus problems advance in one vectorized step.

Exponential-weight bookkeeping is done in *loss units*: a learner's
weight ``w = exp(-L / eta_g)`` is represented by ``L`` itself, and the
combining weights are a softmax over ``-sum(L) / eta_g``. This avoids the
underflow of the raw products once accumulated losses grow. Messages in
the message-passing variant use the same units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, ConvergenceError, InputError, NumericError, ProtocolError
from .losses import ConvexLoss


@dataclass
class KernelLearnerState:
    theta: np.ndarray
    dual: np.ndarray
    log_loss_sum: float = 0.0


@dataclass
class LearnerState:
    """Everything learner ``id`` (0-based) carries between rounds."""

    id: int
    neighbors: tuple
    theta: np.ndarray  # (P, 2D)
    dual: np.ndarray  # (P, 2D)
    loss_sums: np.ndarray  # (P,)
    weights: np.ndarray  # (P,)
    messages: Optional[dict] = None  # neighbor -> (P,) incoming message, loss units

    @classmethod
    def initial(cls, id: int, neighbors: Sequence[int], num_kernels: int, dim: int,
                message_passing: bool = False) -> "LearnerState":
        neighbors = tuple(sorted(neighbors))
        messages = {i: np.zeros(num_kernels) for i in neighbors} if message_passing else None
        return cls(
            id=id,
            neighbors=neighbors,
            theta=np.zeros((num_kernels, dim)),
            dual=np.zeros((num_kernels, dim)),
            loss_sums=np.zeros(num_kernels),
            weights=np.full(num_kernels, 1.0 / num_kernels),
            messages=messages,
        )

    @property
    def num_kernels(self) -> int:
        return self.theta.shape[0]

    def kernel(self, p: int) -> KernelLearnerState:
        return KernelLearnerState(self.theta[p], self.dual[p], float(self.loss_sums[p]))

    @property
    def per_kernel(self) -> list:
        return [self.kernel(p) for p in range(self.num_kernels)]


@dataclass(frozen=True)
class NeighborSnapshot:
    """Immutable copy of neighbors' parameter stacks taken at a round barrier."""

    thetas: Mapping[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def capture(cls, states: Sequence[LearnerState], ids: Sequence[int]) -> "NeighborSnapshot":
        return cls({i: states[i].theta.copy() for i in ids})

    def for_learner(self, neighbors: Sequence[int]) -> list:
        missing = [i for i in neighbors if i not in self.thetas]
        if missing:
            raise ProtocolError(f"snapshot lacks estimates from neighbors {missing}")
        return [self.thetas[i] for i in neighbors]


def gamma(theta_j: np.ndarray, neighbor_thetas: Sequence[np.ndarray]) -> np.ndarray:
    """Sum of edge midpoints ``sum_i (theta_j + theta_i) / 2``."""
    out = np.zeros_like(theta_j, dtype=float)
    for theta_i in neighbor_thetas:
        if np.shape(theta_i) != np.shape(theta_j):
            raise ProtocolError(f"neighbor estimate has shape {np.shape(theta_i)}, expected {np.shape(theta_j)}")
        out = out + (theta_j + theta_i) / 2.0
    return out


def _local_constant(rho: float, eta: float, reg: float, degree: int) -> float:
    if rho <= 0 or eta <= 0:
        raise ConfigurationError(f"rho and eta must be positive, got rho={rho!r}, eta={eta!r}")
    if reg < 0:
        raise ConfigurationError(f"reg must be >= 0, got {reg!r}")
    c = 2.0 * reg + eta + rho * degree
    if not c > 0:
        raise ConfigurationError(f"local system constant must be positive, got {c!r}")
    return c


def solve_local_quadratic(theta, dual, z, y, gamma_vec, degree: int, rho: float, eta: float, reg: float) -> np.ndarray:
    """Closed-form minimizer of the local OADMM objective under squared loss.

    Solves ``(2 z z^T + c I) theta = 2 y z + eta theta_t + rho gamma - dual``
    with ``c = 2 reg + eta + rho |N_j|`` through the rank-one inverse, so no
    ``2D x 2D`` matrix is formed. Broadcasts over a leading kernel axis.
    """
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    if z.shape != theta.shape:
        raise InputError(f"features have shape {z.shape}, parameters {theta.shape}")
    c = _local_constant(rho, eta, reg, degree)
    y = np.asarray(y, dtype=float)[..., None]
    b = 2.0 * y * z + eta * theta + rho * gamma_vec - dual
    zz = np.sum(z * z, axis=-1, keepdims=True)
    zb = np.sum(z * b, axis=-1, keepdims=True)
    return (b - (2.0 * zb / (c + 2.0 * zz)) * z) / c


def local_update_quadratic(state: LearnerState, z, y: float, snapshot: NeighborSnapshot,
                           rho: float, eta: float, reg: float) -> np.ndarray:
    """New ``(P, 2D)`` parameters for ``state``; ``z`` holds the sample's per-kernel features."""
    nbr = snapshot.for_learner(state.neighbors)
    g = gamma(state.theta, nbr)
    return solve_local_quadratic(state.theta, state.dual, z, y, g, len(nbr), rho, eta, reg)


def local_objective(loss_hook: ConvexLoss, theta_t, dual, z, y, gamma_vec, degree, rho, eta):
    """Value and gradient callables of the per-kernel local objective.

    ``F(th) = loss(th) + dual.th + rho/2 sum_i |th - m_i|^2 + eta/2 |th - theta_t|^2``;
    the neighbor midpoints ``m_i`` enter the gradient only through their
    sum ``gamma``, and the value is reported up to a constant.
    """

    def value(th):
        return (loss_hook.loss(th, z, y) + dual @ th
                + 0.5 * rho * (degree * (th @ th) - 2.0 * gamma_vec @ th)
                + 0.5 * eta * np.sum((th - theta_t) ** 2))

    def grad(th):
        return (loss_hook.gradient(th, z, y) + dual
                + rho * (degree * th - gamma_vec) + eta * (th - theta_t))

    return value, grad


def minimize_local(value, grad, x0, tol: float = 1e-8, max_iter: int = 10_000):
    """Gradient descent with Armijo backtracking until ``|grad| <= tol``.

    Close to the optimum the predicted decrease drops below the rounding
    error of ``value``; there a step is accepted when it shrinks the
    gradient norm instead.
    """
    x = np.array(x0, dtype=float)
    step = 1.0
    g = grad(x)
    gnorm = np.linalg.norm(g)
    fx = value(x)
    for _ in range(max_iter):
        if gnorm <= tol:
            return x, gnorm
        while True:
            cand = x - step * g
            fc = value(cand)
            decrease = 0.5 * step * gnorm * gnorm
            if fc <= fx - decrease:
                gc = grad(cand)
                break
            if decrease <= 1e-12 * max(1.0, abs(fx)):
                gc = grad(cand)
                if np.linalg.norm(gc) < gnorm:
                    break
            if step < 1e-20:
                raise ConvergenceError("line search failed to make progress", gnorm)
            step *= 0.5
        x, fx, g = cand, fc, gc
        gnorm = np.linalg.norm(g)
        step *= 2.0
    if gnorm <= tol:
        return x, gnorm
    raise ConvergenceError(f"local solver did not reach tolerance {tol:g} in {max_iter} iterations", gnorm)


def local_update_generic(state: LearnerState, z, y: float, snapshot: NeighborSnapshot,
                         rho: float, eta: float, loss_hook: ConvexLoss,
                         tol: float = 1e-8, max_iter: int = 10_000) -> np.ndarray:
    """Iterative counterpart of :func:`local_update_quadratic` for any convex loss."""
    nbr = snapshot.for_learner(state.neighbors)
    degree = len(nbr)
    _local_constant(rho, eta, 0.0, degree)
    z = np.asarray(z, dtype=float)
    if z.shape != state.theta.shape:
        raise InputError(f"features have shape {z.shape}, parameters {state.theta.shape}")
    g = gamma(state.theta, nbr)
    out = np.empty_like(state.theta)
    for p in range(state.num_kernels):
        value, grad = local_objective(loss_hook, state.theta[p], state.dual[p], z[p], y, g[p], degree, rho, eta)
        out[p], _ = minimize_local(value, grad, state.theta[p], tol=tol, max_iter=max_iter)
    return out


def dual_update(dual: np.ndarray, theta_new: np.ndarray, neighbor_thetas_new: Sequence[np.ndarray],
                rho: float) -> np.ndarray:
    """``dual + rho/2 * sum_i (theta_j - theta_i)`` using post-update estimates."""
    out = np.array(dual, dtype=float)
    for theta_i in neighbor_thetas_new:
        if np.shape(theta_i) != np.shape(theta_new):
            raise ProtocolError(f"neighbor estimate has shape {np.shape(theta_i)}, expected {np.shape(theta_new)}")
        out = out + (rho / 2.0) * (theta_new - theta_i)
    return out


def hedge_local_exponent(state) -> np.ndarray:
    """Unscaled accumulated losses per kernel; ``w = exp(-L / eta_g)`` is never formed."""
    if isinstance(state, KernelLearnerState):
        return np.float64(state.log_loss_sum)
    return state.loss_sums.copy()


def combine_weights(own, neighbors: Sequence, eta_g: float) -> np.ndarray:
    """Softmax of ``-(L_j + sum_i L_i) / eta_g`` over kernels."""
    if not eta_g > 0:
        raise ConfigurationError(f"eta_g must be positive, got {eta_g!r}")
    total = np.array(own, dtype=float)
    for other in neighbors:
        total = total + np.asarray(other, dtype=float)
    if not np.all(np.isfinite(total)):
        raise NumericError("non-finite accumulated loss in weight combination")
    logits = -total / eta_g
    logits = logits - logits.max()
    w = np.exp(logits)
    return w / w.sum()


def message_update(own, incoming: Mapping[int, np.ndarray], target: int) -> np.ndarray:
    """Outgoing message to ``target``: own exponent plus every other incoming message."""
    out = np.array(own, dtype=float)
    for sender in sorted(incoming):
        if sender != target:
            out = out + incoming[sender]
    return out


def require_message_passing_ok(topology, allow_cyclic: bool = False) -> None:
    if not topology.is_acyclic() and not allow_cyclic:
        raise ConfigurationError(
            "message-passing weights need an acyclic network; pass allow_cyclic_messages to override",
            key="weight_mode",
        )


def predict_features(theta: np.ndarray, weights: np.ndarray, z: np.ndarray) -> float:
    """``sum_p q_p theta_p . z_p`` for precomputed per-kernel features ``z``."""
    return float(weights @ np.sum(theta * z, axis=-1))


def predict(state: LearnerState, dictionary, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (dictionary.dim_input,):
        raise InputError(f"expected a point of dimension {dictionary.dim_input}, got shape {x.shape}")
    if len(dictionary) != state.num_kernels:
        raise InputError(f"dictionary has {len(dictionary)} kernels, state has {state.num_kernels}")
    return predict_features(state.theta, state.weights, dictionary.features(x))


def weight_disagreement(own: np.ndarray, others: Sequence[np.ndarray]) -> float:
    """``max_{p, i} |q_j^p - q_i^p|`` across neighbors; 0 with no neighbors."""
    if not others:
        return 0.0
    return float(max(np.max(np.abs(own - q)) for q in others))
