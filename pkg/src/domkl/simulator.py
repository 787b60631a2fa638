"""Synchronous-round network simulation of distributed online multi-kernel learning.

Every round, every learner:

1. predicts its incoming sample with the state it holds (predict, then update),
2. solves its local consensus step for each kernel using neighbors'
   round-start estimates,
3. exchanges the new estimates and updates its dual vectors,
4. adds the round's per-kernel losses to its running sums, exchanges them
   (or messages) with neighbors and recomputes its combining weights.

Steps 3 and 4 each end in a barrier. Between barriers learners only read
immutable snapshots, so per-learner work may run on a thread pool without
changing any result.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import learner as lrn
from .data import Dataset
from .errors import ConfigurationError, DomklError
from .kernels import DEFAULT_NUM_FEATURES, KernelDictionary, build_dictionary, dictionary_variances
from .losses import DEFAULT_REG, QuadraticLoss
from .topology import Topology

log = logging.getLogger(__name__)

MODES = ("domkl", "dokl")
WEIGHT_MODES = ("neighbor", "message_passing")
SIMPLEX_TOL = 1e-9
DUAL_TOL = 1e-9


def derive_seed(master: int, *path: int) -> int:
    """Deterministic 32-bit child seed of ``master`` along ``path``."""
    return int(np.random.SeedSequence((int(master), *map(int, path))).generate_state(1)[0])


@dataclass(frozen=True)
class SimulationConfig:
    topology: Topology
    variances: tuple = tuple(dictionary_variances())
    num_features: int = DEFAULT_NUM_FEATURES
    rho: float = 1.0
    eta: float = 1.0
    eta_g: float = 1.0
    reg: float = DEFAULT_REG
    rounds: Optional[int] = None  # None: use the per-learner stream length
    seed: int = 0
    mode: str = "domkl"
    kernel_index: Optional[int] = None  # 1-based, dokl mode only
    weight_mode: str = "neighbor"
    allow_cyclic_messages: bool = False
    sqrt_t_hypers: bool = True
    self_checks: bool = True
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "variances", tuple(float(v) for v in self.variances))
        if not self.variances:
            raise ConfigurationError("kernel dictionary is empty", key="variances")
        for key in ("rho", "eta", "eta_g"):
            v = getattr(self, key)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigurationError(f"must be a positive number, got {v!r}", key=key)
        if not (math.isfinite(self.reg) and self.reg >= 0):
            raise ConfigurationError(f"must be >= 0, got {self.reg!r}", key="reg")
        if int(self.num_features) != self.num_features or self.num_features < 1:
            raise ConfigurationError(f"must be a positive integer, got {self.num_features!r}", key="features")
        if self.rounds is not None and (int(self.rounds) != self.rounds or self.rounds < 1):
            raise ConfigurationError(f"must be a positive integer or auto, got {self.rounds!r}", key="rounds")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; choose from {', '.join(MODES)}", key="mode")
        if self.mode == "dokl":
            k = self.kernel_index
            if k is None or int(k) != k or not 1 <= k <= len(self.variances):
                raise ConfigurationError(
                    f"must be an integer in 1..{len(self.variances)} in dokl mode, got {k!r}", key="kernel_index")
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigurationError(f"unknown weight mode {self.weight_mode!r}", key="weight_mode")
        if self.weight_mode == "message_passing":
            lrn.require_message_passing_ok(self.topology, self.allow_cyclic_messages)
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigurationError(f"must be >= 1, got {self.workers!r}", key="workers")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError(f"must be a non-negative integer, got {self.seed!r}", key="seed")

    def hyperparameters(self, T: int) -> dict:
        """``rho, eta, eta_g`` for a horizon ``T``; all ``sqrt(T)`` when the rule is on."""
        if self.sqrt_t_hypers:
            r = math.sqrt(T)
            return {"rho": r, "eta": r, "eta_g": r}
        return {"rho": float(self.rho), "eta": float(self.eta), "eta_g": float(self.eta_g)}

    def build_dictionary(self, d: int) -> KernelDictionary:
        full = build_dictionary(self.variances, d, self.num_features, self.seed)
        if self.mode == "dokl":
            return full.subset([self.kernel_index - 1])
        return full

    def to_dict(self) -> dict:
        out = asdict(self)
        out["topology"] = {"learners": self.topology.num_learners, "edges": self.topology.edge_list()}
        out["variances"] = list(self.variances)
        return out


@dataclass(frozen=True)
class RoundLog:
    t: int  # 1-based
    predictions: np.ndarray
    labels: np.ndarray
    losses: np.ndarray
    weights: np.ndarray
    epsilon: np.ndarray
    neighbor_differences: list  # per learner: f_j(x_j) - f_i(x_j) for each neighbor i


@dataclass
class SimulationResult:
    """Per-round logs, arrays indexed ``[learner, round, ...]`` (both 0-based)."""

    T: int
    neighbors: tuple
    variances: tuple
    hyperparameters: dict
    predictions: np.ndarray  # (J, T)
    labels: np.ndarray  # (J, T)
    kernel_predictions: np.ndarray  # (J, T, P)
    kernel_losses: np.ndarray  # (J, T, P)
    weights: np.ndarray  # (J, T, P), the weights used for the round's prediction
    epsilon: np.ndarray  # (J, T)
    neighbor_predictions: list  # per learner (T, deg): f_i evaluated at learner j's sample
    final_states: list
    theta_history: Optional[np.ndarray] = None  # (J, T + 1, P, 2D)
    max_dual_sum: Optional[np.ndarray] = None  # (T,)
    check_failures: list = field(default_factory=list)

    @property
    def num_learners(self) -> int:
        return self.predictions.shape[0]

    @property
    def losses(self) -> np.ndarray:
        """Squared prediction error per learner and round."""
        return (self.predictions - self.labels) ** 2

    @property
    def discrepancy(self) -> np.ndarray:
        """``sum_i (f_j - f_i)`` evaluated at learner j's sample, (J, T)."""
        out = np.zeros_like(self.predictions)
        for j, nb in enumerate(self.neighbor_predictions):
            if nb.shape[1]:
                out[j] = np.sum(self.predictions[j][:, None] - nb, axis=1)
        return out

    @property
    def checks_passed(self) -> bool:
        return not self.check_failures

    def round_log(self, t: int) -> RoundLog:
        k = t - 1
        if not 0 <= k < self.T:
            raise IndexError(f"round {t} outside 1..{self.T}")
        diffs = [self.predictions[j, k] - nb[k] for j, nb in enumerate(self.neighbor_predictions)]
        return RoundLog(t, self.predictions[:, k], self.labels[:, k], self.losses[:, k],
                        self.weights[:, k], self.epsilon[:, k], diffs)


def partition_data(dataset: Dataset, J: int, seed) -> List[Dataset]:
    """Shuffle once, then deal samples round-robin into ``J`` streams of ``N // J``."""
    N = len(dataset)
    if int(J) != J or J < 1:
        raise ConfigurationError(f"number of learners must be >= 1, got {J!r}", key="learners")
    if N < J:
        raise ConfigurationError(f"{N} samples cannot be split across {J} learners", key="learners")
    T = N // J
    perm = np.random.default_rng(np.random.SeedSequence(seed)).permutation(N)[: T * J]
    return [dataset.take(perm[j::J]) for j in range(J)]


def merge_streams(streams: Sequence[Dataset]) -> Dataset:
    """Interleave streams sample by sample (inverse of the round-robin deal)."""
    T = min(len(s) for s in streams)
    X = np.stack([s.features[:T] for s in streams], axis=1).reshape(T * len(streams), -1)
    y = np.stack([s.labels[:T] for s in streams], axis=1).reshape(-1)
    return Dataset(X, y, "merged", {"streams": len(streams)})


def _resolve_rounds(config: SimulationConfig, streams: Sequence[Dataset]) -> int:
    shortest = min(len(s) for s in streams)
    T = shortest if config.rounds is None else int(config.rounds)
    if T > shortest:
        raise ConfigurationError(f"{T} rounds requested but the shortest stream has {shortest} samples",
                                 key="rounds")
    return T


class _Pool:
    def __init__(self, workers: int):
        self._ex = ThreadPoolExecutor(workers) if workers > 1 else None

    def map(self, fn, items):
        if self._ex is None:
            return [fn(i) for i in items]
        return list(self._ex.map(fn, items))

    def close(self):
        if self._ex is not None:
            self._ex.shutdown()


def run(config: SimulationConfig, streams: Sequence[Dataset], dictionary: Optional[KernelDictionary] = None,
        record_theta: bool = False) -> SimulationResult:
    """Run ``T`` synchronous rounds over the network and return the full log."""
    topo = config.topology
    J = topo.num_learners
    if len(streams) != J:
        raise ConfigurationError(f"topology has {J} learners but {len(streams)} streams were given", key="learners")
    d = streams[0].dim
    if any(s.dim != d for s in streams):
        raise ConfigurationError("streams disagree on input dimension")
    T = _resolve_rounds(config, streams)
    if dictionary is None:
        dictionary = config.build_dictionary(d)
    P = len(dictionary)
    dim = dictionary.dim_features
    hp = config.hyperparameters(T)
    rho, eta, eta_g = hp["rho"], hp["eta"], hp["eta_g"]
    loss_fn = QuadraticLoss(config.reg)
    adj = topo.adjacency()
    mp = config.weight_mode == "message_passing"
    if mp and not topo.is_acyclic():
        log.warning("message-passing weights on a cyclic graph: losses may be counted more than once")

    # per-kernel features of every learner's stream, (T, P, 2D)
    Z = [dictionary.features(s.features[:T]) for s in streams]
    Y = [np.asarray(s.labels[:T]) for s in streams]

    states = [lrn.LearnerState.initial(j, adj[j], P, dim, message_passing=mp) for j in range(J)]
    preds = np.zeros((J, T))
    kpreds = np.zeros((J, T, P))
    klosses = np.zeros((J, T, P))
    weights = np.zeros((J, T, P))
    eps = np.zeros((J, T))
    nbr_preds = [np.zeros((T, len(adj[j]))) for j in range(J)]
    max_dual = np.zeros(T)
    failures = []
    history = np.zeros((J, T + 1, P, dim)) if record_theta else None
    pool = _Pool(config.workers)

    def local_phase(j, t, snap):
        st = states[j]
        z, y = Z[j][t], Y[j][t]
        kp = np.sum(st.theta * z, axis=-1)
        own_pred = float(st.weights @ kp)
        nb = [float(states[i].weights @ np.sum(snap.thetas[i] * z, axis=-1)) for i in st.neighbors]
        e = lrn.weight_disagreement(st.weights, [states[i].weights for i in st.neighbors])
        new_theta = lrn.local_update_quadratic(st, z, y, snap, rho, eta, config.reg)
        return kp, own_pred, loss_fn.loss(st.theta, z, y), nb, e, new_theta

    try:
        for t in range(T):
            try:
                if record_theta:
                    for j in range(J):
                        history[j, t] = states[j].theta
                snap = lrn.NeighborSnapshot({j: states[j].theta for j in range(J)})
                out = pool.map(lambda j: local_phase(j, t, snap), range(J))
                for j, (kp, own_pred, kl, nb, e, _) in enumerate(out):
                    kpreds[j, t] = kp
                    preds[j, t] = own_pred
                    klosses[j, t] = kl
                    weights[j, t] = states[j].weights
                    nbr_preds[j][t] = nb
                    eps[j, t] = e

                # barrier 1: exchange post-update estimates, then dual step
                new_snap = lrn.NeighborSnapshot({j: out[j][5] for j in range(J)})

                def dual_phase(j):
                    nbr = new_snap.for_learner(states[j].neighbors)
                    return lrn.dual_update(states[j].dual, new_snap.thetas[j], nbr, rho)

                duals = pool.map(dual_phase, range(J))
                for j in range(J):
                    states[j].theta = new_snap.thetas[j]
                    states[j].dual = duals[j]
                    states[j].loss_sums = states[j].loss_sums + klosses[j, t]

                # barrier 2: exchange loss exponents (or messages), then combine
                exps = [lrn.hedge_local_exponent(s) for s in states]
                if mp:
                    incoming = [s.messages for s in states]
                    new_w = [lrn.combine_weights(exps[j], [incoming[j][i] for i in adj[j]], eta_g)
                             for j in range(J)]
                    outgoing = [{i: lrn.message_update(exps[j], incoming[j], i) for i in adj[j]}
                                for j in range(J)]
                    for j in range(J):
                        states[j].messages = {i: outgoing[i][j] for i in adj[j]}
                else:
                    new_w = [lrn.combine_weights(exps[j], [exps[i] for i in adj[j]], eta_g) for j in range(J)]
                for j in range(J):
                    states[j].weights = new_w[j]

                dual_sum = np.sum([s.dual for s in states], axis=0)
                max_dual[t] = float(np.max(np.linalg.norm(dual_sum, axis=-1)))
                if config.self_checks:
                    failures.extend(_self_check(t + 1, states, max_dual[t]))
            except DomklError as exc:
                exc.args = (f"round {t + 1}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
                raise
        if record_theta:
            for j in range(J):
                history[j, T] = states[j].theta
    finally:
        pool.close()

    return SimulationResult(
        T=T, neighbors=adj, variances=tuple(dictionary.variances), hyperparameters=hp,
        predictions=preds, labels=np.stack(Y), kernel_predictions=kpreds, kernel_losses=klosses,
        weights=weights, epsilon=eps, neighbor_predictions=nbr_preds, final_states=states,
        theta_history=history, max_dual_sum=max_dual, check_failures=failures,
    )


def _self_check(t: int, states, dual_norm: float) -> list:
    bad = []
    for s in states:
        w = s.weights
        if abs(w.sum() - 1.0) > SIMPLEX_TOL or np.any(w < 0) or np.any(w > 1):
            bad.append({"round": t, "check": "weight_simplex", "learner": s.id + 1,
                        "value": float(abs(w.sum() - 1.0))})
    if dual_norm > DUAL_TOL:
        bad.append({"round": t, "check": "dual_conservation", "learner": None, "value": dual_norm})
    for b in bad:
        log.error("self-check failed: %s", b)
    return bad


def run_centralized_omkl(config: SimulationConfig, stream: Dataset,
                         dictionary: Optional[KernelDictionary] = None) -> SimulationResult:
    """Single-learner baseline: per-kernel online gradient descent plus exponential weights.

    The gradient step size is ``1 / sqrt(T)`` for a merged stream of length
    ``T``; the weights use only the learner's own accumulated losses.
    """
    T = len(stream) if config.rounds is None else min(int(config.rounds) * config.topology.num_learners,
                                                        len(stream))
    if T < 1:
        raise ConfigurationError("centralized baseline needs at least one sample")
    if dictionary is None:
        dictionary = build_dictionary(config.variances, stream.dim, config.num_features, config.seed)
    P = len(dictionary)
    hp = config.hyperparameters(T)
    eta_g = hp["eta_g"]
    step = 1.0 / math.sqrt(T)
    loss_fn = QuadraticLoss(config.reg)
    Z = dictionary.features(stream.features[:T])
    Y = np.asarray(stream.labels[:T])

    st = lrn.LearnerState.initial(0, (), P, dictionary.dim_features)
    preds = np.zeros((1, T))
    kpreds = np.zeros((1, T, P))
    klosses = np.zeros((1, T, P))
    weights = np.zeros((1, T, P))
    for t in range(T):
        z, y = Z[t], Y[t]
        kp = np.sum(st.theta * z, axis=-1)
        kpreds[0, t] = kp
        preds[0, t] = float(st.weights @ kp)
        klosses[0, t] = loss_fn.loss(st.theta, z, y)
        weights[0, t] = st.weights
        st.theta = st.theta - step * loss_fn.gradient(st.theta, z, y)
        st.loss_sums = st.loss_sums + klosses[0, t]
        st.weights = lrn.combine_weights(st.loss_sums, [], eta_g)

    return SimulationResult(
        T=T, neighbors=((),), variances=tuple(dictionary.variances),
        hyperparameters={"step": step, "eta_g": eta_g},
        predictions=preds, labels=Y[None, :], kernel_predictions=kpreds, kernel_losses=klosses,
        weights=weights, epsilon=np.zeros((1, T)), neighbor_predictions=[np.zeros((T, 0))],
        final_states=[st], max_dual_sum=np.zeros(T),
    )

