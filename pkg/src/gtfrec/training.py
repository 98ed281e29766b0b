"""Pairwise ranking training of the initial embeddings.

The only trainable parameters are the input embeddings E_in.  Every batch
filters the full embedding matrix, scores the batch's (user, pos, neg)
triples by inner products, and backpropagates the ranking loss through the
unrolled filter iterations by hand (adjoint of clip = multiply by the
recorded active mask; adjoints of the sparse products = transposed
applications).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .filtering import FilterConfig, FilterTrace, gtcf_filter, laplacian_propagate
from .graph import GraphError, IncidenceOperator, InteractionGraph, PropagationOperator


class TrainError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    embed_dim: int = 64
    learning_rate: float = 1e-3
    batch_size: int = 1024
    l2_alpha: float = 1e-4
    epochs: int = 100
    seed: int = 0
    filter: FilterConfig = field(default_factory=FilterConfig)

    def __post_init__(self):
        if self.embed_dim < 1 or self.batch_size < 1 or self.epochs < 1:
            raise TrainError("embed_dim, batch_size and epochs must be >= 1")
        if self.learning_rate < 0:
            # zero is allowed: it freezes the parameters but still reports loss
            raise TrainError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if self.l2_alpha < 0:
            raise TrainError(f"l2_alpha must be nonnegative, got {self.l2_alpha}")


@dataclass
class ModelState:
    num_users: int
    num_items: int
    seed: int
    E_in: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    step: int
    epoch: int
    rng: np.random.Generator

    @property
    def embed_dim(self) -> int:
        return self.E_in.shape[1]


@dataclass
class TripleBatch:
    users: np.ndarray
    pos_items: np.ndarray
    neg_items: np.ndarray

    def __len__(self) -> int:
        return len(self.users)


def init_embeddings(n: int, m: int, d: int, seed: int) -> np.ndarray:
    """Gaussian init, std 0.1, deterministic given the seed."""
    if d < 1:
        raise TrainError(f"embed_dim must be >= 1, got {d}")
    rng = np.random.default_rng(seed)
    return 0.1 * rng.standard_normal((n + m, d))


def init_model(graph: InteractionGraph, cfg: TrainConfig) -> ModelState:
    E_in = init_embeddings(graph.num_users, graph.num_items, cfg.embed_dim, cfg.seed)
    return ModelState(
        num_users=graph.num_users,
        num_items=graph.num_items,
        seed=cfg.seed,
        E_in=E_in,
        adam_m=np.zeros_like(E_in),
        adam_v=np.zeros_like(E_in),
        step=0,
        epoch=0,
        rng=np.random.default_rng([cfg.seed, 1]),
    )


def sample_triples(graph: InteractionGraph, batch_size: int,
                   rng: np.random.Generator) -> TripleBatch:
    """Uniform positive edges, each paired with a uniformly sampled
    unobserved item for the same user (rejection sampling).  Users who
    interacted with every item are skipped and resampled."""
    m = graph.num_items
    sets = graph.user_item_sets
    if all(graph.user_degree >= m):
        raise TrainError("every user has interacted with every item; no negatives exist")

    users = np.empty(batch_size, dtype=np.int64)
    pos = np.empty(batch_size, dtype=np.int64)
    neg = np.empty(batch_size, dtype=np.int64)
    filled = 0
    while filled < batch_size:
        e = int(rng.integers(graph.num_edges))
        u = int(graph.edge_user[e])
        if len(sets[u]) >= m:
            continue
        j = int(rng.integers(m))
        while j in sets[u]:
            j = int(rng.integers(m))
        users[filled] = u
        pos[filled] = graph.edge_item[e]
        neg[filled] = j
        filled += 1
    return TripleBatch(users, pos, neg)


def bpr_loss(pos_scores: np.ndarray, neg_scores: np.ndarray,
             E_in: np.ndarray, alpha: float) -> float:
    """Mean -ln sigmoid(pos - neg) over the batch plus alpha * ||E_in||_F^2."""
    pos_scores = np.asarray(pos_scores, dtype=np.float64)
    neg_scores = np.asarray(neg_scores, dtype=np.float64)
    if pos_scores.shape != neg_scores.shape:
        raise TrainError(f"score length mismatch: {pos_scores.shape} vs {neg_scores.shape}")
    diff = pos_scores - neg_scores
    # -ln sigmoid(x) = softplus(-x), stable for large |x|
    ranking = float(np.mean(np.logaddexp(0.0, -diff)))
    return ranking + alpha * float(np.sum(np.asarray(E_in) ** 2))


def backward_gtcf(trace: FilterTrace, op: IncidenceOperator,
                  grad_EK: np.ndarray) -> np.ndarray:
    """Exact vector-Jacobian product of the filter output w.r.t. E_in.

    Reverses the unrolled iterations using the recorded clip masks; E_in
    enters at the output step and at every primal prediction, so gradients
    accumulate at each.
    """
    if trace.masks is None:
        raise TrainError("trace recorded without clip masks; rerun filter with keep_masks=True")
    grad_EK = np.ascontiguousarray(grad_EK, dtype=np.float64)
    if grad_EK.shape != trace.output.shape:
        raise GraphError(f"grad shape {grad_EK.shape} != output shape {trace.output.shape}")

    grad_E_in = grad_EK.copy()
    gY = -op.forward(grad_EK)
    for mask in reversed(trace.masks):
        if mask.shape != gY.shape:
            raise TrainError("iteration-count/shape mismatch between trace and operator")
        gYbar = np.where(mask, gY, 0.0)
        gEbar = trace.beta * op.transpose(gYbar)
        grad_E_in += gEbar
        gY = gYbar - op.forward(gEbar)
    return grad_E_in


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def adam_step(state: ModelState, grads: np.ndarray, lr: float) -> ModelState:
    """Standard Adam update with bias correction, applied in place."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != state.E_in.shape:
        raise TrainError(f"gradient shape {grads.shape} != parameter shape {state.E_in.shape}")
    if not np.isfinite(grads).all():
        raise TrainError("non-finite gradients")
    state.step += 1
    t = state.step
    state.adam_m = ADAM_BETA1 * state.adam_m + (1 - ADAM_BETA1) * grads
    state.adam_v = ADAM_BETA2 * state.adam_v + (1 - ADAM_BETA2) * grads ** 2
    m_hat = state.adam_m / (1 - ADAM_BETA1 ** t)
    v_hat = state.adam_v / (1 - ADAM_BETA2 ** t)
    state.E_in = state.E_in - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return state


class GtnBackend:
    """Trend-filter forward/backward pair used during training."""

    name = "gtn"

    def __init__(self, op: IncidenceOperator, filter_cfg: FilterConfig):
        self.op = op
        self.filter_cfg = filter_cfg

    def forward(self, E_in: np.ndarray):
        trace = gtcf_filter(E_in, self.op, self.filter_cfg, keep_masks=True)
        return trace.output, trace

    def backward(self, ctx: FilterTrace, grad_EK: np.ndarray) -> np.ndarray:
        return backward_gtcf(ctx, self.op, grad_EK)

    def infer(self, E_in: np.ndarray, op: IncidenceOperator | None = None) -> np.ndarray:
        op = op if op is not None else self.op
        return gtcf_filter(E_in, op, self.filter_cfg, keep_masks=False).output


class LaplacianBackend:
    """Linear propagation baseline; its adjoint is the same propagation
    because the operator is symmetric."""

    name = "laplacian"

    def __init__(self, prop: PropagationOperator, num_layers: int, combine: str = "mean"):
        self.prop = prop
        self.num_layers = num_layers
        self.combine = combine

    def forward(self, E_in: np.ndarray):
        return laplacian_propagate(E_in, self.prop, self.num_layers, self.combine), None

    def backward(self, ctx, grad_EK: np.ndarray) -> np.ndarray:
        return laplacian_propagate(grad_EK, self.prop, self.num_layers, self.combine)

    def infer(self, E_in: np.ndarray, prop: PropagationOperator | None = None) -> np.ndarray:
        prop = prop if prop is not None else self.prop
        return laplacian_propagate(E_in, prop, self.num_layers, self.combine)


def _score_grad(E_K: np.ndarray, batch: TripleBatch, n: int):
    """Batch scores and the loss gradient w.r.t. the filtered embeddings."""
    u_rows = batch.users
    i_rows = n + batch.pos_items
    j_rows = n + batch.neg_items
    eu, ei, ej = E_K[u_rows], E_K[i_rows], E_K[j_rows]
    pos = np.sum(eu * ei, axis=1)
    neg = np.sum(eu * ej, axis=1)
    # d/dx of mean softplus(-x) at x = pos - neg
    coef = (-1.0 / (1.0 + np.exp(pos - neg)) / len(batch))[:, None]
    grad = np.zeros_like(E_K)
    np.add.at(grad, u_rows, coef * (ei - ej))
    np.add.at(grad, i_rows, coef * eu)
    np.add.at(grad, j_rows, -coef * eu)
    return pos, neg, grad


def train_epoch(state: ModelState, graph: InteractionGraph, backend,
                cfg: TrainConfig) -> tuple[ModelState, dict]:
    """One pass of ceil(|E| / batch_size) mini-batch updates.

    ``backend`` is a GtnBackend/LaplacianBackend; passing an
    IncidenceOperator wraps it with cfg.filter.
    """
    if isinstance(backend, IncidenceOperator):
        backend = GtnBackend(backend, cfg.filter)
    n = graph.num_users
    num_batches = -(-graph.num_edges // cfg.batch_size)
    losses = []
    t0 = time.perf_counter()
    for _ in range(num_batches):
        batch = sample_triples(graph, cfg.batch_size, state.rng)
        E_K, ctx = backend.forward(state.E_in)
        pos, neg, grad_EK = _score_grad(E_K, batch, n)
        losses.append(bpr_loss(pos, neg, state.E_in, cfg.l2_alpha))
        grad_E_in = backend.backward(ctx, grad_EK) + 2.0 * cfg.l2_alpha * state.E_in
        adam_step(state, grad_E_in, cfg.learning_rate)
    state.epoch += 1
    stats = {
        "epoch": state.epoch,
        "mean_loss": float(np.mean(losses)),
        "num_batches": num_batches,
        "wall_time": time.perf_counter() - t0,
    }
    return state, stats
