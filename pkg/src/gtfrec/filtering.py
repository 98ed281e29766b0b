"""Primal-dual trend filter over the user-item graph, plus the quadratic
propagation baseline.

The filter minimizes  0.5 * ||E - E_in||_F^2 + lam * ||D E||_1  where D is
the normalized incidence operator.  With primal stepsize gamma = 1 the
iteration simplifies to

    Ebar^{k+1} = E_in - D^T Y^k
    Ybar^{k+1} = Y^k + beta * D Ebar^{k+1}
    Y^{k+1}    = sign(Ybar^{k+1}) * min(|Ybar^{k+1}|, lam)

with output E^K = E_in - D^T Y^K.  gamma = 1, beta = 1/2 are safe because
the spectral norm of D D^T on a bipartite graph is at most 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import GraphError, IncidenceOperator, PropagationOperator


class FilterError(ValueError):
    """Raised for bad filter configuration or numerical blow-up."""


@dataclass(frozen=True)
class FilterConfig:
    lam: float = 2.0
    num_layers: int = 3
    gamma: float = 1.0
    beta: float = 0.5
    record_trace: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise FilterError(f"lam must be nonnegative, got {self.lam}")
        if self.num_layers < 0:
            raise FilterError(f"num_layers must be >= 0, got {self.num_layers}")
        if self.gamma <= 0 or self.beta <= 0:
            raise FilterError("stepsizes gamma and beta must be positive")


@dataclass
class FilterTrace:
    """Result of a filter run: output embeddings, final dual, and the
    per-iteration records needed by backprop (clip-active masks) and by
    convergence plots (objective series, when recorded)."""

    output: np.ndarray          # (n+m) x d
    dual: np.ndarray            # |E| x d, final Y
    masks: list[np.ndarray] | None   # per iteration, bool |E| x d
    objectives: list[float]     # per iteration, empty unless record_trace
    lam: float
    beta: float
    primal_preds: list[np.ndarray] | None = None  # Ebar per iteration (record_trace)
    dual_preds: list[np.ndarray] | None = None    # Ybar per iteration (record_trace)

    @property
    def num_iterations(self) -> int:
        return len(self.masks) if self.masks is not None else len(self.objectives)

    def objective_series(self) -> list[tuple[int, float]]:
        return list(enumerate(self.objectives, start=1))

    def write_objective_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iteration,objective\n")
            for k, v in self.objective_series():
                fh.write(f"{k},{v!r}\n")


def clip_prox(X: np.ndarray, lam: float) -> np.ndarray:
    """Elementwise projection onto [-lam, lam]: sign(x) * min(|x|, lam)."""
    if lam < 0:
        raise FilterError(f"lam must be nonnegative, got {lam}")
    return np.clip(X, -lam, lam)


def soft_threshold(X: np.ndarray, tau: float) -> np.ndarray:
    """Elementwise shrinkage: sign(x) * max(|x| - tau, 0)."""
    if tau < 0:
        raise FilterError(f"tau must be nonnegative, got {tau}")
    X = np.asarray(X)
    return np.sign(X) * np.maximum(np.abs(X) - tau, 0.0)


def gtf_objective(E: np.ndarray, E_in: np.ndarray, op: IncidenceOperator, lam: float) -> float:
    """0.5 * ||E - E_in||_F^2 + lam * ||D E||_1"""
    E = np.asarray(E, dtype=np.float64)
    E_in = np.asarray(E_in, dtype=np.float64)
    if E.shape != E_in.shape:
        raise GraphError(f"shape mismatch: {E.shape} vs {E_in.shape}")
    fidelity = 0.5 * float(np.sum((E - E_in) ** 2))
    penalty = float(np.sum(np.abs(op.forward(E))))
    return fidelity + lam * penalty


def gtcf_filter(E_in: np.ndarray, op: IncidenceOperator, cfg: FilterConfig,
                *, keep_masks: bool = True) -> FilterTrace:
    """Run K iterations of the primal-dual trend filter from Y^0 = 0.

    K = 0 and lam = 0 both return E_in unchanged.  ``keep_masks=False``
    drops the per-iteration clip masks (backprop through the trace then
    becomes unavailable); use it for inference-only or timing runs.
    """
    E_in = np.ascontiguousarray(E_in, dtype=np.float64)
    if E_in.ndim != 2 or E_in.shape[0] != op.num_nodes:
        raise GraphError(f"E_in must be ({op.num_nodes}, d), got {E_in.shape}")
    if cfg.gamma != 1.0:
        return _papc_filter(E_in, op, cfg, keep_masks=keep_masks)

    d = E_in.shape[1]
    K = cfg.num_layers
    lam, beta = cfg.lam, cfg.beta
    Y = np.zeros((op.num_edges, d))
    masks: list[np.ndarray] | None = [] if keep_masks else None
    objectives: list[float] = []
    primal_preds: list[np.ndarray] | None = [] if cfg.record_trace else None
    dual_preds: list[np.ndarray] | None = [] if cfg.record_trace else None

    for k in range(K):
        Ebar = E_in - op.transpose(Y)
        Ybar = Y + beta * op.forward(Ebar)
        if masks is not None:
            # boundary counts as active; lam = 0 keeps the clip inert
            masks.append((np.abs(Ybar) <= lam) if lam > 0 else np.zeros_like(Ybar, dtype=bool))
        if cfg.record_trace:
            primal_preds.append(Ebar)
            dual_preds.append(Ybar)
        Y = np.clip(Ybar, -lam, lam)
        if not np.isfinite(Y).all():
            raise FilterError(f"non-finite dual at iteration {k + 1}")
        if cfg.record_trace:
            objectives.append(gtf_objective(E_in - op.transpose(Y), E_in, op, lam))

    output = E_in - op.transpose(Y) if K > 0 else E_in.copy()
    return FilterTrace(output, Y, masks, objectives, lam, beta,
                       primal_preds, dual_preds)


def _papc_filter(E_in: np.ndarray, op: IncidenceOperator, cfg: FilterConfig,
                 *, keep_masks: bool) -> FilterTrace:
    # general-stepsize predictor-corrector; no backprop support (gamma != 1)
    d = E_in.shape[1]
    lam, gamma, beta = cfg.lam, cfg.gamma, cfg.beta
    E = E_in.copy()
    Y = np.zeros((op.num_edges, d))
    objectives: list[float] = []
    for k in range(cfg.num_layers):
        Ebar = E - gamma * (E - E_in) - gamma * op.transpose(Y)
        Y = np.clip(Y + beta * op.forward(Ebar), -lam, lam)
        E = E - gamma * (E - E_in) - gamma * op.transpose(Y)
        if not np.isfinite(E).all():
            raise FilterError(f"non-finite primal at iteration {k + 1}")
        if cfg.record_trace:
            objectives.append(gtf_objective(E, E_in, op, lam))
    return FilterTrace(E, Y, None, objectives, lam, beta)


#: sentinel for edges whose embedding difference is numerically zero
UNDEFINED_WEIGHT = np.nan


def edge_weights(E: np.ndarray, op: IncidenceOperator, eps: float = 1e-12) -> np.ndarray:
    """Diagnostic per-edge reliability weights: ||delta||_1 / ||delta||_2^2
    over the normalized embedding difference rows.  Edges with vanishing
    difference get NaN rather than infinity.  Never fed back into training.
    """
    diffs = op.forward(np.asarray(E, dtype=np.float64))
    l1 = np.sum(np.abs(diffs), axis=1)
    l2sq = np.sum(diffs ** 2, axis=1)
    out = np.full(op.num_edges, UNDEFINED_WEIGHT)
    ok = l2sq >= eps
    out[ok] = l1[ok] / l2sq[ok]
    return out


def laplacian_propagate(E_in: np.ndarray, op: PropagationOperator, K: int,
                        combine: str = "mean") -> np.ndarray:
    """Baseline propagation E^{k+1} = A~ E^k.

    combine="last" returns A~^K E_in; combine="mean" averages E^0..E^K
    (the layer combination of the simplified-GCN recommenders).
    """
    if K < 0:
        raise FilterError(f"K must be >= 0, got {K}")
    if combine not in ("last", "mean"):
        raise FilterError(f"combine must be 'last' or 'mean', got {combine!r}")
    E = np.asarray(E_in, dtype=np.float64)
    if combine == "last":
        for _ in range(K):
            E = op.apply(E)
        return E
    acc = E.copy()
    for _ in range(K):
        E = op.apply(E)
        acc += E
    return acc / (K + 1)
