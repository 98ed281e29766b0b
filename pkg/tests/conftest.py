"""Shared test helpers: random bipartite graphs, an independent subgradient
oracle for the filter objective, and a full-loss finite-difference probe."""

from __future__ import annotations

import numpy as np
import pytest

from gtfrec.filtering import gtcf_filter
from gtfrec.graph import build_graph, build_incidence
from gtfrec.training import backward_gtcf, bpr_loss, _score_grad


def random_bipartite(rng, max_users=10, max_items=10, min_users=2, min_items=2,
                     density=0.4):
    """A random connected-enough bipartite graph; every user gets >= 1 edge."""
    n = int(rng.integers(min_users, max_users + 1))
    m = int(rng.integers(min_items, max_items + 1))
    pairs = [(u, int(rng.integers(m))) for u in range(n)]
    extra = rng.random((n, m)) < density
    pairs += [(u, i) for u in range(n) for i in range(m) if extra[u, i]]
    return build_graph(pairs, n, m)


def subgradient_objective_oracle(D_dense: np.ndarray, E_in: np.ndarray,
                                 lam: float, steps: int) -> float:
    """Best objective found by plain subgradient descent with diminishing
    steps on 0.5||E - E_in||^2 + lam ||D E||_1.  Independent of the
    primal-dual path: dense products, explicit sign subgradient."""
    return _subgrad_jit(np.ascontiguousarray(D_dense),
                        np.ascontiguousarray(E_in, dtype=np.float64),
                        float(lam), steps)


def projected_dual_oracle(D_dense: np.ndarray, E_in: np.ndarray, lam: float,
                          steps: int, step: float = 0.45) -> float:
    """Best primal objective found by projected gradient on the box-dual
    0.5 ||D^T Y - E_in||^2 s.t. |Y| <= lam, with dense products and its own
    stepsize.  Converges to the optimum far faster than plain subgradient."""
    return _dual_pg_jit(np.ascontiguousarray(D_dense),
                        np.ascontiguousarray(E_in, dtype=np.float64),
                        float(lam), steps, float(step))


def _dual_pg_impl(D, E_in, lam, steps, step):
    Y = np.zeros((D.shape[0], E_in.shape[1]))
    best = np.inf
    for _ in range(steps):
        E = E_in - D.T @ Y
        obj = 0.5 * np.sum((E - E_in) ** 2) + lam * np.sum(np.abs(D @ E))
        if obj < best:
            best = obj
        Y = np.minimum(np.maximum(Y + step * (D @ E), -lam), lam)
    return best


def _subgrad_impl(D, E_in, lam, steps):
    E = E_in.copy()
    best = np.inf
    scale = 1.0 / (1.0 + lam)
    for t in range(steps):
        DE = D @ E
        obj = 0.5 * np.sum((E - E_in) ** 2) + lam * np.sum(np.abs(DE))
        if obj < best:
            best = obj
        G = (E - E_in) + lam * (D.T @ np.sign(DE))
        E = E - (scale / np.sqrt(t + 1.0)) * G
    return best


try:
    from numba import njit
    _subgrad_jit = njit(cache=True)(_subgrad_impl)
    _dual_pg_jit = njit(cache=True)(_dual_pg_impl)
except ImportError:  # pragma: no cover - numba is expected in the test env
    _subgrad_jit = _subgrad_impl
    _dual_pg_jit = _dual_pg_impl


def full_loss(E_in, op, filter_cfg, batch, n, alpha):
    """Scalar training loss for a fixed triple batch (used as the
    finite-difference target)."""
    trace = gtcf_filter(E_in, op, filter_cfg, keep_masks=False)
    E_K = trace.output
    pos = np.sum(E_K[batch.users] * E_K[n + batch.pos_items], axis=1)
    neg = np.sum(E_K[batch.users] * E_K[n + batch.neg_items], axis=1)
    return bpr_loss(pos, neg, E_in, alpha)


def full_loss_grad(E_in, op, filter_cfg, batch, n, alpha):
    """Analytic gradient of full_loss via the hand-written backward pass."""
    trace = gtcf_filter(E_in, op, filter_cfg, keep_masks=True)
    _, _, grad_EK = _score_grad(trace.output, batch, n)
    return backward_gtcf(trace, op, grad_EK) + 2.0 * alpha * E_in


def central_difference(fn, x0: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function over a matrix."""
    grad = np.zeros_like(x0)
    it = np.nditer(x0, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x0.copy()
        xp[idx] += h
        xm = x0.copy()
        xm[idx] -= h
        grad[idx] = (fn(xp) - fn(xm)) / (2 * h)
    return grad


def min_boundary_gap(trace, lam: float) -> float:
    """Smallest distance of any pre-threshold dual entry to the clip
    boundary; requires a trace recorded with record_trace=True."""
    gaps = [np.min(np.abs(np.abs(Ybar) - lam)) for Ybar in trace.dual_preds]
    return min(gaps) if gaps else np.inf


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tiny_incidence(pairs, n, m):
    graph = build_graph(pairs, n, m)
    return graph, build_incidence(graph)
