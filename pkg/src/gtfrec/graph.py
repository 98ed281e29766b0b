"""User-item bipartite graph and the sparse operators built from it.

Users occupy global node indices [0, n); items occupy [n, n+m).  Edges are
deduplicated and sorted by (user, item) so that every derived operator is
bit-reproducible from the same interaction list.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import _kernels


class GraphError(ValueError):
    """Raised for malformed interaction data or operator misuse."""


@dataclass
class InteractionGraph:
    num_users: int
    num_items: int
    edge_user: np.ndarray  # int64, sorted by (user, item)
    edge_item: np.ndarray
    user_degree: np.ndarray
    item_degree: np.ndarray

    @property
    def num_edges(self) -> int:
        return len(self.edge_user)

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.edge_user.tolist(), self.edge_item.tolist()))

    @cached_property
    def user_item_sets(self) -> list[set[int]]:
        """Per-user set of interacted item indices (for membership tests)."""
        sets: list[set[int]] = [set() for _ in range(self.num_users)]
        for u, i in zip(self.edge_user.tolist(), self.edge_item.tolist()):
            sets[u].add(i)
        return sets


def build_graph(interactions, num_users: int, num_items: int) -> InteractionGraph:
    """Build a deduplicated, sorted bipartite interaction graph.

    Duplicate (user, item) pairs collapse to a single edge; the feedback is
    binary.  Isolated users/items are allowed.
    """
    if num_users < 1 or num_items < 1:
        raise GraphError(f"need at least one user and one item, got n={num_users}, m={num_items}")
    pairs = np.asarray(list(interactions), dtype=np.int64)
    if pairs.size == 0:
        raise GraphError("empty interaction list: nothing to train on")
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise GraphError("interactions must be (user, item) pairs")

    users, items = pairs[:, 0], pairs[:, 1]
    bad = (users < 0) | (users >= num_users) | (items < 0) | (items >= num_items)
    if bad.any():
        k = int(np.argmax(bad))
        raise GraphError(
            f"interaction ({int(users[k])}, {int(items[k])}) out of range for "
            f"n={num_users}, m={num_items}"
        )

    # dedupe + sort by (user, item) in one shot via flat keys
    keys = np.unique(users * np.int64(num_items) + items)
    edge_user = keys // num_items
    edge_item = keys % num_items

    user_degree = np.bincount(edge_user, minlength=num_users).astype(np.int64)
    item_degree = np.bincount(edge_item, minlength=num_items).astype(np.int64)
    return InteractionGraph(num_users, num_items, edge_user, edge_item, user_degree, item_degree)


@dataclass
class IncidenceOperator:
    """Degree-normalized oriented incidence over the bipartite graph.

    Row l for edge (u, i) holds -1/sqrt(d_u + 1) at column u and
    +1/sqrt(d_i + 1) at column n + i (orientation fixed user-negative).
    Forward maps node matrices to edge matrices; transpose is the exact
    adjoint.  Products dispatch to the compiled kernel when available.
    """

    num_nodes: int
    col_user: np.ndarray  # intp, global user column per edge
    col_item: np.ndarray  # intp, global item column per edge
    w_user: np.ndarray    # float64, negative entries
    w_item: np.ndarray    # float64, positive entries
    _mat: sp.csr_matrix = field(repr=False)
    _mat_t: sp.csr_matrix = field(repr=False)

    @property
    def num_edges(self) -> int:
        return len(self.col_user)

    def forward(self, M: np.ndarray) -> np.ndarray:
        M = np.ascontiguousarray(M, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != self.num_nodes:
            raise GraphError(f"forward expects {self.num_nodes} rows, got shape {M.shape}")
        if _kernels.HAVE_FAST:
            out = np.empty((self.num_edges, M.shape[1]), dtype=np.float64)
            _kernels.incidence_forward(self.col_user, self.col_item,
                                       self.w_user, self.w_item, M, out)
            return out
        return self._mat @ M

    def transpose(self, Y: np.ndarray) -> np.ndarray:
        Y = np.ascontiguousarray(Y, dtype=np.float64)
        if Y.ndim != 2 or Y.shape[0] != self.num_edges:
            raise GraphError(f"transpose expects {self.num_edges} rows, got shape {Y.shape}")
        if _kernels.HAVE_FAST:
            out = np.zeros((self.num_nodes, Y.shape[1]), dtype=np.float64)
            _kernels.incidence_adjoint(self.col_user, self.col_item,
                                       self.w_user, self.w_item, Y, out)
            return out
        return self._mat_t @ Y

    def to_dense(self) -> np.ndarray:
        return self._mat.toarray()


def apply_incidence(op: IncidenceOperator, M: np.ndarray, direction: str) -> np.ndarray:
    if direction == "forward":
        return op.forward(M)
    if direction == "transpose":
        return op.transpose(M)
    raise GraphError(f"unknown direction {direction!r}")


def build_incidence(graph: InteractionGraph) -> IncidenceOperator:
    n = graph.num_users
    col_user = graph.edge_user.astype(np.intp)
    col_item = (graph.edge_item + n).astype(np.intp)
    w_user = -1.0 / np.sqrt(graph.user_degree[graph.edge_user] + 1.0)
    w_item = 1.0 / np.sqrt(graph.item_degree[graph.edge_item] + 1.0)

    n_edges = graph.num_edges
    rows = np.repeat(np.arange(n_edges), 2)
    cols = np.empty(2 * n_edges, dtype=np.int64)
    cols[0::2] = col_user
    cols[1::2] = col_item
    vals = np.empty(2 * n_edges)
    vals[0::2] = w_user
    vals[1::2] = w_item
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n_edges, graph.num_nodes))
    return IncidenceOperator(graph.num_nodes, col_user, col_item,
                             np.ascontiguousarray(w_user), np.ascontiguousarray(w_item),
                             mat, mat.T.tocsr())


@dataclass
class PropagationOperator:
    """Symmetric normalized adjacency with self-loops over n+m nodes."""

    num_nodes: int
    _mat: sp.csr_matrix = field(repr=False)

    def apply(self, E: np.ndarray) -> np.ndarray:
        E = np.asarray(E, dtype=np.float64)
        if E.ndim != 2 or E.shape[0] != self.num_nodes:
            raise GraphError(f"apply expects {self.num_nodes} rows, got shape {E.shape}")
        return self._mat @ E

    def to_dense(self) -> np.ndarray:
        return self._mat.toarray()


def build_propagation(graph: InteractionGraph) -> PropagationOperator:
    n, nodes = graph.num_users, graph.num_nodes
    rows = np.concatenate([graph.edge_user, graph.edge_item + n, np.arange(nodes)])
    cols = np.concatenate([graph.edge_item + n, graph.edge_user, np.arange(nodes)])
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(nodes, nodes))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    mat = sp.diags(inv_sqrt) @ adj @ sp.diags(inv_sqrt)
    return PropagationOperator(nodes, mat.tocsr())
