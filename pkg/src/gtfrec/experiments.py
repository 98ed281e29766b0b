"""Desk-scale experiment orchestration: noise-injection robustness, lambda
and depth sweeps, epoch curves, convergence logging, and the edge-difference
sparsity comparison between the trend filter and the propagation baseline.

Noise perturbs only the inference-time graph; models stay trained on clean
data and the held-out ground truth is unchanged.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import DatasetBundle
from .evaluation import evaluate_model, sparsity_ratio
from .filtering import FilterConfig, gtcf_filter, gtf_objective, laplacian_propagate
from .graph import (GraphError, InteractionGraph, build_incidence,
                    build_propagation)
from .training import (GtnBackend, LaplacianBackend, TrainConfig, init_model,
                       train_epoch)

#: perturbation grid used for the robustness study
NOISE_RATES = (0.05, 0.06, 0.08, 0.10, 0.15, 0.20, 0.30, 0.50)

BACKENDS = ("gtn", "laplacian")


@dataclass
class ExperimentReport:
    kind: str
    seed: int
    rows: list[dict] = field(default_factory=list)
    started_at: float = field(default_factory=time.time)

    def add(self, coordinate, backend: str, metric: str, K, value) -> None:
        self.rows.append({
            "kind": self.kind,
            "coordinate": coordinate,
            "backend": backend,
            "metric": metric,
            "K": K,
            "value": value,
            "seed": self.seed,
            "timestamp": time.time(),
        })

    def values(self, backend: str, metric: str) -> list[tuple]:
        return [(r["coordinate"], r["value"]) for r in self.rows
                if r["backend"] == backend and r["metric"] == metric]

    def write_csv(self, path) -> None:
        fields = ["kind", "coordinate", "backend", "metric", "K", "value", "seed", "timestamp"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(self.rows)

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.rows, fh, indent=2)
            fh.write("\n")


def inject_noise(graph: InteractionGraph, rate: float,
                 rng: np.random.Generator) -> InteractionGraph:
    """Add floor(rate * |E|) uniformly sampled absent edges.

    Original edges are retained untouched; the result is a fresh graph.
    """
    if not 0 <= rate:
        raise GraphError(f"noise rate must be nonnegative, got {rate}")
    n_new = int(rate * graph.num_edges)
    if n_new == 0:
        return graph
    absent_total = graph.num_users * graph.num_items - graph.num_edges
    if n_new > absent_total:
        raise GraphError(f"cannot inject {n_new} edges: only {absent_total} absent pairs")

    existing = set(zip(graph.edge_user.tolist(), graph.edge_item.tolist()))
    added: set[tuple[int, int]] = set()
    while len(added) < n_new:
        u = int(rng.integers(graph.num_users))
        i = int(rng.integers(graph.num_items))
        if (u, i) not in existing and (u, i) not in added:
            added.add((u, i))

    from .graph import build_graph
    pairs = list(existing) + list(added)
    return build_graph(pairs, graph.num_users, graph.num_items)


def make_backend(name: str, graph: InteractionGraph, cfg: TrainConfig):
    if name == "gtn":
        return GtnBackend(build_incidence(graph), cfg.filter)
    if name == "laplacian":
        return LaplacianBackend(build_propagation(graph), cfg.filter.num_layers, "mean")
    raise ValueError(f"unknown backend {name!r}")


def train_backend(bundle: DatasetBundle, backend_name: str, cfg: TrainConfig,
                  progress=None):
    """Train one backend on the bundle's clean train graph."""
    backend = make_backend(backend_name, bundle.train, cfg)
    state = init_model(bundle.train, cfg)
    history = []
    for _ in range(cfg.epochs):
        state, stats = train_epoch(state, bundle.train, backend, cfg)
        history.append(stats)
        if progress:
            progress(backend_name, stats)
    return state, backend, history


def evaluate_backend(state, backend_name: str, cfg: TrainConfig,
                     bundle: DatasetBundle, ks=(20,),
                     inference_graph: InteractionGraph | None = None) -> list[dict]:
    """Metrics from a trained state; optionally filter through a perturbed graph."""
    graph = inference_graph if inference_graph is not None else bundle.train
    if backend_name == "gtn":
        E_K = gtcf_filter(state.E_in, build_incidence(graph), cfg.filter,
                          keep_masks=False).output
    elif backend_name == "laplacian":
        E_K = laplacian_propagate(state.E_in, build_propagation(graph),
                                  cfg.filter.num_layers, "mean")
    else:
        raise ValueError(f"unknown backend {backend_name!r}")
    return evaluate_model(E_K, bundle.truth, ks, bundle.train.num_users)


def run_sweep(kind: str, values, base_cfg: TrainConfig, bundle: DatasetBundle,
              backends=BACKENDS, ks=(20,), progress=None) -> ExperimentReport:
    """Train/evaluate over a sweep grid.

    kind=noise trains once per backend and varies only the inference graph;
    the other kinds retrain per value.  kind=epochs evaluates one training
    run at each requested epoch count.
    """
    if not values:
        raise ValueError("sweep needs at least one value")
    if kind not in ("lambda", "layers", "noise", "epochs"):
        raise ValueError(f"unknown sweep kind {kind!r}")
    report = ExperimentReport(kind=kind, seed=base_cfg.seed)

    for backend_name in backends:
        if kind == "noise":
            state, _, _ = train_backend(bundle, backend_name, base_cfg, progress)
            for rate in values:
                rng = np.random.default_rng([base_cfg.seed, 7, int(round(rate * 1000))])
                noisy = inject_noise(bundle.train, float(rate), rng)
                for row in evaluate_backend(state, backend_name, base_cfg, bundle,
                                            ks, inference_graph=noisy):
                    report.add(float(rate), backend_name, row["metric"], row["K"], row["value"])
        elif kind == "epochs":
            checkpoints = sorted(int(v) for v in values)
            cfg = replace(base_cfg, epochs=max(checkpoints))
            backend = make_backend(backend_name, bundle.train, cfg)
            state = init_model(bundle.train, cfg)
            done = 0
            for target in checkpoints:
                for _ in range(target - done):
                    state, stats = train_epoch(state, bundle.train, backend, cfg)
                    if progress:
                        progress(backend_name, stats)
                done = target
                for row in evaluate_backend(state, backend_name, cfg, bundle, ks):
                    report.add(target, backend_name, row["metric"], row["K"], row["value"])
        else:
            for value in values:
                if kind == "lambda":
                    cfg = replace(base_cfg, filter=replace(base_cfg.filter, lam=float(value)))
                    coord = float(value)
                else:  # layers
                    cfg = replace(base_cfg,
                                  filter=replace(base_cfg.filter, num_layers=int(value)))
                    coord = int(value)
                state, _, _ = train_backend(bundle, backend_name, cfg, progress)
                for row in evaluate_backend(state, backend_name, cfg, bundle, ks):
                    report.add(coord, backend_name, row["metric"], row["K"], row["value"])
    return report


def convergence_log(E_in: np.ndarray, op, cfg: FilterConfig,
                    K_max: int) -> list[tuple[int, float]]:
    """Objective value at every filter iteration, for convergence plots."""
    if K_max < 1:
        raise ValueError(f"K_max must be >= 1, got {K_max}")
    run_cfg = dataclasses.replace(cfg, num_layers=K_max, record_trace=True)
    trace = gtcf_filter(E_in, op, run_cfg, keep_masks=False)
    return trace.objective_series()


def sparsity_analysis(states: dict, bundle: DatasetBundle, cfg: TrainConfig,
                      threshold: float = 0.2) -> dict[str, float]:
    """Sparsity ratio of the normalized edge differences of each trained
    backend's final embeddings."""
    op = build_incidence(bundle.train)
    out = {}
    for backend_name, state in states.items():
        if backend_name == "gtn":
            E_K = gtcf_filter(state.E_in, op, cfg.filter, keep_masks=False).output
        else:
            E_K = laplacian_propagate(state.E_in, build_propagation(bundle.train),
                                      cfg.filter.num_layers, "mean")
        out[backend_name] = sparsity_ratio(op.forward(E_K), threshold)
    return out
