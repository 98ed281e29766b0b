"""Dataset parsing, synthetic generation, and checkpoint persistence.

Dataset text format (one user per line, space-separated integer ids, first
token the user id):

    0 12 7
    1 3

Checkpoints are binary: magic b"GTNCKPT1", six little-endian int64 header
fields (n, m, d, seed, epoch, step), then E_in and the two Adam moment
matrices as little-endian float64.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np

from .evaluation import GroundTruth
from .graph import InteractionGraph, build_graph
from .training import ModelState

log = logging.getLogger("gtfrec")

CHECKPOINT_MAGIC = b"GTNCKPT1"


class DataError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class DatasetBundle:
    name: str
    train: InteractionGraph
    truth: GroundTruth
    provenance: str


def _parse_interaction_file(path) -> list[tuple[int, int]]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                ids = [int(t) for t in tokens]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-integer token ({exc})") from None
            if any(v < 0 for v in ids):
                raise DataError(f"{path}:{lineno}: negative id")
            u, items = ids[0], ids[1:]
            if not items:
                log.warning("%s:%d: user %d has no items", path, lineno, u)
            pairs.extend((u, i) for i in items)
    if not pairs:
        raise DataError(f"{path}: no interactions found")
    return pairs


def parse_dataset(train_path, test_path, name: str = "dataset",
                  num_users: int | None = None,
                  num_items: int | None = None) -> DatasetBundle:
    """Load train/test interaction files.

    n and m default to 1 + max observed index across both files; pass
    overrides for datasets whose max index undercounts the universe.  Test
    pairs that duplicate train pairs are dropped with a warning.
    """
    train_pairs = _parse_interaction_file(train_path)
    test_pairs = _parse_interaction_file(test_path)
    all_pairs = train_pairs + test_pairs
    n = num_users if num_users is not None else 1 + max(u for u, _ in all_pairs)
    m = num_items if num_items is not None else 1 + max(i for _, i in all_pairs)

    graph = build_graph(train_pairs, n, m)
    train_sets = graph.user_item_sets
    test_lists: list[list[int]] = [[] for _ in range(n)]
    dropped = 0
    for u, i in test_pairs:
        if i in train_sets[u]:
            dropped += 1
        elif i not in test_lists[u]:
            test_lists[u].append(i)
    if dropped:
        log.warning("dropped %d test pairs that duplicate train pairs", dropped)

    truth = GroundTruth(
        test_items=[np.array(sorted(v), dtype=np.int64) for v in test_lists],
        train_items=[np.array(sorted(s), dtype=np.int64) for s in train_sets],
    )
    return DatasetBundle(name, graph, truth, f"files:{train_path},{test_path}")


def generate_synthetic(num_users: int, num_items: int, interactions: int,
                       num_blocks: int, noise_frac: float, seed: int) -> DatasetBundle:
    """Block-preference generator used as the desk-scale benchmark.

    Users and items are split into num_blocks groups; each drawn
    interaction lands in the user's matching block with probability
    1 - noise_frac, otherwise uniformly over all items.  Each user's items
    are split 80/20 into train/test.
    """
    if interactions > num_users * num_items:
        raise DataError("more interactions requested than user-item pairs exist")
    if num_blocks < 1 or num_blocks > min(num_users, num_items):
        raise DataError(f"num_blocks must be in [1, min(n, m)], got {num_blocks}")
    if not 0 <= noise_frac <= 1:
        raise DataError(f"noise_frac must be in [0, 1], got {noise_frac}")

    rng = np.random.default_rng(seed)
    user_block = np.arange(num_users) % num_blocks
    item_block = np.arange(num_items) % num_blocks

    seen: set[tuple[int, int]] = set()
    max_draws = 50 * interactions + 1000
    draws = 0
    while len(seen) < interactions:
        if draws >= max_draws:
            raise DataError("could not place all interactions; sizes too tight")
        draws += 1
        u = int(rng.integers(num_users))
        if rng.random() < noise_frac:
            i = int(rng.integers(num_items))
        else:
            block_items = np.flatnonzero(item_block == user_block[u])
            i = int(block_items[rng.integers(len(block_items))])
        seen.add((u, i))

    per_user: list[list[int]] = [[] for _ in range(num_users)]
    for u, i in sorted(seen):
        per_user[u].append(i)

    train_pairs: list[tuple[int, int]] = []
    test_lists: list[list[int]] = [[] for _ in range(num_users)]
    for u, items in enumerate(per_user):
        items = list(items)
        rng.shuffle(items)
        n_test = len(items) // 5  # 80/20 split, at least one train item
        for i in items[: len(items) - n_test]:
            train_pairs.append((u, i))
        test_lists[u] = sorted(items[len(items) - n_test:])

    graph = build_graph(train_pairs, num_users, num_items)
    truth = GroundTruth(
        test_items=[np.array(v, dtype=np.int64) for v in test_lists],
        train_items=[np.array(sorted(s), dtype=np.int64) for s in graph.user_item_sets],
    )
    prov = (f"synthetic:n={num_users},m={num_items},interactions={interactions},"
            f"blocks={num_blocks},noise={noise_frac},seed={seed}")
    return DatasetBundle("synthetic", graph, truth, prov)


def write_dataset(bundle: DatasetBundle, train_path, test_path) -> None:
    """Serialize a bundle back into the line-per-user text format."""
    per_user: dict[int, list[int]] = {}
    for u, i in zip(bundle.train.edge_user.tolist(), bundle.train.edge_item.tolist()):
        per_user.setdefault(u, []).append(i)
    with open(train_path, "w", encoding="utf-8") as fh:
        for u in sorted(per_user):
            fh.write(" ".join(map(str, [u] + per_user[u])) + "\n")
    with open(test_path, "w", encoding="utf-8") as fh:
        for u, items in enumerate(bundle.truth.test_items):
            if len(items):
                fh.write(" ".join(map(str, [u] + list(items))) + "\n")


def save_checkpoint(state: ModelState, path) -> None:
    n, m, d = state.num_users, state.num_items, state.embed_dim
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<6q", n, m, d, state.seed, state.epoch, state.step))
        for arr in (state.E_in, state.adam_m, state.adam_v):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path, expect_dim: int | None = None) -> ModelState:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic header (not a checkpoint, or wrong version)")
    if len(blob) < 8 + 48:
        raise CheckpointError(f"{path}: truncated header")
    n, m, d, seed, epoch, step = struct.unpack_from("<6q", blob, 8)
    if expect_dim is not None and d != expect_dim:
        raise CheckpointError(f"{path}: checkpoint has d={d}, run expects d={expect_dim}")
    count = (n + m) * d
    expected = 8 + 48 + 3 * count * 8
    if len(blob) != expected:
        raise CheckpointError(f"{path}: expected {expected} bytes, found {len(blob)}")
    arrs = []
    offset = 8 + 48
    for _ in range(3):
        arrs.append(np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
                    .reshape(n + m, d).copy())
        offset += count * 8
    return ModelState(
        num_users=n, num_items=m, seed=seed,
        E_in=arrs[0], adam_m=arrs[1], adam_v=arrs[2],
        step=step, epoch=epoch,
        rng=np.random.default_rng([seed, 1]),
    )
