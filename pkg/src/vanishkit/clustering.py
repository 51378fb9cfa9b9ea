"""Single-linkage agglomerative clustering of feature descriptors."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .features import feature_arrays


@dataclass
class Dendrogram:
    """Merge history of an agglomerative clustering.

    Each merge is ``(a, b, distance)`` where ``a < b`` are the smallest leaf
    indices of the two groups joined; the merged group keeps leader ``a``.
    """

    merges: list
    leaf_count: int

    def heights(self):
        return np.array([m[2] for m in self.merges], dtype=float)

    def to_linkage(self):
        """The same tree as a scipy-style ``(n - 1, 4)`` linkage matrix."""
        n = self.leaf_count
        node = list(range(n))
        size = [1] * n
        Z = np.zeros((max(n - 1, 0), 4))
        for k, (a, b, d) in enumerate(self.merges):
            na, nb = node[a], node[b]
            Z[k] = min(na, nb), max(na, nb), d, size[a] + size[b]
            node[a] = n + k
            size[a] += size[b]
        return Z


@dataclass(frozen=True)
class FeatureGroup:
    member_ids: frozenset
    cohesion: float


@dataclass
class CutPolicy:
    """How a dendrogram is cut into visual-word groups.

    ``threshold`` overrides ``percentile`` (q-th percentile of merge heights).
    Groups larger than ``max_size`` are split along the tree; groups smaller
    than ``min_size`` are dropped.
    """

    percentile: float = 50.0
    threshold: Optional[float] = None
    min_size: int = 3
    max_size: int = 40

    def validate(self):
        if not 0.0 <= self.percentile <= 100.0:
            raise ValueError("percentile must be in [0, 100]")
        if self.min_size < 1 or self.max_size < self.min_size:
            raise ValueError("need 1 <= min_size <= max_size")


def build_distance_matrix(features):
    """Euclidean descriptor distances between all feature pairs.

    Accepts a list of :class:`~vanishkit.features.Feature` or an ``(n, d)``
    descriptor array.
    """
    if isinstance(features, np.ndarray):
        desc = np.ascontiguousarray(features, dtype=float)
    else:
        desc = np.ascontiguousarray(feature_arrays(features)[3])
    if len(desc) < 2:
        raise ValueError("need at least 2 features for a distance matrix")
    return kernels.pairwise_distances(desc)


def single_linkage(dm):
    dm = np.ascontiguousarray(dm, dtype=float)
    n = dm.shape[0]
    if dm.ndim != 2 or dm.shape[1] != n:
        raise ValueError("distance matrix must be square")
    if n < 2:
        return Dendrogram(merges=[], leaf_count=n)
    pairs, heights = kernels.single_linkage_merges(dm)
    merges = [(int(a), int(b), float(h)) for (a, b), h in zip(pairs, heights)]
    return Dendrogram(merges=merges, leaf_count=n)


def cut_dendrogram(dendrogram, policy=None, ids=None):
    """Partition the leaves at a distance threshold.

    Returns surviving groups sorted by smallest member id. ``ids`` maps leaf
    index to feature id (identity by default).
    """
    policy = policy or CutPolicy()
    policy.validate()
    n = dendrogram.leaf_count
    ids = list(range(n)) if ids is None else list(ids)
    heights = dendrogram.heights()
    if policy.threshold is not None:
        tau = float(policy.threshold)
    elif len(heights):
        tau = float(np.percentile(heights, policy.percentile))
    else:
        tau = 0.0

    # rebuild the tree; internal node k has id n + k
    children = {}
    node_height = {}
    node_leaves = {i: [i] for i in range(n)}
    current = list(range(n))
    for k, (a, b, d) in enumerate(dendrogram.merges):
        if d > tau:
            break
        new = n + k
        children[new] = (current[a], current[b])
        node_height[new] = d
        node_leaves[new] = node_leaves[current[a]] + node_leaves[current[b]]
        current[a] = new
        current[b] = None

    def split(node):
        if len(node_leaves[node]) <= policy.max_size or node not in children:
            return [node]
        left, right = children[node]
        return split(left) + split(right)

    groups = []
    for root in current:
        if root is None:
            continue
        for node in split(root):
            leaves = node_leaves[node]
            if len(leaves) < policy.min_size:
                continue
            groups.append(FeatureGroup(
                member_ids=frozenset(ids[i] for i in leaves),
                cohesion=float(node_height.get(node, 0.0))))
    groups.sort(key=lambda g: min(g.member_ids))
    return groups
