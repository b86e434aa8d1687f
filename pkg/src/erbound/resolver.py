"""Clustering engines: iterative match/merge and connected components.

Both resolvers take base records and a match predicate and produce the same
partition whenever the predicate is wrapped with the max-over-constituents
rule and the merge is set union: the match/merge fixpoint then computes
exactly the connected components of the direct-match graph.
"""

import csv
from collections import deque
from dataclasses import dataclass
from functools import reduce
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import DataError
from .records import Record, merge_records


class UnionFind:
    """Disjoint sets over range(n) with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        """Merge the sets containing a and b; False if already joined."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True

    def groups(self) -> list[list[int]]:
        by_root: dict[int, list[int]] = {}
        for x in range(len(self.parent)):
            by_root.setdefault(self.find(x), []).append(x)
        return list(by_root.values())


@dataclass(frozen=True)
class Clustering:
    """A partition of base-record ids, keyed by the smallest member id of
    each cluster, with the merged record of every cluster alongside."""

    clusters: dict[str, frozenset[str]]
    representatives: dict[str, Record]

    def __post_init__(self):
        seen: set[str] = set()
        for label, members in self.clusters.items():
            if not members:
                raise DataError("empty cluster")
            if label != min(members):
                raise DataError(f"cluster label {label!r} is not its smallest member")
            if members & seen:
                raise DataError("clusters overlap")
            seen |= members
            rep = self.representatives.get(label)
            if rep is None or rep.base_ids != members:
                raise DataError(f"representative of {label!r} does not cover its members")

    @property
    def ids(self) -> frozenset[str]:
        return frozenset().union(*self.clusters.values()) if self.clusters else frozenset()

    def partition(self) -> frozenset[frozenset[str]]:
        return frozenset(self.clusters.values())

    def labels(self) -> dict[str, str]:
        return {i: label for label, members in self.clusters.items() for i in members}

    @classmethod
    def from_resolved_records(cls, resolved: Sequence[Record]) -> "Clustering":
        clusters = {}
        reps = {}
        for rec in resolved:
            label = min(rec.base_ids)
            clusters[label] = frozenset(rec.base_ids)
            reps[label] = rec
        return cls(clusters, reps)


def _check_base_inputs(records: Sequence[Record]) -> list[str]:
    ids = []
    for r in records:
        if not r.is_base():
            raise DataError("resolver inputs must be base records")
        ids.append(r.record_id)
    if len(set(ids)) != len(ids):
        raise DataError("duplicate record ids in resolver input")
    return ids


def resolve_rswoosh(records: Sequence[Record],
                    match: Callable[[Record, Record], bool],
                    merge: Callable[[Record, Record], Record]) -> Clustering:
    """Iterative match/merge fixpoint (R-Swoosh).

    Maintains a resolved set; each pending record is compared against it,
    and on the first match the partner is pulled out, merged in, and the
    merge is reprocessed. When match and merge are idempotent, commutative,
    associative, and representative, the output partition does not depend
    on input order. Terminates because every merge strictly grows the
    provenance set.
    """
    _check_base_inputs(records)
    pending = deque(records)
    resolved: list[Record] = []
    while pending:
        rec = pending.popleft()
        partner = next((k for k, other in enumerate(resolved) if match(rec, other)), None)
        if partner is None:
            resolved.append(rec)
        else:
            other = resolved.pop(partner)
            pending.append(merge(rec, other))
    return Clustering.from_resolved_records(resolved)


def candidate_pairs(records: Sequence[Record],
                    block_feature_index: int | None = None) -> Iterator[tuple[int, int]]:
    """All unordered index pairs, optionally prefiltered to pairs sharing at
    least one value of a single feature (cheap blocking; off by default)."""
    n = len(records)
    for i in range(n - 1):
        for j in range(i + 1, n):
            if block_feature_index is not None:
                if not (records[i].values[block_feature_index]
                        & records[j].values[block_feature_index]):
                    continue
            yield i, j


def _clustering_from_groups(records: Sequence[Record],
                            groups: Sequence[Sequence[int]]) -> Clustering:
    resolved = []
    for group in groups:
        members = sorted(group, key=lambda k: records[k].record_id)
        resolved.append(reduce(merge_records, (records[k] for k in members)))
    return Clustering.from_resolved_records(resolved)


def resolve_connected_components(records: Sequence[Record],
                                 base_match: Callable[[Record, Record], bool],
                                 block_feature_index: int | None = None) -> Clustering:
    """Cluster base records as connected components of the direct-match
    graph; each cluster's representative is the set-union merge of its
    members. Deterministic for any edge order."""
    _check_base_inputs(records)
    uf = UnionFind(len(records))
    for i, j in candidate_pairs(records, block_feature_index):
        if base_match(records[i], records[j]):
            uf.union(i, j)
    return _clustering_from_groups(records, uf.groups())


def components_from_condensed(n: int, scores: np.ndarray, threshold: float) -> UnionFind:
    """Union-find over n items whose condensed pairwise scores clear the
    threshold. Pure index arithmetic; no record objects involved."""
    uf = UnionFind(n)
    if n < 2:
        return uf
    row_starts = np.empty(n - 1, dtype=np.int64)
    start = 0
    for i in range(n - 1):
        row_starts[i] = start
        start += n - 1 - i
    hits = np.nonzero(scores >= threshold)[0]
    rows = np.searchsorted(row_starts, hits, side="right") - 1
    cols = hits - row_starts[rows] + rows + 1
    for i, j in zip(rows.tolist(), cols.tolist()):
        uf.union(i, j)
    return uf


def resolve_from_condensed(records: Sequence[Record], scores: np.ndarray,
                           threshold: float) -> Clustering:
    """Connected-components resolution from precomputed condensed scores;
    identical to resolve_connected_components with the thresholded matcher
    the scores came from."""
    _check_base_inputs(records)
    uf = components_from_condensed(len(records), scores, threshold)
    return _clustering_from_groups(records, uf.groups())


def write_clustering_csv(path, clustering: Clustering) -> None:
    """CSV rows `id,cluster_id`, sorted by id; cluster ids are the
    canonical smallest-member labels."""
    labels = clustering.labels()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "cluster_id"])
        for rid in sorted(labels):
            writer.writerow([rid, labels[rid]])
