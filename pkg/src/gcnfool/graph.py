"""Graph container, adjacency construction and dataset ingestion."""

from __future__ import annotations

import csv
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

UNKNOWN = -1


class GraphError(ValueError):
    """Raised for malformed graphs or unparsable dataset files."""


class InvalidVertexError(GraphError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected attributed graph with partially observed labels.

    Parameters
    ----------
    n_vertices : int
        Number of vertices ``N``; vertex ids are ``0..N-1``.
    edges : tuple of (int, int)
        Each undirected edge once, as ``(u, v)`` with ``u < v``, sorted.
    features : np.ndarray
        ``N x C`` float64 feature matrix.
    labels : np.ndarray
        Integer class per vertex, ``UNKNOWN`` (-1) when unobserved.
    train_mask : np.ndarray
        Boolean mask of the labeled training vertices.
    """

    n_vertices: int
    edges: tuple
    features: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    _adj: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.n_vertices
        if n < 1:
            raise GraphError("graph needs at least one vertex")
        edges = tuple(sorted({_canonical(u, v, n) for u, v in self.edges}))
        features = np.array(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != n:
            raise GraphError(f"feature matrix has {features.shape[0]} rows, expected {n}")
        if not np.all(np.isfinite(features)):
            raise GraphError("feature matrix contains non-finite values")
        labels = np.array(self.labels, dtype=np.int64)
        train_mask = np.array(self.train_mask, dtype=bool)
        if labels.shape != (n,) or train_mask.shape != (n,):
            raise GraphError("labels and train_mask must have one entry per vertex")
        if np.any(labels < UNKNOWN):
            raise GraphError("labels must be non-negative or UNKNOWN")
        if np.any(labels[train_mask] == UNKNOWN):
            raise GraphError("every training vertex needs a known label")

        adj = np.zeros((n, n), dtype=np.float64)
        if edges:
            u, v = np.array(edges).T
            adj[u, v] = 1.0
            adj[v, u] = 1.0
        for arr in (features, labels, train_mask, adj):
            arr.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "train_mask", train_mask)
        object.__setattr__(self, "_adj", adj)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_classes(self) -> int:
        known = self.labels[self.labels != UNKNOWN]
        return int(known.max()) + 1 if known.size else 0

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency matrix (a fresh writable copy)."""
        return self._adj.copy()

    def with_adjacency(self, adj: np.ndarray) -> Graph:
        """Same vertices, features and labels over a different edge set."""
        adj = np.asarray(adj)
        check_adjacency(adj)
        if adj.shape[0] != self.n_vertices:
            raise GraphError("adjacency size does not match the vertex count")
        return Graph(self.n_vertices, edges_from_adjacency(adj), self.features,
                     self.labels, self.train_mask)

    def with_train_mask(self, train_mask) -> Graph:
        return Graph(self.n_vertices, self.edges, self.features, self.labels, train_mask)

    def neighbors(self, v: int) -> np.ndarray:
        self._check_vertex(v)
        return np.flatnonzero(self._adj[v])

    def _check_vertex(self, v):
        if not 0 <= v < self.n_vertices:
            raise InvalidVertexError(f"vertex {v} out of range for N={self.n_vertices}")


def _canonical(u, v, n):
    u, v = int(u), int(v)
    if u == v:
        raise GraphError(f"self-loop on vertex {u}")
    if not (0 <= u < n and 0 <= v < n):
        raise InvalidVertexError(f"edge ({u}, {v}) references a vertex outside 0..{n - 1}")
    return (u, v) if u < v else (v, u)


def check_adjacency(adj: np.ndarray) -> None:
    """Raise ``GraphError`` unless ``adj`` is square, binary, symmetric, zero-diagonal."""
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise GraphError(f"adjacency must be square, got shape {adj.shape}")
    if not np.all((adj == 0) | (adj == 1)):
        raise GraphError("adjacency entries must be 0 or 1")
    if not np.array_equal(adj, adj.T):
        raise GraphError("adjacency must be symmetric")
    if np.any(np.diag(adj) != 0):
        raise GraphError("adjacency must have a zero diagonal")


def edges_from_adjacency(adj: np.ndarray) -> tuple:
    u, v = np.nonzero(np.triu(adj, k=1))
    return tuple(zip(u.tolist(), v.tolist()))


def normalize(adj: np.ndarray) -> np.ndarray:
    """Symmetric normalization with self-loops, ``D^-1/2 (A + I) D^-1/2``.

    ``D`` holds the row sums of ``A + I``, so every degree is at least one.
    Non-symmetric input is accepted (row sums are used) so that the same map
    can be differentiated entry by entry.
    """
    a_tilde = np.asarray(adj, dtype=np.float64) + np.eye(adj.shape[0])
    d_inv_sqrt = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return a_tilde * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


def _bfs_distances(adj: np.ndarray, source: int, max_depth: int) -> dict:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        if dist[u] == max_depth:
            continue
        for w in np.flatnonzero(adj[u]).tolist():
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def k_order_neighborhood(graph, v: int, k: int) -> set:
    """Vertices within shortest-path distance ``k`` of ``v``, ``v`` included.

    ``graph`` may be a :class:`Graph` or a dense adjacency matrix.
    """
    adj = graph.adjacency() if isinstance(graph, Graph) else np.asarray(graph)
    n = adj.shape[0]
    if not 0 <= v < n:
        raise InvalidVertexError(f"vertex {v} out of range for N={n}")
    if k < 1:
        raise ValueError("neighborhood order must be >= 1")
    return set(_bfs_distances(adj, v, k))


def average_degree(graph: Graph) -> float:
    return 2.0 * graph.n_edges / graph.n_vertices


def _parse_edges(path: Path) -> list:
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphError(f"{path}:{lineno}: expected two vertex ids, got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphError(f"{path}:{lineno}: vertex ids must be integers") from None
            if u < 0 or v < 0:
                raise GraphError(f"{path}:{lineno}: vertex ids must be non-negative")
            if u == v:
                raise GraphError(f"{path}:{lineno}: self-loop on vertex {u}")
            edges.append((u, v))
    return edges


def _parse_features(path: Path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                raise GraphError(f"{path}:{lineno}: non-numeric feature value") from None
            if len(rows[-1]) != len(rows[0]):
                raise GraphError(f"{path}:{lineno}: expected {len(rows[0])} columns")
    if not rows:
        raise GraphError(f"{path}: feature file is empty")
    return np.array(rows, dtype=np.float64)


def _parse_labels(path: Path) -> dict:
    labels = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 2:
                raise GraphError(f"{path}:{lineno}: expected 'vertex_id,label_id'")
            try:
                v, y = int(row[0]), int(row[1])
            except ValueError:
                raise GraphError(f"{path}:{lineno}: ids must be integers") from None
            if v < 0 or y < 0:
                raise GraphError(f"{path}:{lineno}: ids must be non-negative")
            labels[v] = y
    return labels


def load_graph(edge_path, feature_path=None, label_path=None, n_vertices=None,
               train_mask=None) -> Graph:
    """Read a graph from an edge list plus optional feature and label files.

    The vertex count comes from the feature file when given, otherwise from
    ``n_vertices`` or the largest id seen. Without features the identity
    matrix is used. By default every labeled vertex is a training vertex.
    """
    edges = _parse_edges(Path(edge_path))
    features = _parse_features(Path(feature_path)) if feature_path is not None else None
    label_map = _parse_labels(Path(label_path)) if label_path is not None else {}

    if features is not None:
        n = features.shape[0]
        if n_vertices is not None and n_vertices != n:
            raise GraphError(f"feature file has {n} rows, expected {n_vertices}")
    elif n_vertices is not None:
        n = n_vertices
    else:
        ids = [x for e in edges for x in e] + list(label_map)
        n = max(ids) + 1 if ids else 0
    if n < 1:
        raise GraphError("could not infer a non-empty vertex set")
    if features is None:
        features = np.eye(n)

    bad = [v for v in label_map if v >= n]
    if bad:
        raise InvalidVertexError(f"label file references vertex {bad[0]} >= N={n}")
    labels = np.full(n, UNKNOWN, dtype=np.int64)
    for v, y in label_map.items():
        labels[v] = y
    if train_mask is None:
        train_mask = labels != UNKNOWN
    n_dupes = len(edges) - len({(min(e), max(e)) for e in edges})
    if n_dupes:
        logger.info("dropped %d duplicate edges from %s", n_dupes, edge_path)
    return Graph(n, tuple(edges), features, labels, train_mask)
