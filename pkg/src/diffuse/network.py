"""Directed graphs stored as CSR adjacency, plus generation and edge-list I/O.

An edge ``u -> v`` means that once ``u`` is infected it can expose ``v``.
Node ids are dense integers ``0..N-1``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


class EdgeFileError(ValueError):
    """Raised for malformed or inconsistent edge files."""


def _csr(n: int, src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((dst, src))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return indptr, dst[order].astype(np.int64)


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable directed graph.

    Out- and in-adjacency are both kept in CSR form so that successor and
    predecessor scans are array slices.
    """

    n: int
    out_ptr: np.ndarray
    out_idx: np.ndarray
    in_ptr: np.ndarray
    in_idx: np.ndarray

    @classmethod
    def from_edges(cls, n: int, src, dst) -> "Network":
        src = np.asarray(src, dtype=np.int64).reshape(-1)
        dst = np.asarray(dst, dtype=np.int64).reshape(-1)
        if src.shape != dst.shape:
            raise ValueError("src and dst must have the same length")
        if n < 0:
            raise ValueError("node count must be non-negative")
        if src.size and (src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= n):
            raise ValueError("edge endpoint outside 0..n-1")
        if np.any(src == dst):
            raise ValueError("self-loops are not allowed")
        if src.size:
            key = src * n + dst
            if np.unique(key).size != key.size:
                raise ValueError("duplicate edges are not allowed")
        out_ptr, out_idx = _csr(n, src, dst)
        in_ptr, in_idx = _csr(n, dst, src)
        for arr in (out_ptr, out_idx, in_ptr, in_idx):
            arr.setflags(write=False)
        return cls(n, out_ptr, out_idx, in_ptr, in_idx)

    @property
    def edge_count(self) -> int:
        return int(self.out_idx.size)

    def successors(self, u: int) -> np.ndarray:
        return self.out_idx[self.out_ptr[u]:self.out_ptr[u + 1]]

    def predecessors(self, v: int) -> np.ndarray:
        return self.in_idx[self.in_ptr[v]:self.in_ptr[v + 1]]

    def out_degree(self) -> np.ndarray:
        return np.diff(self.out_ptr)

    def in_degree(self) -> np.ndarray:
        return np.diff(self.in_ptr)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(src, dst)`` arrays sorted by source, then destination."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), self.out_degree())
        return src, self.out_idx.copy()

    def check_node(self, u) -> None:
        if not 0 <= int(u) < self.n:
            raise KeyError(f"unknown node id {u}")


def generate_preferential_attachment(n: int, m: int, seed=None) -> Network:
    """Scale-free directed graph by preferential attachment.

    Starts from a complete directed clique on ``m + 1`` nodes. Every later node
    adds ``m`` out-edges to distinct existing nodes, each chosen as an endpoint
    of a uniformly random existing edge, which weights targets by total degree
    (in-degree plus the constant out-degree ``m``).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if n < m + 1:
        raise ValueError(f"m >= nodes: need n >= m + 1 (got n={n}, m={m})")
    rng = np.random.default_rng(seed)
    n_edges = m * (m + 1) + m * (n - m - 1)
    src = np.empty(n_edges, dtype=np.int64)
    dst = np.empty(n_edges, dtype=np.int64)
    # flat list of edge endpoints; sampling a uniform slot is degree-proportional
    ends = np.empty(2 * n_edges, dtype=np.int64)
    k = 0
    for u in range(m + 1):
        for v in range(m + 1):
            if u != v:
                src[k], dst[k] = u, v
                ends[2 * k], ends[2 * k + 1] = u, v
                k += 1
    for u in range(m + 1, n):
        targets: list[int] = []
        while len(targets) < m:
            v = int(ends[rng.integers(2 * k)])
            if v not in targets:
                targets.append(v)
        for v in targets:
            src[k], dst[k] = u, v
            ends[2 * k], ends[2 * k + 1] = u, v
            k += 1
    return Network.from_edges(n, src, dst)


def load_edges(path, n: int | None = None) -> Network:
    """Read a ``src<TAB>dst`` edge list with decimal integer ids.

    The node count is one more than the largest id seen unless ``n`` is given
    (needed when trailing nodes are isolated).
    """
    src: list[int] = []
    dst: list[int] = []
    seen: set[tuple[int, int]] = set()
    with open(path, "r", encoding="ascii", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise EdgeFileError(f"{path}: line {lineno}: expected 'src<TAB>dst'")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise EdgeFileError(f"{path}: line {lineno}: non-integer node id") from None
            if u < 0 or v < 0:
                raise EdgeFileError(f"{path}: line {lineno}: negative node id")
            if u == v:
                raise EdgeFileError(f"{path}: line {lineno}: self-loop {u}->{v}")
            if (u, v) in seen:
                raise EdgeFileError(f"{path}: line {lineno}: duplicate edge {u}->{v}")
            seen.add((u, v))
            src.append(u)
            dst.append(v)
    n_seen = max(max(src, default=-1), max(dst, default=-1)) + 1
    if n is None:
        n = n_seen
    elif n < n_seen:
        raise EdgeFileError(f"{path}: node id {n_seen - 1} exceeds node count {n}")
    return Network.from_edges(n, src, dst)


def save_edges(net: Network, path) -> None:
    src, dst = net.edges()
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="ascii", newline="\n") as fh:
        fh.writelines(f"{u}\t{v}\n" for u, v in zip(src.tolist(), dst.tolist()))
    os.replace(tmp, path)
