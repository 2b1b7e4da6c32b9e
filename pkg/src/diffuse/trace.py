"""Observed contagion traces: which node got infected when (hours)."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class ContagionTrace:
    """Infections of one contagion, sorted by time.

    ``nodes[k]`` was infected at ``times[k]``. Node ids are unique.
    """

    nodes: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.int64).reshape(-1)
        times = np.asarray(self.times, dtype=float).reshape(-1)
        if nodes.shape != times.shape:
            raise ValueError("nodes and times must have the same length")
        if np.unique(nodes).size != nodes.size:
            raise ValueError("node ids in a trace must be unique")
        if np.any(~np.isfinite(times)) or np.any(times < 0):
            raise ValueError("infection times must be finite and non-negative")
        order = np.argsort(times, kind="stable")
        nodes, times = nodes[order], times[order]
        nodes.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "times", times)

    @classmethod
    def from_pairs(cls, pairs) -> "ContagionTrace":
        pairs = list(pairs)
        if not pairs:
            return cls(np.empty(0, dtype=np.int64), np.empty(0))
        nodes, times = zip(*pairs)
        return cls(np.array(nodes), np.array(times, dtype=float))

    def __len__(self) -> int:
        return int(self.nodes.size)

    @property
    def t_max(self) -> float:
        return float(self.times[-1]) if len(self) else 0.0

    def time_array(self, n: int) -> np.ndarray:
        """Length-``n`` array of infection times, ``inf`` for uninfected nodes."""
        if len(self) and self.nodes.max() >= n:
            raise KeyError(f"trace references node {int(self.nodes.max())} absent from network")
        out = np.full(n, np.inf)
        out[self.nodes] = self.times
        return out


def load_infections(path) -> ContagionTrace:
    """Read ``node<TAB>time_hours`` lines."""
    pairs = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}: line {lineno}: expected 'node<TAB>time'")
            try:
                pairs.append((int(parts[0]), float(parts[1])))
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: cannot parse {line!r}") from None
    return ContagionTrace.from_pairs(pairs)


def save_infections(trace: ContagionTrace, path) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="ascii", newline="\n") as fh:
        for u, t in zip(trace.nodes.tolist(), trace.times.tolist()):
            fh.write(f"{u}\t{t!r}\n")
    os.replace(tmp, path)
