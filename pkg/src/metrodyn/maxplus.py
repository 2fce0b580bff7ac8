"""
Max-plus (tropical) matrix algebra.

Scalars live in R ∪ {BOTTOM} with ``a ⊕ b = max(a, b)`` and ``a ⊗ b = a + b``.
BOTTOM is ``-inf``: it is never a finite number, and IEEE arithmetic makes
absorption exact (``-inf + a == -inf``, ``max(-inf, a) == a``).

Only the pieces the traffic analysis needs are provided: products, powers,
the maximum cycle mean (Karp) and the cyclicity of the critical graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

BOTTOM = float("-inf")

#: Absolute tolerance (seconds) used to decide whether an arc is critical.
CRITICAL_TOL = 1e-9


class ShapeError(ValueError):
    """Matrix dimensions are incompatible with the requested operation."""


class NoCycleError(ValueError):
    """The precedence graph of a matrix has no cycle."""


def oplus(a: float, b: float) -> float:
    return max(a, b)


def otimes(a: float, b: float) -> float:
    if a == BOTTOM or b == BOTTOM:
        return BOTTOM
    return a + b


@dataclass(frozen=True, eq=False)
class TropicalMatrix:
    """Immutable rectangular matrix over the max-plus semiring."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.entries, dtype=float)
        if arr.ndim != 2:
            raise ShapeError(f"expected a 2-d array, got shape {arr.shape}")
        if np.isnan(arr).any() or np.isposinf(arr).any():
            raise ValueError("entries must be finite or BOTTOM")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float | None]]) -> "TropicalMatrix":
        """Build from nested lists; ``None`` is accepted as BOTTOM."""
        return cls(np.array([[BOTTOM if v is None else v for v in row] for row in rows], dtype=float))

    @classmethod
    def identity(cls, n: int) -> "TropicalMatrix":
        arr = np.full((n, n), BOTTOM)
        np.fill_diagonal(arr, 0.0)
        return cls(arr)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def __getitem__(self, idx):
        return self.entries[idx]

    def __matmul__(self, other: "TropicalMatrix") -> "TropicalMatrix":
        return mp_matmul(self, other)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TropicalMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.entries, other.entries))

    def __hash__(self) -> int:
        return hash((self.shape, self.entries.tobytes()))

    def oplus(self, other: "TropicalMatrix") -> "TropicalMatrix":
        if self.shape != other.shape:
            raise ShapeError(f"cannot add {self.shape} and {other.shape}")
        return TropicalMatrix(np.maximum(self.entries, other.entries))

    def apply(self, x: Iterable[float]) -> np.ndarray:
        """Max-plus matrix-vector product ``A ⊗ x``."""
        vec = np.asarray(list(x) if not isinstance(x, np.ndarray) else x, dtype=float)
        if vec.shape != (self.cols,):
            raise ShapeError(f"vector of length {vec.shape} does not match {self.cols} columns")
        return (self.entries + vec[None, :]).max(axis=1)

    def is_square(self) -> bool:
        return self.rows == self.cols

    def arcs(self) -> list[tuple[int, int, float]]:
        """Finite entries as arcs ``(i, j, weight)``; ``A[i, j]`` is an arc i -> j."""
        ii, jj = np.nonzero(np.isfinite(self.entries))
        return [(int(i), int(j), float(self.entries[i, j])) for i, j in zip(ii, jj)]


def mp_matmul(a: TropicalMatrix, b: TropicalMatrix) -> TropicalMatrix:
    """``C[i, j] = max_k A[i, k] + B[k, j]`` with BOTTOM absorbing."""
    if a.cols != b.rows:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    if a.cols == 0:
        return TropicalMatrix(np.full((a.rows, b.cols), BOTTOM))
    return TropicalMatrix((a.entries[:, :, None] + b.entries[None, :, :]).max(axis=1))


def mp_power(a: TropicalMatrix, k: int) -> TropicalMatrix:
    if not a.is_square():
        raise ShapeError("power of a non-square matrix")
    result = TropicalMatrix.identity(a.rows)
    base = a
    while k > 0:
        if k & 1:
            result = mp_matmul(result, base)
        base = mp_matmul(base, base)
        k >>= 1
    return result


def _successors(a: np.ndarray) -> list[list[int]]:
    finite = np.isfinite(a)
    return [list(np.nonzero(finite[i])[0]) for i in range(a.shape[0])]


def strongly_connected_components(a: TropicalMatrix | np.ndarray) -> list[list[int]]:
    """Tarjan's algorithm on the precedence graph (iterative)."""
    arr = a.entries if isinstance(a, TropicalMatrix) else a
    succ = _successors(arr)
    n = arr.shape[0]
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pos = work.pop()
            if pos == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            recurse = False
            for p in range(pos, len(succ[v])):
                w = succ[v][p]
                if index[w] == -1:
                    work.append((v, p + 1))
                    work.append((w, 0))
                    recurse = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return comps


def _has_cycle(arr: np.ndarray, comp: list[int]) -> bool:
    return len(comp) > 1 or bool(np.isfinite(arr[comp[0], comp[0]]))


def _karp(arr: np.ndarray) -> float:
    """Maximum cycle mean of a strongly connected graph given as a dense matrix."""
    n = arr.shape[0]
    walks = np.full((n + 1, n), BOTTOM)
    walks[0, 0] = 0.0
    for k in range(1, n + 1):
        walks[k] = (walks[k - 1][:, None] + arr).max(axis=0)
    best = BOTTOM
    for v in range(n):
        if not np.isfinite(walks[n, v]):
            continue
        worst = math.inf
        for k in range(n):
            if np.isfinite(walks[k, v]):
                worst = min(worst, (walks[n, v] - walks[k, v]) / (n - k))
        best = max(best, worst)
    return float(best)


def cycle_mean(a: TropicalMatrix) -> float:
    """Maximum cycle mean of the precedence graph of ``a`` (Karp's algorithm).

    Each strongly connected component containing a cycle is solved
    separately and the largest mean is returned.
    """
    if not a.is_square():
        raise ShapeError(f"cycle mean needs a square matrix, got {a.shape}")
    arr = a.entries
    means = [
        _karp(arr[np.ix_(comp, comp)])
        for comp in strongly_connected_components(arr)
        if _has_cycle(arr, comp)
    ]
    if not means:
        raise NoCycleError("precedence graph has no cycle")
    return max(means)


def _longest_paths(arr: np.ndarray) -> np.ndarray:
    """All-pairs maximum path weights (Floyd-Warshall); assumes no positive cycle."""
    dist = arr.copy()
    n = arr.shape[0]
    for k in range(n):
        dist = np.maximum(dist, dist[:, k : k + 1] + dist[k : k + 1, :])
    return dist


def critical_graph(a: TropicalMatrix, tol: float = CRITICAL_TOL) -> list[tuple[int, int]]:
    """Arcs lying on at least one cycle of maximum mean."""
    lam = cycle_mean(a)
    shifted = a.entries - lam
    dist = _longest_paths(shifted)
    arcs = []
    for i, j, _ in a.arcs():
        back = 0.0 if i == j else dist[j, i]
        if np.isfinite(back) and abs(shifted[i, j] + back) <= tol:
            arcs.append((i, j))
    return arcs


def graph_cyclicity(a: TropicalMatrix, tol: float = CRITICAL_TOL) -> int:
    """Cyclicity of the critical graph: lcm over its components of the gcd of cycle lengths."""
    arcs = critical_graph(a, tol)
    n = a.rows
    crit = np.full((n, n), BOTTOM)
    for i, j in arcs:
        crit[i, j] = 0.0
    periods = []
    for comp in strongly_connected_components(crit):
        if not _has_cycle(crit, comp):
            continue
        members = set(comp)
        level = {comp[0]: 0}
        queue = [comp[0]]
        while queue:
            u = queue.pop(0)
            for v in np.nonzero(np.isfinite(crit[u]))[0]:
                v = int(v)
                if v in members and v not in level:
                    level[v] = level[u] + 1
                    queue.append(v)
        g = 0
        for i, j in arcs:
            if i in members and j in members:
                g = math.gcd(g, abs(level[i] + 1 - level[j]))
        periods.append(g)
    if not periods:
        raise NoCycleError("critical graph has no cycle")
    return reduce(math.lcm, periods, 1)


def simple_cycles_brute_force(a: TropicalMatrix) -> list[tuple[list[int], float]]:
    """Enumerate every simple cycle with its mean weight (exponential; test oracle)."""
    arr = a.entries
    n = a.rows
    cycles = []

    def extend(start: int, path: list[int], weight: float) -> None:
        last = path[-1]
        for nxt in range(start, n):
            w = arr[last, nxt]
            if not np.isfinite(w):
                continue
            if nxt == start:
                cycles.append((list(path), (weight + w) / len(path)))
            elif nxt not in path:
                path.append(nxt)
                extend(start, path, weight + w)
                path.pop()

    for s in range(n):
        extend(s, [s], 0.0)
    return cycles
