"""
Structured grids — tensor products of interval and periodic axes.

Nodes carry trapezoidal weights (their sum is the box volume). Each cell is
split into n! Kuhn simplices; P1 fields have a constant differential on each
simplex, which is what the weak Laplacian integrates against.
"""
from __future__ import annotations
import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator

from .errors import InvalidArgument


@dataclass(frozen=True, eq=False)
class Axis:
    nodes: np.ndarray
    periodic: bool = False
    period: float = 0.0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 2:
            raise InvalidArgument("an axis needs at least two nodes")
        steps = np.diff(nodes)
        if np.any(steps <= 0):
            raise InvalidArgument("axis nodes must be strictly increasing")
        if self.periodic:
            h = self.period / nodes.size
            if self.period <= 0 or not np.allclose(steps, h, rtol=1e-10, atol=0.0):
                raise InvalidArgument("periodic axes need uniform spacing period/count")

    @classmethod
    def interval(cls, lo: float, hi: float, count: int) -> "Axis":
        return cls(np.linspace(lo, hi, count))

    @classmethod
    def circle(cls, length: float, count: int, start: float = 0.0) -> "Axis":
        return cls(start + length * np.arange(count) / count, periodic=True, period=length)

    @property
    def count(self) -> int:
        return self.nodes.size

    @property
    def lo(self) -> float:
        return float(self.nodes[0])

    @property
    def hi(self) -> float:
        return float(self.nodes[0] + self.period) if self.periodic else float(self.nodes[-1])

    @property
    def spacing(self) -> float:
        """Largest node gap."""
        if self.periodic:
            return self.period / self.count
        return float(np.max(np.diff(self.nodes)))

    @cached_property
    def weights(self) -> np.ndarray:
        if self.periodic:
            return np.full(self.count, self.period / self.count)
        gaps = np.diff(self.nodes)
        w = np.zeros(self.count)
        w[:-1] += 0.5 * gaps
        w[1:] += 0.5 * gaps
        return w

    def cells(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(lower index, upper index, width) of every cell."""
        if self.periodic:
            lower = np.arange(self.count)
            return lower, (lower + 1) % self.count, np.full(self.count, self.period / self.count)
        lower = np.arange(self.count - 1)
        return lower, lower + 1, np.diff(self.nodes)

    def wrap(self, t: np.ndarray) -> np.ndarray:
        if not self.periodic:
            return t
        return self.lo + np.mod(t - self.lo, self.period)

    def describe(self) -> dict:
        return {"count": self.count, "lo": self.lo, "hi": self.hi, "periodic": self.periodic}


@dataclass(frozen=True)
class Simplices:
    vertices: np.ndarray      # (S, n+1) node indices along the Kuhn path
    volumes: np.ndarray       # (S,)
    centroids: np.ndarray     # (S, n)
    differential: sparse.csr_matrix   # (S·n, N): u ↦ du_s

    @property
    def count(self) -> int:
        return self.volumes.size


class Grid:
    """Tensor-product grid with nodal trapezoidal quadrature."""

    def __init__(self, axes: Sequence[Axis]):
        if not axes:
            raise InvalidArgument("a grid needs at least one axis")
        self.axes: Tuple[Axis, ...] = tuple(axes)

    @classmethod
    def line(cls, lo: float, hi: float, count: int) -> "Grid":
        return cls([Axis.interval(lo, hi, count)])

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(a.count for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> np.ndarray:
        return np.array([a.spacing for a in self.axes])

    @property
    def volume(self) -> float:
        return float(np.prod([a.hi - a.lo for a in self.axes]))

    @property
    def periodic(self) -> Tuple[bool, ...]:
        return tuple(a.periodic for a in self.axes)

    @cached_property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*[a.nodes for a in self.axes], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def weights(self) -> np.ndarray:
        w = self.axes[0].weights
        for axis in self.axes[1:]:
            w = np.multiply.outer(w, axis.weights)
        return np.asarray(w).ravel()

    def coordinate(self, axis: int) -> np.ndarray:
        return self.points[:, axis]

    def wrap(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=float, copy=True)
        for k, axis in enumerate(self.axes):
            x[..., k] = axis.wrap(x[..., k])
        return x

    def reshape(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.shape + np.shape(values)[1:])

    @cached_property
    def simplices(self) -> Simplices:
        n = self.dim
        cells = [a.cells() for a in self.axes]
        lower = np.stack([m.ravel() for m in np.meshgrid(*[c[0] for c in cells], indexing="ij")], -1)
        upper = np.stack([m.ravel() for m in np.meshgrid(*[c[1] for c in cells], indexing="ij")], -1)
        width = np.stack([m.ravel() for m in np.meshgrid(*[c[2] for c in cells], indexing="ij")], -1)
        base = np.stack([m.ravel() for m in np.meshgrid(
            *[a.nodes[c[0]] for a, c in zip(self.axes, cells)], indexing="ij")], -1)
        n_cells = lower.shape[0]

        verts, vols, cents, rows, cols, vals = [], [], [], [], [], []
        offset = 0
        for perm in itertools.permutations(range(n)):
            path = np.empty((n_cells, n + 1), dtype=np.int64)
            raised = np.zeros(n, dtype=bool)
            path[:, 0] = np.ravel_multi_index(lower.T, self.shape)
            position = np.empty(n, dtype=int)
            for k, a in enumerate(perm):
                raised[a] = True
                position[a] = k
                idx = np.where(raised, upper, lower)
                path[:, k + 1] = np.ravel_multi_index(idx.T, self.shape)
            simplex_ids = offset + np.arange(n_cells)
            for k, a in enumerate(perm):
                h = width[:, a]
                rows += [simplex_ids * n + a] * 2
                cols += [path[:, k + 1], path[:, k]]
                vals += [1.0 / h, -1.0 / h]
            verts.append(path)
            vols.append(np.prod(width, axis=1) / math.factorial(n))
            cents.append(base + width * (n - position) / (n + 1.0))
            offset += n_cells

        total = offset
        D = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(total * n, self.size),
        )
        return Simplices(
            vertices=np.concatenate(verts),
            volumes=np.concatenate(vols),
            centroids=self.wrap(np.concatenate(cents)),
            differential=D,
        )

    def nodal_differential(self, values: np.ndarray) -> np.ndarray:
        """du at every node by central differences (one-sided, second order, at interval ends)."""
        u = self.reshape(values)
        parts = []
        for k, axis in enumerate(self.axes):
            if axis.periodic:
                h = axis.period / axis.count
                parts.append((np.roll(u, -1, axis=k) - np.roll(u, 1, axis=k)) / (2.0 * h))
            else:
                parts.append(np.gradient(u, axis.nodes, axis=k, edge_order=2))
        return np.stack([p.ravel() for p in parts], axis=-1)

    def interpolator(self, values: np.ndarray, method: str = "cubic") -> Callable[[np.ndarray], np.ndarray]:
        """Interpolant of nodal values (scalar or vector); periodic axes wrap, interval axes extrapolate."""
        data = self.reshape(np.asarray(values, dtype=float))
        coords = []
        for k, axis in enumerate(self.axes):
            nodes = axis.nodes
            if axis.periodic:
                pad = min(3, axis.count)
                nodes = np.concatenate([nodes[-pad:] - axis.period, nodes, nodes[:pad] + axis.period])
                data = np.concatenate([np.take(data, range(axis.count - pad, axis.count), axis=k),
                                       data, np.take(data, range(pad), axis=k)], axis=k)
            coords.append(nodes)
        interp = RegularGridInterpolator(coords, data, method=method, bounds_error=False,
                                         fill_value=None)
        tail = data.shape[self.dim:]

        def evaluate(x):
            x = self.wrap(np.asarray(x, dtype=float))
            return interp(x.reshape(-1, self.dim)).reshape(x.shape[:-1] + tail)

        return evaluate

    def contains(self, x) -> np.ndarray:
        """True where x lies inside every interval axis."""
        x = np.asarray(x, dtype=float)
        inside = np.ones(x.shape[:-1], dtype=bool)
        for k, axis in enumerate(self.axes):
            if not axis.periodic:
                inside &= (x[..., k] >= axis.lo - 1e-12) & (x[..., k] <= axis.hi + 1e-12)
        return inside

    def describe(self) -> dict:
        return {"axes": [a.describe() for a in self.axes], "size": self.size}


@dataclass(frozen=True, eq=False)
class DiscreteField:
    grid: Grid
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size != self.grid.size:
            raise InvalidArgument(f"field has {values.size} values for {self.grid.size} nodes")
        if not np.all(np.isfinite(values)):
            raise InvalidArgument("field values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray],
                      name: str = "") -> "DiscreteField":
        return cls(grid, np.broadcast_to(fn(grid.points), (grid.size,)), name=name)

    def with_values(self, values: np.ndarray) -> "DiscreteField":
        return DiscreteField(self.grid, values, self.name)

    def integrate(self, measure) -> float:
        return float(np.sum(self.grid.weights * measure.density(self.grid.points) * self.values))

    def mean(self, measure) -> float:
        masses = self.grid.weights * measure.density(self.grid.points)
        return float(np.sum(masses * self.values) / np.sum(masses))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)
