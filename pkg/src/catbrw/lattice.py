"""Geometry of the integer lattice Z^d.

Sites are plain tuples of ints. Truncated boxes ``{x : |x|_inf <= R}`` are
indexed in C order of a ``(2R+1,)*d`` array whose axis ``i`` carries
coordinate ``x_i + R``; the origin therefore sits at the centre index
``((2R+1)**d - 1) // 2``.
"""
from __future__ import annotations

from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

Site = tuple  # tuple[int, ...]

MAX_DIM = 6


def origin(d: int) -> Site:
    return (0,) * d


def neighbors(x: Site) -> list[Site]:
    """The 2d nearest neighbours in the order (e1+, e1-, e2+, e2-, ...)."""
    out = []
    for i in range(len(x)):
        for step in (1, -1):
            y = list(x)
            y[i] += step
            out.append(tuple(y))
    return out


def norm_l1(x: Site) -> int:
    return sum(abs(c) for c in x)


def norm_linf(x: Site) -> int:
    return max((abs(c) for c in x), default=0)


def format_site(x: Site) -> str:
    return ",".join(str(int(c)) for c in x)


def parse_site(text: str) -> Site:
    return tuple(int(tok) for tok in text.strip().split(","))


def parse_sites(text: str) -> list[Site]:
    """Parse ``"0;1;-1"`` or ``"0,0;1,0"`` (sites separated by semicolons)."""
    return [parse_site(tok) for tok in text.split(";") if tok.strip()]


class BoxIndex:
    """Bijection between the L-infinity box of radius ``radius`` and
    ``range((2*radius+1)**dim)``."""

    def __init__(self, radius: int, dim: int):
        if radius < 0:
            raise ValueError("radius must be nonnegative")
        if not 1 <= dim <= MAX_DIM:
            raise ValueError(f"dim must be in 1..{MAX_DIM}")
        self.radius = int(radius)
        self.dim = int(dim)
        self.side = 2 * self.radius + 1
        self.shape = (self.side,) * self.dim
        self.size = self.side ** self.dim

    def __repr__(self):
        return f"BoxIndex(radius={self.radius}, dim={self.dim})"

    def __eq__(self, other):
        return isinstance(other, BoxIndex) and (self.radius, self.dim) == (other.radius, other.dim)

    def __hash__(self):
        return hash((self.radius, self.dim))

    @property
    def origin_index(self) -> int:
        return (self.size - 1) // 2

    def contains(self, x: Site) -> bool:
        return len(x) == self.dim and norm_linf(x) <= self.radius

    def encode(self, x: Site) -> int:
        if not self.contains(x):
            raise ValueError(f"site {x} outside {self!r}")
        idx = 0
        for c in x:
            idx = idx * self.side + (c + self.radius)
        return idx

    def decode(self, index: int) -> Site:
        if not 0 <= index < self.size:
            raise ValueError(f"index {index} outside {self!r}")
        coords = []
        for _ in range(self.dim):
            index, r = divmod(index, self.side)
            coords.append(r - self.radius)
        return tuple(reversed(coords))

    @cached_property
    def coords(self) -> np.ndarray:
        """``(size, dim)`` int array of all site coordinates in index order."""
        grids = np.indices(self.shape).reshape(self.dim, -1).T
        return grids - self.radius

    @cached_property
    def l1(self) -> np.ndarray:
        return np.abs(self.coords).sum(axis=1)

    @cached_property
    def linf(self) -> np.ndarray:
        return np.abs(self.coords).max(axis=1)

    @cached_property
    def neighbor_table(self) -> np.ndarray:
        """``(size, 2d)`` neighbour indices in :func:`neighbors` order; -1
        marks a neighbour outside the box."""
        c = self.coords
        table = np.empty((self.size, 2 * self.dim), dtype=np.int64)
        strides = self.side ** np.arange(self.dim - 1, -1, -1)
        base = (c + self.radius) @ strides
        for i in range(self.dim):
            for j, step in enumerate((1, -1)):
                moved = c[:, i] + step
                ok = np.abs(moved) <= self.radius
                table[:, 2 * i + j] = np.where(ok, base + step * strides[i], -1)
        return table

    def sites(self) -> Iterable[Site]:
        for row in self.coords:
            yield tuple(int(v) for v in row)


class SparseMeasure(dict):
    """Finitely supported real measure on sites (``Site -> float``).  Signed
    values are allowed; missing sites carry zero mass."""

    def __missing__(self, key):
        return 0.0

    def total(self) -> float:
        return float(sum(self.values()))

    def normalized(self) -> "SparseMeasure":
        tot = self.total()
        if tot == 0:
            raise ZeroDivisionError("measure has zero total mass")
        return SparseMeasure({k: v / tot for k, v in self.items()})

    def add(self, other: Mapping, scale: float = 1.0) -> "SparseMeasure":
        out = SparseMeasure(self)
        for k, v in other.items():
            out[k] = out[k] + scale * v
        return out

    def min(self) -> float:
        return min(self.values(), default=0.0)

    @classmethod
    def from_box(cls, box: BoxIndex, values: np.ndarray, drop_zeros: bool = True) -> "SparseMeasure":
        values = np.asarray(values, dtype=float).ravel()
        if values.size != box.size:
            raise ValueError("values do not match box size")
        idx = np.flatnonzero(values) if drop_zeros else np.arange(box.size)
        coords = box.coords
        return cls({tuple(int(c) for c in coords[i]): float(values[i]) for i in idx})

    def to_box(self, box: BoxIndex) -> np.ndarray:
        """Dense array on ``box``; mass outside the box is dropped."""
        out = np.zeros(box.size)
        for x, v in self.items():
            if box.contains(x):
                out[box.encode(x)] += v
        return out

    def to_records(self) -> list[dict]:
        return [{"site": format_site(x), "mass": v} for x, v in sorted(self.items())]


def total_variation(a: Mapping, b: Mapping) -> float:
    """Half the L1 distance between two sparse measures."""
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)


def padded_neighbour_sum(a: np.ndarray) -> np.ndarray:
    """Sum over the 2d neighbours of every interior cell of ``a``, which
    carries a one-cell zero (or boundary) layer on every side."""
    d = a.ndim
    core = tuple(slice(1, -1) for _ in range(d))
    out = np.zeros(tuple(s - 2 for s in a.shape))
    for ax in range(d):
        lo = list(core)
        hi = list(core)
        lo[ax] = slice(0, -2)
        hi[ax] = slice(2, None)
        out += a[tuple(lo)] + a[tuple(hi)]
    return out
