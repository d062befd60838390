"""
Hyper-rectangle maps of the parameter space
"""
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Tuple

import numpy as np


class Verdict(Enum):
    SAT = 'sat'
    UNSAT = 'unsat'
    UNKNOWN = 'unknown'


@dataclass(frozen=True)
class HyperRect:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    @property
    def dimension(self):
        return len(self.lower)

    def widths(self):
        return tuple(h - l for l, h in zip(self.lower, self.upper))

    def volume(self):
        return float(np.prod(self.widths())) if self.lower else 1.0

    def center(self):
        return tuple((l + h) / 2 for l, h in zip(self.lower, self.upper))

    def corners(self):
        """All 2^d corners in lexicographic order of (lower/upper) choices"""
        points = [()]
        for l, h in zip(self.lower, self.upper):
            points = [p + (v,) for p in points for v in ((l,) if l == h else (l, h))]
        return points

    def contains(self, point, tolerance=0.0):
        return all(l - tolerance <= x <= h + tolerance
                   for x, l, h in zip(point, self.lower, self.upper))

    def split(self, dim):
        mid = (self.lower[dim] + self.upper[dim]) / 2
        left_hi = self.upper[:dim] + (mid,) + self.upper[dim + 1:]
        right_lo = self.lower[:dim] + (mid,) + self.lower[dim + 1:]
        return HyperRect(self.lower, left_hi), HyperRect(right_lo, self.upper)

    def widest_dimensions(self):
        widths = self.widths()
        top = max(widths)
        return [i for i, w in enumerate(widths) if w == top]

    def split_widest(self):
        """
        Halve every dimension of maximal width

        Square cells stay square, so the tiling of a problem symmetric in two
        parameters is itself symmetric. Children come in lexicographic order.
        """
        children = [self]
        for dim in self.widest_dimensions():
            children = [half for child in children for half in child.split(dim)]
        return sorted(children, key=HyperRect.sort_key)

    def sort_key(self):
        return self.lower + self.upper


@dataclass(frozen=True)
class FeasibleRegionMap:
    """
    Partition of the declared parameter box into tagged rectangles

    Rectangles are stored in lexicographic order of (lower, upper); a point on
    a shared face belongs to the first covering rectangle.
    """
    params: Tuple[str, ...]
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    cells: Tuple[Tuple[HyperRect, Verdict], ...]
    tolerance: float
    property_text: str = ''

    @property
    def dimension(self):
        return len(self.params)

    def total_volume(self):
        return float(np.prod(np.subtract(self.upper, self.lower)))

    def volume_of(self, verdict):
        return sum(rect.volume() for rect, v in self.cells if v is verdict)

    @property
    def satisfied_volume(self):
        return self.volume_of(Verdict.SAT)

    @property
    def undecided_volume(self):
        return self.volume_of(Verdict.UNKNOWN)

    @cached_property
    def cell_arrays(self):
        lows = np.array([rect.lower for rect, _ in self.cells], dtype=float)
        highs = np.array([rect.upper for rect, _ in self.cells], dtype=float)
        codes = np.array([list(Verdict).index(v) for _, v in self.cells], dtype=np.int8)
        return lows.reshape(len(self.cells), self.dimension), \
            highs.reshape(len(self.cells), self.dimension), codes

    def locate(self, points, chunk=1024):
        """
        Index of the first covering rectangle per point, -1 when uncovered

        Args:
            points (array-like): shape (n, dimension)
        """
        points = np.asarray(points, dtype=float).reshape(-1, self.dimension)
        lows, highs, _ = self.cell_arrays
        result = np.full(len(points), -1, dtype=np.int64)
        for start in range(0, len(points), chunk):
            block = points[start:start + chunk]
            inside = np.all((block[:, None, :] >= lows[None, :, :])
                            & (block[:, None, :] <= highs[None, :, :]), axis=2)
            found = inside.any(axis=1)
            first = inside.argmax(axis=1)
            result[start:start + chunk] = np.where(found, first, -1)
        return result

    def verdict_codes(self, points):
        """Verdict index per point into list(Verdict); -1 for uncovered points"""
        _, _, codes = self.cell_arrays
        located = self.locate(points)
        return np.where(located >= 0, codes[np.maximum(located, 0)], -1)

    def sat_rects(self):
        return [rect for rect, v in self.cells if v is Verdict.SAT]
