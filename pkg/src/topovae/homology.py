"""Vietoris-Rips persistent homology over GF(2).

A complex is stored as a list of simplices in filtration order. Columns of
the boundary matrix are Python integers used as bitsets over the row
simplices of one dimension, so a column addition over GF(2) is a single
XOR and the pivot ("low") of a column is its highest set bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

# relative persistence cutoff separating signal bars from sampling noise
DEFAULT_LIFETIME_RATIO = 0.15
DEFAULT_LANDMARKS = {1: 400, 2: 150}
# truncation radius as a fraction of the landmark diameter
DEFAULT_RADIUS_FRACTION = {1: 0.3, 2: 0.3}

ORACLE_MAX_SIMPLICES = 5000
# guard for the full filtration; default runs stay well below this
VR_MAX_SIMPLICES = 2_000_000


class HomologyError(ValueError):
    pass


class ComplexTooLarge(HomologyError):
    """The complex exceeds a size cap; subsample landmarks first."""


class Simplex(NamedTuple):
    vertices: tuple[int, ...]
    value: float

    @property
    def dim(self) -> int:
        return len(self.vertices) - 1


@dataclass(frozen=True)
class FilteredComplex:
    simplices: list[Simplex]
    max_dim: int
    diameter: float = 0.0
    landmarks: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.simplices)

    def counts(self) -> list[int]:
        out = [0] * (self.max_dim + 2)
        for s in self.simplices:
            out[s.dim] += 1
        return out

    def restrict(self, epsilon: float) -> "FilteredComplex":
        return FilteredComplex(
            [s for s in self.simplices if s.value <= epsilon],
            self.max_dim, self.diameter, self.landmarks,
        )


class Interval(NamedTuple):
    dim: int
    birth: float
    death: float  # math.inf for classes that never die

    @property
    def lifetime(self) -> float:
        return self.death - self.birth


@dataclass(frozen=True)
class Barcode:
    intervals: list[Interval] = field(default_factory=list)

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    def in_dim(self, k: int) -> list[Interval]:
        return [iv for iv in self.intervals if iv.dim == k]

    def betti_at(self, epsilon: float, max_dim: int = 2) -> tuple[int, ...]:
        """Betti numbers of the complex at scale ``epsilon``."""
        b = [0] * (max_dim + 1)
        for iv in self.intervals:
            if iv.dim <= max_dim and iv.birth <= epsilon < iv.death:
                b[iv.dim] += 1
        return tuple(b)

    def to_json(self, diameter: float, betti: Sequence[int]) -> dict:
        return {
            "intervals": [
                {"dim": iv.dim, "birth": iv.birth,
                 "death": None if math.isinf(iv.death) else iv.death}
                for iv in self.intervals
            ],
            "diameter": diameter,
            "betti": list(betti),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Barcode":
        return cls([
            Interval(int(iv["dim"]), float(iv["birth"]),
                     math.inf if iv["death"] is None else float(iv["death"]))
            for iv in d["intervals"]
        ])


# ------------------------------------------------------------------ building


def farthest_point_sample(points: np.ndarray, k: int, start: int = 0) -> np.ndarray:
    """Greedy maxmin landmark indices, starting from ``start``."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise HomologyError(f"cannot pick {k} landmarks from {n} points")
    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = start
    dist = np.linalg.norm(points - points[start], axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(dist))
        chosen[i] = nxt
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return chosen


def _too_large(count: int, cap: int) -> ComplexTooLarge:
    return ComplexTooLarge(
        f"Rips complex exceeds {cap} simplices (at least {count}); "
        "use fewer landmarks or a smaller max radius"
    )


def _cliques(adj: np.ndarray, dist: np.ndarray, max_size: int,
             cap: int = VR_MAX_SIMPLICES) -> list[Simplex]:
    n = adj.shape[0]
    out = [Simplex((i,), 0.0) for i in range(n)]
    # each level holds (vertices, value, common-upper-neighbour mask)
    level = []
    upper = np.triu(adj, k=1)
    for i in range(n):
        for j in np.flatnonzero(upper[i]):
            j = int(j)
            v = float(dist[i, j])
            out.append(Simplex((i, j), v))
            level.append(((i, j), v, upper[i] & upper[j]))
        if len(out) > cap:
            raise _too_large(len(out), cap)
    for _ in range(3, max_size + 1):
        nxt = []
        for verts, v, common in level:
            for w in np.flatnonzero(common):
                w = int(w)
                value = max(v, float(dist[list(verts), w].max()))
                s = verts + (w,)
                out.append(Simplex(s, value))
                nxt.append((s, value, common & upper[w]))
            if len(out) > cap:
                raise _too_large(len(out), cap)
        level = nxt
    return out


def build_vr(
    points,
    max_dim: int = 1,
    max_radius: float | None = None,
    landmarks: int | None = None,
    max_simplices: int = VR_MAX_SIMPLICES,
) -> FilteredComplex:
    """Vietoris-Rips filtration up to simplices of dimension ``max_dim + 1``.

    ``points`` may be an array or a PointCloud. When ``landmarks`` is given,
    that many points are chosen by farthest-point sampling from index 0.
    ``max_radius`` defaults to a fixed fraction of the landmark diameter.
    """
    pts = np.asarray(getattr(points, "points", points), dtype=np.float64)
    if max_dim not in (0, 1, 2):
        raise HomologyError(f"max_dim must be 0, 1 or 2, got {max_dim}")
    idx = None
    if landmarks is not None:
        if landmarks < 2:
            raise HomologyError("need at least 2 landmarks")
        if landmarks > pts.shape[0]:
            raise HomologyError(f"{landmarks} landmarks requested from {pts.shape[0]} points")
        if landmarks < pts.shape[0]:
            idx = farthest_point_sample(pts, landmarks)
            pts = pts[idx]
    dist = squareform(pdist(pts)) if pts.shape[0] > 1 else np.zeros((1, 1))
    diameter = float(dist.max())
    if max_radius is None:
        max_radius = DEFAULT_RADIUS_FRACTION.get(max_dim, 0.3) * diameter
    if not max_radius > 0:
        raise HomologyError("max_radius must be positive")
    adj = dist <= max_radius
    simplices = _cliques(adj, dist, max_dim + 2, max_simplices)
    simplices.sort(key=lambda s: (s.value, len(s.vertices), s.vertices))
    return FilteredComplex(simplices, max_dim, diameter, idx)


def boundary(simplex) -> list[tuple[int, ...]]:
    """Facets of a simplex; over GF(2) every coefficient is 1."""
    verts = tuple(getattr(simplex, "vertices", simplex))
    if len(verts) <= 1:
        return []
    return [verts[:i] + verts[i + 1:] for i in range(len(verts))]


def boundary_of_chain(chain) -> set[tuple[int, ...]]:
    """Boundary of a GF(2) chain given as an iterable of simplices."""
    out: set[tuple[int, ...]] = set()
    for s in chain:
        out.symmetric_difference_update(boundary(s))
    return out


# ----------------------------------------------------------------- reduction


def _index_by_dim(cx: FilteredComplex):
    """Per-dimension position of each simplex, validating the filtration."""
    pos: dict[tuple[int, ...], int] = {}
    by_dim: list[list[int]] = [[] for _ in range(cx.max_dim + 2)]
    for g, s in enumerate(cx.simplices):
        verts = s.vertices
        if any(a >= b for a, b in zip(verts, verts[1:])):
            raise HomologyError(f"simplex {verts} vertices are not strictly increasing")
        d = len(verts) - 1
        if d > cx.max_dim + 1:
            raise HomologyError(f"simplex {verts} exceeds dimension cap {cx.max_dim + 1}")
        for f in boundary(verts):
            if f not in pos:
                raise HomologyError(f"face {f} of {verts} missing or out of order")
            if cx.simplices[by_dim[d - 1][pos[f]]].value > s.value:
                raise HomologyError(f"face {f} enters after its coface {verts}")
        pos[verts] = len(by_dim[d])
        by_dim[d].append(g)
    return pos, by_dim


def reduce_persistence(cx: FilteredComplex, keep_zero_length: bool = False) -> Barcode:
    """Standard column reduction with clearing, highest dimension first."""
    pos, by_dim = _index_by_dim(cx)
    simplices = cx.simplices
    top = cx.max_dim + 1
    positive: list[set[int]] = [set() for _ in range(top + 1)]
    paired: list[set[int]] = [set() for _ in range(top + 1)]
    intervals: list[Interval] = []

    for d in range(top, 0, -1):
        cleared = paired[d]
        pivots: dict[int, int] = {}
        for local, g in enumerate(by_dim[d]):
            if local in cleared:
                continue
            col = 0
            for f in boundary(simplices[g].vertices):
                col |= 1 << pos[f]
            while col:
                low = col.bit_length() - 1
                other = pivots.get(low)
                if other is None:
                    pivots[low] = col
                    paired[d - 1].add(low)
                    birth = simplices[by_dim[d - 1][low]].value
                    death = simplices[g].value
                    if keep_zero_length or death > birth:
                        intervals.append(Interval(d - 1, birth, death))
                    break
                col ^= other
            else:
                positive[d].add(local)

    for d in range(0, cx.max_dim + 1):
        for local, g in enumerate(by_dim[d]):
            if local in paired[d]:
                continue
            if d == 0 or local in positive[d]:
                intervals.append(Interval(d, simplices[g].value, math.inf))

    intervals.sort(key=lambda iv: (iv.dim, iv.birth, iv.death))
    return Barcode(intervals)


def infer_betti(
    barcode: Barcode,
    diameter: float,
    lifetime_ratio: float = DEFAULT_LIFETIME_RATIO,
) -> tuple[int, int, int]:
    """Count bars that live at least ``lifetime_ratio * diameter``."""
    if not diameter > 0:
        raise HomologyError("diameter must be positive")
    if not 0 < lifetime_ratio < 1:
        raise HomologyError("lifetime_ratio must lie in (0, 1)")
    cutoff = lifetime_ratio * diameter
    b = [0, 0, 0]
    for iv in barcode:
        if iv.dim <= 2 and (math.isinf(iv.death) or iv.lifetime >= cutoff):
            b[iv.dim] += 1
    return tuple(b)


def compute_betti(
    points,
    max_dim: int = 1,
    landmarks: int | None = None,
    lifetime_ratio: float = DEFAULT_LIFETIME_RATIO,
    max_radius: float | None = None,
    max_simplices: int = VR_MAX_SIMPLICES,
) -> tuple[tuple[int, int, int], Barcode, FilteredComplex]:
    """Whole TDA stage: complex, barcode and inferred Betti numbers."""
    pts = np.asarray(getattr(points, "points", points), dtype=np.float64)
    if landmarks is None:
        landmarks = min(DEFAULT_LANDMARKS.get(max_dim, 400), pts.shape[0])
    cx = build_vr(pts, max_dim=max_dim, max_radius=max_radius, landmarks=landmarks,
                  max_simplices=max_simplices)
    bars = reduce_persistence(cx)
    return infer_betti(bars, cx.diameter, lifetime_ratio), bars, cx


# -------------------------------------------------------------------- oracle


def gf2_rank(rows: list[int]) -> int:
    """Rank over GF(2) of a matrix whose rows are integer bitsets."""
    basis: dict[int, int] = {}
    rank = 0
    for r in rows:
        while r:
            lead = r.bit_length() - 1
            if lead in basis:
                r ^= basis[lead]
            else:
                basis[lead] = r
                rank += 1
                break
    return rank


def _boundary_rank(k_simplices: list[tuple[int, ...]], faces: list[tuple[int, ...]]) -> int:
    # Dense 0/1 matrix, rows = faces, columns = k-simplices; rank by row
    # elimination on bit-packed rows.
    if not k_simplices or not faces:
        return 0
    row_of = {f: i for i, f in enumerate(faces)}
    mat = np.zeros((len(faces), len(k_simplices)), dtype=np.uint8)
    for j, s in enumerate(k_simplices):
        for f in combinations(s, len(s) - 1):
            mat[row_of[f], j] = 1
    rows = [int.from_bytes(np.packbits(r).tobytes(), "big") for r in mat]
    return gf2_rank(rows)


def betti_oracle(cx: FilteredComplex, epsilon: float) -> tuple[int, int, int]:
    """Betti numbers at ``epsilon`` from ranks of boundary matrices.

    Independent of the persistence reduction: dim C_k - rank d_k - rank d_{k+1}.
    """
    sub = [s.vertices for s in cx.simplices if s.value <= epsilon]
    if len(sub) > ORACLE_MAX_SIMPLICES:
        raise ComplexTooLarge(
            f"{len(sub)} simplices exceed the oracle cap of {ORACLE_MAX_SIMPLICES}; "
            "use landmark subsampling or a smaller epsilon"
        )
    by_dim: list[list[tuple[int, ...]]] = [[] for _ in range(cx.max_dim + 2)]
    for v in sub:
        by_dim[len(v) - 1].append(v)
    ranks = [0] + [_boundary_rank(by_dim[k], by_dim[k - 1]) for k in range(1, cx.max_dim + 2)]
    ranks.append(0)
    b = [0, 0, 0]
    for k in range(cx.max_dim + 1):
        b[k] = len(by_dim[k]) - ranks[k] - ranks[k + 1]
    return tuple(b)
