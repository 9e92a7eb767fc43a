"""Integer homology of cubical pairs.

Elementary cubes are tuples of integer intervals ``((lo, hi), ...)`` with
``hi - lo`` in ``{0, 1}``.  Boundary matrices use the standard cubical sign
convention and relative homology ``H_*(N, L; Z)`` is read off the Smith normal
form of the relative boundary maps.  All arithmetic uses Python integers.
"""
from __future__ import annotations

import itertools
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import NotASubcomplex

Cube = tuple  # tuple[tuple[int, int], ...]


def cube_dim(cube: Cube) -> int:
    return sum(hi - lo for lo, hi in cube)


def cube_key(cube: Cube):
    """Deterministic order: dimension, then corner coordinates."""
    return (cube_dim(cube), tuple(lo for lo, _ in cube), tuple(hi for _, hi in cube))


def faces(cube: Cube) -> list[tuple[int, Cube]]:
    """Signed codimension-one faces: ``[(sign, face), ...]``."""
    out = []
    s = 0
    for j, (lo, hi) in enumerate(cube):
        if hi == lo:
            continue
        sign = -1 if s % 2 else 1
        out.append((sign, cube[:j] + ((hi, hi),) + cube[j + 1 :]))
        out.append((-sign, cube[:j] + ((lo, lo),) + cube[j + 1 :]))
        s += 1
    return out


def closure(cubes: Iterable[Cube]) -> frozenset:
    seen = set()
    stack = list(cubes)
    while stack:
        c = stack.pop()
        if c in seen:
            continue
        seen.add(c)
        stack.extend(face for _, face in faces(c))
    return frozenset(seen)


@dataclass(frozen=True)
class CubicalSet:
    ambient_dim: int
    cells: frozenset

    def __post_init__(self):
        cells = frozenset(tuple(tuple(int(v) for v in iv) for iv in c) for c in self.cells)
        for c in cells:
            if len(c) != self.ambient_dim or any(hi - lo not in (0, 1) for lo, hi in c):
                raise ValueError(f"{c} is not an elementary cube in dimension {self.ambient_dim}")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def from_cubes(cls, ambient_dim: int, cubes: Iterable[Cube]) -> "CubicalSet":
        """Closure of the given cubes."""
        return cls(ambient_dim, closure(cubes))

    @classmethod
    def box(cls, shape) -> "CubicalSet":
        """Full cubical box ``[0, shape_0] x ... x [0, shape_{n-1}]``."""
        return cls.from_cubes(len(shape), top_cubes_in_box([(0, s) for s in shape]))

    @classmethod
    def empty(cls, ambient_dim: int) -> "CubicalSet":
        return cls(ambient_dim, frozenset())

    def is_closed(self) -> bool:
        return all(face in self.cells for c in self.cells for _, face in faces(c))

    def basis(self, k: int) -> list:
        return sorted((c for c in self.cells if cube_dim(c) == k), key=cube_key)

    def top_cells(self) -> list:
        return self.basis(self.ambient_dim)

    def __or__(self, other: "CubicalSet") -> "CubicalSet":
        return CubicalSet(self.ambient_dim, self.cells | other.cells)

    def __and__(self, other: "CubicalSet") -> "CubicalSet":
        return CubicalSet(self.ambient_dim, self.cells & other.cells)

    def __le__(self, other: "CubicalSet") -> bool:
        return self.cells <= other.cells

    def __len__(self):
        return len(self.cells)


def top_cubes_in_box(intervals) -> list:
    ranges = [[(i, i + 1) for i in range(lo, hi)] if hi > lo else [(lo, lo)] for lo, hi in intervals]
    return [tuple(c) for c in itertools.product(*ranges)]


def boundary_matrix(cs: CubicalSet, k: int, rows=None, cols=None) -> np.ndarray:
    """Matrix of the boundary map from degree ``k`` to ``k - 1`` in lexicographic bases."""
    rows = cs.basis(k - 1) if rows is None else rows
    cols = cs.basis(k) if cols is None else cols
    index = {c: i for i, c in enumerate(rows)}
    mat = np.zeros((len(rows), len(cols)), dtype=np.int64)
    for j, c in enumerate(cols):
        for sign, face in faces(c):
            i = index.get(face)
            if i is not None:
                mat[i, j] += sign
    return mat


# --------------------------------------------------------------------------
# Smith normal form


def _dense_invariants(mat: list[list[int]]) -> list[int]:
    """Nonzero diagonal of the Smith normal form of a dense integer matrix."""
    A = [row[:] for row in mat]
    m = len(A)
    n = len(A[0]) if m else 0
    diag = []
    t = 0
    while t < min(m, n):
        nz = [(abs(A[i][j]), i, j) for i in range(t, m) for j in range(t, n) if A[i][j]]
        if not nz:
            break
        _, pi, pj = min(nz)
        A[t], A[pi] = A[pi], A[t]
        for row in A:
            row[t], row[pj] = row[pj], row[t]
        while True:
            p = A[t][t]
            dirty = False
            for i in range(t + 1, m):
                if A[i][t]:
                    q = A[i][t] // p
                    if q:
                        A[i] = [a - q * b for a, b in zip(A[i], A[t])]
                    if A[i][t]:
                        dirty = True
            for j in range(t + 1, n):
                if A[t][j]:
                    q = A[t][j] // p
                    if q:
                        for row in A:
                            row[j] -= q * row[t]
                    if A[t][j]:
                        dirty = True
            if not dirty:
                bad = next(
                    ((i, j) for i in range(t + 1, m) for j in range(t + 1, n) if A[i][j] % p),
                    None,
                )
                if bad is None:
                    break
                # pull the non-divisible row into row t and keep reducing
                A[t] = [a + b for a, b in zip(A[t], A[bad[0]])]
                dirty = True
            # move the smallest nonzero entry of row/column t to the pivot
            cand = [(abs(A[i][t]), i, t) for i in range(t, m) if A[i][t]]
            cand += [(abs(A[t][j]), t, j) for j in range(t, n) if A[t][j]]
            _, pi, pj = min(cand)
            if (pi, pj) != (t, t):
                if pj == t:
                    A[t], A[pi] = A[pi], A[t]
                else:
                    for row in A:
                        row[t], row[pj] = row[pj], row[t]
        diag.append(abs(A[t][t]))
        t += 1
    return diag


def smith_invariants(columns: list[dict], n_rows: int) -> list[int]:
    """Nonzero invariant factors of a sparse integer matrix given column-wise.

    Unit pivots are eliminated sparsely first (they are invariant factors 1);
    the remaining block, usually tiny, goes through the dense reduction.
    """
    cols = {j: {i: v for i, v in c.items() if v} for j, c in enumerate(columns)}
    cols = {j: c for j, c in cols.items() if c}
    rows = defaultdict(dict)
    for j, c in cols.items():
        for i, v in c.items():
            rows[i][j] = v
    units = 0
    progress = True
    while progress:
        progress = False
        for j in sorted(cols, key=lambda j: len(cols[j])):
            col = cols.get(j)
            if not col:
                continue
            pivots = [i for i, v in col.items() if v in (1, -1)]
            if not pivots:
                continue
            i = min(pivots, key=lambda r: (len(rows[r]), r))
            u = col[i]
            for j2, a in list(rows[i].items()):
                if j2 == j:
                    continue
                factor = a * u
                c2 = cols[j2]
                for r, v in col.items():
                    nv = c2.get(r, 0) - factor * v
                    if nv:
                        c2[r] = nv
                        rows[r][j2] = nv
                    else:
                        c2.pop(r, None)
                        rows[r].pop(j2, None)
                if not c2:
                    del cols[j2]
            for r in col:
                rows[r].pop(j, None)
            del cols[j]
            del rows[i]
            units += 1
            progress = True
    rest_cols = sorted(cols)
    rest_rows = sorted({r for c in cols.values() for r in c})
    rindex = {r: k for k, r in enumerate(rest_rows)}
    dense = [[0] * len(rest_cols) for _ in rest_rows]
    for jj, j in enumerate(rest_cols):
        for r, v in cols[j].items():
            dense[rindex[r]][jj] = v
    return [1] * units + _dense_invariants(dense)


# --------------------------------------------------------------------------
# homology


@dataclass(frozen=True)
class HomologyResult:
    betti: tuple
    torsion: tuple

    @classmethod
    def concentrated(cls, degree: int, ambient_dim: int) -> "HomologyResult":
        """``Z`` in one degree, zero elsewhere."""
        betti = [0] * (ambient_dim + 1)
        if degree is not None:
            betti[degree] = 1
        return cls(tuple(betti), tuple(() for _ in betti))

    @classmethod
    def zero(cls, ambient_dim: int) -> "HomologyResult":
        return cls.concentrated(None, ambient_dim)

    @property
    def top_degree(self) -> int:
        return len(self.betti) - 1

    def is_zero(self) -> bool:
        return not any(self.betti) and not any(self.torsion)

    def has_torsion(self) -> bool:
        return any(self.torsion)

    def single_free_degree(self):
        """Degree ``m`` if the homology is exactly ``Z`` in degree ``m``, else ``None``."""
        if self.has_torsion():
            return None
        nz = [k for k, b in enumerate(self.betti) if b]
        if len(nz) == 1 and self.betti[nz[0]] == 1:
            return nz[0]
        return None

    def euler_characteristic(self) -> int:
        return sum((-1) ** k * b for k, b in enumerate(self.betti))

    def to_dict(self) -> dict:
        return {"betti": list(self.betti), "torsion": [list(t) for t in self.torsion]}

    def __str__(self):
        parts = []
        for k, (b, t) in enumerate(zip(self.betti, self.torsion)):
            terms = (["Z"] if b == 1 else [f"Z^{b}"] if b else []) + [f"Z/{d}" for d in t]
            if terms:
                parts.append(f"H{k}=" + "+".join(terms))
        return ", ".join(parts) or "0"


def relative_chain_bases(N: CubicalSet, L: CubicalSet) -> list[list]:
    rel = N.cells - L.cells
    return [sorted((c for c in rel if cube_dim(c) == k), key=cube_key) for k in range(N.ambient_dim + 1)]


def relative_boundary_columns(bases: list[list], k: int) -> list[dict]:
    """Columns of the relative boundary map ``C_k -> C_{k-1}`` as ``{row: value}`` dicts."""
    if k == 0:
        return [dict() for _ in bases[0]]
    index = {c: i for i, c in enumerate(bases[k - 1])}
    cols = []
    for c in bases[k]:
        col = defaultdict(int)
        for sign, face in faces(c):
            i = index.get(face)
            if i is not None:
                col[i] += sign
        cols.append(dict(col))
    return cols


def relative_homology(N: CubicalSet, L: CubicalSet | None = None) -> HomologyResult:
    """``H_*(N, L; Z)`` for closed cubical sets ``L <= N``."""
    if L is None:
        L = CubicalSet.empty(N.ambient_dim)
    if L.ambient_dim != N.ambient_dim:
        raise NotASubcomplex("pair lives in different ambient dimensions")
    if not L.cells <= N.cells:
        raise NotASubcomplex("L is not contained in N")
    if not (N.is_closed() and L.is_closed()):
        raise NotASubcomplex("N and L must be closed under faces")
    n = N.ambient_dim
    bases = relative_chain_bases(N, L)
    ranks = [0] * (n + 2)
    divisors = [[] for _ in range(n + 2)]
    for k in range(1, n + 1):
        inv = smith_invariants(relative_boundary_columns(bases, k), len(bases[k - 1]))
        ranks[k] = len(inv)
        divisors[k] = sorted(d for d in inv if d > 1)
    betti = tuple(len(bases[k]) - ranks[k] - ranks[k + 1] for k in range(n + 1))
    torsion = tuple(tuple(divisors[k + 1]) for k in range(n + 1))
    return HomologyResult(betti, torsion)


def relative_euler_characteristic(N: CubicalSet, L: CubicalSet) -> int:
    return sum((-1) ** k * len(b) for k, b in enumerate(relative_chain_bases(N, L)))
