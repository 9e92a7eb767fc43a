"""Independent reference computations used by the tests.

Nothing here imports the package's homology or normal-form code.  Cubes are
tuples of integer intervals; the boundary is written out from the textbook
formula and Smith normal forms are computed by plain pivoting on Python
integers.
"""
from fractions import Fraction
from itertools import product

import sympy


def cube_boundary(cube):
    """Signed faces of an elementary cube: sum_j (-1)^j (upper_j - lower_j) over its free axes."""
    out = {}
    free = [i for i, (lo, hi) in enumerate(cube) if hi > lo]
    for j, axis in enumerate(free):
        lo, hi = cube[axis]
        s = (-1) ** j
        upper = cube[:axis] + ((hi, hi),) + cube[axis + 1 :]
        lower = cube[:axis] + ((lo, lo),) + cube[axis + 1 :]
        out[upper] = out.get(upper, 0) + s
        out[lower] = out.get(lower, 0) - s
    return out


def dim_of(cube):
    return sum(hi - lo for lo, hi in cube)


def close(cubes):
    done = set()
    todo = list(cubes)
    while todo:
        c = todo.pop()
        if c not in done:
            done.add(c)
            todo.extend(cube_boundary(c))
    return done


def full_box(shape):
    """Every elementary cube of [0, s_1] x ... x [0, s_n]."""
    per_axis = [[(i, i) for i in range(s + 1)] + [(i, i + 1) for i in range(s)] for s in shape]
    return set(product(*per_axis))


def boundary_rows(N, L, k):
    rel = N - L
    rows = sorted(c for c in rel if dim_of(c) == k - 1)
    cols = sorted(c for c in rel if dim_of(c) == k)
    idx = {c: i for i, c in enumerate(rows)}
    mat = [[0] * len(cols) for _ in rows]
    for j, c in enumerate(cols):
        for face, s in cube_boundary(c).items():
            if face in idx:
                mat[idx[face]][j] += s
    return mat, len(rows), len(cols)


def snf_diagonal(mat):
    """Nonzero invariant factors by naive Smith reduction."""
    A = [row[:] for row in mat]
    m = len(A)
    n = len(A[0]) if m else 0
    diag = []
    t = 0
    while t < m and t < n:
        nz = [(abs(A[i][j]), i, j) for i in range(t, m) for j in range(t, n) if A[i][j]]
        if not nz:
            break
        _, pi, pj = min(nz)
        A[t], A[pi] = A[pi], A[t]
        for row in A:
            row[t], row[pj] = row[pj], row[t]
        while True:
            p = A[t][t]
            bad = None
            for i in range(t + 1, m):
                q = A[i][t] // p
                A[i] = [a - q * b for a, b in zip(A[i], A[t])]
                if A[i][t]:
                    bad = ("r", i)
            for j in range(t + 1, n):
                q = A[t][j] // p
                for i in range(m):
                    A[i][j] -= q * A[i][t]
                if A[t][j]:
                    bad = ("c", j)
            if bad is None:
                rest = [(i, j) for i in range(t + 1, m) for j in range(t + 1, n) if A[i][j] % p]
                if not rest:
                    break
                i, _ = rest[0]
                A[t] = [a + b for a, b in zip(A[t], A[i])]
                continue
            kind, r = bad
            if kind == "r":
                A[t], A[r] = A[r], A[t]
            else:
                for row in A:
                    row[t], row[r] = row[r], row[t]
        diag.append(abs(A[t][t]))
        t += 1
    return diag


def fraction_rank(mat):
    A = [[Fraction(v) for v in row] for row in mat]
    rank = 0
    cols = len(A[0]) if A else 0
    for c in range(cols):
        piv = next((r for r in range(rank, len(A)) if A[r][c] != 0), None)
        if piv is None:
            continue
        A[rank], A[piv] = A[piv], A[rank]
        for r in range(len(A)):
            if r != rank and A[r][c] != 0:
                f = A[r][c] / A[rank][c]
                A[r] = [a - f * b for a, b in zip(A[r], A[rank])]
        rank += 1
    return rank


def relative_homology_oracle(N, L, ambient):
    """(betti, torsion) of H_*(N, L; Z) for cube sets N >= L (closed)."""
    N, L = set(N), set(L)
    counts = [sum(1 for c in N - L if dim_of(c) == k) for k in range(ambient + 1)]
    ranks = [0] * (ambient + 2)
    tors = [()] * (ambient + 2)
    for k in range(1, ambient + 1):
        mat, r, c = boundary_rows(N, L, k)
        if r and c:
            d = snf_diagonal(mat)
            ranks[k] = len(d)
            tors[k] = tuple(sorted(v for v in d if v > 1))
    betti = tuple(counts[k] - ranks[k] - ranks[k + 1] for k in range(ambient + 1))
    torsion = tuple(tors[k + 1] for k in range(ambient + 1))
    return betti, torsion


def rational_betti(N, L, ambient):
    """Betti numbers from exact rational ranks (no torsion information)."""
    N, L = set(N), set(L)
    counts = [sum(1 for c in N - L if dim_of(c) == k) for k in range(ambient + 1)]
    ranks = [0] * (ambient + 2)
    for k in range(1, ambient + 1):
        mat, r, c = boundary_rows(N, L, k)
        ranks[k] = fraction_rank(mat) if r and c else 0
    return tuple(counts[k] - ranks[k] - ranks[k + 1] for k in range(ambient + 1))


def sympy_invariants(mat):
    """Invariant factors from sympy's Smith normal form over ZZ."""
    from sympy.matrices.normalforms import smith_normal_form

    if not mat or not mat[0]:
        return []
    S = smith_normal_form(sympy.Matrix(mat), domain=sympy.ZZ)
    return sorted(abs(int(S[i, i])) for i in range(min(S.shape)) if S[i, i] != 0)


def cusp_critical_values(mu, g0=0.0):
    """Critical values of g0 + z^3 - mu z solved symbolically."""
    z = sympy.symbols("z", real=True)
    g = g0 + z**3 - mu * z
    roots = sympy.solve(sympy.diff(g, z), z)
    return sorted(float(g.subs(z, r)) for r in roots if r.is_real)


def normal_form_fold(rate, lambda0):
    """Fold of -(3 z^2 - rate (lambda0 - lam)): returns (lambda*, z*) from the symbolic system."""
    z, lam = sympy.symbols("z lam", real=True)
    F = -(3 * z**2 - rate * (lambda0 - lam))
    sol = sympy.solve([F, sympy.diff(F, z)], [z, lam], dict=True)
    return float(sol[0][lam]), float(sol[0][z])
