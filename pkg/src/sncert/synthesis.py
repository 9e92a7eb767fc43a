"""Deformation of the sampled family to the canonical saddle-node model.

The final family is ``F(x, lam, sigma)`` built from three stages run one after
the other as ``sigma`` goes from 0 to 1:

* ``F1`` swaps the endpoint fields at ``lam = 0`` and ``lam = 1`` for gradient
  fields of the Whitney form (two critical points at 0, none at 1);
* ``F2`` blends towards ``-grad g`` for a Lyapunov function ``g`` of ``F1(., ., 1)``;
* ``F3`` moves ``-grad g`` to ``-grad W`` where ``W`` is the Whitney normal form
  with a single cubic death at ``lambda0``.

Every correction is multiplied by a cutoff that is exactly 0 on and outside
the block boundary, so ``F = f`` there for all ``sigma``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .blocks import BlockPair, IsolatingBlock
from .cerf import CerfGraphic, EventKind, WhitneyModel, whitney_gradient, whitney_graphic
from .errors import DecreaseFailed, InconsistentGraphic, OverlappingCutoffs, StageMismatch
from .synthetic import resolve_field

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]
MODEL_FORMAT = "sncert-model/1"


# --------------------------------------------------------------------------
# cutoffs


def flat_step(t):
    """C-infinity step: exactly 0 for ``t <= 0``, exactly 1 for ``t >= 1``."""
    t = np.asarray(t, dtype=float)
    pos = t > 0
    below = t < 1
    with np.errstate(over="ignore", divide="ignore"):
        a = np.where(pos, np.exp(-1.0 / np.where(pos, t, 1.0)), 0.0)
        b = np.where(below, np.exp(-1.0 / np.where(below, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def _rise(c, outer, inner):
    if outer == -math.inf:
        return np.ones_like(c)
    if inner <= outer:
        return (c > outer).astype(float)
    return flat_step((c - outer) / (inner - outer))


@dataclass(frozen=True)
class CutoffFunction:
    """Product of one-dimensional flat transitions.

    ``axes[j] = (outer_lo, inner_lo, inner_hi, outer_hi)`` acts on coordinate
    ``coords[j]`` of the stacked point ``(x_1, ..., x_n, lam)``.  The value is 1
    on the inner box and exactly 0 off the open outer box.
    """

    axes: tuple
    coords: tuple

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(tuple(float(v) for v in a) for a in self.axes))
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))
        for olo, ilo, ihi, ohi in self.axes:
            if not (olo <= ilo <= ihi <= ohi):
                raise ValueError(f"inner interval [{ilo}, {ihi}] not inside outer [{olo}, {ohi}]")

    def __call__(self, x, lam) -> np.ndarray:
        pts = np.column_stack([np.atleast_2d(x), np.asarray(lam, dtype=float).reshape(-1)])
        out = np.ones(len(pts))
        for (olo, ilo, ihi, ohi), c in zip(self.axes, self.coords):
            v = pts[:, c]
            out = out * _rise(v, olo, ilo) * _rise(-v, -ohi, -ihi)
        return out

    def support_overlaps(self, other: "CutoffFunction", n_coords: int) -> bool:
        """Whether the open outer boxes intersect (coordinates absent from a cutoff are unbounded)."""
        box = {c: (-math.inf, math.inf) for c in range(n_coords)}
        for cut in (self, other):
            for (olo, _, _, ohi), c in zip(cut.axes, cut.coords):
                lo, hi = box[c]
                box[c] = (max(lo, olo), min(hi, ohi))
        return all(lo < hi for lo, hi in box.values())

    @classmethod
    def box(cls, outer, inner) -> "CutoffFunction":
        """Cutoff in ``x`` only, from an outer and an inner box."""
        return cls(tuple((o[0], i[0], i[1], o[1]) for o, i in zip(outer, inner)), tuple(range(len(outer))))

    @classmethod
    def lambda_below(cls, full: float, zero: float, n: int) -> "CutoffFunction":
        """1 for ``lam <= full``, 0 for ``lam >= zero``."""
        return cls(((-math.inf, -math.inf, full, zero),), (n,))

    @classmethod
    def lambda_above(cls, zero: float, full: float, n: int) -> "CutoffFunction":
        return cls(((zero, full, math.inf, math.inf),), (n,))


# --------------------------------------------------------------------------
# node fields and the Lyapunov function


@dataclass(frozen=True)
class NodeField:
    """Scalar node values on a (lam, x_1, ..., x_n) grid with interpolated gradient."""

    lams: tuple
    axes: tuple
    values: np.ndarray = field(compare=False)

    def __post_init__(self):
        lams = np.asarray(self.lams, dtype=float)
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        vals = np.asarray(self.values, dtype=float)
        grads = np.stack(np.gradient(vals, *axes, axis=tuple(range(1, vals.ndim)), edge_order=2), axis=-1) if len(axes) > 1 else np.gradient(vals, axes[0], axis=1, edge_order=2)[..., None]
        grid = (lams,) + axes
        object.__setattr__(self, "_lo", np.array([a[0] for a in grid]))
        object.__setattr__(self, "_hi", np.array([a[-1] for a in grid]))
        object.__setattr__(self, "_vi", RegularGridInterpolator(grid, vals))
        object.__setattr__(self, "_gi", RegularGridInterpolator(grid, grads))
        object.__setattr__(self, "node_gradients", grads)

    @property
    def dim(self) -> int:
        return len(self.axes)

    def _pts(self, x, lam):
        pts = np.column_stack([np.asarray(lam, dtype=float).reshape(-1), np.atleast_2d(x)])
        return np.clip(pts, self._lo, self._hi)

    def value(self, x, lam) -> np.ndarray:
        return self._vi(self._pts(x, lam))

    def gradient(self, x, lam) -> np.ndarray:
        return self._gi(self._pts(x, lam))

    @classmethod
    def sample(cls, fn: Callable, lams, axes) -> "NodeField":
        """Node values of ``fn(x, lam)`` on the product grid."""
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
        vals = [np.asarray(fn(mesh, np.full(len(mesh), l))).reshape([len(a) for a in axes]) for l in lams]
        return cls(tuple(lams), tuple(tuple(a) for a in axes), np.stack(vals))


@dataclass(frozen=True)
class LyapunovConfig:
    cells: tuple = (96,)
    slices: int = 21
    horizon: float = 8.0
    dt: float = 0.05
    # cells around the invariant-set estimate left out of the decrease test
    dilation: int = 1
    method: str = "auto"
    # decrease margin demanded by the constrained recipe, relative to |f| / diameter
    eps_rel: float = 0.02


@dataclass(frozen=True)
class DecreaseReport:
    n_samples: int
    margin: float
    worst_point: tuple

    def to_dict(self) -> dict:
        return {"n_samples": self.n_samples, "margin": self.margin, "worst_point": list(self.worst_point)}


@dataclass(frozen=True)
class LyapunovFunction:
    nodes: NodeField
    neighborhood: np.ndarray = field(compare=False)  # bool per node, per slice
    sample_points: np.ndarray = field(compare=False)  # (m, n + 1) rows (x, lam)
    decrease: DecreaseReport = None
    # recipe used on each lambda slice
    methods: tuple = ()

    def value(self, x, lam):
        return self.nodes.value(x, lam)

    def gradient(self, x, lam):
        return self.nodes.gradient(x, lam)


def transit_times(field: Field, pts: np.ndarray, lams: np.ndarray, lo, hi, T: float, dt: float, sign: float):
    """Time until the flow of ``sign * field`` leaves the closed box ``[lo, hi]``, capped at ``T``.

    RK4 with step ``dt``; the crossing time inside the last step is linearly interpolated.
    """
    x = pts.copy()
    inside = np.all((x >= lo) & (x <= hi), axis=1)
    times = np.where(inside, T, 0.0)
    steps = int(math.ceil(T / dt))
    for step in range(steps):
        idx = np.nonzero(inside)[0]
        if not len(idx):
            break
        y, l = x[idx], lams[idx]
        k1 = sign * field(y, l)
        k2 = sign * field(y + 0.5 * dt * k1, l)
        k3 = sign * field(y + 0.5 * dt * k2, l)
        k4 = sign * field(y + dt * k3, l)
        ynew = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        x[idx] = ynew
        still = np.all((ynew >= lo) & (ynew <= hi), axis=1) & np.all(np.isfinite(ynew), axis=1)
        gone = ~still
        if np.any(gone):
            yo, yn = y[gone], ynew[gone]
            d = yn - yo
            with np.errstate(divide="ignore", invalid="ignore"):
                f_lo = np.where(yn < lo, (lo - yo) / d, np.inf)
                f_hi = np.where(yn > hi, (hi - yo) / d, np.inf)
            frac = np.nan_to_num(np.clip(np.minimum(f_lo, f_hi).min(axis=1), 0.0, 1.0), nan=0.0)
            times[idx[gone]] = np.minimum(T, (step + frac) * dt)
        inside[idx] = still
    return times


LAPLACE = "laplace"
CONSTRAINED = "constrained"


def _boundary_roles(block: IsolatingBlock, pts: np.ndarray) -> np.ndarray:
    """Dirichlet value per boundary point: +1 entrance, -1 exit, 0 where roles meet or tangency."""
    out = np.full(len(pts), np.nan)
    mid = 0.5 * (block.lambda_range[0] + block.lambda_range[1])
    tagged = np.column_stack([pts, np.full(len(pts), mid)])
    hits = [[] for _ in pts]
    for face, role in block.faces_with_roles():
        lower = np.array(face.lower, dtype=float)
        upper = np.array(face.upper, dtype=float)
        lower[-1], upper[-1] = mid, mid
        on = np.all((tagged >= lower - 1e-9) & (tagged <= upper + 1e-9), axis=1)
        for i in np.nonzero(on)[0]:
            hits[i].append(role)
    for i, roles in enumerate(hits):
        if not roles:
            continue
        s = set(roles)
        out[i] = 1.0 if s == {"entrance"} else -1.0 if s == {"exit"} else 0.0
    return out


def _dilate(mask: np.ndarray, steps: int) -> np.ndarray:
    out = mask.copy()
    nd = out.ndim
    for _ in range(steps):
        grown = out.copy()
        for ax in range(nd):
            hi_sl = tuple(slice(1, None) if a == ax else slice(None) for a in range(nd))
            lo_sl = tuple(slice(None, -1) if a == ax else slice(None) for a in range(nd))
            grown[hi_sl] |= out[lo_sl]
            grown[lo_sl] |= out[hi_sl]
        out = grown
    return out


def _laplace(shape, spacing, fixed: np.ndarray) -> np.ndarray:
    """Solve the 2n+1 point Laplace problem; ``fixed`` holds Dirichlet values (NaN = unknown)."""
    flat = fixed.reshape(-1)
    unknown = np.isnan(flat)
    m = int(unknown.sum())
    out = flat.copy()
    if not m:
        return out.reshape(shape)
    uid = -np.ones(len(flat), dtype=int)
    uid[unknown] = np.arange(m)
    strides = np.cumprod((1,) + tuple(shape[::-1]))[:-1][::-1]
    rows, cols, vals = [], [], []
    rhs = np.zeros(m)
    nodes = np.nonzero(unknown)[0]
    coords = np.array(np.unravel_index(nodes, shape)).T
    diag = np.zeros(m)
    for ax, h in enumerate(spacing):
        w = 1.0 / h**2
        for d in (-1, 1):
            ok = (coords[:, ax] + d >= 0) & (coords[:, ax] + d < shape[ax])
            nb = nodes[ok] + d * strides[ax]
            me = np.nonzero(ok)[0]
            diag[me] += w
            unk = unknown[nb]
            rows.append(me[unk])
            cols.append(uid[nb[unk]])
            vals.append(np.full(unk.sum(), -w))
            np.add.at(rhs, me[~unk], w * flat[nb[~unk]])
    rows.append(np.arange(m))
    cols.append(np.arange(m))
    vals.append(diag)
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))
    out[unknown] = spla.spsolve(A, rhs)
    return out.reshape(shape)


def _dirichlet(block, mesh, shape, lo, hi) -> np.ndarray:
    on_boundary = np.any(np.isclose(mesh, lo) | np.isclose(mesh, hi), axis=1)
    dirichlet = np.full(len(mesh), np.nan)
    dirichlet[on_boundary] = _boundary_roles(block, mesh[on_boundary])
    return dirichlet.reshape(shape)


def _pinned(dirichlet, free, stay_j):
    """Dirichlet data with the invariant-set estimate held at the mean of ``free`` over it."""
    interior_stay = stay_j & np.isnan(dirichlet)
    if not interior_stay.any():
        return dirichlet, 0.0
    # flatten the estimate at its own mean level; the caller shifts that level to 0
    level = float(free[interior_stay].mean())
    fixed = dirichlet.copy()
    fixed[interior_stay] = level
    return fixed, level


def _slice_margin(values, field, lam, kept, cells, axes) -> float:
    """``min -<grad g, f>`` over the centres of the kept cells of one slice."""
    n = len(axes)
    if not kept.any():
        return math.inf
    grads = np.gradient(values, *axes, edge_order=2) if n > 1 else [np.gradient(values, axes[0], edge_order=2)]
    cell_idx = np.array(np.unravel_index(np.nonzero(kept.reshape(-1))[0], tuple(cells))).T
    centres = np.column_stack([0.5 * (axes[ax][cell_idx[:, ax]] + axes[ax][cell_idx[:, ax] + 1]) for ax in range(n)])
    F = field(centres, np.full(len(centres), lam))
    ip = np.zeros(len(centres))
    for ax in range(n):
        avg = np.mean(
            [grads[ax][tuple(cell_idx[:, a] + corner[a] for a in range(n))] for corner in np.ndindex(*(2,) * n)], axis=0
        )
        ip += avg * F[:, ax]
    return float(-ip.max())


def _excluded_cells(excluded_nodes, cells) -> np.ndarray:
    n = len(cells)
    bad = np.zeros(tuple(cells), dtype=bool)
    for corner in np.ndindex(*(2,) * n):
        sl = tuple(slice(c, c + cells[ax]) for ax, c in enumerate(corner))
        bad |= excluded_nodes[sl]
    return bad


def _diff_1d(k: int, h: float) -> sp.csr_matrix:
    """Matrix of ``np.gradient(v, h, edge_order=2)`` on ``k >= 3`` nodes."""
    rows, cols, vals = [], [], []
    for i in range(1, k - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-1.0, 1.0]
    rows += [0, 0, 0, k - 1, k - 1, k - 1]
    cols += [0, 1, 2, k - 3, k - 2, k - 1]
    vals += [-3.0, 4.0, -1.0, 1.0, -4.0, 3.0]
    return sp.csr_matrix((np.array(vals) / (2 * h), (rows, cols)), shape=(k, k))


def gradient_operators(shape, spacing) -> list:
    """Sparse node-gradient matrices, one per axis, matching ``NodeField``."""
    ops = []
    for ax, (k, h) in enumerate(zip(shape, spacing)):
        op = sp.identity(1, format="csr")
        for j, kk in enumerate(shape):
            op = sp.kron(op, _diff_1d(kk, h) if j == ax else sp.identity(kk), format="csr")
        ops.append(op)
    return ops


def _laplacian(shape, spacing) -> sp.csr_matrix:
    ops = []
    for ax, (k, h) in enumerate(zip(shape, spacing)):
        d2 = sp.diags([np.ones(k - 1), -2 * np.ones(k), np.ones(k - 1)], [-1, 0, 1]) / h**2
        op = sp.identity(1, format="csr")
        for j, kk in enumerate(shape):
            op = sp.kron(op, d2 if j == ax else sp.identity(kk), format="csr")
        ops.append(op)
    return sum(ops[1:], ops[0]).tocsr()


def _constrained_values(field, lam, fixed, kept_cells, cells, axes, eps_rel) -> np.ndarray:
    """Closest-to-harmonic node values (L1 norm of the discrete Laplacian) with the decrease
    inequality imposed at every corner node and at the centre of every kept cell."""
    from scipy.optimize import linprog

    shape = fixed.shape
    n = len(shape)
    spacing = [a[1] - a[0] for a in axes]
    flat = fixed.reshape(-1)
    free = np.isnan(flat)
    m = int(free.sum())
    base = np.where(free, 0.0, flat)
    E = sp.identity(len(flat), format="csr")[:, np.nonzero(free)[0]]
    L = _laplacian(shape, spacing)[np.nonzero(free)[0]]
    D = gradient_operators(shape, spacing)

    cell_idx = np.array(np.unravel_index(np.nonzero(kept_cells.reshape(-1))[0], tuple(cells))).T
    nodes = np.unique(
        np.concatenate(
            [
                np.ravel_multi_index(tuple(cell_idx[:, ax] + corner[ax] for ax in range(n)), shape)
                for corner in np.ndindex(*(2,) * n)
            ]
        )
    ) if len(cell_idx) else np.zeros(0, dtype=int)
    pts = np.column_stack([axes[ax][np.unravel_index(nodes, shape)[ax]] for ax in range(n)]) if len(nodes) else np.zeros((0, n))
    Fn = field(pts, np.full(len(pts), lam))
    diam = math.sqrt(sum((a[-1] - a[0]) ** 2 for a in axes))
    eps = eps_rel * np.linalg.norm(Fn, axis=1) * 2.0 / diam
    C_nodes = sum(sp.diags(Fn[:, ax]) @ D[ax][nodes] for ax in range(n)).tocsr()
    # cell centres: the multilinear gradient there is the corner average
    centres_axes = [0.5 * (a[1:] + a[:-1]) for a in axes]
    centres = np.column_stack([centres_axes[ax][cell_idx[:, ax]] for ax in range(n)]) if len(cell_idx) else np.zeros((0, n))
    Fc = field(centres, np.full(len(centres), lam))
    avg = []
    for ax in range(n):
        acc = None
        for corner in np.ndindex(*(2,) * n):
            corner_nodes = np.ravel_multi_index(tuple(cell_idx[:, a] + corner[a] for a in range(n)), shape)
            term = D[ax][corner_nodes]
            acc = term if acc is None else acc + term
        avg.append(acc / 2**n)
    C_cells = sum(sp.diags(Fc[:, ax]) @ avg[ax] for ax in range(n)).tocsr()
    C = sp.vstack([C_nodes, C_cells]).tocsr()
    eps = np.concatenate([eps, eps_rel * np.linalg.norm(Fc, axis=1) * 2.0 / diam])
    rhs_c = -eps - C @ base
    CE = (C @ E).tocsr()
    # box corners: every stencil entry is Dirichlet data, nothing to choose
    live = np.diff(CE.indptr) > 0
    CE, rhs_c = CE[live], rhs_c[live]

    LE = (L @ E).tocsr()
    Lb = L @ base
    I = sp.identity(m, format="csr")
    A_ub = sp.vstack(
        [
            sp.hstack([LE, -I]),
            sp.hstack([-LE, -I]),
            sp.hstack([CE, sp.csr_matrix((CE.shape[0], m))]),
        ]
    ).tocsr()
    b_ub = np.concatenate([-Lb, Lb, rhs_c])
    c = np.concatenate([np.zeros(m), np.ones(m)])
    bounds = [(-10.0, 10.0)] * m + [(0, None)] * m
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs-ipm")
    if res.status != 0:
        raise DecreaseFailed(f"no admissible node values at lambda={lam:.4g}: {res.message}")
    out = base.copy()
    out[free] = res.x[:m]
    return out.reshape(shape)


def _decrease_samples(cells, axes, lams, excluded) -> np.ndarray:
    """Cell centres, per slice, none of whose corner nodes is excluded."""
    n = len(axes)
    centres_axes = [0.5 * (a[1:] + a[:-1]) for a in axes]
    centres = np.stack(np.meshgrid(*centres_axes, indexing="ij"), axis=-1).reshape(-1, n)
    samples = []
    for j, l in enumerate(lams):
        keep = centres[~_excluded_cells(excluded[j], cells).reshape(-1)]
        samples.append(np.column_stack([keep, np.full(len(keep), l)]))
    return np.concatenate(samples)


def build_lyapunov(
    block: IsolatingBlock,
    pair: Optional[BlockPair],
    field: Field,
    config: LyapunovConfig = LyapunovConfig(),
    check: bool = True,
) -> LyapunovFunction:
    """Lyapunov function for ``field`` on ``block`` with an a posteriori decrease check.

    Nodes whose forward and backward orbits both stay in the block for
    ``config.horizon`` form the invariant-set estimate.  The first recipe solves
    a discrete Laplace problem per lambda slice with +1 on entrance faces, -1 on
    exit faces and the estimate held at one level, shifted to 0.  On slices where
    its decrease check fails and ``config.method`` is ``"auto"``, the same problem
    is re-solved as a linear program: node values as close to harmonic as
    possible (L1 norm of the discrete Laplacian) subject to the decrease
    inequality at the nodes and centres of the cells outside the estimate.  Failure of
    the last recipe raises ``DecreaseFailed``.
    """
    box = block.physical_box()
    n = len(box)
    cells = tuple(config.cells) if len(config.cells) == n else tuple(config.cells[:1]) * n
    axes = [np.linspace(lo, hi, c + 1) for (lo, hi), c in zip(box, cells)]
    shape = tuple(len(a) for a in axes)
    lams = np.linspace(0.0, 1.0, config.slices)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    T = config.horizon

    all_pts = np.tile(mesh, (len(lams), 1))
    all_l = np.repeat(lams, len(mesh))
    t_exit = transit_times(field, all_pts, all_l, lo, hi, T, config.dt, 1.0).reshape((len(lams),) + shape)
    t_entry = transit_times(field, all_pts, all_l, lo, hi, T, config.dt, -1.0).reshape((len(lams),) + shape)
    stay = (t_exit >= T) & (t_entry >= T)
    excluded = np.stack([_dilate(stay[j], config.dilation) for j in range(len(lams))])
    sample_points = _decrease_samples(cells, axes, lams, excluded)
    spacing = [a[1] - a[0] for a in axes]

    if config.method not in ("auto", LAPLACE, CONSTRAINED):
        raise ValueError(f"unknown Lyapunov method {config.method!r}")
    dirichlet = _dirichlet(block, mesh, shape, lo, hi)
    free = _laplace(shape, spacing, dirichlet)
    values, methods = [], []
    for j, lam in enumerate(lams):
        fixed, level = _pinned(dirichlet, free, stay[j])
        kept = ~_excluded_cells(excluded[j], cells)
        slice_values = None
        if config.method in ("auto", LAPLACE):
            slice_values = _laplace(shape, spacing, fixed) - level
            ok = _slice_margin(slice_values, field, float(lam), kept, cells, axes) > 0
            if ok or config.method == LAPLACE:
                values.append(slice_values)
                methods.append(LAPLACE)
                continue
        values.append(_constrained_values(field, float(lam), fixed, kept, cells, axes, config.eps_rel) - level)
        methods.append(CONSTRAINED)
    nodes = NodeField(tuple(lams), tuple(tuple(a) for a in axes), np.stack(values))
    probe = LyapunovFunction(nodes, stay, sample_points, None, tuple(methods))
    g = LyapunovFunction(nodes, stay, sample_points, decrease_report(probe, field, sample_points), tuple(methods))
    if check and not g.decrease.margin > 0:
        rep = g.decrease
        raise DecreaseFailed(
            f"<grad g, f> = {-rep.margin:.3g} >= 0 at {rep.worst_point}", rep.worst_point, -rep.margin
        )
    return g


def decrease_report(g: LyapunovFunction, field: Field, points: np.ndarray) -> DecreaseReport:
    """Worst value of ``-<grad g, field>`` over ``points`` (rows ``(x, lam)``)."""
    if not len(points):
        return DecreaseReport(0, -math.inf, ())
    x, lam = points[:, :-1], points[:, -1]
    ip = np.einsum("ij,ij->i", g.gradient(x, lam), field(x, lam))
    w = int(np.argmax(ip))
    return DecreaseReport(len(points), float(-ip[w]), tuple(float(v) for v in points[w]))


# --------------------------------------------------------------------------
# blending and stages


def blend(f: Field, g: LyapunovFunction, rho: CutoffFunction, sigma: float) -> Field:
    """``R = rho [(1 - sigma) f - sigma grad g] + (1 - rho) f``."""

    def R(x, lam):
        r = rho(x, lam)[:, None]
        fx = f(x, lam)
        return r * ((1 - sigma) * fx - sigma * g.gradient(x, lam)) + (1 - r) * fx

    return R


@dataclass(frozen=True)
class EndpointFamilies:
    """``f0(x, s)`` at ``lam = 0`` and ``f1(x, s)`` at ``lam = 1``; Morse functions are Whitney slices."""

    f: Field
    whitney: WhitneyModel
    rho0: CutoffFunction
    schedule: Callable = flat_step

    def morse_function(self, end: int) -> Callable:
        return lambda x: _whitney_values(self.whitney, x, float(end))

    def _target(self, x, end: float):
        return -whitney_gradient(self.whitney, x, end)

    def _family(self, x, s, end: float):
        lam = np.full(len(x), end)
        base = self.f(x, lam)
        t = self.schedule(s)
        r = self.rho0(x, lam)[:, None]
        nz = r[:, 0] > 0
        corr = np.zeros_like(base)
        if np.any(nz):
            corr[nz] = t * r[nz] * (self._target(x[nz], end) - base[nz])
        return base + corr

    def f0(self, x, s):
        return self._family(np.atleast_2d(x), s, 0.0)

    def f1(self, x, s):
        return self._family(np.atleast_2d(x), s, 1.0)


def _whitney_values(model, x, lam):
    from .cerf import whitney_value

    return whitney_value(model, np.atleast_2d(x), lam)


def endpoint_families(f: Field, B0: tuple, B1: tuple, k: int, whitney: WhitneyModel, collar: float) -> EndpointFamilies:
    """Endpoint families whose ``s = 1`` slices are ``-grad`` of Morse functions on shrunken boxes."""
    if k != whitney.q_signature[1] + 1:
        raise InconsistentGraphic(f"Whitney signature {whitney.q_signature} does not realise k={k}")
    box = tuple((max(a[0], b[0]), min(a[1], b[1])) for a, b in zip(B0, B1))
    return EndpointFamilies(f, whitney, CutoffFunction.box(box, shrink(box, collar)))


def shrink(box, collar: float):
    return tuple((lo + collar * (hi - lo), hi - collar * (hi - lo)) for lo, hi in box)


@dataclass(frozen=True)
class StageF1:
    f: Field
    ends: EndpointFamilies
    eta: CutoffFunction
    xi: CutoffFunction

    def __call__(self, x, lam, s):
        x = np.atleast_2d(x)
        lam = np.asarray(lam, dtype=float).reshape(-1)
        out = self.f(x, lam)
        e = self.eta(x, lam)
        q = self.xi(x, lam)
        a = e > 0
        if np.any(a):
            out[a] = out[a] + e[a, None] * (self.ends.f0(x[a], s) - self.f(x[a], np.zeros(a.sum())))
        b = q > 0
        if np.any(b):
            out[b] = out[b] + q[b, None] * (self.ends.f1(x[b], s) - self.f(x[b], np.ones(b.sum())))
        return out


def assemble_F1(f: Field, ends: EndpointFamilies, eta: CutoffFunction, xi: CutoffFunction) -> StageF1:
    if eta.support_overlaps(xi, ends.whitney.dim + 1):
        raise OverlappingCutoffs("eta and xi supports intersect")
    return StageF1(f, ends, eta, xi)


@dataclass(frozen=True)
class StageF2:
    start: Callable  # (x, lam) -> F1(x, lam, 1)
    g: LyapunovFunction
    rho: CutoffFunction
    schedule: Callable = flat_step

    def __call__(self, x, lam, s):
        x = np.atleast_2d(x)
        lam = np.asarray(lam, dtype=float).reshape(-1)
        base = self.start(x, lam)
        t = float(self.schedule(s))
        if t == 0:
            return base
        r = self.rho(x, lam)
        nz = r > 0
        out = base.copy()
        if np.any(nz):
            rt = (r[nz] * t)[:, None]
            out[nz] = (1 - rt) * base[nz] - rt * self.g.gradient(x[nz], lam[nz])
        return out


@dataclass(frozen=True)
class StageF3:
    start: Callable  # (x, lam) -> F1(x, lam, 1), the part of F2's end outside rho
    g: LyapunovFunction
    whitney: WhitneyModel
    rho: CutoffFunction
    schedule: Callable = flat_step

    def __call__(self, x, lam, s):
        x = np.atleast_2d(x)
        lam = np.asarray(lam, dtype=float).reshape(-1)
        base = self.start(x, lam)
        t = float(self.schedule(s))
        r = self.rho(x, lam)
        nz = r > 0
        out = base.copy()
        if np.any(nz):
            rr = r[nz][:, None]
            xs, ls = x[nz], lam[nz]
            grad = self.g.gradient(xs, ls) if t < 1 else 0.0
            wgrad = _whitney_grad_rows(self.whitney, xs, ls) if t > 0 else 0.0
            # gradient of the path (1 - t) g + t W
            target = -((1 - t) * grad + t * wgrad)
            out[nz] = (1 - rr) * base[nz] + rr * target
        return out


def _whitney_grad_rows(model: WhitneyModel, x, lam):
    out = np.empty_like(x)
    for l in np.unique(lam):
        m = lam == l
        out[m] = whitney_gradient(model, x[m], l)
    return out


def assemble_F3(F2: StageF2, graphic: CerfGraphic, whitney: WhitneyModel, rho: CutoffFunction) -> StageF3:
    """Final stage: the Cerf path ``(1 - t) g + t W`` inside ``rho``'s plateau."""
    deaths = [e for e in graphic.events if e.kind is EventKind.CUBIC_DEATH]
    if len(graphic.events) != 1 or len(deaths) != 1:
        raise InconsistentGraphic("graphic must consist of a single cubic death")
    if abs(deaths[0].lam - whitney.lambda0) > 1e-12:
        raise InconsistentGraphic("death parameter differs from the Whitney lambda0")
    q = whitney.q_signature[1]
    if sorted(graphic.arc(a).morse_index for a in deaths[0].arcs) != [q, q + 1]:
        raise InconsistentGraphic("graphic indices do not match the Whitney signature")
    return StageF3(F2.start, F2.g, whitney, rho, F2.schedule)


# --------------------------------------------------------------------------
# composition


@dataclass(frozen=True)
class SynthesisConfig:
    lambda0: float = 0.5
    collar: float = 0.06
    eta: tuple = (0.05, 0.15)
    xi: tuple = (0.85, 0.95)
    # fraction of the shorter half of the split axis used as the chart scale
    chart_fraction: float = 0.5
    lyapunov: LyapunovConfig = LyapunovConfig()
    junction_tol: float = 0.0


@dataclass(frozen=True)
class SynthesizedFamily:
    f: Field
    field_name: str
    box: tuple
    F1: StageF1
    F2: StageF2
    F3: StageF3
    whitney: WhitneyModel
    graphic: CerfGraphic
    rho: CutoffFunction
    k: int
    config: SynthesisConfig

    @property
    def stages(self) -> list:
        return [self.F1, self.F2, self.F3]

    @property
    def inner_box(self) -> tuple:
        return tuple((o[1], o[2]) for o in self.rho.axes)

    def __call__(self, x, lam, sigma: float) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lam = np.broadcast_to(np.asarray(lam, dtype=float), (len(x),)).copy()
        sigma = float(sigma)
        if sigma <= 1 / 3:
            return self.F1(x, lam, 3 * sigma)
        if sigma <= 2 / 3:
            return self.F2(x, lam, 3 * sigma - 1)
        return self.F3(x, lam, 3 * sigma - 2)

    def at_sigma(self, sigma: float) -> Field:
        return lambda x, lam: self(x, lam, sigma)

    def outside_interior(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        inside = np.all([(x[:, j] > lo) & (x[:, j] < hi) for j, (lo, hi) in enumerate(self.box)], axis=0)
        return ~inside


def whitney_for_block(box, axis: int, coordinate: float, k: int, lambda0: float, fraction: float = 0.5) -> WhitneyModel:
    """Chart centred on the split point with critical points at ``z = +-1`` when ``lam = 0``."""
    n = len(box)
    origin = tuple(coordinate if j == axis else 0.5 * (lo + hi) for j, (lo, hi) in enumerate(box))
    lo, hi = box[axis]
    sz = fraction * min(coordinate - lo, hi - coordinate)
    scale = tuple(sz if j == axis else 0.5 * (h - l) for j, (l, h) in enumerate(box))
    rate = 3.0 / lambda0
    return WhitneyModel(lambda0, 1, 0.0, (n - k, k - 1), origin, scale, axis, rate=rate)


def compose_final(F1: StageF1, F2: StageF2, F3: StageF3, probes: np.ndarray, tol: float = 0.0):
    """Check stage junctions on ``probes`` (rows ``(x, lam)``); raise ``StageMismatch`` above ``tol``."""
    x, lam = probes[:, :-1], probes[:, -1]
    d1 = float(np.max(np.abs(F1(x, lam, 1.0) - F2(x, lam, 0.0)))) if len(probes) else 0.0
    d2 = float(np.max(np.abs(F2(x, lam, 1.0) - F3(x, lam, 0.0)))) if len(probes) else 0.0
    if d1 > tol or d2 > tol:
        raise StageMismatch(f"stage junction deviations {d1:.3g}, {d2:.3g} exceed {tol}")
    return d1, d2


def synthesize(
    pair: BlockPair,
    k: int,
    f: Field,
    field_name: str = "",
    config: SynthesisConfig = SynthesisConfig(),
) -> SynthesizedFamily:
    block = pair.parent
    box = block.physical_box()
    n = len(box)
    axis = pair.axis
    coordinate = float(block.grid.nodes[axis][next(iter(pair.interface))[axis][0]])
    whitney = whitney_for_block(box, axis, coordinate, k, config.lambda0, config.chart_fraction)
    ends = endpoint_families(f, box, box, k, whitney, config.collar)
    eta = CutoffFunction.lambda_below(config.eta[0], config.eta[1], n)
    xi = CutoffFunction.lambda_above(config.xi[0], config.xi[1], n)
    F1 = assemble_F1(f, ends, eta, xi)

    def start(x, lam):
        return F1(x, lam, 1.0)

    g = build_lyapunov(block, pair, start, config.lyapunov)
    rho = CutoffFunction.box(box, shrink(box, config.collar))
    F2 = StageF2(start, g, rho)
    graphic = whitney_graphic(whitney, np.linspace(0.0, 1.0, 101))
    F3 = assemble_F3(F2, graphic, whitney, rho)
    compose_final(F1, F2, F3, g.sample_points[:: max(1, len(g.sample_points) // 500)], config.junction_tol)
    return SynthesizedFamily(f, field_name, box, F1, F2, F3, whitney, graphic, rho, k, config)


# --------------------------------------------------------------------------
# model file


def _floats(a) -> list:
    return [float(v) for v in np.asarray(a, dtype=float).reshape(-1)]


def dumps_model(fam: SynthesizedFamily) -> str:
    """Self-contained description; ``loads_model`` rebuilds an identical family."""
    g = fam.F2.g
    w = fam.whitney
    doc = {
        "format": MODEL_FORMAT,
        "field": fam.field_name,
        "k": fam.k,
        "box": [list(b) for b in fam.box],
        "whitney": {
            "lambda0": w.lambda0,
            "sign": w.sign,
            "g0": w.g0,
            "q_signature": list(w.q_signature),
            "origin": list(w.origin),
            "scale": list(w.scale),
            "z_axis": w.z_axis,
            "rate": w.rate,
        },
        "config": {
            "lambda0": fam.config.lambda0,
            "collar": fam.config.collar,
            "eta": list(fam.config.eta),
            "xi": list(fam.config.xi),
            "chart_fraction": fam.config.chart_fraction,
            "lyapunov": asdict(fam.config.lyapunov),
        },
        "schedule": "F1(3s) | F2(3s-1) | F3(3s-2), flat exp(-1/t) ramps",
        "lyapunov": {
            "lams": _floats(g.nodes.lams),
            "axes": [_floats(a) for a in g.nodes.axes],
            "values": _floats(g.nodes.values),
            "neighborhood": [int(v) for v in np.asarray(g.neighborhood).reshape(-1)],
            "sample_points": [_floats(r) for r in g.sample_points],
            "decrease": g.decrease.to_dict() if g.decrease else None,
            "methods": list(g.methods),
        },
        "graphic_mesh": _floats(sorted({l for a in fam.graphic.arcs for l in a.lams})),
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def loads_model(text: str, f: Optional[Field] = None) -> SynthesizedFamily:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} document")
    f = f or resolve_field(doc["field"])
    c = doc["config"]
    config = SynthesisConfig(c["lambda0"], c["collar"], tuple(c["eta"]), tuple(c["xi"]), c["chart_fraction"], LyapunovConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in c["lyapunov"].items()}))
    wd = doc["whitney"]
    whitney = WhitneyModel(
        wd["lambda0"], wd["sign"], wd["g0"], tuple(wd["q_signature"]), tuple(wd["origin"]), tuple(wd["scale"]), wd["z_axis"], rate=wd["rate"]
    )
    box = tuple(tuple(b) for b in doc["box"])
    n = len(box)
    ld = doc["lyapunov"]
    shape = (len(ld["lams"]),) + tuple(len(a) for a in ld["axes"])
    nodes = NodeField(tuple(ld["lams"]), tuple(tuple(a) for a in ld["axes"]), np.array(ld["values"]).reshape(shape))
    dec = ld["decrease"]
    g = LyapunovFunction(
        nodes,
        np.array(ld["neighborhood"], dtype=bool).reshape(shape),
        np.array(ld["sample_points"]).reshape(-1, n + 1),
        DecreaseReport(dec["n_samples"], dec["margin"], tuple(dec["worst_point"])) if dec else None,
        tuple(ld.get("methods", ())),
    )
    ends = endpoint_families(f, box, box, doc["k"], whitney, config.collar)
    F1 = assemble_F1(f, ends, CutoffFunction.lambda_below(config.eta[0], config.eta[1], n), CutoffFunction.lambda_above(config.xi[0], config.xi[1], n))

    def start(x, lam):
        return F1(x, lam, 1.0)

    rho = CutoffFunction.box(box, shrink(box, config.collar))
    F2 = StageF2(start, g, rho)
    graphic = whitney_graphic(whitney, doc["graphic_mesh"])
    F3 = assemble_F3(F2, graphic, whitney, rho)
    return SynthesizedFamily(f, doc["field"], box, F1, F2, F3, whitney, graphic, rho, doc["k"], config)
