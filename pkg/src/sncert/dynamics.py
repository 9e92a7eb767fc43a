"""Numerical dynamics of parametrised vector fields.

Fields are callables ``field(x, lam)`` taking rows ``x`` of shape ``(m, n)``
and a parameter vector ``lam`` of shape ``(m,)``.  Jacobians are central
differences with step ``1e-6 (1 + |x_j|)``; equilibria are Newton roots with
``|F| < newton_tol``.  Orbit checks that run out of budget report
``"inconclusive"``, which never counts as a pass.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import RK45

from .errors import InsufficientData, LostBranch, NonFiniteValue

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]

NEWTON_TOL = 1e-10
FOLD_TOL = 1e-6
JACOBIAN_STEP = 1e-6
PROBE_HORIZON = 1e3
VERIFICATION_FORMAT = "sncert-verification/1"


def _rows(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


def evaluate(field: Field, x, lam) -> np.ndarray:
    x = _rows(x)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (len(x),)).copy()
    out = np.asarray(field(x, lam), dtype=float).reshape(x.shape)
    if not np.all(np.isfinite(out)):
        raise NonFiniteValue(f"field is not finite at lambda={lam[~np.isfinite(out).all(axis=1)][:1]}")
    return out


def jacobian(field: Field, x, lam, step: float = JACOBIAN_STEP) -> np.ndarray:
    """Central-difference Jacobians, shape ``(m, n, n)``."""
    x = _rows(x)
    m, n = x.shape
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (m,))
    h = step * (1.0 + np.abs(x))
    pts = np.empty((2 * n, m, n))
    for j in range(n):
        pts[2 * j] = x
        pts[2 * j + 1] = x
        pts[2 * j, :, j] += h[:, j]
        pts[2 * j + 1, :, j] -= h[:, j]
    vals = evaluate(field, pts.reshape(-1, n), np.tile(lam, 2 * n)).reshape(2 * n, m, n)
    J = np.empty((m, n, n))
    for j in range(n):
        J[:, :, j] = (vals[2 * j] - vals[2 * j + 1]) / (2 * h[:, j, None])
    return J


def lambda_derivative(field: Field, x, lam: float, step: float = JACOBIAN_STEP) -> np.ndarray:
    x = _rows(x)
    h = step * (1.0 + abs(lam))
    return (evaluate(field, x, lam + h) - evaluate(field, x, lam - h)) / (2 * h)


def _in_box(x, box, pad: float = 0.0) -> np.ndarray:
    x = _rows(x)
    ok = np.ones(len(x), dtype=bool)
    for j, (lo, hi) in enumerate(box):
        w = pad * (hi - lo)
        ok &= (x[:, j] >= lo - w) & (x[:, j] <= hi + w)
    return ok


# --------------------------------------------------------------------------
# integration


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    points: np.ndarray
    exited: bool
    # (axis, 0 for the lower face or 1 for the upper) when exited
    exit_face: Optional[tuple] = None


def _rk4_step(field, X, lam, h):
    k1 = evaluate(field, X, lam)
    k2 = evaluate(field, X + 0.5 * h * k1, lam)
    k3 = evaluate(field, X + 0.5 * h * k2, lam)
    k4 = evaluate(field, X + h * k3, lam)
    return X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _exit_faces(X, box) -> list:
    faces = []
    for x in X:
        face = None
        for j, (lo, hi) in enumerate(box):
            if x[j] < lo:
                face = (j, 0)
                break
            if x[j] > hi:
                face = (j, 1)
                break
        faces.append(face)
    return faces


def integrate(field: Field, x0, lam: float, T: float, step: float, box=None) -> Trajectory:
    """Fixed-step RK4 from ``x0``; stops at the first step outside ``box``."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = _rows(x0)[0].copy()
    n_steps = int(math.ceil(T / step - 1e-12))
    pts = [x.copy()]
    for _ in range(n_steps):
        x = _rk4_step(field, x[None, :], lam, step)[0]
        pts.append(x.copy())
        if box is not None and not _in_box(x, box)[0]:
            return Trajectory(step * np.arange(len(pts)), np.array(pts), True, _exit_faces([x], box)[0])
    return Trajectory(step * np.arange(len(pts)), np.array(pts), False)


@dataclass
class _Flow:
    final: np.ndarray
    status: np.ndarray  # "exited" / "converged" / "running"
    time: np.ndarray
    faces: list
    tail_lo: np.ndarray
    tail_hi: np.ndarray


def _flow_batch(
    field, X0, lam, T, step, box, targets=None, radius=None, tail_from=None, rtol=1e-8, atol=1e-10, max_step=0.25
) -> _Flow:
    """Adaptive Dormand-Prince 5(4) for many seeds at once, one step size per row.

    Rows retire when they leave ``box`` or come within ``radius`` of a target;
    rows still inside at time ``T`` stay ``"running"``.
    """
    A, B, E = RK45.A, RK45.B, RK45.E
    X = _rows(X0).copy()
    m = len(X)
    status = np.array(["running"] * m, dtype=object)
    time = np.zeros(m)
    faces = [None] * m
    lo = np.full_like(X, np.inf)
    hi = np.full_like(X, -np.inf)
    active = np.ones(m, dtype=bool)
    targets = None if targets is None or not len(targets) else _rows(targets)
    tail_from = math.inf if tail_from is None else tail_from
    K = evaluate(field, X, lam)
    h = np.full(m, min(step, max_step))
    while active.any():
        idx = np.nonzero(active)[0]
        hi_ = np.minimum(h[idx], T - time[idx])[:, None]
        x = X[idx]
        ks = [K[idx]]
        for s in range(1, 6):
            ks.append(evaluate(field, x + hi_ * sum(A[s, j] * ks[j] for j in range(s)), lam))
        y = x + hi_ * sum(B[j] * ks[j] for j in range(6))
        fy = evaluate(field, y, lam)
        ks.append(fy)
        err = hi_ * sum(E[j] * ks[j] for j in range(7))
        scale = atol + rtol * np.maximum(np.abs(x), np.abs(y))
        en = np.sqrt(np.mean((err / scale) ** 2, axis=1))
        ok = en <= 1.0
        with np.errstate(divide="ignore"):
            factor = np.where(en > 0, 0.9 * en ** -0.2, 5.0)
        factor = np.clip(factor, 0.2, np.where(ok, 5.0, 1.0))
        h[idx] = np.minimum(hi_[:, 0] * factor, max_step)
        acc = idx[ok]
        X[acc] = y[ok]
        K[acc] = fy[ok]
        time[acc] += hi_[ok, 0]
        out = ~_in_box(y[ok], box)
        if out.any():
            gone = acc[out]
            status[gone] = "exited"
            for r, f in zip(gone, _exit_faces(y[ok][out], box)):
                faces[r] = f
            active[gone] = False
        stay = acc[~out]
        if targets is not None and len(stay):
            d = np.min(np.linalg.norm(X[stay, None, :] - targets[None, :, :], axis=2), axis=1)
            near = stay[d < radius]
            status[near] = "converged"
            active[near] = False
        tail = stay[active[stay] & (time[stay] >= tail_from)]
        lo[tail] = np.minimum(lo[tail], X[tail])
        hi[tail] = np.maximum(hi[tail], X[tail])
        done = time >= T * (1 - 1e-12)
        # a collapsing step size means the budget cannot be met; leave the row running
        stalled = h < 1e-12 * (1.0 + time)
        active &= ~(done | stalled)
    return _Flow(X, status, time, faces, lo, hi)


@dataclass(frozen=True)
class OmegaLimit:
    lo: tuple
    hi: tuple
    escaped: bool

    def contains(self, x, tol: float = 0.0) -> bool:
        if self.escaped:
            return False
        return all(l - tol <= v <= h + tol for l, v, h in zip(self.lo, x, self.hi))


def estimate_omega_limit(
    field: Field, x0, lam: float, horizon: float, step: float, box, attractors=(), radius: float = 0.0
) -> OmegaLimit:
    """Bounding box of the orbit over the last 10% of ``horizon``, or ``escaped``.

    An orbit entering the ``radius`` ball of one of the hyperbolic
    ``attractors`` is assigned that point as its limit without further steps.
    """
    return _omega_batch(field, _rows(x0), lam, horizon, step, box, attractors, radius)[0]


def _omega_batch(field, X0, lam, horizon, step, box, attractors=(), radius=0.0) -> list:
    targets = np.array([a.x for a in attractors]) if len(attractors) else None
    flow = _flow_batch(field, X0, lam, horizon, step, box, targets, radius, tail_from=0.9 * horizon)
    out = []
    for r in range(len(flow.final)):
        if flow.status[r] == "exited":
            out.append(OmegaLimit((), (), True))
        elif flow.status[r] == "converged":
            a = min(attractors, key=lambda a: np.linalg.norm(np.array(a.x) - flow.final[r]))
            out.append(OmegaLimit(a.x, a.x, False))
        else:
            out.append(OmegaLimit(tuple(map(float, flow.tail_lo[r])), tuple(map(float, flow.tail_hi[r])), False))
    return out


# --------------------------------------------------------------------------
# equilibria


@dataclass(frozen=True)
class Equilibrium:
    lam: float
    x: tuple
    eigenvalues: tuple
    residual: float
    jacobian: tuple

    @property
    def unstable_dim(self) -> int:
        return sum(1 for e in self.eigenvalues if e.real > 0)

    def min_abs_real(self) -> float:
        return min(abs(e.real) for e in self.eigenvalues)

    def hyperbolic(self, tol: float = FOLD_TOL) -> bool:
        return self.min_abs_real() > tol

    def stability(self, tol: float = FOLD_TOL) -> str:
        if not self.hyperbolic(tol):
            return "degenerate"
        k = self.unstable_dim
        return "attracting" if k == 0 else f"index-{k} saddle"

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "x": list(self.x),
            "eigenvalues": [[e.real, e.imag] for e in self.eigenvalues],
            "residual": self.residual,
            "stability": self.stability(),
        }


def _eigenvalues(J) -> tuple:
    ev = np.linalg.eigvals(J)
    ev = sorted(ev, key=lambda e: (round(e.real, 12), round(e.imag, 12)))
    return tuple(complex(float(e.real), float(e.imag)) for e in ev)


def _equilibrium(field, x, lam, step=JACOBIAN_STEP) -> Equilibrium:
    x = np.asarray(x, dtype=float)
    res = float(np.linalg.norm(evaluate(field, x[None, :], lam)[0]))
    J = jacobian(field, x[None, :], lam, step)[0]
    return Equilibrium(float(lam), tuple(map(float, x)), _eigenvalues(J), res, tuple(map(tuple, J.tolist())))


def newton(field: Field, X, lam: float, tol: float = NEWTON_TOL, max_iter: int = 100, box=None, step=JACOBIAN_STEP):
    """Damped Newton from each row of ``X``; returns ``(roots, converged)``.

    Rows below ``tol`` keep iterating while the residual still drops, which
    matters only at degenerate roots where convergence is linear.
    """
    X = _rows(X).copy()
    m, n = X.shape
    conv = np.zeros(m, dtype=bool)
    alive = np.ones(m, dtype=bool)
    res = np.linalg.norm(evaluate(field, X, lam), axis=1)
    for _ in range(max_iter):
        conv |= alive & (res < tol)
        idx = np.nonzero(alive)[0]
        if not len(idx):
            break
        F = evaluate(field, X[idx], lam)
        J = jacobian(field, X[idx], lam, step)
        dx = -np.einsum("mij,mj->mi", np.linalg.pinv(J, rcond=1e-13), F)
        alpha = np.ones(len(idx))
        trial = X[idx] + dx
        tres = np.linalg.norm(evaluate(field, trial, lam), axis=1)
        for _ in range(10):
            worse = ~(tres < res[idx])
            if not worse.any():
                break
            alpha[worse] *= 0.5
            trial[worse] = X[idx][worse] + alpha[worse, None] * dx[worse]
            tres[worse] = np.linalg.norm(evaluate(field, trial[worse], lam), axis=1)
        stuck = ~(tres < res[idx])
        X[idx] = np.where(stuck[:, None], X[idx], trial)
        res[idx] = np.where(stuck, res[idx], tres)
        alive[idx[stuck]] = False
        if box is not None:
            alive &= _in_box(X, box, pad=0.25) | conv
    conv |= alive & (res < tol)
    return X, conv


def _same_root(field, a, b, lam, tol, merge_radius) -> bool:
    d = np.linalg.norm(a - b)
    if d <= 1e-8 * (1.0 + np.linalg.norm(a)):
        return True
    if d > merge_radius:
        return False
    # a degenerate root is only located to ~sqrt(tol); equal if the field vanishes between
    ts = np.array([0.25, 0.5, 0.75])
    mid = a[None, :] + ts[:, None] * (b - a)[None, :]
    return bool(np.all(np.linalg.norm(evaluate(field, mid, lam), axis=1) < tol))


def dedupe_roots(field: Field, roots: np.ndarray, lam: float, tol: float, merge_radius: float) -> list:
    roots = _rows(roots)
    if not len(roots):
        return []
    res = np.linalg.norm(evaluate(field, roots, lam), axis=1)
    reps = []
    for i in np.argsort(res, kind="stable"):
        if not any(_same_root(field, roots[i], r, lam, tol, merge_radius) for r in reps):
            reps.append(roots[i])
    return reps


def seed_grid(box, per_axis: int) -> np.ndarray:
    """Centres of a ``per_axis``-per-side cell grid over ``box``."""
    axes = [lo + (np.arange(per_axis) + 0.5) * (hi - lo) / per_axis for lo, hi in box]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(box))


def default_seeds_per_axis(n: int) -> int:
    return {1: 32, 2: 16}.get(n, 8)


def find_equilibria(
    field: Field, lam: float, box, seeds=None, tol: float = NEWTON_TOL, extra_seeds=None
) -> list:
    """Distinct Newton roots inside ``box``, sorted lexicographically."""
    n = len(box)
    X = seed_grid(box, default_seeds_per_axis(n)) if seeds is None else _rows(seeds)
    if extra_seeds is not None and len(extra_seeds):
        X = np.vstack([X, _rows(extra_seeds)])
    roots, ok = newton(field, X, lam, tol, box=box)
    roots = roots[ok & _in_box(roots, box)]
    diam = math.sqrt(sum((hi - lo) ** 2 for lo, hi in box))
    reps = dedupe_roots(field, roots, lam, tol, 1e-3 * diam)
    eqs = [_equilibrium(field, r, lam) for r in reps]
    return sorted(eqs, key=lambda e: e.x)


# --------------------------------------------------------------------------
# continuation


@dataclass(frozen=True)
class FoldPoint:
    lam: float
    x: tuple
    sigma_min: float
    null_vector: tuple
    eigenvalues: tuple
    refined: bool


@dataclass(frozen=True)
class EquilibriumBranch:
    points: tuple  # of Equilibrium, in continuation order
    fold: Optional[FoldPoint] = None
    end_reason: str = ""

    @property
    def stability(self) -> tuple:
        return tuple(p.stability() for p in self.points)

    @property
    def lams(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    def to_table(self) -> str:
        n = len(self.points[0].x) if self.points else 0
        head = ["lambda"] + [f"x{j}" for j in range(n)] + [f"re{j}\tim{j}" for j in range(n)]
        lines = ["\t".join(head)]
        for p in self.points:
            cells = [f"{p.lam:.12g}"] + [f"{v:.12g}" for v in p.x]
            cells += [f"{e.real:.12g}\t{e.imag:.12g}" for e in p.eigenvalues]
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"


def _tangent(field, y, step):
    n = len(y) - 1
    x, lam = y[:n], y[n]
    J = jacobian(field, x[None, :], lam, step)[0]
    Fl = lambda_derivative(field, x[None, :], lam, step)[0]
    _, _, Vt = np.linalg.svd(np.column_stack([J, Fl]))
    return Vt[-1]


def _correct(field, yp, t, tol, step, max_iter=12):
    """Newton on ``F(y) = 0``, ``t . (y - yp) = 0``."""
    n = len(yp) - 1
    y = yp.copy()
    for it in range(max_iter):
        F = evaluate(field, y[None, :n], y[n])[0]
        if np.linalg.norm(F) < tol and abs(t @ (y - yp)) < tol:
            return y, it
        J = jacobian(field, y[None, :n], y[n], step)[0]
        Fl = lambda_derivative(field, y[None, :n], y[n], step)[0]
        A = np.vstack([np.column_stack([J, Fl]), t])
        r = np.concatenate([F, [t @ (y - yp)]])
        try:
            y = y - np.linalg.solve(A, r)
        except np.linalg.LinAlgError:
            return None, it
        if not np.all(np.isfinite(y)):
            return None, it
    F = evaluate(field, y[None, :n], y[n])[0]
    return (y, max_iter) if np.linalg.norm(F) < tol else (None, max_iter)


def _sigma_min(field, x, lam, step):
    return float(np.linalg.svd(jacobian(field, x[None, :], lam, step)[0], compute_uv=False)[-1])


def refine_fold(field: Field, x, lam: float, tol: float = NEWTON_TOL, step: float = JACOBIAN_STEP, max_iter: int = 30):
    """Newton on ``F = 0`` plus a bordered singularity test function; returns ``(x, lam, ok)``."""
    x = np.asarray(x, dtype=float).copy()
    n = len(x)
    U, _, Vt = np.linalg.svd(jacobian(field, x[None, :], lam, step)[0])
    b, c = U[:, -1], Vt[-1]

    def G(y):
        J = jacobian(field, y[None, :n], y[n], step)[0]
        M = np.zeros((n + 1, n + 1))
        M[:n, :n] = J
        M[:n, n] = b
        M[n, :n] = c
        rhs = np.zeros(n + 1)
        rhs[n] = 1.0
        phi = np.linalg.solve(M, rhs)[n]
        return np.concatenate([evaluate(field, y[None, :n], y[n])[0], [phi]])

    y = np.concatenate([x, [lam]])
    try:
        for _ in range(max_iter):
            r = G(y)
            h = 1e-5 * (1.0 + np.abs(y))
            D = np.empty((n + 1, n + 1))
            for j in range(n + 1):
                e = np.zeros(n + 1)
                e[j] = h[j]
                D[:, j] = (G(y + e) - G(y - e)) / (2 * h[j])
            dy = np.linalg.lstsq(D, -r, rcond=None)[0]
            y = y + dy
            if np.linalg.norm(dy) < 1e-14 * (1.0 + np.linalg.norm(y)):
                break
        ok = np.linalg.norm(evaluate(field, y[None, :n], y[n])[0]) < tol and np.all(np.isfinite(y))
    except (np.linalg.LinAlgError, NonFiniteValue):
        return x, lam, False
    return y[:n], float(y[n]), bool(ok)


def _fold_point(field, x, lam, tol, step) -> FoldPoint:
    xr, lr, ok = refine_fold(field, x, lam, tol, step)
    if ok and _sigma_min(field, xr, lr, step) <= _sigma_min(field, np.asarray(x), lam, step):
        x, lam = xr, lr
    else:
        ok = False
    x = np.asarray(x, dtype=float)
    J = jacobian(field, x[None, :], lam, step)[0]
    _, S, Vt = np.linalg.svd(J)
    return FoldPoint(float(lam), tuple(map(float, x)), float(S[-1]), tuple(map(float, Vt[-1])), _eigenvalues(J), ok)


def continue_branch(
    field: Field,
    lambda_range: tuple,
    seed_x,
    seed_lam: float,
    box=None,
    ds: float = 0.02,
    ds_min: float = 1e-9,
    ds_max: float = 0.05,
    direction: int = 1,
    tol: float = NEWTON_TOL,
    fold_tol: float = FOLD_TOL,
    max_points: int = 5000,
    step: float = JACOBIAN_STEP,
) -> EquilibriumBranch:
    """Pseudo-arclength continuation from a seed, stopping at a fold, the block boundary or the range end.

    A fold is bracketed by a sign change of the parameter component of the
    tangent, narrowed by step-halving bisection on the arclength, and polished
    on the bordered fold system.  It is flagged when the smallest singular value
    of the Jacobian there is below ``fold_tol``.
    """
    lam_lo, lam_hi = lambda_range
    roots, ok = newton(field, _rows(seed_x), seed_lam, tol, box=box)
    if not ok[0]:
        raise LostBranch(f"no equilibrium near the seed at lambda={seed_lam:.6g}")
    n = roots.shape[1]
    y = np.concatenate([roots[0], [seed_lam]])
    t = _tangent(field, y, step)
    if t[n] * direction < 0 or (t[n] == 0 and direction < 0):
        t = -t
    points = [_equilibrium(field, y[:n], y[n], step)]
    fold = None
    reason = "max points"
    while len(points) < max_points:
        y_new, iters = _correct(field, y + ds * t, t, tol, step)
        if y_new is None:
            ds *= 0.5
            if ds < ds_min:
                raise LostBranch(f"corrector failed near lambda={y[n]:.6g}")
            continue
        t_new = _tangent(field, y_new, step)
        if t_new @ t < 0:
            t_new = -t_new
        if t_new[n] * t[n] < 0:
            fold = _bracket_fold(field, y, t, ds, tol, fold_tol, step)
            reason = "fold"
            break
        if not lam_lo <= y_new[n] <= lam_hi:
            reason = "parameter range"
            break
        if box is not None and not _in_box(y_new[:n], box)[0]:
            reason = "left block"
            break
        points.append(_equilibrium(field, y_new[:n], y_new[n], step))
        y, t = y_new, t_new
        if iters <= 3:
            ds = min(ds * 1.5, ds_max)
    return EquilibriumBranch(tuple(points), fold, reason)


def _bracket_fold(field, y, t, ds, tol, fold_tol, step) -> FoldPoint:
    n = len(y) - 1
    a, b = 0.0, ds
    best = y
    while b - a > 1e-12 * (1.0 + abs(ds)):
        s = 0.5 * (a + b)
        ym, _ = _correct(field, y + s * t, t, tol, step)
        if ym is None:
            b = s
            continue
        tm = _tangent(field, ym, step)
        if tm @ t < 0:
            tm = -tm
        best = ym
        if tm[n] * t[n] > 0:
            a = s
        else:
            b = s
        if _sigma_min(field, ym[:n], ym[n], step) < 1e-3 * fold_tol:
            break
    return _fold_point(field, best[:n], best[n], tol, step)


# --------------------------------------------------------------------------
# saddle-node test


@dataclass(frozen=True)
class SaddleNodeDiagnostics:
    lambda0: float
    x0: tuple
    null_eigenvalue: float
    other_eigenvalue_min: float
    exponent: float
    gaps: tuple  # (delta, gap) pairs
    curvature: float
    census: tuple  # (branch side, at lambda0, far side)
    failures: tuple

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "lambda0": self.lambda0,
            "x0": list(self.x0),
            "null_eigenvalue": self.null_eigenvalue,
            "other_eigenvalue_min": self.other_eigenvalue_min if math.isfinite(self.other_eigenvalue_min) else None,
            "exponent": self.exponent,
            "gaps": [list(g) for g in self.gaps],
            "curvature": self.curvature,
            "census": list(self.census),
            "failures": list(self.failures),
            "passed": self.passed,
        }


def _local_roots(field, lam, x0, v, radius, tol):
    ts = np.geomspace(1e-7 * radius, radius, 48)
    seeds = np.vstack([x0[None, :], x0 + ts[:, None] * v, x0 - ts[:, None] * v])
    roots, ok = newton(field, seeds, lam, tol)
    roots = roots[ok]
    roots = roots[np.linalg.norm(roots - x0, axis=1) <= radius]
    return dedupe_roots(field, roots, lam, tol, 0.5 * radius)


def saddle_node_test(
    field: Field,
    branches: Sequence[EquilibriumBranch],
    lambda0: Optional[float] = None,
    deltas: Sequence[float] = tuple(np.logspace(-4, -2, 9)),
    eig_tol: float = FOLD_TOL,
    away_tol: float = 1e-3,
    curvature_tol: float = 1e-3,
    exponent_range: tuple = (0.45, 0.55),
    census_delta: float = 1e-3,
    tol: float = NEWTON_TOL,
    step: float = JACOBIAN_STEP,
) -> SaddleNodeDiagnostics:
    """Decide whether two equilibrium branches meet in a nondegenerate saddle-node.

    Checks (a) a simple zero eigenvalue at the meeting point, (b) the gap
    between the two nearby equilibria scales like ``(lambda0 - lambda)^e`` with
    ``e`` in ``exponent_range``, (c) the second derivative along the null
    vector is nonzero, and that the local equilibrium count is 2, 1, 0 when
    passing through ``lambda0`` from the branch side.
    """
    pts = [p for b in branches for p in b.points]
    if len(branches) != 2 or len(pts) < 2:
        raise InsufficientData("need two branches with at least one point each")
    folds = [b.fold for b in branches if b.fold is not None]
    if folds:
        guess_x, guess_l = np.array(folds[0].x), folds[0].lam
    else:
        if lambda0 is None:
            raise InsufficientData("no fold on either branch and no lambda0 given")
        ends = [min(b.points, key=lambda p: abs(p.lam - lambda0)) for b in branches]
        guess_x, guess_l = np.mean([e.x for e in ends], axis=0), lambda0
    if lambda0 is not None and abs(guess_l - lambda0) > 1e-2:
        guess_l = lambda0
    x0, l0, ok = refine_fold(field, guess_x, guess_l, tol, step)
    if not ok or (lambda0 is not None and abs(l0 - lambda0) > 1e-2):
        roots, conv = newton(field, guess_x[None, :], guess_l, tol)
        x0, l0 = (roots[0] if conv[0] else guess_x), guess_l
    n = len(x0)
    J = jacobian(field, x0[None, :], l0, step)[0]
    U, S, Vt = np.linalg.svd(J)
    v, w = Vt[-1], U[:, -1]
    ev = np.array(_eigenvalues(J))
    order = np.argsort(np.abs(ev))
    null_ev = float(abs(ev[order[0]]))
    other = float(abs(ev[order[1]])) if n > 1 else math.inf
    failures = []
    if not null_ev < eig_tol:
        failures.append(f"(a) smallest eigenvalue {null_ev:.3g} not below {eig_tol:g}")
    if not other > away_tol:
        failures.append(f"(a) second eigenvalue {other:.3g} not above {away_tol:g}")

    side = -1.0 if np.mean([p.lam for p in pts]) < l0 else 1.0
    dist = np.array([np.linalg.norm(np.array(p.x) - x0) for p in pts])
    near = np.abs(np.array([p.lam for p in pts]) - l0) <= 10 * max(deltas)
    radius = 2.0 * float(dist[near].max() if near.any() else dist.min())
    radius = max(radius, 1e-6 * (1.0 + np.linalg.norm(x0)))

    gaps = []
    for d in deltas:
        roots = _local_roots(field, l0 + side * d, x0, v, radius, tol)
        if len(roots) >= 2:
            R = np.array(roots)
            gaps.append((float(d), float(np.max(np.linalg.norm(R[:, None] - R[None, :], axis=2)))))
    if len(gaps) < 3:
        raise InsufficientData(f"only {len(gaps)} parameter offsets have two nearby equilibria")
    G = np.array(gaps)
    exponent = float(np.polyfit(np.log(G[:, 0]), np.log(G[:, 1]), 1)[0])
    if not exponent_range[0] <= exponent <= exponent_range[1]:
        failures.append(f"(b) gap exponent {exponent:.4f} outside {exponent_range}")

    h = 1e-4 * (1.0 + np.linalg.norm(x0))
    Fp, F0, Fm = evaluate(field, np.vstack([x0 + h * v, x0, x0 - h * v]), l0)
    curvature = float(w @ (Fp - 2 * F0 + Fm) / h**2)
    if not abs(curvature) > curvature_tol:
        failures.append(f"(c) second derivative along the null vector {curvature:.3g} not above {curvature_tol:g}")

    census = tuple(
        len(_local_roots(field, l0 + s * census_delta, x0, v, radius, tol)) for s in (side, 0.0, -side)
    )
    if census != (2, 1, 0):
        failures.append(f"local equilibrium count {census} is not (2, 1, 0)")
    return SaddleNodeDiagnostics(
        float(l0), tuple(map(float, x0)), null_ev, other, exponent, tuple(gaps), curvature, census, tuple(failures)
    )


# --------------------------------------------------------------------------
# heteroclinic check


@dataclass(frozen=True)
class HeteroclinicResult:
    lam: float
    status: str  # "pass" / "fail" / "inconclusive"
    outcomes: tuple  # per offset side: "converged" / "exited" / "running"
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "status": self.status, "outcomes": list(self.outcomes), "detail": self.detail}


def heteroclinic_check(
    field: Field,
    lam: float,
    repeller: Equilibrium,
    attractor: Equilibrium,
    box,
    offset: float = 1e-3,
    horizon: float = PROBE_HORIZON,
    step: float = 0.01,
) -> HeteroclinicResult:
    """Flow from both sides of the repeller along its slowest unstable direction.

    ``offset`` and the convergence radius are fractions of the distance
    between the two equilibria.  Pass needs one side to reach the attractor and
    the other to leave the block.
    """
    J = np.array(repeller.jacobian)
    ev, vecs = np.linalg.eig(J)
    unstable = [i for i in range(len(ev)) if ev[i].real > 0]
    if not unstable:
        return HeteroclinicResult(float(lam), "inconclusive", (), "repeller has no unstable direction")
    i = min(unstable, key=lambda i: ev[i].real)
    u = np.real(vecs[:, i])
    u = u / np.linalg.norm(u)
    xr, xa = np.array(repeller.x), np.array(attractor.x)
    sep = float(np.linalg.norm(xa - xr))
    seeds = np.vstack([xr + offset * sep * u, xr - offset * sep * u])
    flow = _flow_batch(field, seeds, lam, horizon, step, box, targets=xa[None, :], radius=offset * sep)
    outcomes = tuple(str(s) for s in flow.status)
    if "running" in outcomes:
        return HeteroclinicResult(float(lam), "inconclusive", outcomes, f"budget {horizon:g} exhausted")
    ok = sorted(outcomes) == ["converged", "exited"]
    faces = [f for f in flow.faces if f is not None]
    return HeteroclinicResult(float(lam), "pass" if ok else "fail", outcomes, f"exit faces {faces}")


# --------------------------------------------------------------------------
# C1-C3


@dataclass(frozen=True)
class VerifyConfig:
    newton_tol: float = NEWTON_TOL
    fold_tol: float = FOLD_TOL
    jacobian_step: float = JACOBIAN_STEP
    probe_horizon: float = PROBE_HORIZON
    # probe seeds per lambda: probes_factor * n**2
    probes_factor: int = 10
    omega_horizon: float = 100.0
    lambda0_tol: float = 1e-3
    # step of the census around the fold
    fold_delta: float = 1e-3
    max_step: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("newton_tol", "fold_tol", "jacobian_step", "probe_horizon", "omega_horizon", "lambda0_tol", "fold_delta", "max_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class CensusEntry:
    lam: float
    regime: str  # "before" / "near" / "after"
    equilibria: tuple
    checks: dict = dc_field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v == "pass" for v in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "regime": self.regime,
            "count": len(self.equilibria),
            "equilibria": [e.to_dict() for e in self.equilibria],
            "checks": dict(sorted(self.checks.items())),
        }


@dataclass(frozen=True)
class VerificationReport:
    k: int
    census: tuple
    lambda0_target: Optional[float]
    lambda0_estimate: Optional[float]
    scaling_exponent: Optional[float]
    fold_eigenvalue: Optional[float]
    fold_census: tuple
    saddle_node: Optional[SaddleNodeDiagnostics]
    heteroclinic: bool
    post_bifurcation_empty: bool
    checks: dict
    notes: tuple = ()
    # continuation branches used to locate the fold; exported separately as tables
    branches: tuple = dc_field(default=(), compare=False)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(v == "pass" for v in self.checks.values())

    @property
    def verdict(self) -> str:
        return "Pass" if self.passed else "Fail"

    def to_dict(self) -> dict:
        return {
            "format": VERIFICATION_FORMAT,
            "verdict": self.verdict,
            "k": self.k,
            "lambda0_target": self.lambda0_target,
            "lambda0_estimate": self.lambda0_estimate,
            "scaling_exponent": self.scaling_exponent,
            "fold_eigenvalue": self.fold_eigenvalue,
            "fold_census": list(self.fold_census),
            "saddle_node": self.saddle_node.to_dict() if self.saddle_node else None,
            "heteroclinic": self.heteroclinic,
            "post_bifurcation_empty": self.post_bifurcation_empty,
            "checks": dict(sorted(self.checks.items())),
            "census": [c.to_dict() for c in self.census],
            "notes": list(self.notes),
        }


def _round(obj, digits=10):
    """Round floats so reports are stable across platforms' last-bit noise."""
    if isinstance(obj, float):
        return float(f"{obj:.{digits}g}")
    if isinstance(obj, dict):
        return {k: _round(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v, digits) for v in obj]
    return obj


def dumps_report(report: VerificationReport) -> str:
    return json.dumps(_round(report.to_dict()), indent=1, sort_keys=True) + "\n"


def _auto_step(field, box, lams, cfg) -> float:
    """``1 / spectral radius`` over a node grid including the faces, capped at ``max_step``."""
    per_axis = {1: 65, 2: 17}.get(len(box), 9)
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in box]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(box))
    rho = 0.0
    for lam in lams:
        J = jacobian(field, pts, lam, cfg.jacobian_step)
        rho = max(rho, float(np.max(np.abs(np.linalg.eigvals(J)))))
    return min(cfg.max_step, 1.0 / rho) if rho > 0 else cfg.max_step


def verify_field(
    field: Field,
    box,
    k: int,
    lambda_mesh: Sequence[float],
    lambda0_target: Optional[float] = None,
    config: VerifyConfig = VerifyConfig(),
) -> VerificationReport:
    """Check the two-equilibria / saddle-node / empty picture of a one-parameter family on ``box``.

    Before the fold each mesh slice must hold exactly two hyperbolic
    equilibria with unstable dimensions ``k - 1`` and ``k`` joined by a
    heteroclinic orbit; at the fold ``saddle_node_test`` must pass; after it
    the slice must be empty and every probe orbit must leave the block.
    Slices within one mesh step of the fold are left to the saddle-node test.
    """
    cfg = config
    n = len(box)
    mesh = np.unique(np.asarray(lambda_mesh, dtype=float))
    if len(mesh) < 2:
        raise InsufficientData("lambda mesh needs at least two values")
    mesh_step = float(np.min(np.diff(mesh)))
    lam_range = (float(mesh[0]), float(mesh[-1]))
    step = _auto_step(field, box, mesh[:: max(1, len(mesh) // 5)], cfg)
    rng = np.random.default_rng(cfg.seed)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    probes = lo + (hi - lo) * rng.random((cfg.probes_factor * n * n, n))
    checks, notes = {}, [f"initial integration step {step:.6g}"]

    # locate the fold by continuing both equilibria of the first slice
    start = find_equilibria(field, mesh[0], box, tol=cfg.newton_tol)
    attr = [e for e in start if e.hyperbolic(cfg.fold_tol) and e.unstable_dim == k - 1]
    rep = [e for e in start if e.hyperbolic(cfg.fold_tol) and e.unstable_dim == k]
    branches, fold, sn = [], None, None
    if len(attr) == 1 and len(rep) == 1:
        try:
            for e in (attr[0], rep[0]):
                branches.append(
                    continue_branch(field, lam_range, e.x, e.lam, box, tol=cfg.newton_tol, fold_tol=cfg.fold_tol, step=cfg.jacobian_step)
                )
            fold = branches[0].fold
        except LostBranch as exc:
            notes.append(f"continuation lost: {exc}")
    else:
        notes.append(f"first slice holds {len(start)} equilibria; cannot seed the branches")

    lambda0 = None
    if fold is not None:
        try:
            sn = saddle_node_test(field, branches, fold.lam, tol=cfg.newton_tol, eig_tol=cfg.fold_tol, step=cfg.jacobian_step)
            lambda0 = sn.lambda0
        except InsufficientData as exc:
            notes.append(f"saddle-node test: {exc}")
            lambda0 = fold.lam
    checks["C2 saddle-node"] = "pass" if sn is not None and sn.passed else "fail"
    checks["fold located"] = "pass" if fold is not None and fold.sigma_min < cfg.fold_tol else "fail"
    if lambda0_target is not None:
        ok = lambda0 is not None and abs(lambda0 - lambda0_target) <= cfg.lambda0_tol
        checks["lambda0 target"] = "pass" if ok else "fail"

    line_seeds = None
    if sn is not None:
        x0 = np.array(sn.x0)
        v = np.linalg.svd(jacobian(field, x0[None, :], sn.lambda0, cfg.jacobian_step)[0])[2][-1]
        ts = np.geomspace(1e-6, 0.5 * float(np.min(hi - lo)), 24)
        line_seeds = np.vstack([x0[None, :], x0 + ts[:, None] * v, x0 - ts[:, None] * v])

    fold_census = ()
    if lambda0 is not None:
        fold_census = tuple(
            len(find_equilibria(field, lambda0 + s * cfg.fold_delta, box, tol=cfg.newton_tol, extra_seeds=line_seeds))
            for s in (-1.0, 0.0, 1.0)
        )
        checks["fold census"] = "pass" if fold_census == (2, 1, 0) else "fail"

    entries = []
    for lam in mesh:
        lam = float(lam)
        eqs = tuple(find_equilibria(field, lam, box, tol=cfg.newton_tol, extra_seeds=line_seeds))
        if lambda0 is None:
            entries.append(CensusEntry(lam, "unknown", eqs, {"fold": "fail"}))
            continue
        if lam <= lambda0 - mesh_step:
            entries.append(CensusEntry(lam, "before", eqs, _before_checks(field, lam, eqs, k, box, probes, step, cfg)))
        elif lam >= lambda0 + mesh_step:
            entries.append(CensusEntry(lam, "after", eqs, _after_checks(field, lam, eqs, box, probes, step, cfg)))
        else:
            entries.append(CensusEntry(lam, "near", eqs, {}))

    before = [e for e in entries if e.regime == "before"]
    after = [e for e in entries if e.regime == "after"]
    heteroclinic = bool(before) and all(e.checks.get("heteroclinic") == "pass" for e in before)
    empty = bool(after) and all(e.checks.get("empty") == "pass" for e in after)
    checks["C1 two equilibria"] = "pass" if before and all(e.passed for e in before) else "fail"
    checks["C3 empty"] = "pass" if after and all(e.passed for e in after) else "fail"
    return VerificationReport(
        k,
        tuple(entries),
        lambda0_target,
        lambda0,
        sn.exponent if sn else None,
        sn.null_eigenvalue if sn else None,
        fold_census,
        sn,
        heteroclinic,
        empty,
        checks,
        tuple(notes),
        tuple(branches),
    )


def _before_checks(field, lam, eqs, k, box, probes, step, cfg) -> dict:
    out = {}
    dims = sorted(e.unstable_dim for e in eqs)
    hyper = all(e.hyperbolic(cfg.fold_tol) for e in eqs)
    out["census"] = "pass" if len(eqs) == 2 and hyper and dims == [k - 1, k] else "fail"
    if out["census"] != "pass":
        out["heteroclinic"] = "fail"
        return out
    attractor = next(e for e in eqs if e.unstable_dim == k - 1)
    repeller = next(e for e in eqs if e.unstable_dim == k)
    out["heteroclinic"] = heteroclinic_check(field, lam, repeller, attractor, box, horizon=cfg.probe_horizon, step=step).status
    tol = 1e-6 * float(max(hi - lo for lo, hi in box))
    sinks = [e for e in eqs if e.unstable_dim == 0]
    omegas = _omega_batch(field, probes, lam, cfg.omega_horizon, step, box, sinks, tol)
    inside = all(o.escaped or any(o.contains(e.x, tol) for e in eqs) for o in omegas)
    out["omega limits"] = "pass" if inside else "fail"
    return out


def _after_checks(field, lam, eqs, box, probes, step, cfg) -> dict:
    out = {"empty": "pass" if not eqs else "fail"}
    flow = _flow_batch(field, probes, lam, cfg.probe_horizon, step, box)
    status = set(flow.status)
    out["probes exit"] = "pass" if status == {"exited"} else ("inconclusive" if "running" in status else "fail")
    return out


def verify_C1_C2_C3(family, lambda_mesh: Sequence[float] = tuple(np.linspace(0.0, 1.0, 21)), config: VerifyConfig = VerifyConfig()) -> VerificationReport:
    """Verify the ``sigma = 1`` slice of a synthesized family."""
    return verify_field(family.at_sigma(1.0), family.box, family.k, lambda_mesh, family.whitney.lambda0, config)
