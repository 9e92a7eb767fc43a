"""Closed-form reference fields and sample generators for the worked examples.

``interval1d_field`` reproduces every arrow of the one-dimensional example
(``a = 0.75``, ``b = 3``, ``c = 5.5`` in drawing units): ``f(a, l) = f(c, l) =
-(0.5 + 0.25 l)``, ``f(b, 0) = 0.5`` and ``f(x, 1) = -0.75``.  Its own fold
sits near ``l = 0.40``, so the raw field is *not* the canonical model.
Only polynomial arithmetic is used, so values are bit-reproducible.
"""
from __future__ import annotations

import importlib

import numpy as np

from .samples import BlockSpec, SampledVectorField

INTERVAL1D_A, INTERVAL1D_B, INTERVAL1D_C = 0.75, 3.0, 5.5
# |grad f| <= sqrt(0.845^2 + 1.253^2) on [a, c] x [0, 1]
INTERVAL1D_LIPSCHITZ = 1.6
DISK2D_KAPPA = 1.0
# Frobenius bound sqrt(0.845^2 + 1.253^2 + 1)
DISK2D_LIPSCHITZ = 2.0


def _bump(x):
    return (x - INTERVAL1D_A) * (INTERVAL1D_C - x) / ((INTERVAL1D_B - INTERVAL1D_A) * (INTERVAL1D_C - INTERVAL1D_B))


def interval1d_scalar(x, lam):
    return -(0.5 + 0.25 * lam) + (1.0 - lam) * _bump(x)


def interval1d_field(x, lam):
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    return interval1d_scalar(x[:, 0], lam)[:, None]


def disk2d_field(x, lam):
    """Stable node and saddle at ``lambda = 0`` inside ``[a, c] x [-1, 1]``; ``y`` contracts."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    return np.column_stack([interval1d_scalar(x[:, 0], lam), -DISK2D_KAPPA * x[:, 1]])


def attractor_field(x, lam):
    """One stable equilibrium at ``x = 4`` for every lambda: the whole block is an attractor block."""
    x = np.asarray(x, dtype=float)
    return -(x - ATTRACTOR_EQUILIBRIUM)


ATTRACTOR_EQUILIBRIUM = 4.0
ATTRACTOR_LIPSCHITZ = 1.0


# one-dimensional normal forms with mu = lambda0 - lambda; only the fold is a saddle-node
NORMAL_FORM_LAMBDA0 = 0.5


def _mu(lam):
    return NORMAL_FORM_LAMBDA0 - np.asarray(lam, dtype=float)[:, None]


def fold_normal_form(x, lam):
    return _mu(lam) - np.asarray(x, dtype=float) ** 2


def pitchfork_normal_form(x, lam):
    x = np.asarray(x, dtype=float)
    return _mu(lam) * x - x**3


def transcritical_normal_form(x, lam):
    x = np.asarray(x, dtype=float)
    return _mu(lam) * x - x**2


REFERENCE_FIELDS = {"interval1d": interval1d_field, "disk2d": disk2d_field, "attractor": attractor_field}


def resolve_field(name: str):
    """Look up a builtin reference field or import ``package.module:attribute``."""
    if name in REFERENCE_FIELDS:
        return REFERENCE_FIELDS[name]
    if ":" in name:
        mod, attr = name.split(":", 1)
        return getattr(importlib.import_module(mod), attr)
    raise KeyError(f"unknown reference field {name!r}")


INTERVAL1D_BLOCK = BlockSpec(((INTERVAL1D_A, INTERVAL1D_C),), 0, INTERVAL1D_B, (4,), "interval1d")
DISK2D_BLOCK = BlockSpec(((INTERVAL1D_A, INTERVAL1D_C), (-1.0, 1.0)), 0, INTERVAL1D_B, (4, 2), "disk2d")
ATTRACTOR_BLOCK = BlockSpec(((INTERVAL1D_A, INTERVAL1D_C),), 0, INTERVAL1D_B, (4,), "attractor")


def interval1d_arrows(include_terminal: bool = True, lipschitz: float = 0.3) -> SampledVectorField:
    """The drawn arrows: two rows of six, one at ``(b, 0)``, and two interior ones at ``lambda = 1``."""
    xs, lams, fs = [], [], []
    for i in range(6):
        lam = i / 5
        for x in (INTERVAL1D_A, INTERVAL1D_C):
            xs.append([x])
            lams.append(lam)
            fs.append([-(0.5 + 0.05 * i)])
    xs.append([INTERVAL1D_B])
    lams.append(0.0)
    fs.append([0.5])
    if include_terminal:
        for x in (2.5, 4.0):
            xs.append([x])
            lams.append(1.0)
            fs.append([-0.75])
    return SampledVectorField(1, np.array(xs), np.array(lams), np.array(fs), lipschitz)


def _lattice(bounds, step):
    axes = []
    for lo, hi in bounds:
        if hi > lo:
            k = max(1, int(np.ceil((hi - lo) / step - 1e-9)))
            axes.append(np.linspace(lo, hi, k + 1))
        else:
            axes.append(np.array([lo]))
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(bounds))


def boundary_samples(field, spec: BlockSpec, lipschitz: float, step: float = 0.1, slab_step=None) -> SampledVectorField:
    """Sample ``field`` on every side of ``spec`` for all lambda, on the slice ``lambda = 1``,
    and on the separating slab at ``lambda = 0``."""
    pts = []
    for face in spec.side_faces():
        pts.append(_lattice(list(zip(face.lower, face.upper)), step))
    term = spec.terminal_face()
    pts.append(_lattice(list(zip(term.lower, term.upper)), step))
    slab = spec.slab_face(0.0)
    pts.append(_lattice(list(zip(slab.lower, slab.upper)), slab_step or step))
    pts = np.unique(np.concatenate(pts), axis=0)
    x, lam = pts[:, :-1], pts[:, -1]
    return SampledVectorField(spec.dim, x, lam, field(x, lam), lipschitz)


def interval1d_samples(step: float = 0.1) -> SampledVectorField:
    return boundary_samples(interval1d_field, INTERVAL1D_BLOCK, INTERVAL1D_LIPSCHITZ, step)


def disk2d_samples(step: float = 0.1) -> SampledVectorField:
    return boundary_samples(disk2d_field, DISK2D_BLOCK, DISK2D_LIPSCHITZ, step)


def attractor_samples(step: float = 0.1) -> SampledVectorField:
    return boundary_samples(attractor_field, ATTRACTOR_BLOCK, ATTRACTOR_LIPSCHITZ, step)
