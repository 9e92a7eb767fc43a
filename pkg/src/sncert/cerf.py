"""Whitney normal forms and Cerf graphics.

The normal form is ``g = g0 + z^3 + s r (lam - lam0) z + Q(y)`` with ``Q`` of
signature ``(p, q)``.  The flow is ``-grad g`` everywhere in this package, so a
nondegenerate critical point of Morse index ``m`` has an ``m``-dimensional
unstable manifold.

Graphics are immutable data: arcs of critical values sampled on a lambda mesh
plus a sorted list of events.  The two global moves used downstream (merging a
canceling pair into a death followed by a birth, and erasing everything after
a lone death) are rewrites on that data.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InconsistentGraphic, OutOfChart, PreconditionViolated, Unclassifiable

VALUE_TOL = 1e-9


# --------------------------------------------------------------------------
# Whitney model


@dataclass(frozen=True)
class WhitneyModel:
    lambda0: float
    sign: int = 1
    g0: float = 0.0
    q_signature: tuple = (0, 0)
    # chart: x = origin + scale * (y..., z...) with z on axis ``z_axis``
    origin: tuple = (0.0,)
    scale: tuple = (1.0,)
    z_axis: int = 0
    radius: float = math.inf
    # mu = sign * rate * (lambda0 - lam); rate 1 is the plain normal form
    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        p, q = self.q_signature
        if p < 0 or q < 0 or p + q != self.dim - 1:
            raise ValueError(f"signature {self.q_signature} does not fit dimension {self.dim}")
        if len(self.scale) != self.dim or any(s <= 0 for s in self.scale):
            raise ValueError("scale needs one positive entry per axis")
        if not 0 <= self.z_axis < self.dim:
            raise ValueError("z_axis out of range")

    @property
    def dim(self) -> int:
        return len(self.origin)

    @property
    def q_diagonal(self) -> np.ndarray:
        p, q = self.q_signature
        return np.array([1.0] * p + [-1.0] * q)

    def mu(self, lam) -> np.ndarray:
        """Unfolding parameter; critical points exist iff ``mu >= 0``."""
        return self.sign * self.rate * (self.lambda0 - np.asarray(lam, dtype=float))

    def to_chart(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise OutOfChart(f"expected points of dimension {self.dim}")
        u = (x - np.asarray(self.origin)) / np.asarray(self.scale)
        if np.any(np.abs(u) > self.radius):
            raise OutOfChart("point outside the chart domain")
        z = u[:, self.z_axis]
        y = np.delete(u, self.z_axis, axis=1)
        return y, z

    def _y(self, y, m: int) -> np.ndarray:
        return np.asarray(y, dtype=float).reshape(m, self.dim - 1)

    def from_chart(self, y, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        y = self._y(y, len(z))
        u = np.insert(y, self.z_axis, z, axis=1)
        return np.asarray(self.origin) + np.asarray(self.scale) * u

    def chart_value(self, y, z, lam):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        y = self._y(y, len(z))
        return self.g0 + z**3 - self.mu(lam) * z + (y**2 * self.q_diagonal).sum(axis=1)

    def chart_gradient(self, y, z, lam) -> np.ndarray:
        """``(dg/dy, dg/dz)`` in chart order ``(y..., z)``."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        y = self._y(y, len(z))
        dz = 3 * z**2 - self.mu(lam)
        dy = 2 * y * self.q_diagonal
        return np.column_stack([dy, dz])


def whitney_value(model: WhitneyModel, x, lam):
    """Normal form evaluated at phase points ``x`` (shape ``(m, n)`` or ``(n,)``)."""
    scalar = np.ndim(x) == 1
    y, z = model.to_chart(x)
    v = model.chart_value(y, z, lam)
    return float(v[0]) if scalar else v


def whitney_gradient(model: WhitneyModel, x, lam) -> np.ndarray:
    """Phase-space gradient ``grad_x g`` (chain rule through the affine chart)."""
    scalar = np.ndim(x) == 1
    y, z = model.to_chart(x)
    gc = model.chart_gradient(y, z, lam)
    # chart order (y..., z) -> axis order
    order = [i for i in range(model.dim) if i != model.z_axis] + [model.z_axis]
    g = np.empty_like(gc)
    g[:, order] = gc
    g = g / np.asarray(model.scale)
    return g[0] if scalar else g


@dataclass(frozen=True)
class CriticalPoint:
    x: tuple
    value: float
    morse_index: int


def whitney_critical_points(model: WhitneyModel, lam: float) -> list[CriticalPoint]:
    """Critical points sorted by value (lower first)."""
    mu = float(model.mu(lam))
    if mu < 0:
        return []
    q = model.q_signature[1]
    zs = [0.0] if mu == 0 else [math.sqrt(mu / 3), -math.sqrt(mu / 3)]
    out = []
    for z in zs:
        x = model.from_chart(np.zeros((1, model.dim - 1)), [z])[0]
        v = float(model.chart_value(np.zeros((1, model.dim - 1)), np.array([z]), lam)[0])
        # z > 0 is a local min along z, z < 0 a local max, z = 0 degenerate
        idx = q + (1 if z < 0 else 0)
        out.append(CriticalPoint(tuple(float(t) for t in x), v, idx))
    return sorted(out, key=lambda c: c.value)


def whitney_critical_values(model: WhitneyModel, lam: float) -> list[float]:
    """``{g0 -+ (2 mu / 3) sqrt(mu / 3)}`` for ``mu > 0``, ``{g0}`` at ``mu = 0``, empty otherwise."""
    mu = float(model.mu(lam))
    if mu < 0:
        return []
    if mu == 0:
        return [model.g0]
    d = (2 * mu / 3) * math.sqrt(mu / 3)
    return [model.g0 - d, model.g0 + d]


# --------------------------------------------------------------------------
# graphics


class EventKind(enum.Enum):
    CROSSING = "Crossing"
    CUBIC_BIRTH = "CubicBirth"
    CUBIC_DEATH = "CubicDeath"


@dataclass(frozen=True)
class Arc:
    arc_id: str
    lams: tuple
    values: tuple
    morse_index: int
    cancels_with: Optional[str] = None

    def __post_init__(self):
        lams = tuple(float(v) for v in self.lams)
        vals = tuple(float(v) for v in self.values)
        if len(lams) != len(vals) or len(lams) < 2:
            raise InconsistentGraphic(f"arc {self.arc_id} needs matching mesh and values (>= 2 nodes)")
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise InconsistentGraphic(f"arc {self.arc_id} mesh is not increasing")
        object.__setattr__(self, "lams", lams)
        object.__setattr__(self, "values", vals)

    @property
    def lambda_interval(self) -> tuple:
        return (self.lams[0], self.lams[-1])

    def alive(self, lam: float) -> bool:
        return self.lams[0] <= lam <= self.lams[-1]

    def value_at(self, lam: float) -> float:
        return float(np.interp(lam, self.lams, self.values))


@dataclass(frozen=True)
class Event:
    lam: float
    kind: EventKind
    arcs: tuple


@dataclass(frozen=True)
class CerfGraphic:
    arcs: tuple
    events: tuple = ()
    domain: tuple = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "arcs", tuple(self.arcs))
        object.__setattr__(self, "events", tuple(self.events))
        self.check_invariants()

    def arc(self, arc_id: str) -> Arc:
        for a in self.arcs:
            if a.arc_id == arc_id:
                return a
        raise KeyError(arc_id)

    @property
    def event_kinds(self) -> list[EventKind]:
        return [e.kind for e in self.events]

    def fiber(self, lam: float) -> tuple:
        """Sorted ``(morse_index, value)`` of the arcs alive at ``lam``."""
        return tuple(sorted((a.morse_index, a.value_at(lam)) for a in self.arcs if a.alive(lam)))

    def endpoints(self) -> tuple:
        return self.fiber(self.domain[0]), self.fiber(self.domain[1])

    def check_invariants(self) -> None:
        ids = [a.arc_id for a in self.arcs]
        if len(set(ids)) != len(ids):
            raise InconsistentGraphic("duplicate arc ids")
        lams = [e.lam for e in self.events]
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise InconsistentGraphic("event parameters must be strictly increasing")
        for e in self.events:
            if len(e.arcs) != 2:
                raise InconsistentGraphic(f"event at {e.lam} must join exactly two arcs")
            a, b = (self.arc(i) for i in e.arcs)
            if e.kind is EventKind.CROSSING:
                if abs(a.value_at(e.lam) - b.value_at(e.lam)) > VALUE_TOL:
                    raise InconsistentGraphic(f"crossing at {e.lam} without equal values")
                shared = [t for t in a.lams if b.alive(t) and abs(t - e.lam) > 1e-12]
                if any(abs(a.value_at(t) - b.value_at(t)) <= VALUE_TOL for t in shared):
                    raise InconsistentGraphic(f"arcs {e.arcs} coincide away from the crossing")
                continue
            if abs(a.morse_index - b.morse_index) != 1:
                raise InconsistentGraphic(f"{e.kind.value} at {e.lam} joins non-adjacent indices")
            end = 1 if e.kind is EventKind.CUBIC_DEATH else 0
            for arc in (a, b):
                if abs(arc.lambda_interval[end] - e.lam) > 1e-12:
                    raise InconsistentGraphic(f"arc {arc.arc_id} does not meet its {e.kind.value} at {e.lam}")
            if abs(a.value_at(e.lam) - b.value_at(e.lam)) > VALUE_TOL:
                raise InconsistentGraphic(f"{e.kind.value} at {e.lam} joins unequal values")

    # export ---------------------------------------------------------------

    def to_table(self) -> str:
        rows = ["lambda\tvalue\tmorse_index\tarc_id"]
        for a in sorted(self.arcs, key=lambda a: a.arc_id):
            rows += [f"{l!r}\t{v!r}\t{a.morse_index}\t{a.arc_id}" for l, v in zip(a.lams, a.values)]
        return "\n".join(rows) + "\n"

    def events_table(self) -> str:
        rows = ["lambda\tkind\tarcs"]
        rows += [f"{e.lam!r}\t{e.kind.value}\t{','.join(e.arcs)}" for e in self.events]
        return "\n".join(rows) + "\n"

    def to_svg(self, width: int = 480, height: int = 320) -> str:
        vals = [v for a in self.arcs for v in a.values] or [0.0]
        lo, hi = min(vals), max(vals)
        if hi - lo < 1e-12:
            lo, hi = lo - 1, hi + 1
        pad = 30
        l0, l1 = self.domain

        def px(l, v):
            return (
                pad + (l - l0) / (l1 - l0) * (width - 2 * pad),
                height - pad - (v - lo) / (hi - lo) * (height - 2 * pad),
            )

        colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
            f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" fill="none" stroke="#888"/>',
        ]
        for a in sorted(self.arcs, key=lambda a: a.arc_id):
            pts = " ".join("%.2f,%.2f" % px(l, v) for l, v in zip(a.lams, a.values))
            c = colors[a.morse_index % len(colors)]
            out.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        for e in self.events:
            a = self.arc(e.arcs[0])
            x, y = px(e.lam, a.value_at(e.lam))
            out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="black"><title>{e.kind.value}</title></circle>')
        out.append(f'<text x="{pad}" y="{height - 8}" font-size="11">lambda</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def whitney_graphic(model: WhitneyModel, mesh: Sequence[float]) -> CerfGraphic:
    """Graphic of a Whitney model with ``sign = +1``: two arcs dying in a cusp at ``lambda0``."""
    if model.sign != 1:
        raise PreconditionViolated("only the death orientation (sign=+1) is tabulated")
    lam0 = model.lambda0
    lams = sorted({float(l) for l in mesh if l < lam0} | {lam0})
    if len(lams) < 2:
        raise PreconditionViolated("mesh must contain points before lambda0")
    lower = [whitney_critical_values(model, l)[0] for l in lams]
    upper = [whitney_critical_values(model, l)[-1] for l in lams]
    q = model.q_signature[1]
    arcs = (
        Arc("attractor", lams, lower, q, "repeller"),
        Arc("repeller", lams, upper, q + 1, "attractor"),
    )
    return CerfGraphic(arcs, (Event(lam0, EventKind.CUBIC_DEATH, ("attractor", "repeller")),), (min(lams[0], 0.0), 1.0))


# --------------------------------------------------------------------------
# event classification


@dataclass(frozen=True)
class WindowSlice:
    lam: float
    points: tuple  # CriticalPoint, ...


def whitney_window(model: WhitneyModel, lams: Sequence[float]) -> list[WindowSlice]:
    return [WindowSlice(float(l), tuple(whitney_critical_points(model, l))) for l in lams]


def _cusp_exponent(lams, gaps) -> tuple[float, float]:
    """Fit ``gap ~ C |lam - lam_e|^e`` with ``lam_e`` from the linear fit of ``gap^2``."""
    lams = np.asarray(lams)
    gaps = np.asarray(gaps)
    A = np.column_stack([lams, np.ones_like(lams)])
    slope, icpt = np.linalg.lstsq(A, gaps**2, rcond=None)[0]
    if slope == 0:
        return math.nan, math.nan
    lam_e = -icpt / slope
    d = np.abs(lams - lam_e)
    ok = d > 0
    if ok.sum() < 2:
        return math.nan, lam_e
    e = np.polyfit(np.log(d[ok]), np.log(gaps[ok]), 1)[0]
    return float(e), float(lam_e)


def classify_event(window: Sequence[WindowSlice], exponent_range=(0.4, 0.6)) -> EventKind:
    """Classify the single codimension-one event inside a small lambda window."""
    window = sorted(window, key=lambda s: s.lam)
    if len(window) < 3:
        raise Unclassifiable("window needs at least three slices")
    counts = [len(s.points) for s in window]
    if max(counts) > 2:
        raise Unclassifiable("more than two critical points take part")
    if all(c == 2 for c in counts):
        diffs = [s.points[0].value - s.points[1].value for s in window]
        # a slice sitting exactly on the crossing carries no sign
        nz = [np.sign(d) for d in diffs if abs(d) > VALUE_TOL]
        if set(nz) == {1.0, -1.0} and sum(1 for a, b in zip(nz, nz[1:]) if a != b) == 1:
            return EventKind.CROSSING
        raise Unclassifiable("two persistent critical points without a transversal crossing")
    changes = [(a, b) for a, b in zip(counts, counts[1:]) if a != b]
    pattern = [c for i, c in enumerate(counts) if i == 0 or c != counts[i - 1]]
    if pattern in ([2, 0], [2, 1, 0]):
        kind = EventKind.CUBIC_DEATH
    elif pattern in ([0, 2], [0, 1, 2]):
        kind = EventKind.CUBIC_BIRTH
    else:
        raise Unclassifiable(f"critical point counts {pattern} do not match a single fold (changes {changes})")
    pairs = [s for s in window if len(s.points) == 2]
    idx = {abs(s.points[0].morse_index - s.points[1].morse_index) for s in pairs}
    if idx != {1}:
        raise Unclassifiable("merging critical points do not have adjacent indices")
    if len(pairs) < 3:
        raise Unclassifiable("too few two-point slices to fit the cusp exponent")
    gaps = [float(np.linalg.norm(np.subtract(s.points[0].x, s.points[1].x))) for s in pairs]
    e, _ = _cusp_exponent([s.lam for s in pairs], gaps)
    if not (exponent_range[0] <= e <= exponent_range[1]):
        raise Unclassifiable(f"gap exponent {e:.3f} is not the square-root cusp law")
    return kind


# --------------------------------------------------------------------------
# rewrites


def _resample(arc: Arc, lo: float, hi: float, extra=()) -> tuple[list, list]:
    """Original nodes inside ``[lo, hi]`` kept verbatim; ``extra`` nodes interpolated."""
    nodes = sorted({l for l in arc.lams if lo <= l <= hi} | {float(e) for e in extra if lo <= e <= hi})
    return nodes, [arc.value_at(l) for l in nodes]


def _cusp_profile(t: np.ndarray) -> np.ndarray:
    # critical-value gap of the normal form shrinks like mu^(3/2)
    return np.clip(t, 0.0, 1.0) ** 1.5


def apply_uniqueness_of_birth(
    g: CerfGraphic, death: float = 0.4, birth: float = 0.6, window: float = 0.1
) -> CerfGraphic:
    """Replace two canceling full-length arcs by a death at ``death`` and a birth at ``birth``.

    Outside ``[death - window, birth + window]`` the arcs are reproduced node for node.
    """
    l0, l1 = g.domain
    if g.events or len(g.arcs) != 2:
        raise PreconditionViolated("need exactly two event-free arcs")
    p, q = g.arcs
    if p.cancels_with != q.arc_id or q.cancels_with != p.arc_id:
        raise PreconditionViolated("arcs are not flagged as algebraically canceling")
    if abs(p.morse_index - q.morse_index) != 1:
        raise PreconditionViolated("canceling arcs must have adjacent Morse indices")
    if p.lambda_interval != (l0, l1) or q.lambda_interval != (l0, l1):
        raise PreconditionViolated("arcs must span the whole parameter interval")
    a, b = death - window, birth + window
    if not (l0 < a < death < birth < b < l1):
        raise PreconditionViolated("rewrite window must sit inside the parameter interval")

    def piece(arc: Arc, lo: float, hi: float, anchor: float, far: float):
        nodes, vals = _resample(arc, lo, hi, extra=np.linspace(min(anchor, far), max(anchor, far), 9))
        nodes = np.array(nodes)
        vals = np.array(vals)
        other = q if arc is p else p
        mid = np.array([(arc.value_at(l) + other.value_at(l)) / 2 for l in nodes])
        inside = (nodes >= min(anchor, far)) & (nodes <= max(anchor, far))
        t = np.abs(nodes - anchor) / abs(far - anchor)
        shaped = mid + (vals - mid) * _cusp_profile(t)
        # meet exactly at the cusp
        midpoint = (p.value_at(anchor) + q.value_at(anchor)) / 2
        shaped = np.where(nodes == anchor, midpoint, shaped)
        vals = np.where(inside, shaped, vals)
        return nodes, vals

    arcs = []
    for arc in (p, q):
        n1, v1 = piece(arc, l0, death, death, a)
        n2, v2 = piece(arc, birth, l1, birth, b)
        other = q if arc is p else p
        arcs.append(Arc(arc.arc_id + "_before", n1, v1, arc.morse_index, other.arc_id + "_before"))
        arcs.append(Arc(arc.arc_id + "_after", n2, v2, arc.morse_index, other.arc_id + "_after"))
    events = (
        Event(death, EventKind.CUBIC_DEATH, (p.arc_id + "_before", q.arc_id + "_before")),
        Event(birth, EventKind.CUBIC_BIRTH, (p.arc_id + "_after", q.arc_id + "_after")),
    )
    return CerfGraphic(tuple(arcs), events, g.domain)


def simplify_to_single_death(g: CerfGraphic) -> CerfGraphic:
    """Erase everything after the first death when the rest of the graphic is empty at both ends."""
    if g.endpoints()[1]:
        raise PreconditionViolated("right endpoint of the graphic is not empty")
    if not g.events or g.events[0].kind is not EventKind.CUBIC_DEATH:
        raise PreconditionViolated("graphic must start with a cubic death")
    first = g.events[0]
    l0 = g.domain[0]
    before = [a for a in g.arcs if a.lambda_interval[0] <= l0 + 1e-15 and a.lambda_interval[0] < first.lam]
    if {a.arc_id for a in before} != set(first.arcs) or any(a.lambda_interval[1] != first.lam for a in before):
        raise PreconditionViolated("the first death must remove every critical point present at the left end")
    if len(g.events) == 1:
        return g
    later = [a for a in g.arcs if a.arc_id not in first.arcs]
    if any(a.lambda_interval[0] <= first.lam for a in later):
        raise PreconditionViolated("arcs other than the dying pair cross the first death")
    return CerfGraphic(tuple(before), (first,), g.domain)


# --------------------------------------------------------------------------
# fixtures


def canceling_pair_graphic(mesh_points: int = 41) -> CerfGraphic:
    """Two disjoint event-free arcs over ``[0, 1]`` of indices 0 and 1, flagged as canceling."""
    lams = np.linspace(0.0, 1.0, mesh_points)
    p = Arc("p", lams, 1.0 + 0.2 * np.sin(np.pi * lams), 1, "q")
    q = Arc("q", lams, -1.0 + 0.1 * lams, 0, "p")
    return CerfGraphic((p, q), ())


def death_birth_death_graphic(mesh_points: int = 41) -> CerfGraphic:
    """A pair dies at 0.3, a new pair is born at 0.5 and dies at 0.75; the right end is empty."""
    eye = np.linspace(0.5, 0.75, mesh_points)
    h = np.sqrt(np.clip((eye - 0.5) * (0.75 - eye), 0, None)) ** 1.5
    first = np.linspace(0.0, 0.3, mesh_points)
    w = (0.3 - first) ** 1.5
    arcs = (
        Arc("p", first, 0.5 + w, 1, "q"),
        Arc("q", first, 0.5 - w, 0, "p"),
        Arc("r", eye, 0.2 + h, 1, "s"),
        Arc("s", eye, 0.2 - h, 0, "r"),
    )
    events = (
        Event(0.3, EventKind.CUBIC_DEATH, ("p", "q")),
        Event(0.5, EventKind.CUBIC_BIRTH, ("r", "s")),
        Event(0.75, EventKind.CUBIC_DEATH, ("r", "s")),
    )
    return CerfGraphic(arcs, events)
