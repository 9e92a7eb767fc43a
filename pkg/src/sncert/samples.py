"""Sampled vector-field data, grids, and Lipschitz sign certificates.

A :class:`SampledVectorField` is the only ground truth the pipeline sees:
finitely many triples ``(x, lambda, f(x, lambda))`` together with a joint
Lipschitz bound ``L`` in ``(x, lambda)`` (Euclidean metric).  Every sign
statement about ``f`` on a face is derived from the samples lying on that face
and a covering radius ``h``: if the sampled values of ``f . d`` all share a
sign and ``min |f . d| - L h > 0`` the sign holds on the whole face.
"""
from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DimensionMismatch,
    MalformedInput,
    NoSamplesOnFace,
    OutOfRangeLambda,
)

ON_FACE_TOL = 1e-9


@dataclass(frozen=True)
class SampledVectorField:
    dim: int
    x: np.ndarray  # (m, dim)
    lam: np.ndarray  # (m,)
    f: np.ndarray  # (m, dim)
    lipschitz_bound: float

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionMismatch(f"dim must be positive, got {self.dim}")
        x = np.asarray(self.x, dtype=float).reshape(-1, self.dim) if np.size(self.x) else np.zeros((0, self.dim))
        f = np.asarray(self.f, dtype=float).reshape(-1, self.dim) if np.size(self.f) else np.zeros((0, self.dim))
        lam = np.asarray(self.lam, dtype=float).reshape(-1)
        if not (len(x) == len(f) == len(lam)):
            raise DimensionMismatch("x, lambda and f must have the same number of samples")
        if np.any((lam < 0.0) | (lam > 1.0)) or not np.all(np.isfinite(lam)):
            raise OutOfRangeLambda("every lambda must lie in [0, 1]")
        if self.lipschitz_bound < 0 or not math.isfinite(self.lipschitz_bound):
            raise MalformedInput("lipschitz bound must be a finite nonnegative number")
        points = np.column_stack([x, lam])
        if len(points) != len(np.unique(points, axis=0)):
            raise MalformedInput("sample locations must be pairwise distinct")
        for arr in (x, lam, f):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "lipschitz_bound", float(self.lipschitz_bound))

    def __len__(self):
        return len(self.lam)

    @property
    def points(self) -> np.ndarray:
        """Sample locations in joint ``(x, lambda)`` coordinates, shape (m, dim+1)."""
        return np.column_stack([self.x, self.lam])

    def with_lipschitz(self, L: float) -> "SampledVectorField":
        return SampledVectorField(self.dim, self.x, self.lam, self.f, L)

    def without(self, mask) -> "SampledVectorField":
        """Copy with the samples selected by ``mask`` removed."""
        keep = ~np.asarray(mask, dtype=bool)
        return SampledVectorField(self.dim, self.x[keep], self.lam[keep], self.f[keep], self.lipschitz_bound)

    def __eq__(self, other):
        if not isinstance(other, SampledVectorField):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.lipschitz_bound == other.lipschitz_bound
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.lam, other.lam)
            and np.array_equal(self.f, other.f)
        )

    __hash__ = None


def _parse_reals(chunk: str, lineno: int) -> list[float]:
    try:
        return [float(tok) for tok in chunk.split()]
    except ValueError as exc:
        raise MalformedInput(f"line {lineno}: {exc}") from None


_HEADER = re.compile(r"^dim\s*=\s*(\S+)\s+lipschitz\s*=\s*(\S+)\s*$")


def parse_samples(text: str) -> SampledVectorField:
    """Parse the plain-text sample format.

    Header ``dim=<n> lipschitz=<L>``, then one sample per line as
    ``x_1 ... x_n ; lambda ; f_1 ... f_n``.  Blank lines and ``#`` comments
    are ignored.
    """
    lines = [(i + 1, ln.split("#", 1)[0].strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, ln) for i, ln in lines if ln]
    if not lines:
        raise MalformedInput("empty sample document")
    lineno, header = lines[0]
    m = _HEADER.match(header)
    if not m:
        raise MalformedInput(f"line {lineno}: expected 'dim=<n> lipschitz=<L>' header")
    try:
        dim = int(m.group(1))
        L = float(m.group(2))
    except ValueError:
        raise MalformedInput(f"line {lineno}: bad header values") from None
    if dim < 1:
        raise MalformedInput("dim must be positive")
    xs, lams, fs = [], [], []
    for lineno, ln in lines[1:]:
        parts = ln.split(";")
        if len(parts) != 3:
            raise MalformedInput(f"line {lineno}: expected 'x ; lambda ; f'")
        x = _parse_reals(parts[0], lineno)
        lam = _parse_reals(parts[1], lineno)
        f = _parse_reals(parts[2], lineno)
        if len(lam) != 1:
            raise MalformedInput(f"line {lineno}: lambda must be a single number")
        if len(x) != dim or len(f) != dim:
            raise DimensionMismatch(f"line {lineno}: expected {dim} entries in x and f, got {len(x)} and {len(f)}")
        if not 0.0 <= lam[0] <= 1.0:
            raise OutOfRangeLambda(f"line {lineno}: lambda={lam[0]} outside [0, 1]")
        xs.append(x)
        lams.append(lam[0])
        fs.append(f)
    return SampledVectorField(dim, np.array(xs, dtype=float), np.array(lams, dtype=float), np.array(fs, dtype=float), L)


def serialize_samples(svf: SampledVectorField) -> str:
    out = [f"dim={svf.dim} lipschitz={svf.lipschitz_bound!r}"]
    for x, lam, f in zip(svf.x, svf.lam, svf.f):
        out.append(
            " ".join(repr(float(v)) for v in x)
            + " ; "
            + repr(float(lam))
            + " ; "
            + " ".join(repr(float(v)) for v in f)
        )
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class Grid:
    """Tensor grid on ``box x [0, 1]``; ``nodes[i]`` are the breakpoints of phase axis i."""

    nodes: tuple
    lambda_nodes: np.ndarray

    def __post_init__(self):
        nodes = tuple(np.asarray(n, dtype=float) for n in self.nodes)
        for n in nodes:
            if len(n) < 2 or np.any(np.diff(n) <= 0):
                raise ValueError("grid breakpoints must be strictly increasing with at least 2 entries")
        lam = np.asarray(self.lambda_nodes, dtype=float)
        if len(lam) < 2 or lam[0] != 0.0 or lam[-1] != 1.0 or np.any(np.diff(lam) <= 0):
            raise ValueError("lambda breakpoints must increase from 0 to 1")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "lambda_nodes", lam)

    @classmethod
    def uniform(cls, box, resolution, lambda_resolution=1) -> "Grid":
        box = [tuple(map(float, iv)) for iv in box]
        if isinstance(resolution, int):
            resolution = [resolution] * len(box)
        nodes = tuple(np.linspace(lo, hi, r + 1) for (lo, hi), r in zip(box, resolution))
        return cls(nodes, np.linspace(0.0, 1.0, lambda_resolution + 1))

    @classmethod
    def with_split(cls, box, resolution, axis: int, coordinate: float, lambda_resolution=1) -> "Grid":
        """Uniform grid on each side of the hyperplane ``x[axis] = coordinate``."""
        g = cls.uniform(box, resolution, lambda_resolution)
        lo, hi = box[axis]
        if not lo < coordinate < hi:
            raise ValueError("split coordinate must lie strictly inside the box")
        r = len(g.nodes[axis]) - 1
        n_lo = max(1, round(r * (coordinate - lo) / (hi - lo)))
        n_hi = max(1, r - n_lo)
        axis_nodes = np.concatenate([np.linspace(lo, coordinate, n_lo + 1), np.linspace(coordinate, hi, n_hi + 1)[1:]])
        nodes = list(g.nodes)
        nodes[axis] = axis_nodes
        return cls(tuple(nodes), g.lambda_nodes)

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def box(self):
        return tuple((float(n[0]), float(n[-1])) for n in self.nodes)

    @property
    def resolution(self):
        return tuple(len(n) - 1 for n in self.nodes)

    @property
    def lambda_resolution(self) -> int:
        return len(self.lambda_nodes) - 1

    def index_of(self, axis: int, coordinate: float) -> int:
        hits = np.flatnonzero(np.abs(self.nodes[axis] - coordinate) <= ON_FACE_TOL * (1 + abs(coordinate)))
        if len(hits) != 1:
            raise ValueError(f"{coordinate} is not a breakpoint of axis {axis}")
        return int(hits[0])

    def cube_box(self, cube):
        """Physical extent of an elementary cube given as ``((lo, hi), ...)`` integer intervals."""
        return tuple((float(self.nodes[i][lo]), float(self.nodes[i][hi])) for i, (lo, hi) in enumerate(cube))

    def cell_diameter(self, index, lambda_index: int) -> float:
        widths = [self.nodes[i][j + 1] - self.nodes[i][j] for i, j in enumerate(index)]
        widths.append(self.lambda_nodes[lambda_index + 1] - self.lambda_nodes[lambda_index])
        return float(np.sqrt(np.sum(np.square(widths))))


# --------------------------------------------------------------------------
# faces and sign certificates


@dataclass(frozen=True)
class Face:
    """Closed box in joint ``(x, lambda)`` space carrying a direction for ``f . d``.

    ``lower``/``upper`` have length ``dim + 1`` (the last entry is lambda);
    degenerate axes have ``lower == upper``.  ``direction`` is the declared
    outward normal (or any other fixed vector) of length ``dim``.
    """

    lower: tuple
    upper: tuple
    direction: tuple
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "direction", tuple(float(v) for v in self.direction))
        if len(self.lower) != len(self.upper) or len(self.direction) + 1 != len(self.lower):
            raise DimensionMismatch("face bounds must have dim+1 entries and direction dim entries")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("face lower bound exceeds upper bound")

    @property
    def dim(self) -> int:
        return len(self.direction)

    def contains(self, points: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        tol = ON_FACE_TOL * (1.0 + np.maximum(np.abs(lo), np.abs(hi)))
        return np.all((points >= lo - tol) & (points <= hi + tol), axis=1)


class Sign(enum.Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class SignCertificate:
    face: Face
    quantity: str
    sign: Sign
    margin: float
    spacing: float
    n_samples: int

    def __post_init__(self):
        if self.sign is Sign.UNDETERMINED:
            assert self.margin <= 0
        else:
            assert self.margin > 0

    @property
    def determinate(self) -> bool:
        return self.sign is not Sign.UNDETERMINED

    def to_dict(self) -> dict:
        return {
            "face": self.face.label,
            "lower": list(self.face.lower),
            "upper": list(self.face.upper),
            "direction": list(self.face.direction),
            "quantity": self.quantity,
            "sign": self.sign.value,
            "margin": self.margin if math.isfinite(self.margin) else "-inf",
            "spacing": self.spacing,
            "n_samples": self.n_samples,
        }


def samples_on_face(svf: SampledVectorField, face: Face) -> np.ndarray:
    if svf.dim != face.dim:
        raise DimensionMismatch("face and samples disagree on dimension")
    return np.flatnonzero(face.contains(svf.points))


def certify_face_sign(svf: SampledVectorField, face: Face, spacing: float) -> SignCertificate:
    """Certify the sign of ``f . direction`` on ``face`` from the samples on it.

    ``spacing`` is a covering radius: every point of the face lies within that
    distance of some sample on the face.
    """
    idx = samples_on_face(svf, face)
    if len(idx) == 0:
        raise NoSamplesOnFace(f"no samples on face {face.label or face.lower}")
    values = svf.f[idx] @ np.asarray(face.direction)
    quantity = "f.n"
    L = svf.lipschitz_bound
    scale = float(np.linalg.norm(face.direction))
    # |f.d| is L*|d|-Lipschitz when f is L-Lipschitz
    slack = L * scale * spacing
    if np.all(values > 0):
        margin, candidate = float(values.min()) - slack, Sign.POSITIVE
    elif np.all(values < 0):
        margin, candidate = float((-values).min()) - slack, Sign.NEGATIVE
    else:
        margin, candidate = -math.inf, Sign.UNDETERMINED
    if np.all(values > 0) or np.all(values < 0):
        if not margin > 0:
            candidate = Sign.UNDETERMINED
    return SignCertificate(face, quantity, candidate, margin, float(spacing), len(idx))


def covering_radius(svf: SampledVectorField, face: Face, lattice: int = 64) -> float:
    """Sound upper bound on the distance from any face point to the nearest sample on the face."""
    idx = samples_on_face(svf, face)
    if len(idx) == 0:
        raise NoSamplesOnFace(f"no samples on face {face.label or face.lower}")
    pts = svf.points[idx]
    axes = []
    half_diag_sq = 0.0
    for lo, hi in zip(face.lower, face.upper):
        if hi > lo:
            axes.append(np.linspace(lo, hi, lattice))
            half_diag_sq += ((hi - lo) / (lattice - 1) / 2.0) ** 2
        else:
            axes.append(np.array([lo]))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    dist, _ = cKDTree(pts).query(mesh)
    return float(dist.max() + math.sqrt(half_diag_sq))


# --------------------------------------------------------------------------
# block description and assumption report


@dataclass(frozen=True)
class BlockSpec:
    """Candidate product block ``box x [0,1]`` split by the hyperplane ``x[split_axis] = split_coordinate``."""

    box: tuple
    split_axis: int
    split_coordinate: float
    resolution: tuple = ()
    reference_field: str = ""

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        if any(lo >= hi for lo, hi in box):
            raise MalformedInput("every box interval needs lo < hi")
        if not 0 <= self.split_axis < len(box):
            raise MalformedInput("split axis out of range")
        lo, hi = box[self.split_axis]
        if not lo < self.split_coordinate < hi:
            raise MalformedInput("split coordinate must lie strictly inside the box")
        res = tuple(int(r) for r in self.resolution) or tuple(2 for _ in box)
        if len(res) != len(box) or any(r < 1 for r in res):
            raise MalformedInput("resolution needs one positive entry per axis")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "split_coordinate", float(self.split_coordinate))

    @property
    def dim(self) -> int:
        return len(self.box)

    def grid(self, lambda_resolution: int = 1) -> Grid:
        return Grid.with_split(self.box, self.resolution, self.split_axis, self.split_coordinate, lambda_resolution)

    def side_faces(self, lambda_range=(0.0, 1.0)) -> list[Face]:
        faces = []
        for axis, (lo, hi) in enumerate(self.box):
            for side, coord in (("lo", lo), ("hi", hi)):
                lower = [b[0] for b in self.box] + [lambda_range[0]]
                upper = [b[1] for b in self.box] + [lambda_range[1]]
                lower[axis] = upper[axis] = coord
                normal = [0.0] * self.dim
                normal[axis] = -1.0 if side == "lo" else 1.0
                faces.append(Face(lower, upper, normal, f"x{axis}={side}"))
        return faces

    def terminal_face(self) -> Face:
        d = [0.0] * self.dim
        d[self.split_axis] = 1.0
        return Face([b[0] for b in self.box] + [1.0], [b[1] for b in self.box] + [1.0], d, "lambda=1")

    def slab_face(self, lam: float = 0.0) -> Face:
        lower = [b[0] for b in self.box] + [lam]
        upper = [b[1] for b in self.box] + [lam]
        lower[self.split_axis] = upper[self.split_axis] = self.split_coordinate
        d = [0.0] * self.dim
        d[self.split_axis] = 1.0
        return Face(lower, upper, d, f"x{self.split_axis}=split,lambda={lam:g}")


_BOX_ITEM = re.compile(r"\[\s*([^,\]]+)\s*,\s*([^\]]+)\s*\]")


def parse_block(text: str) -> BlockSpec:
    """Parse a block description: ``box= [lo,hi] ...``, ``split= axis, coordinate``.

    Optional keys: ``resolution= r_1 ... r_n`` and ``field= <reference field name>``.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        ln = raw.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise MalformedInput(f"line {lineno}: expected 'key= value'")
        key, val = ln.split("=", 1)
        values[key.strip()] = val.strip()
    if "box" not in values or "split" not in values:
        raise MalformedInput("block description needs 'box=' and 'split=' entries")
    items = _BOX_ITEM.findall(values["box"])
    if not items:
        raise MalformedInput("box needs at least one [lo,hi] interval")
    try:
        box = [(float(a), float(b)) for a, b in items]
        axis_s, coord_s = values["split"].split(",")
        axis, coord = int(axis_s), float(coord_s)
        res = tuple(int(t) for t in values.get("resolution", "").split())
    except ValueError:
        raise MalformedInput("malformed number in block description") from None
    return BlockSpec(tuple(box), axis, coord, res, values.get("field", ""))


def serialize_block(spec: BlockSpec) -> str:
    lines = [
        "box= " + " ".join(f"[{lo!r},{hi!r}]" for lo, hi in spec.box),
        f"split= {spec.split_axis}, {spec.split_coordinate!r}",
        "resolution= " + " ".join(str(r) for r in spec.resolution),
    ]
    if spec.reference_field:
        lines.append(f"field= {spec.reference_field}")
    return "\n".join(lines) + "\n"


Spacing = Union[float, Callable[[Face], float]]


def _spacing_for(spacing: Spacing, face: Face) -> float:
    return float(spacing(face)) if callable(spacing) else float(spacing)


@dataclass(frozen=True)
class AssumptionEntry:
    name: str
    face: Face
    certificate: SignCertificate | None
    note: str = ""

    @property
    def holds(self) -> bool:
        return self.certificate is not None and self.certificate.determinate


@dataclass(frozen=True)
class AssumptionReport:
    entries: tuple = field(default_factory=tuple)

    @property
    def certified(self) -> bool:
        return bool(self.entries) and all(e.holds for e in self.entries)

    @property
    def verdict(self) -> str:
        return "Certified" if self.certified else "NotCertified"

    @property
    def missing(self) -> list[str]:
        return [e.name for e in self.entries if not e.holds]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "missing": self.missing,
            "entries": [
                {
                    "name": e.name,
                    "holds": e.holds,
                    "note": e.note,
                    "certificate": None if e.certificate is None else e.certificate.to_dict(),
                }
                for e in self.entries
            ],
        }


def check_block_assumptions(svf: SampledVectorField, block: BlockSpec, spacing: Spacing) -> AssumptionReport:
    """Certify the generalized S1-S4 conditions for a candidate product block.

    S1/S2: determinate ``f . n`` on every phase-boundary side for all lambda.
    S3: determinate ``f . e_split`` on the whole slice ``lambda = 1``.
    S4: determinate ``f . e_split`` on the separating slab at ``lambda = 0``.
    A face with no samples is reported as missing rather than raised.
    """
    wanted = [(f"S1/S2 {f.label}", f) for f in block.side_faces()]
    wanted.append(("S3 lambda=1", block.terminal_face()))
    wanted.append(("S4 split slab lambda=0", block.slab_face(0.0)))
    entries = []
    for name, face in wanted:
        try:
            cert = certify_face_sign(svf, face, _spacing_for(spacing, face))
            note = "" if cert.determinate else "sign not certified"
        except NoSamplesOnFace:
            cert, note = None, "no samples on face"
        entries.append(AssumptionEntry(name, face, cert, note))
    return AssumptionReport(tuple(entries))


def covering_spacing(svf: SampledVectorField, lattice: int = 64) -> Callable[[Face], float]:
    """Spacing callback computing the covering radius of each face from sample locations."""

    def spacing(face: Face) -> float:
        return covering_radius(svf, face, lattice)

    return spacing
