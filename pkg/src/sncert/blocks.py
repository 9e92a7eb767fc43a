"""Isolating blocks on a grid: boundary classification, splitting, simplicity checks."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

from .cubical import CubicalSet, HomologyResult, closure, cube_key, faces, relative_homology
from .errors import BadInterface, NotABlock
from .samples import Face, Grid, SampledVectorField, Sign, certify_face_sign

Spacing = Union[float, Callable[[Face], float]]

FORBID = "forbid"
ALLOW = "allow"


def _spacing(spacing: Spacing, face: Face) -> float:
    return float(spacing(face)) if callable(spacing) else float(spacing)


def boundary_faces(region: CubicalSet) -> dict:
    """Codimension-one faces of exactly one top cell, mapped to ``(axis, outward_sign)``."""
    n = region.ambient_dim
    count = {}
    for top in region.top_cells():
        for _, face in faces(top):
            axis = next(j for j in range(n) if face[j][0] == face[j][1] and top[j][0] != top[j][1])
            outward = 1 if face[axis][0] == top[axis][1] else -1
            prev = count.get(face)
            count[face] = (axis, outward, 1 if prev is None else prev[2] + 1)
    return {f: (a, s) for f, (a, s, c) in count.items() if c == 1}


def face_geometry(grid: Grid, face, axis: int, outward: int, lambda_range, label="") -> Face:
    extent = grid.cube_box(face)
    lower = [lo for lo, _ in extent] + [lambda_range[0]]
    upper = [hi for _, hi in extent] + [lambda_range[1]]
    normal = [0.0] * grid.dim
    normal[axis] = float(outward)
    return Face(lower, upper, normal, label or _face_label(face))


def _face_label(face) -> str:
    return "x".join(f"[{lo},{hi}]" if hi > lo else f"{lo}" for lo, hi in face)


@dataclass(frozen=True)
class IsolatingBlock:
    grid: Grid
    region: CubicalSet
    entrance: frozenset
    exit: frozenset
    tangency: frozenset
    certificates: dict = field(default_factory=dict, compare=False)
    lambda_range: tuple = (0.0, 1.0)
    # sampled data cannot certify the flow-through condition on tangency faces
    assumptions: tuple = ()

    @property
    def dim(self) -> int:
        return self.region.ambient_dim

    def boundary(self) -> dict:
        return boundary_faces(self.region)

    def exit_set(self) -> CubicalSet:
        return CubicalSet(self.dim, closure(self.exit))

    def entrance_set(self) -> CubicalSet:
        return CubicalSet(self.dim, closure(self.entrance))

    def role(self, face) -> str:
        if face in self.entrance:
            return "entrance"
        if face in self.exit:
            return "exit"
        if face in self.tangency:
            return "tangency"
        raise KeyError(face)

    def physical_box(self):
        cells = self.region.top_cells()
        lo = [min(c[j][0] for c in cells) for j in range(self.dim)]
        hi = [max(c[j][1] for c in cells) for j in range(self.dim)]
        return tuple((float(self.grid.nodes[j][lo[j]]), float(self.grid.nodes[j][hi[j]])) for j in range(self.dim))

    def faces_with_roles(self):
        """``[(physical Face, role)]`` for every boundary face, in deterministic order."""
        out = []
        for face, (axis, outward) in sorted(self.boundary().items(), key=lambda kv: cube_key(kv[0])):
            out.append((face_geometry(self.grid, face, axis, outward, self.lambda_range), self.role(face)))
        return out

    def check_invariants(self) -> None:
        bnd = set(self.boundary())
        roles = [self.entrance, self.exit, self.tangency]
        if set().union(*roles) != bnd or sum(len(r) for r in roles) != len(bnd):
            raise NotABlock("every boundary face needs exactly one role")
        for face in self.entrance:
            cert = self.certificates.get(face)
            if cert is not None and cert.sign is not Sign.NEGATIVE:
                raise NotABlock(f"entrance face {face} lacks an inflow certificate")
        for face in self.exit:
            cert = self.certificates.get(face)
            if cert is not None and cert.sign is not Sign.POSITIVE:
                raise NotABlock(f"exit face {face} lacks an outflow certificate")
        for face in self.tangency:
            if not (_touches(face, self.entrance) and _touches(face, self.exit)):
                raise NotABlock(f"tangency face {face} is not flanked by entrance and exit faces")

    def summary(self) -> dict:
        def fmt(fs):
            return [_face_label(f) for f in sorted(fs, key=cube_key)]

        return {
            "box": [list(iv) for iv in self.physical_box()],
            "lambda_range": list(self.lambda_range),
            "entrance": fmt(self.entrance),
            "exit": fmt(self.exit),
            "tangency": fmt(self.tangency),
            "assumptions": list(self.assumptions),
            "certificates": [
                self.certificates[f].to_dict() for f in sorted(self.certificates, key=cube_key)
            ],
        }


def _touches(face, others) -> bool:
    mine = closure([face]) - {face}
    return any(mine & (closure([o]) - {o}) for o in others)


def classify_boundary(
    svf: SampledVectorField,
    region: CubicalSet,
    grid: Grid,
    spacing: Spacing,
    tangency_policy: str = FORBID,
    lambda_range=(0.0, 1.0),
) -> IsolatingBlock:
    """Assign entrance/exit/tangency roles to every boundary face from sign certificates."""
    entrance, exit_, undetermined, certs = set(), set(), set(), {}
    for face, (axis, outward) in sorted(boundary_faces(region).items(), key=lambda kv: cube_key(kv[0])):
        geom = face_geometry(grid, face, axis, outward, lambda_range)
        cert = certify_face_sign(svf, geom, _spacing(spacing, geom))
        certs[face] = cert
        if cert.sign is Sign.NEGATIVE:
            entrance.add(face)
        elif cert.sign is Sign.POSITIVE:
            exit_.add(face)
        else:
            undetermined.add(face)
    if not entrance and not exit_:
        raise NotABlock("no boundary face carries a certified sign")
    assumptions = ()
    if undetermined:
        if tangency_policy != ALLOW:
            raise NotABlock(f"{len(undetermined)} boundary face(s) have undetermined sign")
        for face in undetermined:
            if not (_touches(face, entrance) and _touches(face, exit_)):
                raise NotABlock(f"undetermined face {_face_label(face)} is not flanked by entrance and exit")
        assumptions = ("tangency faces assumed to satisfy the flow-through condition",)
    block = IsolatingBlock(
        grid,
        region,
        frozenset(entrance),
        frozenset(exit_),
        frozenset(undetermined),
        certs,
        tuple(float(v) for v in lambda_range),
        assumptions,
    )
    block.check_invariants()
    return block


@dataclass(frozen=True)
class BlockPair:
    parent: IsolatingBlock
    B_A: IsolatingBlock
    B_Astar: IsolatingBlock
    interface: frozenset
    axis: int

    def check_invariants(self) -> None:
        if self.B_A.region | self.B_Astar.region != self.parent.region:
            raise BadInterface("sub-blocks do not cover the parent block")
        if self.interface != (self.B_Astar.exit & self.B_A.entrance):
            raise BadInterface("interface is not exit(A*) meet entrance(A)")
        shared = self.B_A.region & self.B_Astar.region
        if shared.cells != closure(self.interface):
            raise BadInterface("sub-blocks meet outside the interface")


def split_simple_block(
    block: IsolatingBlock,
    axis: int,
    coordinate: float,
    svf: SampledVectorField,
    spacing: Spacing,
    lam: float = 0.0,
) -> BlockPair:
    """Split ``block`` along the grid hyperplane ``x[axis] = coordinate`` at parameter ``lam``.

    The slab must carry a certified one-sided flux: the side it flows out of
    holds the repeller ``A*``, the side it flows into holds the attractor ``A``.
    """
    grid = block.grid
    idx = grid.index_of(axis, coordinate)
    tops = block.region.top_cells()
    lower = [c for c in tops if c[axis][1] <= idx]
    upper = [c for c in tops if c[axis][0] >= idx]
    if not lower or not upper:
        raise BadInterface("separating hyperplane does not cut the block")
    n = block.dim
    slab = sorted(
        {f for c in lower for _, f in faces(c) if f[axis] == (idx, idx)}
        & {f for c in upper for _, f in faces(c) if f[axis] == (idx, idx)},
        key=cube_key,
    )
    lam_range = (float(lam), float(lam))
    up_certs = {}
    signs = set()
    for f in slab:
        geom = face_geometry(grid, f, axis, +1, lam_range)
        cert = certify_face_sign(svf, geom, _spacing(spacing, geom))
        up_certs[f] = cert
        signs.add(cert.sign)
    if signs != {Sign.POSITIVE} and signs != {Sign.NEGATIVE}:
        raise BadInterface("separating slab lacks a certified one-sided flux")
    flows_up = signs == {Sign.POSITIVE}

    def sub_block(cells, outward_on_slab: int) -> IsolatingBlock:
        region = CubicalSet.from_cubes(n, cells)
        entrance, exit_, tangency, certs = set(), set(), set(), {}
        for face, (ax, out) in boundary_faces(region).items():
            if face in up_certs:
                geom = face_geometry(grid, face, axis, outward_on_slab, lam_range)
                cert = certify_face_sign(svf, geom, up_certs[face].spacing)
                certs[face] = cert
                (exit_ if cert.sign is Sign.POSITIVE else entrance).add(face)
            else:
                role = block.role(face)
                certs[face] = block.certificates.get(face)
                {"entrance": entrance, "exit": exit_, "tangency": tangency}[role].add(face)
        certs = {k: v for k, v in certs.items() if v is not None}
        sub = IsolatingBlock(
            grid, region, frozenset(entrance), frozenset(exit_), frozenset(tangency), certs, lam_range, block.assumptions
        )
        sub.check_invariants()
        return sub

    lower_block = sub_block(lower, +1)
    upper_block = sub_block(upper, -1)
    B_Astar, B_A = (lower_block, upper_block) if flows_up else (upper_block, lower_block)
    pair = BlockPair(block, B_A, B_Astar, frozenset(slab), axis)
    pair.check_invariants()
    return pair


# --------------------------------------------------------------------------
# simplicity


@dataclass(frozen=True)
class SimpleCheck:
    name: str
    betti0: int
    betti1: int
    require_connected: bool
    # in the plane an attractor/repeller block's full boundary is a circle; disks are what matter there
    waived: bool = False

    @property
    def passed(self) -> bool:
        if self.waived:
            return True
        connected_ok = self.betti0 == 1 or not self.require_connected
        return connected_ok and self.betti1 == 0


@dataclass(frozen=True)
class SimpleBlockReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {
                    "name": c.name,
                    "betti0": c.betti0,
                    "betti1": c.betti1,
                    "connected_required": c.require_connected,
                    "waived": c.waived,
                    "passed": c.passed,
                }
                for c in self.checks
            ],
        }


def _check(name: str, cs: CubicalSet, require_connected: bool, waived: bool = False) -> SimpleCheck:
    h = relative_homology(cs)
    b1 = h.betti[1] if len(h.betti) > 1 else 0
    if len(h.torsion) > 1 and h.torsion[1]:
        b1 = max(b1, 1)
    return SimpleCheck(name, h.betti[0], b1, require_connected, waived)


def validate_simple_block(pair: BlockPair) -> SimpleBlockReport:
    """Connectivity and ``H_1 = 0`` for the blocks; ``H_1 = 0`` alone for their entrance/exit sets.

    In ambient dimension 2 an entrance or exit set equal to the block's whole
    boundary circle is waived: there the blocks being disks is the requirement.
    """
    checks = []
    for name, blk in (("B0", pair.parent), ("B_A", pair.B_A), ("B_A*", pair.B_Astar)):
        checks.append(_check(name, blk.region, True))
        whole = closure(blk.boundary())
        for label, faces_, cs in (("entrance", blk.entrance, blk.entrance_set()), ("exit", blk.exit, blk.exit_set())):
            waived = blk.dim == 2 and bool(faces_) and cs.cells == whole
            checks.append(_check(f"{name} {label}", cs, False, waived))
    return SimpleBlockReport(tuple(checks))


def conley_index_of_block(block: IsolatingBlock) -> HomologyResult:
    """Homology Conley index from the index pair ``(B, exit set)``."""
    return relative_homology(block.region, block.exit_set())


def region_from_grid(grid: Grid) -> CubicalSet:
    return CubicalSet.box(grid.resolution)

