"""Stage drivers shared by the command line and the scripts.

Every stage reads its inputs, writes plain-text artifacts into the output
directory and returns an exit status: 0 for a pass or certificate, 1 for a
rejection or failed check.  Artifacts start with a ``format:`` tag line and are
byte-identical across reruns with the same inputs.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .blocks import BlockPair, IsolatingBlock, classify_boundary, region_from_grid, split_simple_block, validate_simple_block
from .cerf import whitney_critical_values
from .conley import certify_homological_saddle_node, conley_index_report
from .dynamics import NEWTON_TOL, FOLD_TOL, VerifyConfig, dumps_report, verify_C1_C2_C3
from .errors import BadInterface, ConfigInvalid, DecreaseFailed, MalformedInput, MissingArtifact, NotABlock
from .samples import BlockSpec, SampledVectorField, check_block_assumptions, covering_spacing, parse_block, parse_samples
from .synthesis import LyapunovConfig, SynthesisConfig, dumps_model, loads_model, synthesize
from .synthetic import resolve_field

SUBCOMMANDS = ("ingest", "block", "index", "certify", "synthesize", "verify", "graphic")

ARTIFACTS = {
    "assumptions": ("assumptions.txt", "sncert-assumptions/1"),
    "block": ("block.txt", "sncert-block/1"),
    "pair": ("pair.txt", "sncert-pair/1"),
    "index": ("index.txt", "sncert-index/1"),
    "verdict": ("verdict.txt", "sncert-verdict/1"),
    "model": ("model.txt", "sncert-model/1"),
    "verification": ("verification.txt", "sncert-verification/1"),
    "branches": ("branches.tsv", "sncert-branches/1"),
    "arcs": ("graphic-arcs.tsv", "sncert-graphic-arcs/1"),
    "events": ("graphic-events.tsv", "sncert-graphic-events/1"),
    "cusp": ("graphic-cusp.tsv", "sncert-cusp/1"),
}
SVG_NAME = "graphic.svg"


@dataclass(frozen=True)
class PipelineConfig:
    samples: Optional[str] = None
    block: Optional[str] = None
    out: str = "sncert-out"
    lambda0_target: float = 0.5
    # accepted distance between the located fold and lambda0_target
    tol: float = 1e-3
    newton_tol: float = NEWTON_TOL
    fold_tol: float = FOLD_TOL
    # smallest accepted decrease margin of the Lyapunov function
    margin_min: float = 1e-12
    # Lyapunov grid cells per axis; empty picks a size from the block shape
    resolution: tuple = ()
    seed: int = 0
    lambda_mesh: tuple = field(default_factory=lambda: tuple(round(v, 12) for v in np.linspace(0.0, 1.0, 21)))

    def __post_init__(self):
        for name in ("tol", "newton_tol", "fold_tol", "margin_min"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigInvalid(f"{name} must be a positive number, got {v!r}")
        if any(int(r) < 2 for r in self.resolution):
            raise ConfigInvalid("resolution needs at least 2 cells per axis")
        synth = SynthesisConfig()
        if not synth.eta[1] < self.lambda0_target < synth.xi[0]:
            raise ConfigInvalid(f"lambda0 must lie in ({synth.eta[1]}, {synth.xi[0]}), got {self.lambda0_target}")
        if len(self.lambda_mesh) < 2:
            raise ConfigInvalid("lambda mesh needs at least two values")

    def cells(self, box) -> tuple:
        if self.resolution:
            return tuple(int(r) for r in self.resolution)
        if len(box) == 1:
            return (96,)
        sides = [hi - lo for lo, hi in box]
        return tuple(max(24, round(48 * s / max(sides))) for s in sides)


# --------------------------------------------------------------------------
# artifacts


def _dumps(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def write_artifact(cfg: PipelineConfig, key: str, body: str) -> str:
    name, tag = ARTIFACTS[key]
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"format: {tag}\n{body}")
    return path


def read_artifact(cfg: PipelineConfig, key: str) -> str:
    name, tag = ARTIFACTS[key]
    path = os.path.join(cfg.out, name)
    if not os.path.exists(path):
        raise MissingArtifact(f"{path} not found; run the earlier stage first")
    with open(path, encoding="utf-8") as fh:
        head, _, body = fh.read().partition("\n")
    if head != f"format: {tag}":
        raise MalformedInput(f"{path}: expected format tag {tag!r}, found {head!r}")
    return body


def _read_input(path: Optional[str], what: str) -> str:
    if not path:
        raise ConfigInvalid(f"--{what} is required for this stage")
    if not os.path.exists(path):
        raise MissingArtifact(f"{what} file {path} not found")
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def load_inputs(cfg: PipelineConfig) -> tuple[SampledVectorField, BlockSpec]:
    svf = parse_samples(_read_input(cfg.samples, "samples"))
    spec = parse_block(_read_input(cfg.block, "block"))
    if svf.dim != spec.dim:
        raise ConfigInvalid(f"samples have dimension {svf.dim} but the block has {spec.dim}")
    return svf, spec


# --------------------------------------------------------------------------
# shared computations


def build_block(svf: SampledVectorField, spec: BlockSpec) -> IsolatingBlock:
    grid = spec.grid()
    return classify_boundary(svf, region_from_grid(grid), grid, covering_spacing(svf))


def build_pair(svf: SampledVectorField, spec: BlockSpec) -> BlockPair:
    block = build_block(svf, spec)
    return split_simple_block(block, spec.split_axis, spec.split_coordinate, svf, covering_spacing(svf))


def _pair_doc(pair: BlockPair) -> dict:
    return {
        "axis": pair.axis,
        "interface": sorted([list(map(list, f)) for f in pair.interface]),
        "B_A": pair.B_A.summary(),
        "B_A*": pair.B_Astar.summary(),
        "simple": validate_simple_block(pair).to_dict(),
    }


# --------------------------------------------------------------------------
# stages


def stage_ingest(cfg: PipelineConfig) -> int:
    svf, spec = load_inputs(cfg)
    report = check_block_assumptions(svf, spec, covering_spacing(svf))
    doc = report.to_dict()
    doc["samples"] = len(svf)
    doc["lipschitz"] = svf.lipschitz_bound
    write_artifact(cfg, "assumptions", _dumps(doc))
    return 0 if report.certified else 1


def stage_block(cfg: PipelineConfig) -> int:
    svf, spec = load_inputs(cfg)
    try:
        pair = build_pair(svf, spec)
    except (NotABlock, BadInterface) as exc:
        write_artifact(cfg, "block", _dumps({"verdict": "NotABlock", "reason": str(exc)}))
        return 1
    write_artifact(cfg, "block", _dumps({"verdict": "Block", **pair.parent.summary()}))
    write_artifact(cfg, "pair", _dumps(_pair_doc(pair)))
    return 0


def stage_index(cfg: PipelineConfig) -> int:
    svf, spec = load_inputs(cfg)
    report = conley_index_report(build_pair(svf, spec))
    write_artifact(cfg, "index", _dumps(report.to_dict()))
    return 0


def stage_certify(cfg: PipelineConfig) -> int:
    svf, spec = load_inputs(cfg)
    try:
        pair = build_pair(svf, spec)
    except (NotABlock, BadInterface) as exc:
        write_artifact(cfg, "verdict", _dumps({"verdict": "Rejection", "reason": "condition ii", "detail": str(exc)}))
        return 1
    verdict = certify_homological_saddle_node(conley_index_report(pair), pair, validate_simple_block(pair))
    write_artifact(cfg, "verdict", _dumps(verdict.to_dict()))
    return 0 if verdict.accepted else 1


def stage_synthesize(cfg: PipelineConfig) -> int:
    verdict = json.loads(read_artifact(cfg, "verdict"))
    if verdict.get("verdict") != "Certificate":
        return 1
    svf, spec = load_inputs(cfg)
    if not spec.reference_field:
        raise ConfigInvalid("synthesis needs a reference field: add 'field= <name>' to the block description")
    pair = build_pair(svf, spec)
    box = pair.parent.physical_box()
    sconf = SynthesisConfig(lambda0=cfg.lambda0_target, lyapunov=LyapunovConfig(cells=cfg.cells(box)))
    try:
        fam = synthesize(pair, int(verdict["k"]), resolve_field(spec.reference_field), spec.reference_field, sconf)
    except DecreaseFailed:
        return 1
    if not fam.F2.g.decrease.margin >= cfg.margin_min:
        return 1
    write_artifact(cfg, "model", dumps_model(fam))
    return 0


def load_family(cfg: PipelineConfig):
    return loads_model(read_artifact(cfg, "model"))


def stage_verify(cfg: PipelineConfig) -> int:
    fam = load_family(cfg)
    vconf = VerifyConfig(newton_tol=cfg.newton_tol, fold_tol=cfg.fold_tol, lambda0_tol=cfg.tol, seed=cfg.seed)
    report = verify_C1_C2_C3(fam, cfg.lambda_mesh, vconf)
    write_artifact(cfg, "verification", dumps_report(report))
    tables = [f"# branch {i}: {b.end_reason}\n{b.to_table()}" for i, b in enumerate(report.branches)]
    write_artifact(cfg, "branches", "".join(tables))
    return 0 if report.passed else 1


def cusp_table(model, lams) -> str:
    lines = ["lambda\tcount\tvalues"]
    for lam in lams:
        vals = whitney_critical_values(model, float(lam))
        lines.append(f"{float(lam):.12g}\t{len(vals)}\t" + " ".join(f"{v:.12g}" for v in vals))
    return "\n".join(lines) + "\n"


def stage_graphic(cfg: PipelineConfig) -> int:
    fam = load_family(cfg)
    g = fam.graphic
    g.check_invariants()
    write_artifact(cfg, "arcs", g.to_table())
    write_artifact(cfg, "events", g.events_table())
    lams = sorted({l for a in g.arcs for l in a.lams})
    write_artifact(cfg, "cusp", cusp_table(fam.whitney, lams))
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, SVG_NAME), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(g.to_svg())
    return 0


STAGES = {
    "ingest": stage_ingest,
    "block": stage_block,
    "index": stage_index,
    "certify": stage_certify,
    "synthesize": stage_synthesize,
    "verify": stage_verify,
    "graphic": stage_graphic,
}


def run(subcommand: str, cfg: PipelineConfig) -> int:
    if subcommand not in STAGES:
        raise ConfigInvalid(f"unknown subcommand {subcommand!r}")
    return STAGES[subcommand](cfg)
