"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with its measured runtime and
then asserts.  Criteria 3-5 reuse the interval family built and timed by
criterion 2; their clocks cover only their own checks.
"""
import math
import os
import time

import numpy as np
import pytest

from conftest import DATA, build_pair
from oracles import close, cusp_critical_values, relative_homology_oracle
from sncert.cerf import (
    EventKind,
    WhitneyModel,
    apply_uniqueness_of_birth,
    canceling_pair_graphic,
    death_birth_death_graphic,
    simplify_to_single_death,
    whitney_critical_values,
)
from sncert.conley import Certificate, certify_pair
from sncert.cubical import CubicalSet, HomologyResult, relative_homology
from sncert.dynamics import continue_branch, find_equilibria, saddle_node_test, verify_C1_C2_C3
from sncert.samples import check_block_assumptions, covering_spacing, parse_block, parse_samples
from sncert.synthesis import LyapunovConfig, SynthesisConfig, synthesize
from sncert.synthetic import (
    ATTRACTOR_BLOCK,
    NORMAL_FORM_LAMBDA0,
    attractor_samples,
    pitchfork_normal_form,
    resolve_field,
    transcritical_normal_form,
)

Z0 = HomologyResult.concentrated(0, 1)
Z1 = HomologyResult.concentrated(1, 1)
DEATH, BIRTH = EventKind.CUBIC_DEATH, EventKind.CUBIC_BIRTH
TARGET = 0.5


def report(capsys, n, ok, elapsed, limit, detail):
    with capsys.disabled():
        status = "PASS" if ok else "FAIL"
        print(f"\n{status} criterion {n}: {detail} ({elapsed:.2f} s, limit {limit:g} s)")


def load(name):
    with open(os.path.join(DATA, f"{name}.samples")) as fh:
        svf = parse_samples(fh.read())
    with open(os.path.join(DATA, f"{name}.block")) as fh:
        spec = parse_block(fh.read())
    return svf, spec


def end_to_end(name, cells):
    """Samples on disk to a verified family: (svf, certificate, family, verification, seconds)."""
    t0 = time.perf_counter()
    svf, spec = load(name)
    assumptions = check_block_assumptions(svf, spec, covering_spacing(svf))
    pair = build_pair(svf, spec)
    verdict = certify_pair(pair)
    fam = rep = None
    if assumptions.certified and isinstance(verdict, Certificate):
        conf = SynthesisConfig(lambda0=TARGET, lyapunov=LyapunovConfig(cells=cells))
        fam = synthesize(pair, verdict.k, resolve_field(spec.reference_field), spec.reference_field, conf)
        rep = verify_C1_C2_C3(fam)
    return svf, assumptions, verdict, fam, rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def interval():
    return end_to_end("interval1d", (96,))


def test_criterion_1_index_fixtures(capsys):
    t0 = time.perf_counter()
    point = [((0, 0),)]
    interval_ac = close([((0, 1),), ((1, 2),)])
    interval_ab = close([((0, 1),)])
    square = close([((0, 1), (0, 1))])
    attractor_half = build_pair(attractor_samples(), ATTRACTOR_BLOCK).B_A
    fixtures = [
        ("point", 1, point, [], Z0),
        ("[a,c] rel a", 1, interval_ac, [((0, 0),)], HomologyResult.zero(1)),
        ("[a,b] rel a+b", 1, interval_ab, [((0, 0),), ((1, 1),)], Z1),
        ("square rel edge", 2, square, close([((0, 1), (0, 0))]), HomologyResult.zero(2)),
        ("attractor half", 1, attractor_half.region.cells, attractor_half.exit_set().cells, Z0),
    ]
    bad = []
    for label, n, N, L, expected in fixtures:
        h = relative_homology(CubicalSet.from_cubes(n, N), CubicalSet.from_cubes(n, L))
        if (h.betti, h.torsion) != relative_homology_oracle(N, L, n) or h != expected:
            bad.append(label)
    if attractor_half.exit_set().cells:
        bad.append("attractor half has a nonempty exit set")
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 1.0
    report(capsys, 1, ok, elapsed, 1, f"{len(fixtures)} fixtures vs Smith-form oracle" + (f", mismatched {bad}" if bad else ""))
    assert ok


def test_criterion_2_interval_end_to_end(interval, capsys):
    _, assumptions, verdict, fam, rep, elapsed = interval
    cert = isinstance(verdict, Certificate) and verdict.k == 1
    indices = cert and verdict.report.ch_S.is_zero() and verdict.report.ch_A == Z0 and verdict.report.ch_Astar == Z1
    verified = rep is not None and rep.passed and abs(rep.lambda0_estimate - TARGET) <= 1e-3
    ok = assumptions.certified and indices and verified and elapsed < 30.0
    lam0 = rep.lambda0_estimate if rep else None
    report(capsys, 2, ok, elapsed, 30, f"certificate k={getattr(verdict, 'k', None)}, verify {rep.verdict if rep else 'skipped'}, lambda0={lam0}")
    assert ok


def test_criterion_3_support_and_initial_slice(interval, capsys):
    svf, _, _, fam, _, _ = interval
    assert fam is not None
    t0 = time.perf_counter()
    out = fam.outside_interior(svf.x)
    outside = max(float(np.max(np.abs(fam(svf.x[out], svf.lam[out], s) - svf.f[out]))) for s in np.linspace(0, 1, 11))
    initial = float(np.max(np.abs(fam(svf.x, svf.lam, 0.0) - svf.f)))
    elapsed = time.perf_counter() - t0
    ok = out.any() and outside == 0.0 and initial == 0.0 and elapsed < 5.0
    report(capsys, 3, ok, elapsed, 5, f"max|F-f| outside the interior {outside:g} over {int(out.sum())} samples, at sigma=0 {initial:g}")
    assert ok


def test_criterion_4_decrease(interval, capsys):
    fam = interval[3]
    assert fam is not None
    t0 = time.perf_counter()
    g = fam.F2.g
    pts = g.sample_points
    x, lam = pts[:, :-1], pts[:, -1]
    grad = g.gradient(x, lam)
    worst = max(float(np.max(np.einsum("ij,ij->i", grad, fam.F2(x, lam, s)))) for s in (0.0, 0.25, 0.5, 0.75, 1.0))
    elapsed = time.perf_counter() - t0
    ok = len(pts) >= 1000 and worst < 0 and g.decrease.margin > 0 and elapsed < 10.0
    report(capsys, 4, ok, elapsed, 10, f"{len(pts)} samples, max <grad g, F2> {worst:.3g}, margin {g.decrease.margin:.3g}")
    assert ok


def test_criterion_5_saddle_node_signature(interval, capsys):
    fam = interval[3]
    assert fam is not None
    t0 = time.perf_counter()
    field, box = fam.at_sigma(1.0), fam.box
    start = find_equilibria(field, 0.0, box)
    branches = [continue_branch(field, (0.0, 1.0), e.x, e.lam, box) for e in start]
    d = saddle_node_test(field, branches, TARGET, deltas=tuple(np.logspace(-4, -2, 9)))
    census = tuple(len(find_equilibria(field, d.lambda0 + s * 1e-3, box, extra_seeds=[d.x0])) for s in (-1, 0, 1))
    elapsed = time.perf_counter() - t0
    ok = (
        len(start) == 2
        and 0.45 <= d.exponent <= 0.55
        and d.null_eigenvalue < 1e-6
        and d.census == (2, 1, 0)
        and census == (2, 1, 0)
        and elapsed < 30.0
    )
    report(capsys, 5, ok, elapsed, 30, f"gap exponent {d.exponent:.4f}, |eig| {d.null_eigenvalue:.2g}, census {census}")
    assert ok


def test_criterion_6_negative_controls(capsys):
    t0 = time.perf_counter()
    box = ((-3.0, 3.0),)
    r = math.sqrt(NORMAL_FORM_LAMBDA0)
    outcomes = {}
    for name, field, seeds in (
        ("pitchfork", pitchfork_normal_form, [(r, 0.0), (-r, 0.0)]),
        ("transcritical", transcritical_normal_form, [(0.0, 0.0), (NORMAL_FORM_LAMBDA0, 0.0)]),
    ):
        branches = [continue_branch(field, (0.0, 1.0), [x], l, box) for x, l in seeds]
        outcomes[name] = saddle_node_test(field, branches, NORMAL_FORM_LAMBDA0).passed
    verdict = certify_pair(build_pair(attractor_samples(), ATTRACTOR_BLOCK))
    rejected = not verdict.accepted and verdict.reason == "condition iii" and verdict.report.ch_S == Z0
    elapsed = time.perf_counter() - t0
    ok = not any(outcomes.values()) and rejected and elapsed < 10.0
    report(capsys, 6, ok, elapsed, 10, f"saddle-node passes {outcomes}, attractor verdict {getattr(verdict, 'reason', 'accepted')}")
    assert ok


def test_criterion_7_cerf_rewrites(capsys):
    t0 = time.perf_counter()
    pair_g = canceling_pair_graphic()
    born = apply_uniqueness_of_birth(pair_g)
    dbd = death_birth_death_graphic()
    single = simplify_to_single_death(dbd)
    model = WhitneyModel(TARGET)
    counts = [len(whitney_critical_values(model, TARGET - mu)) for mu in (3.0, 0.0, -1.0)]
    vals = whitney_critical_values(model, TARGET - 3.0)
    err = float(np.max(np.abs(np.array(vals) - np.array([-2.0, 2.0]))))
    oracle_err = float(np.max(np.abs(np.array(vals) - np.array(cusp_critical_values(3.0)))))
    elapsed = time.perf_counter() - t0
    ok = (
        born.event_kinds == [DEATH, BIRTH]
        and single.event_kinds == [DEATH]
        and born.endpoints() == pair_g.endpoints()
        and single.endpoints() == dbd.endpoints()
        and counts == [2, 1, 0]
        and err < 1e-12
        and oracle_err < 1e-12
        and elapsed < 1.0
    )
    report(capsys, 7, ok, elapsed, 1, f"events {[e.value for e in born.event_kinds]} / {[e.value for e in single.event_kinds]}, cusp counts {counts}, value error {err:.1g}")
    assert ok


@pytest.mark.slow
def test_criterion_8_disk_end_to_end(capsys):
    _, assumptions, verdict, fam, rep, elapsed = end_to_end("disk2d", (48, 24))
    cert = isinstance(verdict, Certificate) and verdict.k == 1
    ok = assumptions.certified and cert and rep is not None and rep.passed and elapsed < 120.0
    report(capsys, 8, ok, elapsed, 120, f"certificate k={getattr(verdict, 'k', None)}, verify {rep.verdict if rep else 'skipped'}")
    assert ok
