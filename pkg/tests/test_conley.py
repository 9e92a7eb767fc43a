import dataclasses

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build_pair
from oracles import relative_homology_oracle
from sncert.blocks import conley_index_of_block, validate_simple_block
from sncert.conley import (
    Certificate,
    ConleyIndexReport,
    Rejection,
    certify_homological_saddle_node,
    certify_pair,
    conley_index_report,
    dumps_verdict,
    extract_unstable_dimension,
)
from sncert.cubical import HomologyResult
from sncert.errors import SNCertError
from sncert.synthetic import ATTRACTOR_BLOCK, INTERVAL1D_BLOCK, attractor_samples, interval1d_samples

Z0 = HomologyResult.concentrated(0, 1)
Z1 = HomologyResult.concentrated(1, 1)
ZERO = HomologyResult.zero(1)


def oracle_index(block):
    return relative_homology_oracle(block.region.cells, block.exit_set().cells, block.dim)


def test_interval_indices_match_oracle():
    pair = build_pair(interval1d_samples(), INTERVAL1D_BLOCK)
    for block, betti in ((pair.parent, (0, 0)), (pair.B_A, (1, 0)), (pair.B_Astar, (0, 1))):
        h = conley_index_of_block(block)
        assert h.betti == betti
        assert (h.betti, h.torsion) == oracle_index(block)


def test_unstable_dimension():
    assert extract_unstable_dimension(Z0, Z1) == 1
    assert extract_unstable_dimension(Z1, Z1) is None
    assert extract_unstable_dimension(HomologyResult((1, 0), ((), (2,))), Z1) is None
    assert extract_unstable_dimension(ZERO, Z0) is None


def test_interval_pipeline_certifies_k1():
    verdict = certify_pair(build_pair(interval1d_samples(), INTERVAL1D_BLOCK))
    assert isinstance(verdict, Certificate)
    assert verdict.k == 1
    assert verdict.report.ch_S.is_zero()
    assert verdict.report.ch_A == Z0
    assert verdict.report.ch_Astar == Z1


def test_nonzero_invariant_set_rejected_at_iii():
    report = ConleyIndexReport(Z0, Z0, Z1, 1)
    pair = build_pair(interval1d_samples(), INTERVAL1D_BLOCK)
    v = certify_homological_saddle_node(report, pair, validate_simple_block(pair))
    assert isinstance(v, Rejection)
    assert v.reason == "condition iii"


def test_attractor_block_rejected_at_iii():
    pair = build_pair(attractor_samples(), ATTRACTOR_BLOCK)
    v = certify_pair(pair)
    assert isinstance(v, Rejection)
    assert v.reason == "condition iii"
    assert v.report.ch_S == Z0


def test_failed_simplicity_rejected_at_ii():
    pair = build_pair(interval1d_samples(), INTERVAL1D_BLOCK)
    simple = validate_simple_block(pair)
    broken = dataclasses.replace(simple, checks=(dataclasses.replace(simple.checks[0], betti1=1),) + simple.checks[1:])
    v = certify_homological_saddle_node(conley_index_report(pair), pair, broken)
    assert v.reason == "condition ii"


def test_verdict_text_is_reproducible():
    a = dumps_verdict(certify_pair(build_pair(interval1d_samples(), INTERVAL1D_BLOCK)))
    b = dumps_verdict(certify_pair(build_pair(interval1d_samples(), INTERVAL1D_BLOCK)))
    assert a == b


homology = st.builds(
    lambda b, t: HomologyResult(tuple(b), tuple(tuple(x) for x in t)),
    st.lists(st.integers(0, 2), min_size=2, max_size=2),
    st.lists(st.lists(st.sampled_from([2, 3]), max_size=1), min_size=2, max_size=2),
)


@settings(max_examples=200, deadline=None)
@given(a=homology, s=homology)
def test_unstable_dimension_invariant(a, s):
    k = extract_unstable_dimension(a, s)
    if k is not None:
        assert k >= 1
        assert a == HomologyResult.concentrated(k - 1, 1)
        assert s == HomologyResult.concentrated(k, 1)


@settings(max_examples=100, deadline=None)
@given(S=homology, A=homology, As=homology, drop=st.sampled_from(["blocks", "simple", "both"]))
def test_less_evidence_never_certifies(S, A, As, drop):
    pair = build_pair(interval1d_samples(), INTERVAL1D_BLOCK)
    simple = validate_simple_block(pair)
    report = ConleyIndexReport(S, A, As, extract_unstable_dimension(A, As))
    args = {"blocks": None if drop != "simple" else pair, "simple": None if drop != "blocks" else simple}
    partial = certify_homological_saddle_node(report, **args)
    assert not partial.accepted


@settings(max_examples=30, deadline=None)
@given(mask=st.lists(st.booleans(), min_size=70, max_size=70))
def test_dropping_samples_never_rescues_a_rejection(mask):
    svf = attractor_samples()
    assert len(svf) == len(mask)
    try:
        v = certify_pair(build_pair(svf.without(np.array(mask)), ATTRACTOR_BLOCK))
    except SNCertError:
        return
    assert not v.accepted
