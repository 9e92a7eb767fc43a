import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sncert.errors import DimensionMismatch, MalformedInput, NoSamplesOnFace, OutOfRangeLambda
from sncert.samples import (
    BlockSpec,
    Face,
    SampledVectorField,
    Sign,
    certify_face_sign,
    check_block_assumptions,
    covering_radius,
    covering_spacing,
    parse_block,
    parse_samples,
    serialize_block,
    serialize_samples,
)
from sncert.synthetic import DISK2D_BLOCK, INTERVAL1D_A, INTERVAL1D_B, INTERVAL1D_BLOCK, disk2d_samples, interval1d_arrows


def test_parse_two_samples():
    svf = parse_samples("dim=1 lipschitz=2\n0.5 ; 0 ; -1\n0.5 ; 1 ; -2  # comment\n")
    assert svf.dim == 1
    assert len(svf) == 2
    assert svf.lipschitz_bound == 2.0
    assert svf.f[:, 0].tolist() == [-1.0, -2.0]


def test_parse_rejects_wrong_width():
    with pytest.raises(DimensionMismatch):
        parse_samples("dim=2 lipschitz=1\n0 0 ; 0 ; 1 1\n0 0 1 ; 0.5 ; 1 1\n")


@pytest.mark.parametrize(
    "text, err",
    [
        ("", MalformedInput),
        ("lipschitz=1\n", MalformedInput),
        ("dim=1 lipschitz=1\n0 ; 2 ; 1\n", OutOfRangeLambda),
        ("dim=1 lipschitz=1\n0 ; 0\n", MalformedInput),
        ("dim=1 lipschitz=1\n0 ; 0 ; x\n", MalformedInput),
        ("dim=1 lipschitz=-1\n0 ; 0 ; 1\n", MalformedInput),
        ("dim=1 lipschitz=1\n0 ; 0 ; 1\n0 ; 0 ; 2\n", MalformedInput),
    ],
)
def test_parse_errors(text, err):
    with pytest.raises(err):
        parse_samples(text)


def test_drawn_arrows_count():
    svf = interval1d_arrows(include_terminal=False)
    assert svf.dim == 1
    assert len(svf) == 13


def _constant_face_data(L, value=-1.0, h=0.05):
    lams = np.arange(0.0, 1.0 + 1e-12, 2 * h)
    svf = SampledVectorField(1, np.full((len(lams), 1), INTERVAL1D_A), lams, np.full((len(lams), 1), value), L)
    face = Face((INTERVAL1D_A, 0.0), (INTERVAL1D_A, 1.0), (1.0,), "x=a")
    return svf, face


@pytest.mark.parametrize("L, sign, margin", [(5.0, Sign.NEGATIVE, 0.75), (30.0, Sign.UNDETERMINED, -0.5), (0.0, Sign.NEGATIVE, 1.0)])
def test_sign_certificate_margins(L, sign, margin):
    svf, face = _constant_face_data(L)
    cert = certify_face_sign(svf, face, 0.05)
    assert cert.sign is sign
    assert cert.margin == pytest.approx(margin, abs=1e-12)


def test_mixed_signs_are_undetermined():
    svf = SampledVectorField(1, [[0.0], [0.0]], [0.0, 1.0], [[1.0], [-1.0]], 0.0)
    cert = certify_face_sign(svf, Face((0.0, 0.0), (0.0, 1.0), (1.0,)), 0.5)
    assert cert.sign is Sign.UNDETERMINED
    assert cert.margin == -math.inf


def test_empty_face_raises():
    svf, _ = _constant_face_data(1.0)
    with pytest.raises(NoSamplesOnFace):
        certify_face_sign(svf, Face((9.0, 0.0), (9.0, 1.0), (1.0,)), 0.1)


def test_covering_radius_bounds_gaps():
    svf, face = _constant_face_data(1.0, h=0.05)
    r = covering_radius(svf, face)
    assert 0.05 - 1e-12 <= r <= 0.05 + 1.0 / 63


def test_arrow_data_satisfies_block_assumptions():
    svf = interval1d_arrows()
    report = check_block_assumptions(svf, INTERVAL1D_BLOCK, covering_spacing(svf))
    assert report.verdict == "Certified"


def test_missing_split_arrow_is_reported():
    svf = interval1d_arrows()
    drop = (svf.x[:, 0] == INTERVAL1D_B) & (svf.lam == 0.0)
    report = check_block_assumptions(svf.without(drop), INTERVAL1D_BLOCK, covering_spacing(svf))
    assert report.verdict == "NotCertified"
    assert report.missing == ["S4 split slab lambda=0"]


def test_disk_data_satisfies_block_assumptions():
    svf = disk2d_samples()
    report = check_block_assumptions(svf, DISK2D_BLOCK, covering_spacing(svf))
    assert report.certified
    sides = [e for e in report.entries if e.name.startswith("S1/S2")]
    signs = {e.name: e.certificate.sign for e in sides}
    # flow leaves through x0 = a only; the other three sides are inflow
    assert signs.pop("S1/S2 x0=lo") is Sign.POSITIVE
    assert set(signs.values()) == {Sign.NEGATIVE}


def test_block_description_round_trip():
    text = serialize_block(DISK2D_BLOCK)
    assert parse_block(text) == DISK2D_BLOCK
    with pytest.raises(MalformedInput):
        parse_block("box= [0,1]\n")
    with pytest.raises(MalformedInput):
        parse_block("box= [0,1]\nsplit= 0, 1\n")


finite = st.floats(-1e6, 1e6, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(
    dim=st.integers(1, 3),
    rows=st.integers(1, 8),
    L=st.floats(0, 100, allow_nan=False),
    data=st.data(),
)
def test_sample_document_round_trip(dim, rows, L, data):
    x = np.array(data.draw(st.lists(st.lists(finite, min_size=dim, max_size=dim), min_size=rows, max_size=rows, unique_by=tuple)))
    lam = np.array(data.draw(st.lists(st.floats(0, 1), min_size=rows, max_size=rows)))
    f = np.array(data.draw(st.lists(st.lists(finite, min_size=dim, max_size=dim), min_size=rows, max_size=rows)))
    svf = SampledVectorField(dim, x, lam, f, L)
    assert parse_samples(serialize_samples(svf)) == svf


@settings(max_examples=60, deadline=None)
@given(
    values=st.lists(st.floats(0.01, 10), min_size=1, max_size=10),
    L1=st.floats(0, 50),
    L2=st.floats(0, 50),
    h=st.floats(0.001, 0.5),
)
def test_margin_decreases_with_lipschitz_bound(values, L1, L2, h):
    lo, hi = sorted((L1, L2))
    lams = np.linspace(0, 1, len(values))
    face = Face((0.0, 0.0), (0.0, 1.0), (1.0,))
    certs = [
        certify_face_sign(SampledVectorField(1, np.zeros((len(values), 1)), lams, np.array(values)[:, None], L), face, h)
        for L in (lo, hi)
    ]
    assert certs[0].margin >= certs[1].margin
    # a certified sign never flips when the bound shrinks
    if certs[1].determinate:
        assert certs[0].sign is certs[1].sign
    assert certs[0].margin == pytest.approx(min(values) - lo * h)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 40))
def test_covering_radius_of_uniform_lattice(n):
    lams = np.linspace(0, 1, n)
    svf = SampledVectorField(1, np.zeros((n, 1)), lams, np.ones((n, 1)), 1.0)
    r = covering_radius(svf, Face((0.0, 0.0), (0.0, 1.0), (1.0,)))
    true = 0.5 / (n - 1)
    assert r >= true - 1e-12


def test_block_spec_validation():
    with pytest.raises(MalformedInput):
        BlockSpec(((0.0, 1.0),), 0, 1.0)
    with pytest.raises(MalformedInput):
        BlockSpec(((1.0, 0.0),), 0, 0.5)
