import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build_pair
from oracles import cusp_critical_values
from sncert.cerf import WhitneyModel, whitney_critical_points, whitney_value
from sncert.dynamics import find_equilibria, jacobian
from sncert.errors import DecreaseFailed, OverlappingCutoffs, StageMismatch
from sncert.synthesis import (
    CutoffFunction,
    LyapunovConfig,
    NodeField,
    StageF2,
    assemble_F1,
    blend,
    build_lyapunov,
    compose_final,
    dumps_model,
    flat_step,
    loads_model,
)
from sncert.synthetic import DISK2D_BLOCK, disk2d_samples

SIGMAS = np.linspace(0.0, 1.0, 11)


@settings(max_examples=200, deadline=None)
@given(t=st.floats(-10, 10, allow_nan=False))
def test_flat_step_range(t):
    v = float(flat_step(t))
    assert 0.0 <= v <= 1.0
    if t <= 0:
        assert v == 0.0
    if t >= 1:
        assert v == 1.0


@settings(max_examples=100, deadline=None)
@given(a=st.floats(0, 1), b=st.floats(0, 1))
def test_flat_step_monotone(a, b):
    lo, hi = sorted((a, b))
    assert flat_step(lo) <= flat_step(hi)


def test_flat_step_is_flat_at_the_ends():
    for t in (1e-3, 1e-2):
        assert flat_step(t) < t**8
        assert 1 - flat_step(1 - t) < t**8


@settings(max_examples=200, deadline=None)
@given(x=st.floats(-3, 3), y=st.floats(-3, 3), lam=st.floats(0, 1))
def test_cutoff_plateaus_are_exact(x, y, lam):
    rho = CutoffFunction.box(((-1.0, 1.0), (-2.0, 2.0)), ((-0.5, 0.5), (-1.0, 1.0)))
    v = float(rho(np.array([[x, y]]), [lam])[0])
    if abs(x) <= 0.5 and abs(y) <= 1.0:
        assert v == 1.0
    if abs(x) >= 1.0 or abs(y) >= 2.0:
        assert v == 0.0
    assert 0.0 <= v <= 1.0


def test_overlapping_lambda_cutoffs_rejected(interval1d):
    fam = interval1d[3]
    eta = CutoffFunction.lambda_below(0.3, 0.6, 1)
    xi = CutoffFunction.lambda_above(0.5, 0.9, 1)
    with pytest.raises(OverlappingCutoffs):
        assemble_F1(fam.f, fam.F1.ends, eta, xi)


def test_blend_formula(interval1d):
    fam = interval1d[3]
    g = fam.F2.g
    x = np.linspace(1.2, 5.0, 50)[:, None]
    lam = np.full(50, 0.3)
    one = CutoffFunction.box(((0.0, 6.0),), ((0.5, 5.5),))
    f = fam.f(x, lam)
    grad = g.gradient(x, lam)
    assert np.array_equal(blend(fam.f, g, one, 0.0)(x, lam), f)
    assert np.array_equal(blend(fam.f, g, one, 1.0)(x, lam), -grad)
    half = blend(fam.f, g, one, 0.5)(x, lam)
    assert np.allclose(half, (f - grad) / 2, atol=1e-15)
    ip = np.einsum("ij,ij->i", grad, half)
    assert np.allclose(ip, (np.einsum("ij,ij->i", grad, f) - (grad**2).sum(1)) / 2)


def test_interval_endpoint_morse_functions(interval1d):
    fam = interval1d[3]
    w = fam.whitney
    g0 = fam.F1.ends.morse_function(0)
    z = np.linspace(-1.5, 1.5, 13)
    x = w.from_chart(np.zeros((13, 0)), z)
    assert np.allclose(g0(x), z**3 - 3 * z, atol=1e-12)
    cps = whitney_critical_points(w, 0.0)
    assert sorted(round(w.to_chart(np.array(c.x))[1][0], 12) for c in cps) == [-1.0, 1.0]
    assert sorted((c.morse_index, c.value) for c in cps) == [(0, -2.0), (1, 2.0)]
    assert whitney_critical_points(w, 1.0) == []


def test_disk_endpoint_morse_function(disk2d):
    w = disk2d[3].whitney
    assert w.q_signature == (1, 0)
    cps = whitney_critical_points(w, 0.0)
    chart = []
    for c in cps:
        y, z = w.to_chart(np.array(c.x))
        chart.append((round(float(y[0, 0]), 12), round(float(z[0]), 12)))
    assert sorted(chart) == [(0.0, -1.0), (0.0, 1.0)]
    assert sorted(c.morse_index for c in cps) == [0, 1]
    yz = np.array([[0.4, -0.8], [-1.0, 1.2]])
    x = w.from_chart(yz[:, :1], yz[:, 1])
    assert np.allclose(disk2d[3].F1.ends.morse_function(0)(x), yz[:, 1] ** 3 - 3 * yz[:, 1] + yz[:, 0] ** 2)


def _interior_points(box, m=200, seed=1):
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    return lo + (hi - lo) * rng.random((m, len(box)))


def test_first_stage_collapses(interval1d):
    fam = interval1d[3]
    x = _interior_points(fam.box)
    for s in (0.0, 0.4, 1.0):
        assert np.array_equal(fam.F1(x, np.zeros(len(x)), s), fam.F1.ends.f0(x, s))
        assert np.array_equal(fam.F1(x, np.ones(len(x)), s), fam.F1.ends.f1(x, s))
        assert np.array_equal(fam.F1(x, np.full(len(x), 0.5), s), fam.f(x, np.full(len(x), 0.5)))
    for lam in np.linspace(0, 1, 11):
        l = np.full(len(x), lam)
        assert np.array_equal(fam.F1(x, l, 0.0), fam.f(x, l))


@pytest.mark.parametrize("name", ["interval1d", "disk2d"])
def test_support_and_initial_slice(name, request):
    svf, _, _, fam = request.getfixturevalue(name)
    out = fam.outside_interior(svf.x)
    assert out.sum() > 0
    for s in SIGMAS:
        F = fam(svf.x, svf.lam, s)
        assert np.max(np.abs(F[out] - svf.f[out])) == 0.0
    assert np.max(np.abs(fam(svf.x, svf.lam, 0.0) - svf.f)) == 0.0


@pytest.mark.parametrize("name", ["interval1d", "disk2d"])
def test_corrections_vanish_off_the_block(name, request):
    fam = request.getfixturevalue(name)[3]
    rng = np.random.default_rng(3)
    lo = np.array([b[0] for b in fam.box])
    hi = np.array([b[1] for b in fam.box])
    x = lo - 1 + (hi - lo + 2) * rng.random((500, len(lo)))
    x = x[fam.outside_interior(x)]
    lam = rng.random(len(x))
    for s in SIGMAS:
        assert np.array_equal(fam(x, lam, s), fam.f(x, lam))


@pytest.mark.parametrize("name", ["interval1d", "disk2d"])
def test_stage_junctions(name, request):
    fam = request.getfixturevalue(name)[3]
    x = _interior_points(fam.box)
    lam = np.random.default_rng(2).random(len(x))
    for a, b in ((1 / 3, 1 / 3 + 1e-12), (2 / 3, 2 / 3 + 1e-12)):
        assert np.max(np.abs(fam(x, lam, a) - fam(x, lam, b))) == 0.0
    assert compose_final(fam.F1, fam.F2, fam.F3, np.column_stack([x, lam])) == (0.0, 0.0)


def test_stage_mismatch_detected(interval1d):
    fam = interval1d[3]
    wrong = StageF2(fam.f, fam.F2.g, fam.rho)
    x = _interior_points(fam.box)
    probes = np.column_stack([x, np.zeros(len(x))])
    with pytest.raises(StageMismatch):
        compose_final(fam.F1, wrong, fam.F3, probes)


@pytest.mark.parametrize("name", ["interval1d", "disk2d"])
def test_decrease_along_second_stage(name, request):
    fam = request.getfixturevalue(name)[3]
    g = fam.F2.g
    pts = g.sample_points
    assert len(pts) >= 1000
    assert g.decrease.margin > 0
    x, lam = pts[:, :-1], pts[:, -1]
    grad = g.gradient(x, lam)
    for s in (0.0, 0.25, 0.5, 0.75, 1.0):
        assert np.max(np.einsum("ij,ij->i", grad, fam.F2(x, lam, s))) < 0


def test_final_slice_equilibria(interval1d):
    fam = interval1d[3]
    w = fam.whitney
    field = fam.at_sigma(1.0)
    box = fam.box
    after = find_equilibria(field, w.lambda0 + 0.1, box, seeds=np.linspace(box[0][0], box[0][1], 100)[:, None])
    assert after == []
    at = find_equilibria(field, w.lambda0, box)
    assert len(at) == 1
    assert abs(jacobian(field, np.array([at[0].x]), w.lambda0)[0, 0, 0]) < 1e-6
    # mu = 3 at lambda = 0: equilibria at z = +-1 in the chart
    for z in (-1.0, 1.0):
        x = w.from_chart(np.zeros((1, 0)), [z])
        assert np.max(np.abs(field(x, [0.0]))) < 1e-12


def test_lyapunov_for_gradient_field(interval1d):
    pair = interval1d[1]

    def downhill(x, lam):
        return -np.ones_like(x)

    g = build_lyapunov(pair.parent, pair, downhill, LyapunovConfig(cells=(48,)))
    assert g.decrease.margin > 0
    assert g.methods and set(g.methods) <= {"laplace", "constrained"}


def test_closed_orbit_defeats_lyapunov():
    pair = build_pair(disk2d_samples(), DISK2D_BLOCK)

    def rotation(x, lam):
        return np.column_stack([-x[:, 1], x[:, 0] - 3.0])

    with pytest.raises(DecreaseFailed):
        build_lyapunov(pair.parent, pair, rotation, LyapunovConfig(cells=(24, 12)))


def test_node_gradient_matches_model():
    w = WhitneyModel(0.5, 1, 0.0, (1, 0), (3.0, 0.0), (1.1, 1.0), 0, rate=6.0)
    axes = (np.linspace(1.5, 4.5, 61), np.linspace(-1.0, 1.0, 41))
    h = max(a[1] - a[0] for a in axes)
    nodes = NodeField.sample(lambda x, l: whitney_value(w, x, l[0]), [0.0, 1.0], axes)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 2)
    for j, lam in enumerate((0.0, 1.0)):
        fd = nodes.node_gradients[j].reshape(-1, 2)
        e = 1e-5
        ref = np.column_stack(
            [(whitney_value(w, mesh + e * u, lam) - whitney_value(w, mesh - e * u, lam)) / (2 * e) for u in np.eye(2)]
        )
        assert np.max(np.abs(fd - ref)) <= 10 * h**2


def test_model_round_trip(interval1d):
    fam = interval1d[3]
    text = dumps_model(fam)
    again = loads_model(text)
    assert dumps_model(again) == text
    x = _interior_points(fam.box, 100)
    lam = np.random.default_rng(5).random(100)
    for s in SIGMAS:
        assert np.array_equal(fam(x, lam, s), again(x, lam, s))


def test_cusp_values_of_synthesized_model(interval1d):
    w = interval1d[3].whitney
    mu = float(w.mu(0.0))
    assert mu == pytest.approx(3.0)
    assert np.allclose(sorted(c.value for c in whitney_critical_points(w, 0.0)), cusp_critical_values(mu), atol=1e-12)
    assert math.isclose(w.lambda0, 0.5)
