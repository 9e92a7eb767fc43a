import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from sncert.blocks import classify_boundary, region_from_grid, split_simple_block
from sncert.conley import certify_pair
from sncert.samples import covering_spacing
from sncert.synthesis import LyapunovConfig, SynthesisConfig, synthesize
from sncert.synthetic import DISK2D_BLOCK, INTERVAL1D_BLOCK, disk2d_field, disk2d_samples, interval1d_field, interval1d_samples

DATA = os.path.join(os.path.dirname(__file__), "..", "data")


def build_pair(svf, spec):
    spacing = covering_spacing(svf)
    grid = spec.grid()
    block = classify_boundary(svf, region_from_grid(grid), grid, spacing)
    return split_simple_block(block, spec.split_axis, spec.split_coordinate, svf, spacing)


def family_for(svf, spec, field, cells):
    pair = build_pair(svf, spec)
    verdict = certify_pair(pair)
    fam = synthesize(pair, verdict.k, field, spec.reference_field, SynthesisConfig(lyapunov=LyapunovConfig(cells=cells)))
    return svf, pair, verdict, fam


@pytest.fixture(scope="session")
def interval1d():
    return family_for(interval1d_samples(), INTERVAL1D_BLOCK, interval1d_field, (96,))


@pytest.fixture(scope="session")
def disk2d():
    return family_for(disk2d_samples(), DISK2D_BLOCK, disk2d_field, (48, 24))
