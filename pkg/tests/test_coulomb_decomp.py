# tests/test_coulomb_decomp.py
import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError

from app.coulomb_decomp import (
    BallOverlap,
    SplitPotential,
    ball_overlap,
    bose_background_bound,
    certify_positive_type,
    certify_transform,
    electrostatic_bound_margin,
    long_range_gram,
    reconstruct_coulomb,
    v_long,
    v_long_quadrature,
    v_short,
    v_short_quadrature,
    weighted_v_short,
)
from app.errors import DomainError
from app.statmech_core import Statistics, density_from_fugacity, solve_fugacity


def test_ball_overlap_values():
    print("\n🧪 Testing ball_overlap closed form")
    assert ball_overlap(1.0, 1.0) == pytest.approx(5.0 * math.pi / 12.0, rel=1e-15)
    assert ball_overlap(2.0, 0.0) == pytest.approx(4.0 * math.pi / 3.0 * 8.0)
    assert ball_overlap(1.0, 2.0) == 0.0
    assert ball_overlap(1.0, 7.0) == 0.0
    assert BallOverlap(r=1.5).volume == pytest.approx(ball_overlap(1.5, 0.0))
    values = ball_overlap(1.0, np.linspace(0.0, 2.5, 26))
    assert np.all(np.diff(values) <= 0)
    with pytest.raises(DomainError):
        ball_overlap(0.0, 1.0)
    with pytest.raises(DomainError):
        ball_overlap(1.0, -0.5)
    with pytest.raises(ValidationError):
        BallOverlap(r=-1.0)
    print("✅ ball_overlap test passed!")


def test_long_range_part_values():
    print("\n🧪 Testing V_long at landmark distances")
    for R in (0.5, 1.0, 3.0):
        assert v_long(0.0, R) == pytest.approx(4.0 / (3.0 * R), rel=1e-15)
        assert v_long(2.0 * R, R) == pytest.approx(1.0 / (2.0 * R), rel=1e-14)
        assert v_long(3.0 * R, R) == pytest.approx(1.0 / (3.0 * R), rel=1e-15)
        assert v_short(2.0 * R, R) == 0.0
        assert v_short(5.0 * R, R) == 0.0
    s = np.linspace(0.0, 4.0, 81)
    assert np.all(np.diff(v_long(s, 1.0)) <= 0)
    with pytest.raises(DomainError):
        v_short(0.0, 1.0)
    with pytest.raises(DomainError):
        v_long(1.0, -1.0)
    print("✅ V_long landmark test passed!")


@settings(max_examples=80, deadline=None)
@given(
    R=st.floats(min_value=0.05, max_value=20.0),
    t=st.floats(min_value=1e-3, max_value=5.0),
)
def test_split_identity(R, t):
    s = t * R
    assert (v_short(s, R) + v_long(s, R)) * s == pytest.approx(1.0, rel=1e-12)
    assert v_short(s, R) >= 0.0


@pytest.mark.parametrize("s", [0.1, 1.0, 10.0])
def test_reconstruct_coulomb(s):
    print(f"\n🧪 Testing the ball-overlap reconstruction of 1/s at s={s}")
    assert reconstruct_coulomb(s) == pytest.approx(1.0 / s, rel=1e-10)
    print("✅ Coulomb reconstruction test passed!")


@pytest.mark.parametrize("s,R", [(0.3, 1.0), (1.9, 1.0), (2.5, 1.0), (0.7, 0.4)])
def test_closed_forms_match_quadrature(s, R):
    print(f"\n🧪 Testing closed-form split against quadrature (s={s}, R={R})")
    assert v_long_quadrature(s, R) == pytest.approx(v_long(s, R), rel=1e-10)
    expected_short = v_short(s, R)
    assert v_short_quadrature(s, R) == pytest.approx(expected_short, rel=1e-10, abs=1e-14)
    print("✅ closed form vs quadrature test passed!")


def test_split_potential_table():
    print("\n🧪 Testing SplitPotential.table")
    split = SplitPotential(R=1.0)
    short, long = split.table(4.0, 200)
    assert short.grid.size == 200 and short.grid[-1] == pytest.approx(4.0)
    assert np.allclose((short.values + long.values) * short.grid, 1.0, rtol=1e-12)
    assert np.all(short.values[short.grid >= 2.0] == 0.0)
    with pytest.raises(ValidationError):
        SplitPotential(R=0.0)
    print("✅ SplitPotential table test passed!")


def test_weighted_short_part_is_finite_at_origin():
    print("\n🧪 Testing s * v_short near s = 0")
    for R in (0.5, 1.0, 2.0):
        assert weighted_v_short(0.0, R) == pytest.approx(1.0, rel=1e-15)
        s = np.linspace(0.05, 3.0 * R, 40)
        assert np.allclose(weighted_v_short(s, R), s * v_short(s, R), rtol=1e-13, atol=0.0)
    assert weighted_v_short(2.0, 1.0) == 0.0
    with pytest.raises(DomainError):
        v_short(0.0, 1.0)
    with pytest.raises(DomainError):
        weighted_v_short(-0.1, 1.0)
    print("✅ weighted short part test passed!")


def test_long_range_part_is_positive_type():
    print("\n🧪 Testing the positive-type certificate of V_long")
    for R in (0.5, 1.0, 2.0):
        report = certify_positive_type(R)
        assert report.passed
        assert report.points == 512
        # k -> 0 recovers the Coulomb coefficient
        assert report.details["small_k_limit"] == pytest.approx(1.0, abs=1e-3)
    print("✅ positive-type certificate test passed!")


def test_certificate_rejects_counterexample():
    print("\n🧪 Testing that V_short - delta/s fails positivity")
    grid = np.geomspace(0.01, 50.0, 512)
    report = certify_transform("counterexample", lambda s: weighted_v_short(s, 1.0), -1e-3, 2.0, grid)
    assert not report.passed
    assert report.worst_margin < -1e-8
    assert report.violating_points and "k" in report.violating_points[0]
    with pytest.raises(DomainError):
        certify_transform("coarse", lambda s: weighted_v_short(s, 1.0), 0.0, 2.0, np.linspace(0.1, 1.0, 10))
    print("✅ counterexample rejection test passed!")


def test_long_range_gram_is_positive_semidefinite():
    print("\n🧪 Testing the V_long Gram matrix")
    rng = np.random.default_rng(7)
    points = rng.uniform(0.0, 3.0, size=(30, 3))
    gram = long_range_gram(points, 0.8)
    assert np.allclose(np.diag(gram), 4.0 / (3.0 * 0.8))
    assert np.allclose(gram, gram.T)
    assert np.linalg.eigvalsh(gram).min() >= -1e-10
    print("✅ Gram matrix test passed!")


def test_electrostatic_bound_margin_nonnegative():
    print("\n🧪 Testing the electrostatic lower bound against a lattice background")
    rng = np.random.default_rng(11)
    axis = (np.arange(4) + 0.5) * 0.5
    background = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    for _ in range(20):
        particles = rng.uniform(0.0, 2.0, size=(5, 3))
        charges = np.full(background.shape[0], 5.0 / background.shape[0])
        assert electrostatic_bound_margin(particles, background, charges, 0.6) >= -1e-10
    # one particle sitting on a single unit charge: margin is exactly zero
    origin = np.zeros((1, 3))
    assert electrostatic_bound_margin(origin, origin, [1.0], 1.0) == pytest.approx(0.0, abs=1e-14)
    print("✅ electrostatic bound test passed!")


@pytest.mark.parametrize("z,R", [(0.3, 1.0), (0.8, 0.5)])
def test_bose_background_chain(z, R):
    print(f"\n🧪 Testing the Bose background chain (z={z}, R={R})")
    state = solve_fugacity(1.0, density_from_fugacity(1.0, z, 1, Statistics.BOSE), 1, Statistics.BOSE)
    left, middle, right = bose_background_bound(state, R)
    assert 0.0 < left <= middle * (1.0 + 1e-10)
    assert middle <= right * (1.0 + 1e-10)
    with pytest.raises(DomainError):
        bose_background_bound(solve_fugacity(1.0, 0.01, 1, Statistics.FERMI), R)
    print("✅ Bose background chain test passed!")
