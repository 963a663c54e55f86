# tests/test_bounds_lab.py
import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError

from app.bounds_lab import (
    HqPoint,
    SweepGrid,
    d_z_constant,
    f_first_derivative,
    f_second_derivative,
    h_q,
    h_q_naive,
    h_zero,
    lemma_constants,
    lemma_margins,
    sweep_lemma1,
    sweep_lemma2,
    taylor_identity_check,
)
from app.errors import DomainError
from app.statmech_core import Statistics
from app.suites.lemmas import second_difference

FERMI, BOSE = Statistics.FERMI, Statistics.BOSE


def point(p, q, beta=1.0, z=0.5, stats=FERMI):
    return HqPoint(p=tuple(p), q=tuple(q), beta=beta, z=z, stats=stats)


def h_q_reference(p, q, beta, z, stats):
    """h_q(p) in 50-digit arithmetic."""
    mpmath.mp.dps = 50
    sign = stats.sign
    p, q = [mpmath.mpf(x) for x in p], [mpmath.mpf(x) for x in q]
    plus = sum((a + b) ** 2 for a, b in zip(p, q))
    minus = sum((a - b) ** 2 for a, b in zip(p, q))
    g_plus = 1 / (mpmath.exp(beta * plus) / z + sign)
    g_minus = 1 / (mpmath.exp(beta * minus) / z + sign)
    return float(mpmath.log((2 - sign * (g_plus + g_minus)) / (g_plus + g_minus)))


@pytest.mark.parametrize("stats", [FERMI, BOSE])
def test_h_q_matches_high_precision(stats):
    print(f"\n🧪 Testing h_q against 50-digit arithmetic ({stats.value})")
    cases = [((1.0, 0.0, 0.0), (0.3, 0.0, 0.0)), ((0.2, -0.4, 0.1), (0.5, 0.5, -0.2)), ((3.0, 1.0, 0.0), (0.0, 2.0, 1.0))]
    for p, q in cases:
        value = h_q(point(p, q, 1.0, 0.5, stats))
        assert value == pytest.approx(h_q_reference(p, q, 1.0, 0.5, stats), rel=1e-13)
        assert value == pytest.approx(h_q_naive(point(p, q, 1.0, 0.5, stats)), rel=1e-9)
    print("✅ high-precision h_q test passed!")


def test_h_q_survives_where_naive_form_fails():
    print("\n🧪 Testing the log-stable h_q at extreme momenta")
    far = point((40.0, 0.0, 0.0), (0.0, 0.0, 0.0), beta=1.0, z=0.5)
    assert h_q(far) == pytest.approx(h_zero(far), rel=1e-14)
    with pytest.raises((ZeroDivisionError, ValueError, OverflowError)):
        h_q_naive(far)
    print("✅ extreme momentum test passed!")


@settings(max_examples=50, deadline=None)
@given(
    coords=st.lists(st.floats(min_value=-3.0, max_value=3.0), min_size=6, max_size=6),
    z=st.floats(min_value=0.05, max_value=0.95),
    stats=st.sampled_from([FERMI, BOSE]),
)
def test_h_q_symmetries(coords, z, stats):
    p, q = coords[:3], coords[3:]
    base = h_q(point(p, q, 1.0, z, stats))
    assert h_q(point(p, [-x for x in q], 1.0, z, stats)) == pytest.approx(base, rel=1e-12, abs=1e-12)
    assert h_q(point([-x for x in p], q, 1.0, z, stats)) == pytest.approx(base, rel=1e-12, abs=1e-12)
    assert h_q(point(p, [0.0] * 3, 1.0, z, stats)) == pytest.approx(h_zero(point(p, q, 1.0, z, stats)), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("z", [0.01, 0.5, 1.0, 7.0])
def test_fermi_d_z_is_lambert_w(z):
    print(f"\n🧪 Testing the Fermi constant D_z at z={z}")
    # the supremum of zu/(e^u + z) sits at u = 1 + W(z/e) with value W(z/e)
    expected = float(mpmath.lambertw(z / math.e).real)
    assert d_z_constant(z, FERMI) == pytest.approx(expected, rel=1e-10)
    print("✅ Fermi D_z test passed!")


def test_d_z_limits_and_monotonicity():
    print("\n🧪 Testing D_z small-fugacity limits")
    assert d_z_constant(1.0, FERMI) == pytest.approx(0.27846, abs=1e-5)
    assert d_z_constant(1e-4, FERMI) == pytest.approx(1e-4 / math.e, rel=1e-3)
    assert d_z_constant(1e-4, BOSE) == pytest.approx(1e-8 / math.e, rel=1e-3)
    bose = [d_z_constant(z, BOSE) for z in np.linspace(0.05, 0.95, 10)]
    assert np.all(np.diff(bose) > 0)
    with pytest.raises(DomainError):
        d_z_constant(1.0, BOSE)
    constants = lemma_constants(0.5, BOSE)
    assert constants["C_z"] == pytest.approx(2.0)
    assert constants["C_z_prime"] == pytest.approx(1.0 / math.log(2.0))
    print("✅ D_z limits test passed!")


def test_lemma_margins_at_landmarks():
    print("\n🧪 Testing the h_q - h_0 bounds at landmark points")
    for stats, z in ((FERMI, 2.0), (BOSE, 0.6)):
        origin = lemma_margins(point((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), 1.0, z, stats))
        assert all(abs(v) < 1e-12 for v in origin.values())
        far = lemma_margins(point((math.sqrt(50.0), 0.0, 0.0), (0.7, 0.2, 0.0), 1.0, z, stats))
        assert all(v >= 0 for v in far.values()), far
    fermi_keys = set(lemma_margins(point((1.0, 0, 0), (0.5, 0, 0))))
    assert fermi_keys == {"quadratic_lower", "quadratic_upper", "linear_lower", "linear_upper"}
    bose_keys = set(lemma_margins(point((1.0, 0, 0), (0.5, 0, 0), stats=BOSE)))
    assert bose_keys == {"quadratic_lower", "quadratic_upper", "linear_lower"}
    print("✅ landmark margin test passed!")


def test_sweeps_on_small_grid():
    print("\n🧪 Testing the lemma sweeps on a small grid")
    fermi_grid = SweepGrid(magnitudes=[0.1, 1.0, 3.0], cosines=[-1.0, 0.0, 1.0], betas=[0.5, 2.0], zs=[0.3, 4.0])
    report = sweep_lemma1(fermi_grid, workers=2)
    assert report.name == "lemma1_fermi"
    assert report.passed and report.points == fermi_grid.size
    assert sweep_lemma1(fermi_grid, workers=1) == report

    bose_grid = SweepGrid(magnitudes=[0.1, 1.0, 3.0], cosines=[-0.5, 0.5], betas=[1.0], zs=[0.5, 0.9])
    assert sweep_lemma2(bose_grid).passed
    with pytest.raises(DomainError):
        sweep_lemma2(SweepGrid(magnitudes=[1.0], cosines=[0.0], betas=[1.0], zs=[1.0]))
    print("✅ lemma sweep test passed!")


@pytest.mark.parametrize("stats,z", [(FERMI, 0.4), (FERMI, 5.0), (BOSE, 0.8)])
def test_second_derivative_matches_finite_difference(stats, z):
    print(f"\n🧪 Testing f'' against a centered difference ({stats.value}, z={z})")
    pt = point((0.6, -0.3, 0.9), (0.4, 0.8, -0.1), beta=1.3, z=z, stats=stats)
    assert f_first_derivative(pt, 0.0) == pytest.approx(0.0, abs=1e-14)
    for lam in (0.2, 0.5, 0.9):
        exact = f_second_derivative(pt, lam)
        assert second_difference(pt, lam) == pytest.approx(exact, rel=1e-5, abs=1e-6 * pt.beta * pt.q2)
    with pytest.raises(DomainError):
        f_second_derivative(pt, 1.5)
    print("✅ second derivative test passed!")


@pytest.mark.parametrize("stats,z", [(FERMI, 3.0), (BOSE, 0.5)])
def test_taylor_identity(stats, z):
    print(f"\n🧪 Testing h_q - h_0 = ∫(1-λ) f''(λ) dλ ({stats.value})")
    pt = point((1.1, 0.2, -0.5), (0.3, -0.7, 0.4), beta=0.8, z=z, stats=stats)
    assert taylor_identity_check(pt) < 1e-8
    print("✅ Taylor identity test passed!")


def test_hq_point_validation():
    print("\n🧪 Testing HqPoint validation")
    with pytest.raises(ValidationError):
        point((0, 0, 0), (0, 0, 0), z=1.0, stats=BOSE)
    with pytest.raises(ValidationError):
        point((0, 0, 0), (0, 0, 0), beta=0.0)
    assert point((3.0, 4.0, 0.0), (0, 0, 0)).p2 == pytest.approx(25.0)
    print("✅ HqPoint validation test passed!")


@pytest.mark.parametrize("stats,z", [(FERMI, 0.7), (BOSE, 0.4)])
def test_first_difference_vanishes_at_zero(stats, z):
    print(f"\n🧪 Testing the centered first difference of f at lambda = 0 ({stats.value})")
    pt = point((0.8, 0.1, -0.6), (0.5, -0.4, 0.3), beta=1.1, z=z, stats=stats)

    def f(lam):
        return h_q(point(pt.p, [lam * x for x in pt.q], pt.beta, pt.z, pt.stats))

    curvature = f_second_derivative(pt, 0.0)
    for step in (1e-2, 1e-3):
        assert abs((f(step) - f(-step)) / (2.0 * step)) <= 1e-10
        # one-sided growth is quadratic in the step
        assert (f(step) - f(0.0)) / step**2 == pytest.approx(0.5 * curvature, rel=1e-3, abs=1e-6)
    print("✅ first difference test passed!")


def test_sweep_margins_are_unscaled():
    print("\n🧪 Testing that sweep margins are compared without rescaling")
    grid = SweepGrid(magnitudes=[0.5, 7.0, 10.0], cosines=[-1.0, 0.3, 1.0], betas=[2.0], zs=[0.1, 10.0])
    report = sweep_lemma1(grid)
    assert report.passed
    raw = [m for block in report.details.values() for m in block["worst_margins"].values()]
    assert report.worst_margin == pytest.approx(min(raw), rel=1e-15, abs=1e-300)
    assert report.worst_margin >= -1e-9
    print("✅ unscaled sweep margin test passed!")
