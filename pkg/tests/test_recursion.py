from __future__ import annotations

import math
from decimal import Decimal, localcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anderson_msa.errors import PreconditionError
from anderson_msa.recursion import (
    init_bound,
    level_spacing_bound,
    level_spacing_constant,
    m0_rate,
    m0_star_rate,
    msa1_direct,
    msa1_envelope,
    msa1_trace,
    msa2_mass,
    msa2_rho,
    msa3_direct,
    msa3_log_threshold,
    msa3_trace,
    theta_eps_L,
)


def msa1_bound(Y, d):
    return 0.5 * (2 * Y) ** (-2 * d)


def test_msa1_p1_examples():
    t = msa1_trace(400, 1, 5, 3.5e-7, 20, kmax=3)
    want = 640000 * 3.5e-7**2 + 0.5 * 8000.0**-5
    assert t.rows[1].value == pytest.approx(want, rel=1e-12)
    assert t.rows[1].value == pytest.approx(7.84e-8, rel=1e-9)
    zero = msa1_trace(400, 1, 5, 0.0, 20, kmax=1, stop_at_K0=False)
    assert zero.rows[1].value == pytest.approx(0.5 * 8000.0**-5, rel=1e-12)
    assert zero.K0 == 0


def test_msa1_k0_zero_example():
    t = msa1_trace(400, 1, 0.1875, 1e-7, 1000)
    assert t.K0 == 0 and len(t.rows) == 1
    assert t.rows[0].target == pytest.approx(1000**-0.1875, rel=1e-12)


def test_msa1_precondition_names_bound():
    with pytest.raises(PreconditionError, match="P0"):
        msa1_trace(400, 1, 5, msa1_bound(400, 1), 20)
    with pytest.raises(PreconditionError):
        msa1_trace(399, 1, 5, 0.0, 20)


ENVELOPE_GRID = [
    (400, 1, 5, f * msa1_bound(400, 1), L0)
    for f in (0.45, 0.9, 0.99)
    for L0 in (20, 50)
] + [
    (400, 2, 8, 0.9 * msa1_bound(400, 2), 20),
    (800, 1, 4, 0.9 * msa1_bound(800, 1), 30),
    (1000, 1, 6, 0.99 * msa1_bound(1000, 1), 25),
    (400, 3, 12, 0.9 * msa1_bound(400, 3), 20),
]


@pytest.mark.parametrize("args", ENVELOPE_GRID)
def test_msa1_envelope_and_k0(args):
    t = msa1_trace(*args)
    assert t.K0 is not None and not t.capped
    checks = msa1_envelope(t)
    assert all(c.holds for c in checks)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.5, 8), st.floats(10, 1000))
def test_msa1_monotone_coupling(a, b, p, L0):
    lo, hi = sorted((a, b))
    bound = msa1_bound(400, 1) * (1 - 1e-9)
    t1 = msa1_trace(400, 1, p, lo * bound, L0, kmax=12, stop_at_K0=False)
    t2 = msa1_trace(400, 1, p, hi * bound, L0, kmax=12, stop_at_K0=False)
    assert np.all(t1.log_values() <= t2.log_values())


def test_msa1_log_matches_direct():
    t = msa1_trace(400, 1, 5, 3.5e-7, 20, kmax=4, stop_at_K0=False)
    direct = msa1_direct(400, 1, 5, 3.5e-7, 20, 4)
    np.testing.assert_allclose(t.values(), direct, rtol=1e-12)


def test_trace_scales_are_geometric():
    t = msa1_trace(400, 1, 5, 3.5e-7, 20, kmax=6, stop_at_K0=False)
    for r in t.rows:
        assert r.L == pytest.approx(400**r.k * 20, rel=1e-13)


MSA3_DIRECT = [(800, 0.1, 1, 0.09, 1e-8, 1e20), (800, 0.1, 1, 0.09, 0.0, 1e20), (2000, 0.2, 1, 0.15, 1e-9, 1e12)]


@pytest.mark.parametrize("args", MSA3_DIRECT)
def test_msa3_log_matches_direct(args):
    t = msa3_trace(*args, kmax=6, stop_at_K0=False)
    direct = msa3_direct(*args, 6)
    for row, want in zip(t.rows, direct):
        if want >= 1e-300:
            assert row.value == pytest.approx(want, rel=1e-12)


def decimal_msa3(Y, s, d, zeta, P0, L0, kmax):
    with localcontext() as ctx:
        ctx.prec = 60
        ctx.Emin = -10**9
        N = math.floor(Y**s)
        c = Decimal(2 * Y) ** ((N + 1) * d)
        P, L = Decimal(P0), Decimal(L0)
        out = [(P, (-(L ** Decimal(zeta))).exp())]
        for _ in range(kmax):
            L *= Decimal(Y)
            P = c * P ** (N + 1) + (-(L ** Decimal(zeta))).exp() / 2
            out.append((P, (-(L ** Decimal(zeta))).exp()))
        return out


def test_msa3_golden_k0():
    args = (160000, 0.5, 1, 0.3, 1e-6, 1e6)
    t = msa3_trace(*args)
    oracle = decimal_msa3(*args, 3)
    k0 = next(k for k, (P, target) in enumerate(oracle) if P <= target)
    assert t.K0 == k0 == 2
    for row, (P, _) in zip(t.rows, oracle):
        assert row.log_value == pytest.approx(float(P.ln()), rel=1e-10)


def test_msa3_zero_start():
    t = msa3_trace(800, 0.1, 1, 0.09, 0.0, 1e20, kmax=2, stop_at_K0=False)
    assert t.rows[1].log_value == pytest.approx(math.log(0.5) - (800 * 1e20) ** 0.09, rel=1e-12)
    assert t.K0 is not None and t.K0 <= 1


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.06, 0.099))
def test_msa3_monotone_coupling(a, b, zeta):
    lo, hi = sorted((a, b))
    bound = math.exp(msa3_log_threshold(800, 0.1, 1)) * (1 - 1e-9)
    t1 = msa3_trace(800, 0.1, 1, zeta, lo * bound, 1e6, kmax=8, stop_at_K0=False)
    t2 = msa3_trace(800, 0.1, 1, zeta, hi * bound, 1e6, kmax=8, stop_at_K0=False)
    assert np.all(t1.log_values() <= t2.log_values())
    assert np.all(t1.values() >= 0)


def test_msa3_preconditions():
    with pytest.raises(PreconditionError):
        msa3_trace(700, 0.1, 1, 0.05, 0.0, 10)
    with pytest.raises(PreconditionError):
        msa3_trace(800, 0.1, 1, 0.2, 0.0, 10)
    with pytest.raises(PreconditionError, match="P0"):
        msa3_trace(800, 0.1, 1, 0.05, 1.0, 10)


def test_msa2_no_erosion():
    t = msa2_mass(0.1, 1.04, 3.375, 0.99, 0.5, 1e4, kmax=20, C=0)
    assert all(r.value == pytest.approx(0.1, rel=1e-15) for r in t.rows)
    assert t.meta["half_mass"]


def test_msa2_rate_and_unit_constant():
    assert msa2_rho(1.04, 0.99, 0.5) == pytest.approx(0.005, rel=1e-9)
    t = msa2_mass(0.1, 1.04, 3.375, 0.99, 0.5, 1e4, kmax=20, C=1)
    # first factor 1 - 1.04*3.375*1e4**-0.005 is negative: no usable bound
    assert 1 - 1.04 * 3.375 * 1e4**-0.005 < 0
    assert t.meta["clipped_factors"] == 20 and not t.meta["half_mass"]


def test_msa2_small_constant_matches_product():
    t = msa2_mass(0.1, 1.04, 3.375, 0.99, 0.5, 1e4, kmax=20, C=1e-3)
    factors = [1 - 1e-3 * 1.04 * 3.375 * 1e4 ** (-0.005 * 1.04**j) for j in range(20)]
    np.testing.assert_allclose(t.values(), 0.1 * np.concatenate([[1.0], np.cumprod(factors)]), rtol=1e-12)
    assert t.meta["half_mass"]


def test_msa2_preconditions():
    with pytest.raises(PreconditionError):
        msa2_mass(1e-3, 1.04, 3.375, 0.99, 0.5, 1e4)
    with pytest.raises(PreconditionError):
        msa2_mass(0.1, 1.04, 3.375, 0.99, 0.995, 1e4)


def test_level_spacing_examples():
    assert level_spacing_constant(1, 1, 0.1, 1, 1) == pytest.approx(4.4, rel=1e-15)
    b = level_spacing_bound(100, 101, 1, 1, 0.1, 1, 1, "poly", q=3)
    assert b == pytest.approx(1 - 4.4e-6 * 10201, rel=1e-12)
    assert b == pytest.approx(0.955116, abs=5e-7)
    assert level_spacing_bound(100, 0, 1, 1, 0.1, 1, 1, "poly", q=3) == 1.0
    # 1 - 4.4 e^-10 101^2 is negative, so the bound clamps to 0
    assert 1 - 4.4 * math.exp(-10) * 10201 < 0
    assert level_spacing_bound(100, 101, 1, 1, 0.1, 1, 1, "exp", beta=0.5) == 0.0
    assert level_spacing_constant(0.75, 1, 0.1, 1, 1) == pytest.approx(2**0.5 * 64 * 2.2)


def test_init_bound_examples():
    b = init_bound(200, 1, 3, 1, 1, 0.25 * 200.0**-3)
    assert b.theta_eL == pytest.approx(10 * math.log(3) / math.log(200), rel=1e-12)
    assert b.theta_eL == pytest.approx(2.0735, abs=5e-5)
    b = init_bound(100, 1, 3, 1, 1, 0.25e-6)
    assert b.prob_lower == pytest.approx(1 - 0.5 * 101**2 * 4e-6, rel=1e-12)
    assert b.prob_lower == pytest.approx(0.979598, abs=5e-7)
    assert init_bound(100, 1, 3, 1, 1, 1.0).prob_lower == 0.0
    with pytest.raises(PreconditionError):
        init_bound(100, 1, 2, 1, 1, 1e-6)


def test_theta_monotone_by_finite_differences():
    Ls = np.arange(200, 4001, 20.0)
    ratio = 0.25
    th = [theta_eps_L(L, 1, 3, ratio * L**-3) for L in Ls]
    assert np.all(np.diff(th) > 0)
    eps = np.geomspace(1e-9, 1e-3, 50)
    th = [theta_eps_L(200, 1, 3, e) for e in eps]
    assert np.all(np.diff(th) < 0)


def test_rate_formulas():
    assert m0_star_rate(1000, 1, 3, 0.99, 1.04) == pytest.approx(5.5 * 1000 ** -(0.01 + 1 / 1.04) * math.log(1000) / 8)
    assert m0_rate(1000, 0.99, 0.93, 1.25) == pytest.approx(1000 ** -(0.01 + 0.07 / 1.25) / 8)


def test_trace_exports(tmp_path):
    t = msa1_trace(400, 1, 5, 3.5e-7, 20)
    lines = t.to_csv(tmp_path / "a" / "t.csv").read_text().splitlines()
    assert lines[0] == "k,L_k,log_value,log_target,met" and len(lines) == len(t.rows) + 1
    g = t.to_gnuplot(tmp_path / "t.dat").read_text().splitlines()
    assert g[0].startswith("#") and len(g) == len(t.rows) + 1
    k, v = g[1].split()
    assert int(k) == 0 and float(v) == pytest.approx(math.log(3.5e-7))
