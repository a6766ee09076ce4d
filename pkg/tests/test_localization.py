from __future__ import annotations

import dataclasses
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anderson_msa.errors import NotNormalized, PreconditionError
from anderson_msa.harness import Thresholds
from anderson_msa.lattice import make_box
from anderson_msa.localization import (
    _assignment,
    classify_box,
    is_exp_localized,
    is_poly_localized,
    is_subexp_localized,
    label_sites,
    implication_applies,
    implied_sel_rate,
)
from anderson_msa.operator import box_hamiltonian, build_hamiltonian, potential_field
from anderson_msa.parameters import solve_parameters
from anderson_msa.spectral import Eigensystem, eigensystem

BOX200 = make_box(0, 200)
X0 = (0,)


def profile(box, x, f):
    dist = np.abs(box.region.coords - np.array(x)).max(axis=1)
    v = f(dist.astype(float))
    return v / np.linalg.norm(v)


def delta(box, x):
    v = np.zeros(len(box))
    v[box.region.index[x]] = 1.0
    return v


def test_poly_examples():
    assert is_poly_localized(delta(BOX200, X0), X0, 50.0, BOX200)
    const = np.full(201, 201**-0.5)
    assert not is_poly_localized(const, X0, 2, BOX200)
    phi = profile(BOX200, X0, lambda r: 2.0**-r)
    assert not is_poly_localized(phi, X0, 2, BOX200)
    assert is_poly_localized(phi, X0, 1, BOX200)


def test_subexp_examples():
    assert is_subexp_localized(delta(BOX200, X0), X0, 0.9, BOX200)
    assert not is_subexp_localized(np.full(201, 201**-0.5), X0, 0.5, BOX200)
    assert not is_subexp_localized(profile(BOX200, X0, lambda r: np.exp(-r)), X0, 0.5, BOX200)


def test_exp_examples():
    box = make_box(0, 100)
    assert is_exp_localized(delta(box, X0), X0, 100.0, box, 0.5)
    phi = profile(box, X0, lambda r: np.exp(-0.5 * r))
    assert is_exp_localized(phi, X0, 0.4, box, 0.5)
    assert not is_exp_localized(phi, X0, 0.6, box, 0.5)


def test_exp_only_tests_beyond_l_tau():
    box = make_box(0, 100)  # L_tau = 95 at tau = 0.99
    x = (-50,)

    def two_point(y):
        v = np.zeros(101)
        v[box.region.index[x]] = 1.0
        v[box.region.index[y]] = 0.5
        return v / np.linalg.norm(v)

    assert is_exp_localized(two_point((44,)), x, 1.0, box, 0.99)
    assert not is_exp_localized(two_point((45,)), x, 1.0, box, 0.99)


def test_predicate_preconditions():
    with pytest.raises(NotNormalized):
        is_poly_localized(np.ones(201), X0, 1, BOX200)
    with pytest.raises(PreconditionError):
        is_poly_localized(delta(BOX200, X0), (500,), 1, BOX200)
    with pytest.raises(PreconditionError):
        is_subexp_localized(delta(BOX200, X0), X0, 1.5, BOX200)


def random_unit(n, seed, decay):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n) * np.exp(-decay * np.arange(n))
    return v / np.linalg.norm(v)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 2), st.floats(0.1, 5), st.floats(0.1, 5))
def test_poly_monotone_in_theta(seed, decay, t1, t2):
    box = make_box(50, 100)
    x = (0,)
    phi = random_unit(101, seed, decay)
    lo, hi = sorted((t1, t2))
    if is_poly_localized(phi, x, hi, box):
        assert is_poly_localized(phi, x, lo, box)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 2), st.floats(0.01, 3), st.floats(0.01, 3))
def test_exp_monotone_in_m(seed, decay, m1, m2):
    box = make_box(50, 100)
    phi = random_unit(101, seed, decay)
    lo, hi = sorted((m1, m2))
    if is_exp_localized(phi, (0,), hi, box, 0.5):
        assert is_exp_localized(phi, (0,), lo, box, 0.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 2), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_subexp_monotone_in_s(seed, decay, s1, s2):
    box = make_box(50, 100)
    phi = random_unit(101, seed, decay)
    lo, hi = sorted((s1, s2))
    if is_subexp_localized(phi, (0,), hi, box):
        assert is_subexp_localized(phi, (0,), lo, box)


def brute_best(amp):
    n = amp.shape[0]
    with np.errstate(divide="ignore"):
        logs = np.log(amp)
    return max(sum(logs[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.floats(0, 2, allow_nan=False), st.integers(0, 2**40))
def test_labeling_is_optimal_against_brute_force(n, eps, seed):
    box = make_box(0.5 * ((n + 1) % 2), n - 1)
    es = eigensystem(box_hamiltonian(box, eps, seed))
    lab = label_sites(es, box)
    assert lab.is_bijection()
    amp = np.abs(es.vectors)
    with np.errstate(divide="ignore"):
        got = float(np.log(amp[np.arange(n), lab.label_index]).sum())
    assert got == pytest.approx(brute_best(amp), abs=1e-9)


def test_identity_labeling_at_zero_coupling():
    box = make_box(0, 30)
    op = box_hamiltonian(box, 0.0, seed=3)
    lab = label_sites(eigensystem(op), box)
    for s in box.region.sites:
        phi, lam = lab.eigenpair(s)
        assert lam == op.potential[box.region.index[s]]
        assert phi[box.region.index[s]] == 1.0


def test_two_by_two_labeling():
    box = make_box(0.5, 1)
    es = eigensystem(build_hamiltonian(potential_field(box, [0.0, 1.0]), 0.1))
    lab = label_sites(es, box)
    assert lab.eigenvalue((0,)) == pytest.approx((1 - math.sqrt(1.04)) / 2, abs=1e-12)
    assert lab.eigenvalue((1,)) == pytest.approx((1 + math.sqrt(1.04)) / 2, abs=1e-12)
    assert lab.peak[0] == pytest.approx(0.9951, abs=1e-4)


def test_assignment_fallback_flags_degenerate():
    amp = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
    label, degenerate = _assignment(amp)
    assert degenerate and sorted(label) == [0, 1, 2]
    label, degenerate = _assignment(np.eye(3)[:, [2, 0, 1]])
    assert not degenerate and list(label) == [1, 2, 0]


def test_labeled_csv(tmp_path):
    box = make_box(0, 10)
    lab = label_sites(eigensystem(box_hamiltonian(box, 0.1, seed=1)), box)
    lines = lab.to_csv(tmp_path / "lab.csv").read_text().splitlines()
    assert len(lines) == 12 and lines[0].startswith("site,index,lambda")


def min_gap(values):
    return np.diff(np.sort(values)).min()


@pytest.mark.parametrize("seed", range(10))
def test_zero_coupling_pl_verdict_is_the_gap_test(seed):
    box = make_box(0, 40)
    op = box_hamiltonian(box, 0.0, seed)
    q = 2.0
    v = classify_box(op, "PL", Thresholds(q, None, None), 100.0)
    assert v.eigensystem_ok
    assert v.verdict == bool(min_gap(op.potential) >= 40.0 ** (-q))


def test_verdict_witness_and_json():
    box = make_box(0, 40)
    op = box_hamiltonian(box, 0.5, seed=1)
    v = classify_box(op, "PL", Thresholds(3.0, None, None), 5.0)
    assert not v.eigensystem_ok and v.witness is not None
    x, y = v.witness
    assert max(abs(a - b) for a, b in zip(x, y)) >= v.thresholds["Lprime"]
    again = classify_box(op, "PL", Thresholds(3.0, None, None), 5.0)
    assert again.dumps() == v.dumps()
    assert v.to_json()["verdict"] is False


def test_classify_needs_geometry():
    box = make_box(0, 20)
    op = build_hamiltonian(potential_field(box, np.linspace(0, 4, 21)), 0.0)
    with pytest.raises(PreconditionError):
        classify_box(op, "PL", Thresholds(1.0, None, None), 1.0)
    with pytest.raises(PreconditionError):
        classify_box(op, "XX", Thresholds(1.0, None, None), 1.0, box=box)
    assert classify_box(op, "PL", Thresholds(1.0, None, None), 1.0, box=box).verdict


def test_l_prime_zero_makes_the_site_itself_far():
    box = make_box(0, 10)
    op = build_hamiltonian(potential_field(box, np.linspace(0, 2, 11)), 0.0)
    v = classify_box(op, "PL", Thresholds(1.0, None, None), 1.0, box=box)
    assert v.witness == ((-5,), (-5,))


def test_sel_and_loc_use_exp_spacing():
    box = make_box(0, 40)
    op = box_hamiltonian(box, 1e-3, seed=2)
    th = Thresholds(0.5, 0.9, 0.5)  # gap 40**-0.5 is unattainable, exp(-40**0.9) is easy
    assert not classify_box(op, "PL", th, 1.0).spacing_ok
    assert classify_box(op, "SEL", th, 0.1).spacing_ok
    assert classify_box(op, "LOC", th, 0.1).spacing_ok


def test_implication_conditions_at_240():
    golden = solve_parameters(12, 0.3)
    assert not implication_applies(1.0, 240, golden)  # L_tau > L' for the solved tau
    hand = dataclasses.replace(golden, tau=0.45)
    assert implication_applies(1.0, 240, hand)
    assert implied_sel_rate(1.0, 240) == pytest.approx(1 - math.log(40) / math.log(240))


@pytest.mark.parametrize("seed", range(5))
def test_ml_true_boxes_carry_the_implication(seed):
    hand = dataclasses.replace(solve_parameters(12, 0.3), tau=0.45)
    box = make_box(0, 240)
    op = box_hamiltonian(box, 1e-4, seed)
    v = classify_box(op, "ML", hand, 1.0)
    if v.verdict:
        assert v.implication is True
    else:
        assert v.implication is None
