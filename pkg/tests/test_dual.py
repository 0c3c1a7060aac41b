import numpy as np
import pytest
from fractions import Fraction

import momentflow as mf
from momentflow.dual import DualElement, as_dual, dual_moment, rebalance
from momentflow.grid import GridFunction, Polynomial


def test_total_mass_examples():
    assert mf.total_mass(DualElement(Polynomial(), 1)) == 1
    assert mf.total_mass(DualElement(Polynomial.constant(2), -2)) == 0
    assert mf.total_mass(DualElement(Polynomial((-2, 6)), 0)) == 1


def test_dual_moment_atom_only_counts_at_order_zero():
    atom = DualElement(Polynomial(), Fraction(1))
    assert dual_moment(atom, 0) == 1
    for n in (1, 2, 5):
        assert dual_moment(atom, n) == 0


def test_zero_mass_embed():
    zero = mf.zero_mass_embed(Polynomial())
    assert zero.atom == 0
    two = mf.zero_mass_embed(Polynomial.constant(2))
    assert two.atom == -2
    assert mf.total_mass(two) == 0


def test_zero_mass_embed_invisible_to_centered_primitive():
    # the attached atom never changes the density's centered primitive,
    # so pairings against embedded and raw data agree up to the mass term
    g = Polynomial((1, -3, 2))
    h = Polynomial((0, 1, 1))
    for n in (1, 2, 3):
        lhs = mf.dual_inner(mf.zero_mass_embed(g), as_dual(h), n)
        raw = mf.dual_inner(as_dual(g), as_dual(h), n)
        assert lhs - raw == -mf.moment(g, 0) * mf.moment(h, 0)


def test_rebalance_idempotent():
    u = DualElement(Polynomial((1, 1)), Fraction(5))
    once = rebalance(u)
    twice = rebalance(once)
    assert once == twice
    assert mf.total_mass(once) == 0


def test_dual_inner_examples():
    atom = DualElement(Polynomial(), 1)
    for n in (1, 2, 4):
        assert mf.dual_inner(atom, atom, n) == 1
    ones = DualElement(Polynomial.constant(1), 0)
    assert mf.dual_inner(ones, ones, 1) == Fraction(13, 12)
    zero = DualElement(Polynomial(), 0)
    assert mf.dual_inner(zero, zero, 3) == 0


def test_dual_inner_symmetric_bilinear_positive():
    rng = np.random.default_rng(0)
    for _ in range(10):
        u = as_dual(mf.random_polynomial(rng, 5))
        v = as_dual(mf.random_polynomial(rng, 5))
        w = as_dual(mf.random_polynomial(rng, 5))
        for n in (1, 3):
            assert mf.dual_inner(u, v, n) == mf.dual_inner(v, u, n)
            combo = DualElement(2 * u.regular + 3 * v.regular, 0)
            lhs = mf.dual_inner(combo, w, n)
            rhs = 2 * mf.dual_inner(u, w, n) + 3 * mf.dual_inner(v, w, n)
            assert lhs == rhs
            assert mf.dual_norm_sq(u, n) > 0


def test_dual_inner_rejects_mixed_kinds():
    with pytest.raises(TypeError):
        mf.dual_inner(as_dual(Polynomial.constant(1)),
                      as_dual(GridFunction(np.ones(17))), 1)


def test_dual_norms_vanish_together():
    rng = np.random.default_rng(1)
    for _ in range(5):
        u = mf.zero_mass_embed(mf.random_polynomial(rng, 6))
        for n, m in ((1, 3), (2, 5)):
            a, b = mf.dual_norm_sq(u, n), mf.dual_norm_sq(u, m)
            assert (a == 0) == (b == 0)


def test_norm_equivalence_report():
    report = mf.norm_equivalence_report(samples=1000, n_list=(2, 3), seed=0)
    for n in (2, 3):
        stats = report[n]
        assert 0.0 < stats["min"] <= stats["max"] < np.inf
        assert stats["samples"] == 1000
    atom = DualElement(Polynomial(), 1)
    for n in (2, 5):
        ratio = mf.dual_norm_sq(atom, n) / mf.dual_norm_sq(atom, 1)
        assert ratio == 1


def test_interpolation_probe_constant_case():
    # g = 1, n = 1: |mu_1|^2 = 1/4, L2 norm 1, dual norm sqrt(13/12)
    expected = 0.25 / float(Fraction(13, 12)) ** 0.5
    g = Polynomial.constant(1)
    l2 = float((g * g).definite_integral()) ** 0.5
    dual = float(mf.dual_norm_sq(as_dual(g), 1)) ** 0.5
    assert float(mf.moment(g, 1)) ** 2 / (l2 * dual) == pytest.approx(expected,
                                                                      rel=1e-12)
    assert expected == pytest.approx(0.2402, abs=5e-4)
    probe = mf.interpolation_constant_probe(1, samples=50, seed=0)
    assert np.isfinite(probe) and probe > 0


def test_interpolation_ratio_stable_under_refinement():
    vals = []
    for n_pts in (257, 514):
        g = GridFunction(np.ones(n_pts))
        l2 = mf.quadrature(GridFunction(g.values ** 2)) ** 0.5
        dual = mf.dual_norm_sq(as_dual(g), 1) ** 0.5
        vals.append(mf.moment(g, 1) ** 2 / (l2 * dual))
    assert abs(vals[0] - vals[1]) / vals[0] < 0.1


def test_constraint_space_rows_and_rank():
    n_pts = 33
    assert mf.ConstraintSpace.zero_zero().constraint_rows(2, n_pts).shape == (2, n_pts)
    assert mf.ConstraintSpace.zero_free().constraint_rows(2, n_pts).shape == (1, n_pts)
    assert mf.ConstraintSpace.line(0.5).constraint_rows(2, n_pts).shape == (1, n_pts)
    assert mf.ConstraintSpace.full().constraint_rows(2, n_pts).shape == (0, n_pts)
    rows = mf.ConstraintSpace.zero_zero().constraint_rows(2, n_pts)
    assert np.linalg.matrix_rank(rows) == 2


def test_constraint_space_validation():
    with pytest.raises(ValueError):
        mf.ConstraintSpace("diagonal")
    with pytest.raises(ValueError):
        mf.ConstraintSpace("line")
    with pytest.raises(ValueError):
        mf.ConstraintSpace("zero_zero", slope=1.0)
    assert mf.ConstraintSpace.line(0.25).label() == "line(slope=0.25)"
    assert mf.ConstraintSpace.zero_free().forces_zero_mass


def test_constraint_violation():
    ones = GridFunction(np.ones(33))
    assert mf.ConstraintSpace.zero_zero().violation(ones, 2) == pytest.approx(1.0)
    assert mf.ConstraintSpace.full().violation(ones, 2) == 0.0
