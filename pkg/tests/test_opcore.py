"""Operator arithmetic: exact rational core, float layer, exp, norms."""
import math
import random
from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from heavenlab.opcore import (
    EXACT,
    FLOAT,
    DimensionMismatchError,
    ModeMismatchError,
    NonFiniteError,
    Operator,
    commutator,
    frobenius,
    norm_bound,
    operator_exp,
)

from _helpers import random_float_operator, random_rational_operator


# -- oracles first ------------------------------------------------------------


def test_commutator_frozen_value():
    # [e12, e21] = e11 - e22, by hand
    e12 = Operator.unit(2, 0, 1)
    e21 = Operator.unit(2, 1, 0)
    expected = Operator.from_rows([[1, 0], [0, -1]], EXACT)
    assert commutator(e12, e21) == expected


def test_exp_matches_scipy_expm():
    rng = random.Random(101)
    for n in (2, 3, 5):
        for _ in range(5):
            a = random_float_operator(rng, n, scale=1.5)
            ours = operator_exp(a)
            ref = scipy.linalg.expm(np.array(a.rows(), dtype=float))
            assert np.max(np.abs(np.array(ours.rows()) - ref)) < 1e-12


def test_exp_nilpotent_is_exact():
    # exp(e12) = I + e12 with no rounding at all: the series terminates
    a = Operator.unit(2, 0, 1, mode=FLOAT)
    e = operator_exp(a)
    assert e == Operator.from_rows([[1.0, 1.0], [0.0, 1.0]], FLOAT)


def test_exp_diagonal_frozen():
    a = Operator.from_rows([[0.5, 0.0], [0.0, -1.25]], FLOAT)
    e = operator_exp(a)
    assert abs(e.entry(0, 0) - math.exp(0.5)) < 1e-14
    assert abs(e.entry(1, 1) - math.exp(-1.25)) < 1e-14
    assert e.entry(0, 1) == 0.0 and e.entry(1, 0) == 0.0


# -- constructors and validation ----------------------------------------------


def test_from_rows_rejects_non_square():
    with pytest.raises(DimensionMismatchError, match="square"):
        Operator.from_rows([[1, 2, 3], [4, 5, 6]], EXACT)


def test_exact_entries_parse_strings_and_floats():
    a = Operator.from_rows([["2/3", 1], [0.5, Fraction(7, 2)]], EXACT)
    assert a.entry(0, 0) == Fraction(2, 3)
    # 0.5 is a binary rational and converts exactly
    assert a.entry(1, 0) == Fraction(1, 2)


def test_exact_entry_rejects_junk():
    with pytest.raises(TypeError):
        Operator.from_rows([[object()]], EXACT)


def test_float_mode_rejects_nonfinite():
    with pytest.raises(NonFiniteError):
        Operator.from_rows([[float("inf")]], FLOAT)


def test_mode_mismatch_raises():
    a = Operator.identity(2, EXACT)
    b = Operator.identity(2, FLOAT)
    with pytest.raises(ModeMismatchError):
        _ = a + b


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionMismatchError):
        _ = Operator.identity(2, EXACT) + Operator.identity(3, EXACT)


def test_operators_not_hashable():
    with pytest.raises(TypeError):
        hash(Operator.identity(2, EXACT))


def test_data_is_not_writeable():
    a = Operator.identity(2, EXACT)
    with pytest.raises(ValueError):
        a.data[0, 0] = Fraction(5)


def test_to_jsonable_round_trip():
    a = Operator.from_rows([["1/3", "-2"], ["0", "7/5"]], EXACT)
    assert Operator.from_rows(a.to_jsonable(), EXACT) == a
    b = a.to_float()
    assert Operator.from_rows(b.to_jsonable(), FLOAT) == b


def test_unit_diag_identity_zero():
    u = Operator.unit(3, 0, 2)
    assert u.entry(0, 2) == 1 and u.entry(0, 0) == 0
    d = Operator.diag([1, "1/2", -2], EXACT)
    assert d.entry(1, 1) == Fraction(1, 2)
    assert Operator.zero(3, EXACT).is_zero()
    assert not Operator.identity(3, EXACT).is_zero()


# -- algebraic laws (property tests over exact entries) ------------------------

small_fraction = st.fractions(
    min_value=Fraction(-3), max_value=Fraction(3), max_denominator=4
)


def _op3(draw_rows):
    return Operator.from_rows(draw_rows, EXACT)


triple_matrices = st.tuples(
    *[
        st.lists(st.lists(small_fraction, min_size=3, max_size=3), min_size=3, max_size=3)
        for _ in range(3)
    ]
)


@settings(max_examples=40, deadline=None)
@given(triple_matrices)
def test_matmul_associative_exact(rows):
    a, b, c = (_op3(r) for r in rows)
    assert (a @ b) @ c == a @ (b @ c)


@settings(max_examples=40, deadline=None)
@given(triple_matrices)
def test_jacobi_identity_exact(rows):
    a, b, c = (_op3(r) for r in rows)
    total = (
        commutator(commutator(a, b), c)
        + commutator(commutator(b, c), a)
        + commutator(commutator(c, a), b)
    )
    assert total.is_zero()


@settings(max_examples=40, deadline=None)
@given(triple_matrices)
def test_distributive_exact(rows):
    a, b, c = (_op3(r) for r in rows)
    assert a @ (b + c) == a @ b + a @ c


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(small_fraction, min_size=2, max_size=2), min_size=2, max_size=2))
def test_scale_neg_sub_consistent(rows):
    a = Operator.from_rows(rows, EXACT)
    assert a.scale(Fraction(-1)) == -a
    assert a - a == Operator.zero(2, EXACT)
    assert Fraction(2) * a == a + a


# -- norms ---------------------------------------------------------------------


def test_norm_bound_exact_square_and_root():
    a = Operator.from_rows([["1/2", 1], [0, "3/2"]], EXACT)
    nb = norm_bound(a)
    assert nb.exact_square == Fraction(1, 4) + 1 + Fraction(9, 4)
    # root_upper is a true upper bound, coarse on purpose (within 1)
    assert nb.root_upper * nb.root_upper >= nb.exact_square
    assert math.sqrt(3.5) <= nb.value <= math.sqrt(3.5) + 1.0


def test_frobenius_submultiplicative():
    rng = random.Random(55)
    for _ in range(10):
        a = random_rational_operator(rng, 3)
        b = random_rational_operator(rng, 3)
        lhs = norm_bound(a @ b).exact_square
        rhs = norm_bound(a).exact_square * norm_bound(b).exact_square
        assert lhs <= rhs


def test_frobenius_float_matches_numpy():
    rng = random.Random(56)
    a = random_float_operator(rng, 4)
    ref = float(np.linalg.norm(np.array(a.rows(), dtype=float)))
    assert abs(frobenius(a) - ref) < 1e-13


def test_operator_exp_requires_float():
    with pytest.raises(ModeMismatchError):
        operator_exp(Operator.identity(2, EXACT))
