import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma as gamma_fn

from gfc import Grid, ObservableSet, PotentialSpec, gibbs_state, parse_potential, tilt
from gfc.expr import BinOp, Call, ExpressionError, Neg, Num, Var, evaluate, parse, to_string


class TestParser:
    def test_quadratic(self):
        assert parse_potential("x^2/2")(2.0) == 2.0

    def test_quartic_sum(self):
        assert parse_potential("x^2/2 + 0.25*x^4")(1.0) == pytest.approx(0.75, abs=1e-15)

    def test_error_offset(self):
        with pytest.raises(ExpressionError) as info:
            parse("x^^2")
        assert info.value.offset == 2

    def test_unknown_identifier(self):
        with pytest.raises(ExpressionError, match="unknown identifier 'y'"):
            parse("y + 1")

    def test_unbalanced(self):
        with pytest.raises(ExpressionError):
            parse("(x + 1")

    def test_bad_character(self):
        with pytest.raises(ExpressionError) as info:
            parse("x $ 2")
        assert info.value.offset == 2

    def test_empty(self):
        with pytest.raises(ExpressionError):
            parse("   ")

    @pytest.mark.parametrize(
        "text, x, expected",
        [
            ("-x^2", 3.0, -9.0),
            ("2^3^2", 0.0, 512.0),
            ("exp(ln(x))", 2.5, 2.5),
            ("abs(sin(x)) + cos(0)", -math.pi / 2, 2.0),
            ("1e-3*x", 2.0, 2e-3),
            ("-(-x)", 4.0, 4.0),
            ("x/2/2", 8.0, 2.0),
            ("x-1-1", 5.0, 3.0),
        ],
    )
    def test_precedence_and_functions(self, text, x, expected):
        assert float(evaluate(parse(text), x)) == pytest.approx(expected, rel=1e-14)

    def test_vectorised(self):
        x = np.linspace(-1, 1, 5)
        np.testing.assert_array_equal(evaluate(parse("3"), x), np.full(5, 3.0))
        np.testing.assert_allclose(evaluate(parse("x*x"), x), x * x)

    def test_deterministic(self):
        assert parse("sin(x)^2 + 1") == parse("sin(x)^2 + 1")


_leaf = st.one_of(
    st.just(Var()),
    st.floats(min_value=-5, max_value=5, allow_nan=False).map(lambda v: Num(abs(v))),
)


def _extend(children):
    return st.one_of(
        st.builds(Neg, children),
        st.builds(BinOp, st.sampled_from("+-*/"), children, children),
        st.builds(lambda a: BinOp("^", a, Num(2.0)), children),
        st.builds(Call, st.sampled_from(["sin", "cos", "abs", "exp"]), children),
    )


_trees = st.recursive(_leaf, _extend, max_leaves=8)


@settings(max_examples=150, deadline=None)
@given(_trees)
def test_pretty_print_round_trip(tree):
    xs = np.random.default_rng(7).uniform(-3, 3, 100)
    again = parse(to_string(tree))
    a = evaluate(tree, xs)
    b = evaluate(again, xs)
    np.testing.assert_array_equal(np.isnan(a), np.isnan(b))
    ok = ~np.isnan(a)
    np.testing.assert_allclose(b[ok], a[ok], rtol=1e-12, atol=0)


class TestPotentialSpec:
    def test_rejects_bad_beta(self):
        with pytest.raises(ValueError, match="beta"):
            PotentialSpec.quadratic(1.0, beta=0.0)

    def test_rejects_bad_mu(self):
        with pytest.raises(ValueError, match="mu"):
            PotentialSpec.quadratic(-1.0)

    def test_nonfinite_on_grid(self):
        with pytest.raises(ValueError, match="not finite"):
            parse_potential("ln(x)").values(Grid(-1, 1, 5))

    def test_tabulated_size(self):
        with pytest.raises(ValueError):
            PotentialSpec.tabulated(np.zeros(4)).values(Grid(0, 1, 5))

    def test_polynomial(self):
        p = PotentialSpec.polynomial([1.0, 0.0, 2.0])
        assert p(3.0) == 19.0


class TestGibbs:
    def test_gaussian_partition_function(self):
        g = gibbs_state(PotentialSpec.quadratic(1.0, 1.0), Grid(-10, 10, 2001))
        assert g.Z == pytest.approx(math.sqrt(2 * math.pi), abs=1e-8)

    def test_flat_potential_uniform(self):
        g = gibbs_state(parse_potential("0*x"), Grid(0, 1, 11))
        np.testing.assert_allclose(g.rho, 1.0, rtol=1e-15)
        assert g.Z == pytest.approx(1.0, rel=1e-15)

    def test_quartic_mass_and_partition_function(self):
        g = gibbs_state(parse_potential("x^4/4"), Grid(-6, 6, 4001))
        assert g.total_mass() == pytest.approx(1.0, abs=1e-14)
        exact = 4 ** 0.25 * gamma_fn(0.25) / 2
        assert g.Z == pytest.approx(exact, rel=1e-10)

    def test_positive_everywhere(self, gaussian):
        assert np.all(gaussian.gibbs.rho > 0)

    def test_huge_potential_no_overflow(self):
        g = gibbs_state(parse_potential("x^2/2 + 1000"), Grid(-10, 10, 201))
        assert g.total_mass() == pytest.approx(1.0, abs=1e-14)
        assert g.log_Z == pytest.approx(0.5 * math.log(2 * math.pi) - 1000, rel=1e-10)

    def test_underflow_reported(self):
        with pytest.raises(ValueError, match="underflows"):
            gibbs_state(PotentialSpec.quadratic(1.0, 1.0), Grid(-60, 60, 101))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(min_value=-500, max_value=500, allow_nan=False))
    def test_shift_invariance(self, c):
        grid = Grid(-5, 5, 301)
        base = gibbs_state(parse_potential("x^4/4 - x^2"), grid)
        shifted = gibbs_state(PotentialSpec.tabulated(base.h + c), grid)
        np.testing.assert_allclose(shifted.rho, base.rho, rtol=0, atol=1e-12)


class TestTilt:
    def test_zero_field_is_identity(self, gaussian):
        t = tilt(gaussian.potential, [0.0], gaussian.B, gaussian.grid)
        np.testing.assert_array_equal(t.values(gaussian.grid), gaussian.potential.values(gaussian.grid))
        np.testing.assert_array_equal(gibbs_state(t, gaussian.grid).rho, gaussian.gibbs.rho)

    def test_tilted_partition_function(self, gaussian):
        t = tilt(gaussian.potential, [1.0], gaussian.B, gaussian.grid)
        Zt = gibbs_state(t, gaussian.grid).Z
        assert Zt == pytest.approx(math.exp(0.5) * math.sqrt(2 * math.pi), rel=1e-10)
        assert Zt == pytest.approx(4.13273, abs=1e-5)

    def test_tilted_minimiser(self, gaussian):
        h = tilt(gaussian.potential, [1.0], gaussian.B, gaussian.grid).values(gaussian.grid)
        assert gaussian.x[np.argmin(h)] == pytest.approx(1.0, abs=1e-12)

    def test_dimension_mismatch(self, gaussian):
        with pytest.raises(ValueError, match="components"):
            tilt(gaussian.potential, [1.0, 2.0], gaussian.B, gaussian.grid)


class TestObservables:
    def test_constant_expression_broadcasts(self):
        B = ObservableSet.from_expressions(["1", "x"], Grid(0, 1, 5))
        assert B.values.shape == (2, 5)
        np.testing.assert_array_equal(B.values[0], 1.0)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            ObservableSet.from_expressions(["1/x"], Grid(-1, 1, 5))

    def test_needs_one(self):
        with pytest.raises(ValueError):
            ObservableSet((), np.zeros((0, 3)))
