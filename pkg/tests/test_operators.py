import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gfc import (
    D_dagger_D,
    Grid,
    L_beta_h,
    PotentialSpec,
    codiff,
    d,
    fp_rhs,
    gibbs_state,
    inner_G,
    li_rhs,
    parse_potential,
    witten_variants,
)
from gfc.checks import fitted_order
from gfc.operators import TAGS, apply_variant, d_W, identity_pairs, sign_identity_sides

SIZES = (251, 501, 1001, 2001)
POTENTIALS = [("x^2/2", 10.0), ("x^4/4 + 0.3*x", 4.0)]


def _field(x):
    return np.sin(x) + 0.5 * np.cos(2 * x)


def _orders(potential, half, residual):
    hs, errs = [], []
    for n in SIZES:
        g = gibbs_state(parse_potential(potential), Grid(-half, half, n))
        hs.append(g.grid.dx)
        errs.append(residual(g))
    return fitted_order(hs, errs), errs


def _interior(g, frac=0.8):
    return np.abs(g.grid.x) < frac * g.grid.x_max


@pytest.mark.parametrize("potential, half", POTENTIALS)
@pytest.mark.parametrize(
    "pair", ["laplacian_vs_L", "li_rhs_vs_laplacian", "fp_rhs_vs_laplacian", "DdagD_direct_vs_expanded"]
)
def test_identity_pairs_second_order(potential, half, pair):
    def resid(g):
        a, b = identity_pairs(_field(g.grid.x), g)[pair]
        return np.max(np.abs(a - b)[_interior(g)])

    order, errs = _orders(potential, half, resid)
    assert order == pytest.approx(2.0, abs=0.2)
    assert errs[-1] < errs[0]


@pytest.mark.parametrize("potential, half", POTENTIALS)
def test_sign_identity_second_order(potential, half):
    def resid(g):
        lhs, rhs = sign_identity_sides(g.rho * _field(g.grid.x), g)
        return np.max(np.abs(lhs - rhs)[_interior(g)])

    order, _ = _orders(potential, half, resid)
    assert order == pytest.approx(2.0, abs=0.2)


@pytest.mark.parametrize("potential, half", POTENTIALS)
def test_L_symmetry_defect_is_second_order(potential, half):
    # the node-averaged pairing is not exactly G-symmetric; the defect vanishes like dx^2
    def resid(g):
        x = g.grid.x
        f, k = _field(x), np.cos(x) + 0.2 * x
        return abs(inner_G(L_beta_h(f, g), k, g) - inner_G(f, L_beta_h(k, g), g))

    order, errs = _orders(potential, half, resid)
    assert order == pytest.approx(2.0, abs=0.2)
    assert errs[-1] <= errs[0] / 50


class TestFokkerPlanck:
    def test_gibbs_is_stationary(self):
        errs, hs = [], []
        for n in SIZES:
            g = gibbs_state(parse_potential("x^4/4 - x^2"), Grid(-4, 4, n))
            errs.append(np.max(np.abs(fp_rhs(g.rho, g))[1:-1]))
            hs.append(g.grid.dx)
        assert fitted_order(hs, errs) == pytest.approx(2.0, abs=0.2)

    @settings(max_examples=50, deadline=None)
    @given(arrays(float, 61, elements=st.floats(0, 5, allow_nan=False)))
    def test_mass_conserved(self, rho):
        g = gibbs_state(parse_potential("x^4/4 - x^2"), Grid(-3, 3, 61))
        out = fp_rhs(rho, g)
        scale = np.sum(g.grid.weights * np.abs(out)) + 1e-300
        assert abs(np.sum(g.grid.weights * out)) <= 1e-12 * max(scale, 1.0)


class TestGroundStateTransform:
    def test_li_is_negated_L(self, gaussian):
        f = np.cos(gaussian.x)
        np.testing.assert_array_equal(li_rhs(f, gaussian.gibbs), -L_beta_h(f, gaussian.gibbs))

    def test_constant_is_null(self, gaussian):
        assert np.max(np.abs(li_rhs(np.ones(gaussian.grid.n), gaussian.gibbs))) == 0.0

    def test_first_eigenfunction(self, gaussian):
        x = gaussian.x
        out = li_rhs(x, gaussian.gibbs)
        inner = np.abs(x) < 8
        np.testing.assert_allclose(out[inner], -x[inner], atol=1e-9)

    def test_flat_potential_drops_drift(self):
        grid = Grid(0, 1, 51)
        g = gibbs_state(PotentialSpec.tabulated(np.full(51, 3.0), beta=2.0), grid)
        f = np.sin(3 * grid.x)
        np.testing.assert_allclose(L_beta_h(f, g), codiff(d(f, grid), grid) / 2.0, rtol=1e-14, atol=1e-12)


class TestWitten:
    @settings(max_examples=50, deadline=None)
    @given(arrays(float, 41, elements=st.floats(-5, 5)), arrays(float, 40, elements=st.floats(-5, 5)))
    def test_adjointness(self, phi, alpha):
        g = gibbs_state(PotentialSpec.quadratic(1.0, 1.0), Grid(-4, 4, 41))
        lhs = inner_G(d_W(phi, g), alpha, g)
        rhs = inner_G(phi, codiff(alpha, g.grid), g)
        scale = np.sum(np.abs(d(g.rho * phi, g.grid) * alpha)) * g.grid.dx + 1e-300
        assert abs(lhs - rhs) <= 1e-12 * max(scale, 1e-12)

    def test_d_W_is_shifted_derivative(self):
        # conjugation form agrees with d f - beta f dh to second order
        errs, hs = [], []
        for n in SIZES:
            g = gibbs_state(parse_potential("x^4/4"), Grid(-3, 3, n))
            f = np.cos(g.grid.x)
            edge_f = 0.5 * (f[1:] + f[:-1])
            other = d(f, g.grid) - g.beta * edge_f * d(g.h, g.grid)
            errs.append(np.max(np.abs(d_W(f, g) - other)))
            hs.append(g.grid.dx)
        assert fitted_order(hs, errs) == pytest.approx(2.0, abs=0.2)

    def test_variants_dispatch(self, gaussian):
        f = np.cos(gaussian.x)
        direct, expanded = witten_variants(f, gaussian.gibbs, "D_dagger_D")
        np.testing.assert_array_equal(direct, D_dagger_D(f, gaussian.gibbs)[0])
        assert witten_variants(f, gaussian.gibbs, "delta_W").shape == (gaussian.grid.n,)
        for tag in TAGS:
            apply_variant(tag, f, gaussian.gibbs)

    def test_unknown_tag(self, gaussian):
        with pytest.raises(ValueError, match="unknown"):
            witten_variants(np.ones(gaussian.grid.n), gaussian.gibbs, "nabla")
