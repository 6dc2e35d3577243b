import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locop.profiles import (ExponentialProfile, GaussianProfile,
                            PiecewisePolynomial, TensorProfile,
                            bspline_profile, box_profile,
                            gauss_legendre_integral, pp_inner_product,
                            profile_from_json_dict, trapezoid_profile)


def hat():
    return bspline_profile(2)


def test_bspline_orders_evaluate_correctly():
    box = bspline_profile(1)
    assert box(0.5) == 1.0 and box(-0.1) == 0.0 and box(1.1) == 0.0
    h = hat()
    assert h(1.0) == 1.0
    assert h(0.5) == 0.5
    assert h(1.75) == pytest.approx(0.25, abs=1e-15)
    assert h(2.0) == 0.0
    # order 3: quadratic, C^1, integrates to one
    q = bspline_profile(3)
    xs = np.linspace(-1, 4, 2001)
    assert np.trapezoid(q(xs), xs) == pytest.approx(1.0, abs=1e-6)


def test_bspline_partition_of_unity():
    h = hat()
    xs = np.linspace(2.0, 6.0, 101)
    total = sum(h(xs - k) for k in range(0, 8))
    assert np.allclose(total, 1.0, atol=1e-14)


def test_trapezoid_profile_shape():
    t = trapezoid_profile(0.0, 2.0, ramp=1.0, height=1.0)
    assert t(-1.0) == 0.0
    assert t(-0.5) == 0.5
    assert t(0.0) == 1.0 and t(2.0) == 1.0 and t(1.3) == 1.0
    assert t(2.5) == 0.5
    assert t(3.0) == 0.0


def test_antiderivative_consistency_piecewise():
    h = hat()
    # F(b) - F(a) must equal the exact integral of the hat
    assert h.antiderivative_at(2.0) - h.antiderivative_at(0.0) == pytest.approx(1.0, abs=1e-15)
    assert h.antiderivative_at(1.0) - h.antiderivative_at(0.0) == pytest.approx(0.5, abs=1e-15)


@settings(deadline=None, max_examples=25)
@given(st.floats(-3.0, 3.0), st.floats(0.0, 4.0))
def test_antiderivative_matches_quadrature_gaussian(a, width):
    g = GaussianProfile(1.3, 0.7)
    b = a + width
    exact = g.antiderivative_at(b) - g.antiderivative_at(a)
    quad = gauss_legendre_integral(g, a, b, order=12,
                                   splits=np.arange(-3.0, 7.5, 0.5).tolist())
    assert exact == pytest.approx(quad, abs=1e-12)


def test_interval_extrema_straddles_kinks():
    h = hat()
    lo, hi = h.interval_extrema(0.5, 1.5)
    assert (lo, hi) == (0.5, 1.0)
    lo, hi = h.interval_extrema(-1.0, 0.25)
    assert lo == 0.0 and hi == pytest.approx(0.25, abs=1e-15)


def test_interval_extrema_gaussian_peak_inside():
    g = GaussianProfile(1.0, 2.0)
    lo, hi = g.interval_extrema(-0.5, 1.0)
    assert hi == 2.0  # peak at 0 is interior
    assert lo == pytest.approx(g(1.0), rel=1e-14)


def test_decay_radius_contains_mass():
    g = GaussianProfile(0.8, 1.0)
    r = g.decay_radius(1e-10)
    assert g(r) <= 1e-10 * 1.0 * (1 + 1e-12)
    assert g(0.5 * r) > 1e-10


def test_tail_sum_bound_dominates_one_sided_cell_sums():
    g = GaussianProfile(1.0, 1.0)
    for k in (2, 4, 8):
        direct = sum(g.interval_extrema(j, j + 1)[1] for j in range(k, k + 200))
        assert g.tail_sum_bound(k) >= direct - 1e-15


def test_exponential_profile_tail_and_values():
    e = ExponentialProfile(0.5, 2.0)  # 2 * exp(-0.5 |x|)
    assert e(0.0) == 2.0
    assert e(1.0) == pytest.approx(2.0 * math.exp(-0.5), rel=1e-14)
    direct = sum(e.interval_extrema(j, j + 1)[1] for j in range(3, 300))
    assert e.tail_sum_bound(3) >= direct - 1e-15


def test_amalgam_norm_box_and_hat():
    # box on [0,1): one cell of sup 1... plus the neighbour cell seeing the
    # closed endpoint; the hat spreads sups 0.5, 1, 1 over three cells
    assert box_profile(0.0, 1.0).amalgam_norm() >= 1.0
    assert hat().amalgam_norm() == pytest.approx(2.0, abs=1e-12)


def test_amalgam_norm_gaussian_matches_direct_cell_sum():
    g = GaussianProfile(1.0, 0.3)
    direct = sum(g.interval_extrema(k, k + 1)[1] for k in range(-40, 40))
    assert g.amalgam_norm() == pytest.approx(direct, rel=1e-10)


def test_cell_averages_exact_for_hat():
    h = hat()
    edges = np.array([0.0, 0.5, 1.0, 1.5, 2.0])
    avg = h.cell_averages(edges)
    assert np.allclose(avg, [0.125 / 0.5, 0.375 / 0.5, 0.375 / 0.5, 0.125 / 0.5],
                       atol=1e-15)


def test_modulus_of_continuity_hat():
    h = hat()
    # at the peak the hat drops delta on both sides
    assert h.modulus_of_continuity(0.25, 1.0) == pytest.approx(0.25, abs=1e-12)
    # far from the support nothing oscillates
    assert h.modulus_of_continuity(0.25, 5.0) == 0.0


def test_gauss_legendre_exact_on_polynomials():
    # order-8 rule integrates degree 15 exactly
    exact = 2.0 ** 16 / 16.0
    assert gauss_legendre_integral(lambda x: x ** 15, 0.0, 2.0, order=8) == \
        pytest.approx(exact, rel=1e-14)


def test_gauss_legendre_split_handles_kinks():
    h = hat()
    with_split = gauss_legendre_integral(h, 0.0, 2.0, order=4, splits=[1.0])
    assert with_split == pytest.approx(1.0, abs=1e-14)


def test_pp_inner_product_hat_gram_values():
    h = hat()
    assert pp_inner_product(h, h) == pytest.approx(2.0 / 3.0, abs=1e-15)
    assert pp_inner_product(h, h, shift=1.0) == pytest.approx(1.0 / 6.0, abs=1e-15)
    assert pp_inner_product(h, h, shift=2.0) == 0.0
    assert pp_inner_product(h, h, shift=-1.0) == pytest.approx(1.0 / 6.0, abs=1e-15)


@settings(deadline=None, max_examples=20)
@given(st.floats(-2.5, 2.5))
def test_pp_inner_product_matches_quadrature(shift):
    p = bspline_profile(3)
    q = hat()
    exact = pp_inner_product(p, q, shift=shift)
    kinks = list(p.breaks) + [b - shift for b in q.breaks]
    quad = gauss_legendre_integral(lambda x: p(x) * q(x + shift), -1.0, 4.0,
                                   order=10, splits=kinks)
    assert exact == pytest.approx(quad, abs=1e-12)


def test_tensor_profile_factorizes():
    t = TensorProfile((hat(), GaussianProfile(1.0, 2.0)))
    pt = np.array([0.5, 0.3])
    assert t(pt) == pytest.approx(hat()(0.5) * GaussianProfile(1.0, 2.0)(0.3), rel=1e-15)


def test_profile_json_round_trips():
    for prof in (hat(), GaussianProfile(0.9, 1.1), ExponentialProfile(2.0, 0.4),
                 trapezoid_profile(-1.0, 1.0, 0.5, 2.0)):
        again = profile_from_json_dict(prof.to_json_dict())
        xs = np.linspace(-4, 4, 101)
        assert np.array_equal(np.asarray(again(xs)), np.asarray(prof(xs)))


def test_unknown_profile_kind_rejected():
    with pytest.raises(ValueError):
        profile_from_json_dict({"kind": "wavelet", "scale": 1.0})
