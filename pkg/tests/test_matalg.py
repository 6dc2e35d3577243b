import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locop import corpus
from locop.lattice import CutoffOperator, IndexSet
from locop.matalg import (LocalizedMatrix, Weight, apply,
                          commutator_with_cutoff, offset_profile, schur_norm,
                          sjostrand_norm, slant_norm, truncate,
                          truncation_tail, vector_pnorm)


def small(sequence=(1, 3, 1), window=8):
    return corpus.toeplitz_matrix(list(sequence), window)


# ----------------------------------------------------------------------
# construction and views


def test_shape_nnz_band(t131_64):
    assert t131_64.shape == (64, 64)
    assert t131_64.nnz == 3 * 64 - 2
    assert t131_64.band() == 1.0


def test_dense_matches_entries():
    A = small(window=5)
    D = A.dense()
    assert D.shape == (5, 5)
    assert D[0, 0] == 3.0 and D[0, 1] == 1.0 and D[1, 0] == 1.0
    assert D[0, 2] == 0.0
    assert np.allclose(D, D.T)


def test_duplicate_entries_rejected():
    s = IndexSet.integer_range(0, 2)
    with pytest.raises(ValueError):
        LocalizedMatrix(s, s, [0, 0], [1, 1], [1.0, 2.0])


def test_json_round_trip(t131_64):
    again = LocalizedMatrix.from_json_dict(t131_64.to_json_dict())
    assert np.array_equal(again.dense(), t131_64.dense())


def test_window_prefix_is_leading_block():
    A = small(window=10)
    B = A.window_prefix(6, 6)
    assert B.shape == (6, 6)
    assert np.array_equal(B.dense(), A.dense()[:6, :6])


# ----------------------------------------------------------------------
# norms


def test_offset_profile_of_banded_toeplitz():
    prof = offset_profile(small(window=12))
    assert len(prof) == 3
    assert prof[[-1]] == 1.0 and prof[[0]] == 3.0 and prof[[1]] == 1.0


def test_schur_and_sjostrand_norms():
    A = small(window=12)
    # row/column sums are 5; the three offset cells carry sups 1, 3, 1
    assert schur_norm(A) == 5.0
    assert sjostrand_norm(A) == 5.0


def test_sjostrand_pays_each_offset_cell_once():
    # two unit entries share the offset cell [0, 1): the cell-sup norm
    # charges the sup once, while the column sum sees both
    s = IndexSet(1, [0.0, 0.4, 1.0], window=[[0.0, 2.0]])
    A = LocalizedMatrix(s, s, [0, 1, 2], [0, 0, 2], [1.0, 1.0, 1.0])
    assert schur_norm(A) == 2.0
    assert sjostrand_norm(A) == 1.0


def test_slant_norm_of_single_slant_is_one():
    A = corpus.slanted_matrix(2, {0: 1.0}, 16)
    assert slant_norm(A, 2.0) == 1.0


def test_slant_norm_sums_tap_magnitudes():
    A = corpus.slanted_matrix(2, {0: 1.0, 1: -0.5}, 16)
    assert slant_norm(A, 2.0) == pytest.approx(1.5, abs=1e-15)


def test_weighted_slant_norm_monotone_in_weight():
    A = corpus.slanted_matrix(2, {0: 1.0, 3: 0.25}, 16)
    flat = slant_norm(A, 2.0)
    grown = slant_norm(A, 2.0, Weight(exponent=2.0))
    # the far tap at offset 3 is amplified by (1 + |3|)^2
    assert grown >= flat
    assert grown == pytest.approx(1.0 + 0.25 * 4.0 ** 2, abs=1e-12)


# ----------------------------------------------------------------------
# truncation


def test_truncate_keeps_offsets_strictly_below_radius():
    A = small(window=10)
    assert truncate(A, 0.0).nnz == 0
    A1 = truncate(A, 1.0)
    assert A1.nnz == 10
    assert np.array_equal(A1.dense(), np.diag(np.full(10, 3.0)))
    assert truncate(A, 2.0).nnz == A.nnz


def test_truncation_tail_values():
    tails = truncation_tail(small(window=10), [0, 1, 2, 5])
    assert tails == [(0.0, 5.0), (1.0, 2.0), (2.0, 0.0), (5.0, 0.0)]


def test_truncation_tail_nonincreasing_random(rng):
    A = corpus.banded_random(48, band=3, seed=5)
    tails = [t for _, t in truncation_tail(A, range(0, 8))]
    assert all(a >= b - 1e-15 for a, b in zip(tails, tails[1:]))
    assert tails[-1] == 0.0


# ----------------------------------------------------------------------
# application and bound check


def test_apply_matches_dense(t131_64, rng):
    c = rng.standard_normal(64)
    y, chk = apply(t131_64, c, p=2.0)
    assert np.allclose(y, t131_64.dense() @ c, atol=1e-13)
    assert chk.ratio <= chk.bound * (1 + 1e-12)


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from([1.0, 2.0, math.inf]))
def test_output_norm_bounded_by_sjostrand_times_separation(seed, p):
    A = corpus.banded_random(24, band=2, seed=11)
    c = np.random.default_rng(seed).standard_normal(24)
    y, chk = apply(A, c, p=p)
    assert chk.p == p
    assert vector_pnorm(y, p) <= chk.bound * vector_pnorm(c, p) * (1 + 1e-12)
    assert chk.ratio <= chk.bound * (1 + 1e-12)


def test_vector_pnorm_agrees_with_numpy(rng):
    x = rng.standard_normal(40)
    for p, ref in ((1.0, np.linalg.norm(x, 1)), (2.0, np.linalg.norm(x, 2)),
                   (math.inf, np.linalg.norm(x, np.inf))):
        assert vector_pnorm(x, p) == pytest.approx(ref, rel=1e-14)


# ----------------------------------------------------------------------
# cutoff commutators


def test_commutator_entries_scale_with_offset_over_scale():
    A = small(window=33)
    op = CutoffOperator(center=[16.0], scale=4, target=A.cols)
    C = commutator_with_cutoff(A, op)
    # [psi, A] kills the diagonal; off-diagonal entries shrink by <= s/N
    assert C.band() <= A.band()
    lhs = sjostrand_norm(C)
    rhs = (A.band() / 4.0) * sjostrand_norm(A)
    assert lhs <= rhs + 1e-12


@pytest.mark.parametrize("scale", [4, 8, 16])
def test_commutator_bound_on_random_banded(scale):
    A = corpus.banded_random(64, band=2, seed=3)
    op = CutoffOperator(center=[float(scale)], scale=scale, target=A.cols)
    assert sjostrand_norm(commutator_with_cutoff(A, op)) <= \
        (A.band() / scale) * sjostrand_norm(A) + 1e-12
