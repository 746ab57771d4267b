"""Subspace extraction: spectra normalization, truncation, complements."""

import numpy as np
import pytest

from dgrass import build_subspace, null_complement, truncate
from helpers import random_rep, rep_with_singvals


def projector(rep):
    return rep.basis @ rep.basis.T


class TestBuildSubspace:
    def test_identity_sequence_splits_energy_evenly(self):
        rep = build_subspace(np.eye(3), 2)
        np.testing.assert_allclose(rep.singvals, [1 / 3, 1 / 3], atol=1e-15)
        np.testing.assert_allclose(projector(rep), np.diag([1.0, 1.0, 0.0]), atol=1e-12)

    def test_normalizer_is_the_full_spectrum(self):
        rep = build_subspace(np.diag([3.0, 1.0]), 2)
        np.testing.assert_allclose(rep.singvals, [0.75, 0.25], atol=1e-15)

    def test_kept_values_keep_their_share_after_rank_cut(self):
        # dropping the trailing direction must not renormalize the lead
        rep = build_subspace(np.diag([3.0, 1.0]), 1)
        assert rep.m == 1
        np.testing.assert_allclose(rep.singvals, [0.75], atol=1e-15)

    def test_basis_orthonormal_singvals_descending(self):
        rng = np.random.default_rng(0)
        rep = build_subspace(rng.standard_normal((45, 60)), 15)
        assert rep.basis.shape == (45, 15)
        np.testing.assert_allclose(rep.basis.T @ rep.basis, np.eye(15), atol=1e-10)
        assert np.all(np.diff(rep.singvals) <= 0)
        assert np.all(rep.singvals > 0)
        assert rep.singvals.sum() <= 1.0 + 1e-12

    def test_rank_capped_at_numerical_rank(self):
        rng = np.random.default_rng(1)
        low = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 9))
        rep = build_subspace(low, 4)
        assert rep.m == 2

    def test_full_rank_projection_reproduces_the_sequence(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((8, 5))
        rep = build_subspace(x, 5)
        err = np.linalg.norm(x - projector(rep) @ x) / np.linalg.norm(x)
        assert err <= 1e-8

    def test_frame_side_rotation_leaves_the_subspace(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((7, 10))
        q, _ = np.linalg.qr(rng.standard_normal((10, 10)))
        a = build_subspace(x, 3)
        b = build_subspace(x @ q, 3)
        np.testing.assert_allclose(projector(a), projector(b), atol=1e-10)

    def test_result_is_read_only(self):
        rep = random_rep(np.random.default_rng(4), 6, 2)
        with pytest.raises(ValueError):
            rep.basis[0, 0] = 7.0

    def test_zero_sequence_rejected(self):
        with pytest.raises(ValueError, match="zero sequence"):
            build_subspace(np.zeros((4, 4)), 2)

    @pytest.mark.parametrize("r", [0, 5, -1])
    def test_rank_outside_range_rejected(self, r):
        with pytest.raises(ValueError, match="outside"):
            build_subspace(np.eye(4), r)

    def test_non_finite_rejected(self):
        x = np.ones((3, 3))
        x[1, 2] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            build_subspace(x, 2)

    def test_one_dimensional_input_rejected(self):
        with pytest.raises(ValueError, match="2d"):
            build_subspace(np.ones(5), 1)


class TestTruncate:
    def rep(self, singvals):
        return rep_with_singvals(np.random.default_rng(10), 8, singvals)

    def test_threshold_is_strict(self):
        out = truncate(self.rep([0.6, 0.3, 0.1]), 0.25)
        assert out.m == 2
        # a value exactly at the threshold is dropped
        assert truncate(self.rep([0.6, 0.3, 0.1]), 0.3).m == 1

    def test_zero_threshold_keeps_everything(self):
        out = truncate(self.rep([0.6, 0.3, 0.1]), 0.0)
        assert out.m == 3

    def test_at_least_one_direction_survives(self):
        out = truncate(self.rep([0.5, 0.5]), 0.5)
        assert out.m == 1
        np.testing.assert_allclose(out.singvals, [0.5])

    def test_idempotent(self):
        once = truncate(self.rep([0.5, 0.3, 0.15, 0.05]), 0.1)
        twice = truncate(once, 0.1)
        assert twice.m == once.m
        np.testing.assert_array_equal(twice.singvals, once.singvals)

    def test_kept_columns_are_the_leading_ones(self):
        rep = self.rep([0.6, 0.3, 0.1])
        out = truncate(rep, 0.2)
        np.testing.assert_array_equal(out.basis, rep.basis[:, :2])

    @pytest.mark.parametrize("bad", [-0.1, 1.0, 2.0])
    def test_threshold_domain(self, bad):
        with pytest.raises(ValueError):
            truncate(self.rep([0.6, 0.4]), bad)


class TestNullComplement:
    def test_stacking_gives_an_orthogonal_matrix(self):
        rep = random_rep(np.random.default_rng(20), 10, 3)
        nb = null_complement(rep)
        assert nb.shape == (10, 7)
        np.testing.assert_allclose(rep.basis.T @ nb, 0.0, atol=1e-10)
        full = np.hstack([rep.basis, nb])
        np.testing.assert_allclose(full.T @ full, np.eye(10), atol=1e-10)

    def test_axis_subspace_complement(self):
        rep = build_subspace(np.array([[1.0], [0.0], [0.0]]), 1)
        nb = null_complement(rep)
        np.testing.assert_allclose(nb @ nb.T, np.diag([0.0, 1.0, 1.0]), atol=1e-12)

    def test_full_space_has_no_complement(self):
        rep = build_subspace(np.random.default_rng(21).standard_normal((4, 6)), 4)
        with pytest.raises(ValueError, match="no null space"):
            null_complement(rep)
